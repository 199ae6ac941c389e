//! Step-2 truncated tensor algebra T²(ℝ^d) and the free nilpotent group
//! G²(ℝ^d).
//!
//! Level-2 tensors are stored as row-major `d × d` matrices, entry
//! `(i, j)` at `i * d + j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the homogeneous norm, recorded in output metadata.
pub const NORM_CONVENTION: &str = "max(|level1|_2, sqrt(2*|antisym(level2)|_F))";

/// Element of T²(ℝ^d): scalar + vector + matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorElement {
    pub scalar: f64,
    pub level1: Vec<f64>,
    pub level2: Vec<f64>,
}

impl TensorElement {
    pub fn zero(d: usize) -> Self {
        TensorElement { scalar: 0.0, level1: vec![0.0; d], level2: vec![0.0; d * d] }
    }

    pub fn dim(&self) -> usize {
        self.level1.len()
    }

    pub fn scale(&self, s: f64) -> Self {
        TensorElement {
            scalar: self.scalar * s,
            level1: self.level1.iter().map(|v| v * s).collect(),
            level2: self.level2.iter().map(|v| v * s).collect(),
        }
    }

    /// Exponential of an element with zero scalar part:
    /// `exp(v + L) = (v, L + ½ v⊗v)`.
    pub fn exp(&self) -> GroupElement {
        let d = self.dim();
        let mut level2 = self.level2.clone();
        for i in 0..d {
            for j in 0..d {
                level2[i * d + j] += 0.5 * self.level1[i] * self.level1[j];
            }
        }
        GroupElement { level1: self.level1.clone(), level2 }
    }

    /// Largest absolute entry of the level-2 part.
    pub fn level2_max_abs(&self) -> f64 {
        self.level2.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Point of G²(ℝ^d); the scalar part is implicitly 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    pub level1: Vec<f64>,
    pub level2: Vec<f64>,
}

impl GroupElement {
    pub fn identity(d: usize) -> Self {
        GroupElement { level1: vec![0.0; d], level2: vec![0.0; d * d] }
    }

    /// Build from raw parts, checking sizes and finiteness.
    pub fn from_parts(level1: Vec<f64>, level2: Vec<f64>) -> Result<Self> {
        let d = level1.len();
        if d == 0 {
            return Err(Error::invalid("group element needs d >= 1"));
        }
        if level2.len() != d * d {
            return Err(Error::DimensionMismatch { expected: d * d, got: level2.len() });
        }
        if level1.iter().chain(&level2).any(|v| !v.is_finite()) {
            return Err(Error::invalid("group element has non-finite entries"));
        }
        Ok(GroupElement { level1, level2 })
    }

    pub fn dim(&self) -> usize {
        self.level1.len()
    }

    pub fn is_identity(&self) -> bool {
        self.level1.iter().chain(&self.level2).all(|&v| v == 0.0)
    }

    /// Group product; panics on dimension mismatch (see [`group_mul`] for
    /// the checked version).
    pub fn mul(&self, b: &GroupElement) -> GroupElement {
        let d = self.dim();
        assert_eq!(d, b.dim(), "group product of mismatched dimensions");
        let mut level2 = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let k = i * d + j;
                level2[k] = self.level2[k] + b.level2[k] + self.level1[i] * b.level1[j];
            }
        }
        let level1 = self.level1.iter().zip(&b.level1).map(|(x, y)| x + y).collect();
        GroupElement { level1, level2 }
    }

    /// `g⁻¹ = (−a, a⊗a − A)`.
    pub fn inverse(&self) -> GroupElement {
        let d = self.dim();
        let mut level2 = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let k = i * d + j;
                level2[k] = self.level1[i] * self.level1[j] - self.level2[k];
            }
        }
        GroupElement { level1: self.level1.iter().map(|v| -v).collect(), level2 }
    }

    /// `self⁻¹ ∘ other`, computed without forming the inverse.
    pub fn increment_to(&self, other: &GroupElement) -> GroupElement {
        let d = self.dim();
        let mut level1 = vec![0.0; d];
        let mut level2 = vec![0.0; d * d];
        increment_into(&self.level1, &self.level2, &other.level1, &other.level2, &mut level1, &mut level2);
        GroupElement { level1, level2 }
    }

    pub fn log(&self) -> TensorElement {
        group_log(self)
    }

    /// Dilation δ_λ: level1 ↦ λ·level1, level2 ↦ λ²·level2.
    pub fn dilate(&self, lambda: f64) -> GroupElement {
        GroupElement {
            level1: self.level1.iter().map(|v| v * lambda).collect(),
            level2: self.level2.iter().map(|v| v * lambda * lambda).collect(),
        }
    }

    /// `exp(s · log g)`: the point at fraction `s` of the geodesic from the
    /// identity to `g`.
    pub fn geodesic_fraction(&self, s: f64) -> GroupElement {
        self.log().scale(s).exp()
    }

    pub fn norm(&self) -> f64 {
        homogeneous_norm(self)
    }

    /// Max entrywise violation of `level2 + level2ᵀ = level1 ⊗ level1`.
    pub fn geometric_defect(&self) -> f64 {
        let d = self.dim();
        let mut m: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let v = self.level2[i * d + j] + self.level2[j * d + i] - self.level1[i] * self.level1[j];
                m = m.max(v.abs());
            }
        }
        m
    }

    /// Max entrywise difference to another element of the same dimension.
    pub fn max_abs_diff(&self, other: &GroupElement) -> f64 {
        self.level1
            .iter()
            .zip(&other.level1)
            .chain(self.level2.iter().zip(&other.level2))
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Max absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.level1.iter().chain(&self.level2).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Level-1 and level-2 parts of `(a1, a2)⁻¹ ∘ (b1, b2)` written into the
/// output slices.
#[inline]
pub fn increment_into(a1: &[f64], a2: &[f64], b1: &[f64], b2: &[f64], out1: &mut [f64], out2: &mut [f64]) {
    let d = a1.len();
    for i in 0..d {
        out1[i] = b1[i] - a1[i];
    }
    for i in 0..d {
        for j in 0..d {
            let k = i * d + j;
            out2[k] = b2[k] - a2[k] - a1[i] * out1[j];
        }
    }
}

/// Checked group product.
pub fn group_mul(a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(a.mul(b))
}

/// `exp(v) = (v, ½ v⊗v)`.
pub fn group_exp(v: &[f64]) -> GroupElement {
    let d = v.len();
    let mut level2 = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            level2[i * d + j] = 0.5 * v[i] * v[j];
        }
    }
    GroupElement { level1: v.to_vec(), level2 }
}

/// `log(a, A) = (a, A − ½ a⊗a)`.
pub fn group_log(g: &GroupElement) -> TensorElement {
    let d = g.dim();
    let mut level2 = g.level2.clone();
    for i in 0..d {
        for j in 0..d {
            level2[i * d + j] -= 0.5 * g.level1[i] * g.level1[j];
        }
    }
    TensorElement { scalar: 0.0, level1: g.level1.clone(), level2 }
}

/// Frobenius norm of the antisymmetric part of a row-major square matrix.
pub fn antisym_frobenius(m: &[f64], d: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            let a = 0.5 * (m[i * d + j] - m[j * d + i]);
            s += a * a;
        }
    }
    s.sqrt()
}

/// `max(‖level1‖₂, √(2‖antisym(level2)‖_F))`.
pub fn homogeneous_norm(g: &GroupElement) -> f64 {
    let d = g.dim();
    let l1 = g.level1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let area = antisym_frobenius(&g.level2, d);
    l1.max((2.0 * area).sqrt())
}

/// Homogeneous distance `‖a⁻¹ b‖`.
pub fn distance(a: &GroupElement, b: &GroupElement) -> f64 {
    homogeneous_norm(&a.increment_to(b))
}

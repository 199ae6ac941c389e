//! Built-in model families with named numeric parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

use super::{Dims, InitialLaw, LevyAtom, LevyMeasure, ModelSpec, Regime};

/// Linear-Gaussian system without jumps:
/// `dX = aX dt + s_b dB + s_w dW`, `dY = cX dt + s_2 dW`, `X₀ ~ N(m0, p0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussian {
    pub t_end: f64,
    pub a: f64,
    pub sb: f64,
    pub sw: f64,
    pub c: f64,
    pub s2: f64,
    pub m0: f64,
    pub p0: f64,
}

impl Default for LinearGaussian {
    fn default() -> Self {
        LinearGaussian { t_end: 1.0, a: -0.5, sb: 0.5, sw: 0.3, c: 1.0, s2: 0.5, m0: 0.0, p0: 1.0 }
    }
}

/// Scalar jump-diffusion with geometric common noise:
/// `dX = −κX dt + s_b dB + s_1 X∘dW + u Ñ_p + g_3 u Ñ_λ`,
/// `dY = cX dt + s_2 dW + u Ñ_λ`, `λ = 1 + a_λ tanh(x)`,
/// `ν₁ = r₁(δ_{j₁} + δ_{−j₁})`, `ν₂ = r_up δ_{j₂} + r_down δ_{−j₂}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarJumpDiffusion {
    pub t_end: f64,
    pub kappa: f64,
    pub sb: f64,
    pub s1: f64,
    pub c: f64,
    pub s2: f64,
    pub m0: f64,
    pub p0: f64,
    pub jump1: f64,
    pub rate1: f64,
    pub jump2: f64,
    pub rate2_up: f64,
    pub rate2_down: f64,
    pub lam_amp: f64,
    pub g3: f64,
    #[serde(skip)]
    nu1: LevyMeasure,
    #[serde(skip)]
    nu2: LevyMeasure,
}

impl Default for ScalarJumpDiffusion {
    fn default() -> Self {
        let mut m = ScalarJumpDiffusion {
            t_end: 1.0,
            kappa: 0.5,
            sb: 0.3,
            s1: 0.2,
            c: 1.0,
            s2: 0.5,
            m0: 0.0,
            p0: 0.25,
            jump1: 0.5,
            rate1: 1.0,
            jump2: 0.4,
            rate2_up: 1.2,
            rate2_down: 0.8,
            lam_amp: 0.5,
            g3: 0.0,
            nu1: LevyMeasure::Zero,
            nu2: LevyMeasure::Zero,
        };
        m.refresh();
        m
    }
}

impl ScalarJumpDiffusion {
    fn refresh(&mut self) {
        self.nu1 = LevyMeasure::Atoms(vec![
            LevyAtom { mark: self.jump1, mass: self.rate1 },
            LevyAtom { mark: -self.jump1, mass: self.rate1 },
        ]);
        self.nu2 = LevyMeasure::Atoms(vec![
            LevyAtom { mark: self.jump2, mass: self.rate2_up },
            LevyAtom { mark: -self.jump2, mass: self.rate2_down },
        ]);
    }
}

/// Two-dimensional signal and observation with correlated noise, both jump
/// measures and signal jumps triggered by observed jumps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedJumpMultidim {
    pub t_end: f64,
    pub sb: f64,
    pub s1: f64,
    pub s2: f64,
    pub rate1: f64,
    pub rate2: f64,
    pub lam_amp: f64,
    pub g3: f64,
    #[serde(skip)]
    nu1: LevyMeasure,
    #[serde(skip)]
    nu2: LevyMeasure,
}

impl Default for CorrelatedJumpMultidim {
    fn default() -> Self {
        let mut m = CorrelatedJumpMultidim {
            t_end: 1.0,
            sb: 0.3,
            s1: 0.2,
            s2: 0.5,
            rate1: 0.5,
            rate2: 0.8,
            lam_amp: 0.3,
            g3: 0.3,
            nu1: LevyMeasure::Zero,
            nu2: LevyMeasure::Zero,
        };
        m.refresh();
        m
    }
}

impl CorrelatedJumpMultidim {
    fn refresh(&mut self) {
        self.nu1 = LevyMeasure::Atoms(vec![
            LevyAtom { mark: 0.4, mass: self.rate1 },
            LevyAtom { mark: -0.4, mass: self.rate1 },
        ]);
        self.nu2 = LevyMeasure::Atoms(vec![
            LevyAtom { mark: 0.3, mass: self.rate2 },
            LevyAtom { mark: -0.3, mass: self.rate2 },
        ]);
    }
}

/// Scalar system driven by ε-truncated stable-like shot noise:
/// `dX = −κX dt + s_b dB + s_1∘dW + n₁◇dξ¹ + n₃◇dξ²`,
/// `dY = cX dt + s_2 dW + n₂◇dξ²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableShotNoise {
    pub t_end: f64,
    pub kappa: f64,
    pub sb: f64,
    pub s1: f64,
    pub c: f64,
    pub s2: f64,
    pub m0: f64,
    pub p0: f64,
    pub scale: f64,
    pub index: f64,
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
    #[serde(skip)]
    nu: LevyMeasure,
}

impl Default for StableShotNoise {
    fn default() -> Self {
        let mut m = StableShotNoise {
            t_end: 1.0,
            kappa: 0.5,
            sb: 0.3,
            s1: 0.2,
            c: 1.0,
            s2: 0.5,
            m0: 0.0,
            p0: 0.25,
            scale: 0.3,
            index: 1.0,
            n1: 0.5,
            n2: 1.0,
            n3: 0.3,
            nu: LevyMeasure::Zero,
        };
        m.refresh();
        m
    }
}

impl StableShotNoise {
    fn refresh(&mut self) {
        self.nu = LevyMeasure::Stable { scale: self.scale, index: self.index, symmetric: true };
    }
}

/// One of the built-in families.
#[derive(Clone, Debug, PartialEq)]
pub enum CatalogModel {
    LinearGaussian(LinearGaussian),
    ScalarJumpDiffusion(ScalarJumpDiffusion),
    CorrelatedJumpMultidim(CorrelatedJumpMultidim),
    StableShotNoise(StableShotNoise),
}

/// Family identifiers accepted by [`CatalogModel::from_id`].
pub const FAMILIES: [&str; 4] = ["linear_gaussian", "scalar_jump_diffusion", "correlated_jump_multidim", "stable_shot_noise"];

const ZERO: LevyMeasure = LevyMeasure::Zero;

impl CatalogModel {
    /// Family with default parameters.
    pub fn from_id(id: &str) -> Result<Self> {
        Ok(match id {
            "linear_gaussian" => CatalogModel::LinearGaussian(LinearGaussian::default()),
            "scalar_jump_diffusion" => CatalogModel::ScalarJumpDiffusion(ScalarJumpDiffusion::default()),
            "correlated_jump_multidim" => CatalogModel::CorrelatedJumpMultidim(CorrelatedJumpMultidim::default()),
            "stable_shot_noise" => CatalogModel::StableShotNoise(StableShotNoise::default()),
            _ => return Err(Error::invalid(format!("unknown model id '{id}' (known: {})", FAMILIES.join(", ")))),
        })
    }

    /// Family with parameter overrides `name = value`.
    pub fn with_params(id: &str, params: &[(String, f64)]) -> Result<Self> {
        let mut m = Self::from_id(id)?;
        for (k, v) in params {
            m.set_param(k, *v)?;
        }
        Ok(m)
    }

    /// Current parameters as a JSON object.
    pub fn params(&self) -> serde_json::Value {
        match self {
            CatalogModel::LinearGaussian(p) => serde_json::to_value(p),
            CatalogModel::ScalarJumpDiffusion(p) => serde_json::to_value(p),
            CatalogModel::CorrelatedJumpMultidim(p) => serde_json::to_value(p),
            CatalogModel::StableShotNoise(p) => serde_json::to_value(p),
        }
        .expect("parameters serialize")
    }

    /// Set one named parameter.
    pub fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::invalid(format!("parameter {key} must be finite")));
        }
        let mut obj = self.params();
        let map = obj.as_object_mut().unwrap();
        if !map.contains_key(key) {
            let known: Vec<&String> = map.keys().collect();
            return Err(Error::invalid(format!("model {} has no parameter '{key}' (known: {known:?})", self.id())));
        }
        map.insert(key.to_string(), serde_json::json!(value));
        *self = match self {
            CatalogModel::LinearGaussian(_) => CatalogModel::LinearGaussian(serde_json::from_value(obj)?),
            CatalogModel::ScalarJumpDiffusion(_) => {
                let mut p: ScalarJumpDiffusion = serde_json::from_value(obj)?;
                p.refresh();
                CatalogModel::ScalarJumpDiffusion(p)
            }
            CatalogModel::CorrelatedJumpMultidim(_) => {
                let mut p: CorrelatedJumpMultidim = serde_json::from_value(obj)?;
                p.refresh();
                CatalogModel::CorrelatedJumpMultidim(p)
            }
            CatalogModel::StableShotNoise(_) => {
                let mut p: StableShotNoise = serde_json::from_value(obj)?;
                p.refresh();
                CatalogModel::StableShotNoise(p)
            }
        };
        Ok(())
    }
}

const A_MULTI: [[f64; 2]; 2] = [[-0.5, 0.2], [-0.1, -0.4]];

impl ModelSpec for CatalogModel {
    fn id(&self) -> String {
        match self {
            CatalogModel::LinearGaussian(_) => "linear_gaussian",
            CatalogModel::ScalarJumpDiffusion(_) => "scalar_jump_diffusion",
            CatalogModel::CorrelatedJumpMultidim(_) => "correlated_jump_multidim",
            CatalogModel::StableShotNoise(_) => "stable_shot_noise",
        }
        .into()
    }

    fn dims(&self) -> Dims {
        match self {
            CatalogModel::CorrelatedJumpMultidim(_) => Dims { dx: 2, dy: 2, db: 2 },
            _ => Dims { dx: 1, dy: 1, db: 1 },
        }
    }

    fn regime(&self) -> Regime {
        match self {
            CatalogModel::LinearGaussian(_) | CatalogModel::ScalarJumpDiffusion(_) => Regime::Scalar,
            CatalogModel::CorrelatedJumpMultidim(_) => Regime::FiniteJumps,
            CatalogModel::StableShotNoise(_) => Regime::InfiniteJumps,
        }
    }

    fn horizon(&self) -> f64 {
        match self {
            CatalogModel::LinearGaussian(p) => p.t_end,
            CatalogModel::ScalarJumpDiffusion(p) => p.t_end,
            CatalogModel::CorrelatedJumpMultidim(p) => p.t_end,
            CatalogModel::StableShotNoise(p) => p.t_end,
        }
    }

    fn initial_x(&self) -> InitialLaw {
        match self {
            CatalogModel::LinearGaussian(p) => InitialLaw::Gaussian { mean: vec![p.m0], std: vec![p.p0.sqrt()] },
            CatalogModel::ScalarJumpDiffusion(p) => InitialLaw::Gaussian { mean: vec![p.m0], std: vec![p.p0.sqrt()] },
            CatalogModel::CorrelatedJumpMultidim(_) => InitialLaw::Gaussian { mean: vec![0.0; 2], std: vec![0.5; 2] },
            CatalogModel::StableShotNoise(p) => InitialLaw::Gaussian { mean: vec![p.m0], std: vec![p.p0.sqrt()] },
        }
    }

    fn initial_y(&self) -> Vec<f64> {
        vec![0.0; self.dims().dy]
    }

    fn nu1(&self) -> &LevyMeasure {
        match self {
            CatalogModel::LinearGaussian(_) => &ZERO,
            CatalogModel::ScalarJumpDiffusion(p) => &p.nu1,
            CatalogModel::CorrelatedJumpMultidim(p) => &p.nu1,
            CatalogModel::StableShotNoise(p) => &p.nu,
        }
    }

    fn nu2(&self) -> &LevyMeasure {
        match self {
            CatalogModel::LinearGaussian(_) => &ZERO,
            CatalogModel::ScalarJumpDiffusion(p) => &p.nu2,
            CatalogModel::CorrelatedJumpMultidim(p) => &p.nu2,
            CatalogModel::StableShotNoise(p) => &p.nu,
        }
    }

    fn b1<S: Real>(&self, _t: f64, x: &[S], _y: &[S], out: &mut [S]) {
        match self {
            CatalogModel::LinearGaussian(p) => out[0] = x[0] * p.a,
            CatalogModel::ScalarJumpDiffusion(p) => out[0] = x[0] * (-p.kappa),
            CatalogModel::CorrelatedJumpMultidim(_) => {
                for i in 0..2 {
                    out[i] = x[0] * A_MULTI[i][0] + x[1] * A_MULTI[i][1];
                }
            }
            CatalogModel::StableShotNoise(p) => out[0] = x[0] * (-p.kappa),
        }
    }

    fn b2<S: Real>(&self, _t: f64, x: &[S], _y: &[S], out: &mut [S]) {
        match self {
            CatalogModel::LinearGaussian(p) => out[0] = x[0] * p.c,
            CatalogModel::ScalarJumpDiffusion(p) => out[0] = x[0] * p.c,
            CatalogModel::CorrelatedJumpMultidim(_) => {
                out[0] = x[0];
                out[1] = x[1].tanh() + x[0] * 0.5;
            }
            CatalogModel::StableShotNoise(p) => out[0] = x[0] * p.c,
        }
    }

    fn sigma0<S: Real>(&self, _t: f64, _x: &[S], _y: &[S], out: &mut [S]) {
        match self {
            CatalogModel::LinearGaussian(p) => out[0] = S::cst(p.sb),
            CatalogModel::ScalarJumpDiffusion(p) => out[0] = S::cst(p.sb),
            CatalogModel::CorrelatedJumpMultidim(p) => {
                out[0] = S::cst(p.sb);
                out[1] = S::zero();
                out[2] = S::zero();
                out[3] = S::cst(p.sb);
            }
            CatalogModel::StableShotNoise(p) => out[0] = S::cst(p.sb),
        }
    }

    fn sigma1<S: Real>(&self, _t: f64, _w: &[S], x: &[S], _y: &[S], out: &mut [S]) {
        match self {
            CatalogModel::LinearGaussian(p) => out[0] = S::cst(p.sw),
            CatalogModel::ScalarJumpDiffusion(p) => out[0] = x[0] * p.s1,
            CatalogModel::CorrelatedJumpMultidim(p) => {
                out[0] = (x[0].sin() * 0.1 + 1.0) * p.s1;
                out[1] = S::cst(0.2 * p.s1);
                out[2] = S::zero();
                out[3] = (x[1].cos() * 0.1 + 1.0) * p.s1;
            }
            CatalogModel::StableShotNoise(p) => out[0] = S::cst(p.s1),
        }
    }

    fn sigma2<S: Real>(&self, _t: f64, _w: &[S], _y: &[S], out: &mut [S]) {
        match self {
            CatalogModel::LinearGaussian(p) => out[0] = S::cst(p.s2),
            CatalogModel::ScalarJumpDiffusion(p) => out[0] = S::cst(p.s2),
            CatalogModel::CorrelatedJumpMultidim(p) => {
                out[0] = S::cst(p.s2);
                out[1] = S::cst(0.3 * p.s2);
                out[2] = S::zero();
                out[3] = S::cst(p.s2);
            }
            CatalogModel::StableShotNoise(p) => out[0] = S::cst(p.s2),
        }
    }

    fn f1<S: Real>(&self, _t: f64, _x: &[S], _y: &[S], u: f64, out: &mut [S]) {
        match self {
            CatalogModel::LinearGaussian(_) => out[0] = S::zero(),
            CatalogModel::ScalarJumpDiffusion(_) => out[0] = S::cst(u),
            CatalogModel::CorrelatedJumpMultidim(_) => {
                out[0] = S::cst(u);
                out[1] = S::cst(0.5 * u);
            }
            CatalogModel::StableShotNoise(p) => out[0] = S::cst(u * p.n1),
        }
    }

    fn f2<S: Real>(&self, _t: f64, _y: &[S], u: f64, out: &mut [S]) {
        match self {
            CatalogModel::LinearGaussian(_) => out[0] = S::zero(),
            CatalogModel::ScalarJumpDiffusion(_) => out[0] = S::cst(u),
            CatalogModel::CorrelatedJumpMultidim(_) => {
                out[0] = S::cst(u);
                out[1] = S::cst(-0.5 * u);
            }
            CatalogModel::StableShotNoise(p) => out[0] = S::cst(u * p.n2),
        }
    }

    fn f3<S: Real>(&self, _t: f64, _x: &[S], _y: &[S], u: f64, out: &mut [S]) {
        match self {
            CatalogModel::LinearGaussian(_) => out[0] = S::zero(),
            CatalogModel::ScalarJumpDiffusion(p) => out[0] = S::cst(p.g3 * u),
            CatalogModel::CorrelatedJumpMultidim(p) => {
                out[0] = S::cst(p.g3 * u);
                out[1] = S::cst(p.g3 * u);
            }
            CatalogModel::StableShotNoise(p) => out[0] = S::cst(u * p.n3),
        }
    }

    fn lambda<S: Real>(&self, _t: f64, x: &[S], _u: f64) -> S {
        match self {
            CatalogModel::LinearGaussian(_) | CatalogModel::StableShotNoise(_) => S::one(),
            CatalogModel::ScalarJumpDiffusion(p) => x[0].tanh() * p.lam_amp + 1.0,
            CatalogModel::CorrelatedJumpMultidim(p) => (x[0] + x[1]).tanh() * p.lam_amp + 1.0,
        }
    }

    fn lambda_max(&self) -> f64 {
        match self {
            CatalogModel::LinearGaussian(_) | CatalogModel::StableShotNoise(_) => 1.0,
            CatalogModel::ScalarJumpDiffusion(p) => 1.0 + p.lam_amp.abs(),
            CatalogModel::CorrelatedJumpMultidim(p) => 1.0 + p.lam_amp.abs(),
        }
    }

    fn common_noise_commutative(&self) -> bool {
        self.dims().dx == 1
    }
}

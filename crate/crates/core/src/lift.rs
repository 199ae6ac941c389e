//! Level-2 rough paths: Stratonovich lifts of sampled continuous paths,
//! Marcus lifts of cadlag paths, and the inhomogeneous p-variation and
//! α-Hölder rough path distances.
//!
//! Between grid points a rough path follows the geodesic
//! `X_{t_{k-1}} ∘ exp(θ · log(X_{t_{k-1}}⁻¹ X_{t_k−}))`; at flagged times it
//! then jumps from the left limit to the point.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cadlag_path::{check_times, merged_grid, pvar_dp, CadlagPath};
use crate::error::{Error, Result};
use crate::tensor_group::{antisym_frobenius, group_exp, increment_into, GroupElement};

#[derive(Clone, Debug, PartialEq)]
pub struct RoughPath {
    dim: usize,
    times: Vec<f64>,
    points: Vec<GroupElement>,
    pre_points: Vec<GroupElement>,
    jump_flags: Vec<bool>,
}

impl RoughPath {
    /// Assemble from raw parts. `points[0]` must be the identity and
    /// `pre_points[k] == points[k]` wherever the jump flag is unset.
    pub fn from_parts(
        times: Vec<f64>,
        points: Vec<GroupElement>,
        pre_points: Vec<GroupElement>,
        jump_flags: Vec<bool>,
    ) -> Result<Self> {
        check_times(&times)?;
        let n = times.len();
        if points.len() != n || pre_points.len() != n || jump_flags.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: points.len() });
        }
        let dim = points[0].dim();
        if !points[0].is_identity() {
            return Err(Error::InvalidPath("rough path must start at the identity".into()));
        }
        for k in 0..n {
            if points[k].dim() != dim || pre_points[k].dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: points[k].dim() });
            }
            if !jump_flags[k] && points[k] != pre_points[k] {
                return Err(Error::InvalidPath(format!("left limit differs from point at unflagged sample {k}")));
            }
        }
        if jump_flags[0] {
            return Err(Error::InvalidPath("no jump allowed at time 0".into()));
        }
        Ok(RoughPath { dim, times, points, pre_points, jump_flags })
    }

    /// Continuous rough path from its points.
    pub fn continuous(times: Vec<f64>, points: Vec<GroupElement>) -> Result<Self> {
        let n = points.len();
        Self::from_parts(times, points.clone(), points, vec![false; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }
    pub fn point(&self, k: usize) -> &GroupElement {
        &self.points[k]
    }
    pub fn pre_point(&self, k: usize) -> &GroupElement {
        &self.pre_points[k]
    }
    pub fn points(&self) -> &[GroupElement] {
        &self.points
    }
    pub fn jump_flags(&self) -> &[bool] {
        &self.jump_flags
    }
    pub fn is_jump(&self, k: usize) -> bool {
        self.jump_flags[k]
    }
    pub fn jump_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.jump_flags[k]).collect()
    }
    pub fn has_jumps(&self) -> bool {
        self.jump_flags.iter().any(|&f| f)
    }
    pub fn end_point(&self) -> &GroupElement {
        self.points.last().unwrap()
    }

    /// `X_{t_i}⁻¹ ∘ X_{t_j}`.
    pub fn increment(&self, i: usize, j: usize) -> GroupElement {
        self.points[i].increment_to(&self.points[j])
    }

    /// Continuous increment over segment `k`: `X_{t_{k-1}}⁻¹ ∘ X_{t_k−}`.
    pub fn segment_increment(&self, k: usize) -> GroupElement {
        self.points[k - 1].increment_to(&self.pre_points[k])
    }

    /// Jump increment `X_{t_k−}⁻¹ ∘ X_{t_k}` (identity when not flagged).
    pub fn jump_increment(&self, k: usize) -> GroupElement {
        self.pre_points[k].increment_to(&self.points[k])
    }

    fn segment_of(&self, t: f64) -> Option<usize> {
        if t <= 0.0 {
            return None;
        }
        Some(self.times.partition_point(|&s| s < t).min(self.len() - 1))
    }

    fn interior(&self, k: usize, t: f64) -> GroupElement {
        let th = (t - self.times[k - 1]) / (self.times[k] - self.times[k - 1]);
        self.points[k - 1].mul(&self.segment_increment(k).geodesic_fraction(th))
    }

    /// Point at time `t` (right-continuous), geodesic between samples.
    pub fn point_at(&self, t: f64) -> GroupElement {
        match self.segment_of(t) {
            None => self.points[0].clone(),
            Some(k) if self.times[k] == t || t > self.horizon() => self.points[k].clone(),
            Some(k) => self.interior(k, t),
        }
    }

    /// Left limit at time `t`.
    pub fn left_limit_at(&self, t: f64) -> GroupElement {
        match self.segment_of(t) {
            None => self.points[0].clone(),
            Some(k) if self.times[k] == t || t > self.horizon() => self.pre_points[k].clone(),
            Some(k) => self.interior(k, t),
        }
    }

    /// Re-evaluate on a grid containing every jump time.
    pub fn resample(&self, grid: &[f64]) -> Result<RoughPath> {
        check_times(grid)?;
        if *grid.last().unwrap() != self.horizon() {
            return Err(Error::InvalidPath("resample grid must end at the path horizon".into()));
        }
        for k in self.jump_indices() {
            if grid.binary_search_by(|s| s.total_cmp(&self.times[k])).is_err() {
                return Err(Error::InvalidPath(format!("resample grid misses jump time {}", self.times[k])));
            }
        }
        let mut points = Vec::with_capacity(grid.len());
        let mut pre = Vec::with_capacity(grid.len());
        let mut flags = Vec::with_capacity(grid.len());
        let mut k = 0;
        for &t in grid {
            while k < self.len() && self.times[k] < t {
                k += 1;
            }
            if k < self.len() && self.times[k] == t {
                points.push(self.points[k].clone());
                pre.push(self.pre_points[k].clone());
                flags.push(self.jump_flags[k]);
            } else {
                let g = if t <= 0.0 { self.points[0].clone() } else { self.interior(k, t) };
                points.push(g.clone());
                pre.push(g);
                flags.push(false);
            }
        }
        RoughPath::from_parts(grid.to_vec(), points, pre, flags)
    }

    /// Insert extra sample times.
    pub fn refined(&self, extra: &[f64]) -> Result<RoughPath> {
        let mut grid: Vec<f64> = extra.iter().copied().filter(|&t| t > 0.0 && t < self.horizon()).collect();
        grid.extend_from_slice(&self.times);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        self.resample(&grid)
    }

    /// Same points at new strictly increasing times.
    pub fn retimed(&self, times: Vec<f64>) -> Result<RoughPath> {
        if times.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: times.len() });
        }
        check_times(&times)?;
        let mut r = self.clone();
        r.times = times;
        Ok(r)
    }

    /// Time reversal `s ↦ X_T⁻¹ ∘ X_{T−s}` of a continuous rough path.
    pub fn reversed(&self) -> Result<RoughPath> {
        if let Some(k) = self.jump_indices().first() {
            return Err(Error::UnexpectedJump(*k));
        }
        let t_end = self.horizon();
        let n = self.len();
        let end = self.end_point();
        let mut times = Vec::with_capacity(n);
        let mut points = Vec::with_capacity(n);
        for k in (0..n).rev() {
            times.push(if k == n - 1 { 0.0 } else { t_end - self.times[k] });
            points.push(end.increment_to(&self.points[k]));
        }
        *times.last_mut().unwrap() = t_end;
        points[0] = GroupElement::identity(self.dim);
        RoughPath::continuous(times, points)
    }

    /// The underlying level-1 path (starting at 0).
    pub fn level1_path(&self) -> CadlagPath {
        let values = self.points.iter().flat_map(|g| g.level1.clone()).collect();
        let pre = self.pre_points.iter().flat_map(|g| g.level1.clone()).collect();
        CadlagPath::with_left_limits(self.times.clone(), values, pre, self.dim).expect("rough path has valid times")
    }

    /// Largest violation of the geometric identity over all points, left
    /// limits and jump increments.
    pub fn max_geometric_defect(&self) -> f64 {
        let mut m: f64 = 0.0;
        for k in 0..self.len() {
            m = m.max(self.points[k].geometric_defect()).max(self.pre_points[k].geometric_defect());
        }
        m
    }

    /// `|X_{s,u} − X_{s,t} ∘ X_{t,u}|_∞` for grid indices `s < t < u`.
    pub fn chen_defect(&self, s: usize, t: usize, u: usize) -> f64 {
        let lhs = self.increment(s, u);
        let rhs = self.increment(s, t).mul(&self.increment(t, u));
        lhs.max_abs_diff(&rhs)
    }

    /// Largest level-2 log entry over the jump increments (zero for Marcus
    /// lifts).
    pub fn max_jump_area(&self) -> f64 {
        self.jump_indices().iter().fold(0.0, |m, &k| m.max(self.jump_increment(k).log().level2_max_abs()))
    }

    pub fn to_json(&self) -> RoughPathJson {
        let jumps = self.has_jumps();
        RoughPathJson {
            times: self.times.clone(),
            level1: self.points.iter().map(|g| g.level1.clone()).collect(),
            level2: self.points.iter().map(|g| g.level2.clone()).collect(),
            jump_flags: self.jump_flags.clone(),
            pre_level1: jumps.then(|| self.pre_points.iter().map(|g| g.level1.clone()).collect()),
            pre_level2: jumps.then(|| self.pre_points.iter().map(|g| g.level2.clone()).collect()),
        }
    }

    pub fn from_json(j: &RoughPathJson) -> Result<RoughPath> {
        let points =
            j.level1.iter().zip(&j.level2).map(|(a, b)| GroupElement::from_parts(a.clone(), b.clone())).collect::<Result<Vec<_>>>()?;
        let pre = match (&j.pre_level1, &j.pre_level2) {
            (Some(a), Some(b)) => {
                a.iter().zip(b).map(|(x, y)| GroupElement::from_parts(x.clone(), y.clone())).collect::<Result<Vec<_>>>()?
            }
            _ => points.clone(),
        };
        RoughPath::from_parts(j.times.clone(), points, pre, j.jump_flags.clone())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(f), &self.to_json())?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<RoughPath> {
        let f = std::fs::File::open(path)?;
        let j: RoughPathJson = serde_json::from_reader(std::io::BufReader::new(f))?;
        Self::from_json(&j)
    }
}

/// JSON layout of a rough path; level-2 arrays are row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoughPathJson {
    pub times: Vec<f64>,
    pub level1: Vec<Vec<f64>>,
    pub level2: Vec<Vec<f64>>,
    pub jump_flags: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_level1: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_level2: Option<Vec<Vec<f64>>>,
}

fn lift_segments(x: &CadlagPath) -> RoughPath {
    let d = x.dim();
    let n = x.len();
    let mut points = Vec::with_capacity(n);
    let mut pre_points = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    points.push(GroupElement::identity(d));
    pre_points.push(GroupElement::identity(d));
    flags.push(false);
    for k in 1..n {
        let seg: Vec<f64> = x.pre_value(k).iter().zip(x.value(k - 1)).map(|(a, b)| a - b).collect();
        let pre = points[k - 1].mul(&group_exp(&seg));
        if x.is_jump(k) {
            let post = pre.mul(&group_exp(&x.jump(k)));
            pre_points.push(pre);
            points.push(post);
            flags.push(true);
        } else {
            pre_points.push(pre.clone());
            points.push(pre);
            flags.push(false);
        }
    }
    RoughPath { dim: d, times: x.times().to_vec(), points, pre_points, jump_flags: flags }
}

/// Level-2 lift of a continuous piecewise-linear path: each segment
/// contributes `exp(Δx)`.
pub fn stratonovich_lift(x: &CadlagPath) -> Result<RoughPath> {
    if let Some(k) = x.jump_indices().first() {
        return Err(Error::UnexpectedJump(*k));
    }
    Ok(lift_segments(x))
}

/// Marcus lift: continuous stretches as in [`stratonovich_lift`], each jump
/// contributes `exp(x_t − x_{t−})`.
pub fn marcus_lift(x: &CadlagPath) -> RoughPath {
    lift_segments(x)
}

/// Both paths on their merged grid, as flat level-1/level-2 sequences with
/// the left limits inserted wherever either path jumps.
fn merged_sequences(x: &RoughPath, y: &RoughPath) -> Result<(Vec<f64>, [Vec<f64>; 4])> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), got: y.dim() });
    }
    let grid = merged_grid(x.times(), y.times())?;
    let (a, b) = (x.resample(&grid)?, y.resample(&grid)?);
    let mut ts = Vec::new();
    let mut seqs: [Vec<f64>; 4] = Default::default();
    let push = |seqs: &mut [Vec<f64>; 4], ga: &GroupElement, gb: &GroupElement| {
        seqs[0].extend_from_slice(&ga.level1);
        seqs[1].extend_from_slice(&ga.level2);
        seqs[2].extend_from_slice(&gb.level1);
        seqs[3].extend_from_slice(&gb.level2);
    };
    for k in 0..grid.len() {
        if a.is_jump(k) || b.is_jump(k) {
            ts.push(grid[k]);
            push(&mut seqs, a.pre_point(k), b.pre_point(k));
        }
        ts.push(grid[k]);
        push(&mut seqs, a.point(k), b.point(k));
    }
    Ok((ts, seqs))
}

/// Level-wise differences `(|X¹_{ij} − Y¹_{ij}|, |X²_{ij} − Y²_{ij}|)`
/// between points `i` and `j` of merged sequences.
fn level_diffs(seqs: &[Vec<f64>; 4], d: usize, i: usize, j: usize, buf: &mut [Vec<f64>; 4]) -> (f64, f64) {
    let [a1, a2, b1, b2] = buf;
    increment_into(
        &seqs[0][i * d..(i + 1) * d],
        &seqs[1][i * d * d..(i + 1) * d * d],
        &seqs[0][j * d..(j + 1) * d],
        &seqs[1][j * d * d..(j + 1) * d * d],
        a1,
        a2,
    );
    increment_into(
        &seqs[2][i * d..(i + 1) * d],
        &seqs[3][i * d * d..(i + 1) * d * d],
        &seqs[2][j * d..(j + 1) * d],
        &seqs[3][j * d * d..(j + 1) * d * d],
        b1,
        b2,
    );
    let e1 = a1.iter().zip(b1.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let e2 = a2.iter().zip(b2.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    (e1, e2)
}

/// Inhomogeneous p-variation distance
/// `max_k (sup_P Σ |X^k_{t_i,t_{i+1}} − Y^k_{t_i,t_{i+1}}|^{p/k})^{k/p}`,
/// with partitions drawn from the merged grid (left limits included).
pub fn rho_p(x: &RoughPath, y: &RoughPath, p: f64) -> Result<f64> {
    if !(2.0..3.0).contains(&p) {
        return Err(Error::invalid(format!("rough p-variation distance needs p in [2,3), got {p}")));
    }
    let d = x.dim();
    let (ts, seqs) = merged_sequences(x, y)?;
    let n = ts.len();
    let mut buf: [Vec<f64>; 4] = [vec![0.0; d], vec![0.0; d * d], vec![0.0; d], vec![0.0; d * d]];
    let (s1, _) = pvar_dp(n, p, |i, j| level_diffs(&seqs, d, i, j, &mut buf).0);
    let (s2, _) = pvar_dp(n, p / 2.0, |i, j| level_diffs(&seqs, d, i, j, &mut buf).1);
    Ok(s1.powf(1.0 / p).max(s2.powf(2.0 / p)))
}

/// Inhomogeneous α-Hölder distance
/// `max_k sup_{s<t} |X^k_{s,t} − Y^k_{s,t}| / (t−s)^{kα}` over the merged
/// grid of two continuous rough paths.
pub fn rho_alpha(x: &RoughPath, y: &RoughPath, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::invalid(format!("Hölder exponent must lie in (0, 1/2], got {alpha}")));
    }
    if x.has_jumps() || y.has_jumps() {
        return Err(Error::invalid("α-Hölder distance needs continuous rough paths"));
    }
    let d = x.dim();
    let (ts, seqs) = merged_sequences(x, y)?;
    let n = ts.len();
    let mut buf: [Vec<f64>; 4] = [vec![0.0; d], vec![0.0; d * d], vec![0.0; d], vec![0.0; d * d]];
    let mut m: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dt = ts[j] - ts[i];
            let (e1, e2) = level_diffs(&seqs, d, i, j, &mut buf);
            m = m.max(e1 / dt.powf(alpha)).max(e2 / dt.powf(2.0 * alpha));
        }
    }
    Ok(m)
}

/// Signed Lévy area `A_{12}` of a 2-D group element (antisymmetric level-2
/// entry).
pub fn levy_area(g: &GroupElement) -> f64 {
    let d = g.dim();
    assert!(d >= 2);
    0.5 * (g.level2[1] - g.level2[d])
}

/// Frobenius norm of the antisymmetric level-2 part.
pub fn area_norm(g: &GroupElement) -> f64 {
    antisym_frobenius(&g.level2, g.dim())
}

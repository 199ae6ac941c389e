//! Jump fill-in: path functions, admissible pairs, the time extension τ,
//! the continuous representative x^φ, the time change τ_x and the α_p/β_p
//! distance estimators.
//!
//! Each jump of the rough path gets a fictitious-time slot of width
//! `δ·r_k`, where `k` is the rank of the jump by size (largest first, ties
//! broken by earlier time). Inside the slot the path follows φ from the
//! left limit to the post-jump value. The extended path on `[0, T + δr]`
//! is then squeezed back onto `[0, T]`.

use serde::{Deserialize, Serialize};

use crate::cadlag_path::{warp_search, Warpable};
use crate::error::{Error, Result};
use crate::lift::{rho_p, RoughPath};
use crate::tensor_group::{homogeneous_norm, GroupElement, TensorElement};

/// Continuous interpolation φ(a,b) on `[0,1]` with φ₀ = a and φ₁ = b.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PathFunction {
    /// `a ∘ exp(s · log(a⁻¹b))`.
    LogLinear,
    /// Level-1 chord on `[0,½]`, then the antisymmetric area of `a⁻¹b` on
    /// `[½,1]`.
    Linear,
    /// `a ∘ exp(w(s) · log(a⁻¹b))` with `w` piecewise linear through the
    /// table, `w(0)=0`, `w(1)=1`.
    Tabulated { s: Vec<f64>, w: Vec<f64> },
}

impl PathFunction {
    pub fn tabulated(s: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if s.len() < 2 || s.len() != w.len() {
            return Err(Error::invalid("tabulated path function needs matching tables of length >= 2"));
        }
        if s[0] != 0.0 || *s.last().unwrap() != 1.0 || w[0] != 0.0 || *w.last().unwrap() != 1.0 {
            return Err(Error::invalid("tabulated path function must satisfy s: 0→1 and w(0)=0, w(1)=1"));
        }
        if s.windows(2).any(|p| !(p[1] > p[0])) || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tabulated path function needs strictly increasing s and finite w"));
        }
        Ok(PathFunction::Tabulated { s, w })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PathFunction::LogLinear => "log_linear",
            PathFunction::Linear => "linear",
            PathFunction::Tabulated { .. } => "tabulated",
        }
    }

    /// Interior fractions where the interpolation changes direction; the
    /// path is a geodesic between consecutive breakpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            PathFunction::LogLinear => vec![],
            PathFunction::Linear => vec![0.5],
            PathFunction::Tabulated { s, .. } => s[1..s.len() - 1].to_vec(),
        }
    }

    pub fn eval(&self, a: &GroupElement, b: &GroupElement, s: f64) -> GroupElement {
        if s <= 0.0 {
            return a.clone();
        }
        if s >= 1.0 {
            return b.clone();
        }
        let l = a.increment_to(b).log();
        match self {
            PathFunction::LogLinear => a.mul(&l.scale(s).exp()),
            PathFunction::Linear => {
                let d = l.dim();
                let mut chord = TensorElement::zero(d);
                chord.level1 = l.level1.clone();
                let mut area = TensorElement::zero(d);
                area.level2 = l.level2.clone();
                if s <= 0.5 {
                    a.mul(&chord.scale(2.0 * s).exp())
                } else {
                    a.mul(&chord.exp()).mul(&area.scale(2.0 * s - 1.0).exp())
                }
            }
            PathFunction::Tabulated { s: ss, w } => {
                let k = ss.partition_point(|&v| v <= s).clamp(1, ss.len() - 1);
                let th = (s - ss[k - 1]) / (ss[k] - ss[k - 1]);
                let wv = w[k - 1] + th * (w[k] - w[k - 1]);
                a.mul(&l.scale(wv).exp())
            }
        }
    }
}

/// Positive summable slot-width sequence `r_1, r_2, …`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RSeq {
    /// `r_k = ratio^k`.
    Geometric { ratio: f64 },
    /// `prefix[k-1]` for `k ≤ prefix.len()`, then geometric decay by
    /// `tail_ratio` from the last prefix entry.
    Explicit { prefix: Vec<f64>, tail_ratio: f64 },
}

impl Default for RSeq {
    fn default() -> Self {
        RSeq::Geometric { ratio: 0.5 }
    }
}

impl RSeq {
    pub fn validate(&self) -> Result<()> {
        match self {
            RSeq::Geometric { ratio } if *ratio > 0.0 && *ratio < 1.0 => Ok(()),
            RSeq::Geometric { ratio } => Err(Error::invalid(format!("geometric r sequence with ratio {ratio} is not summable"))),
            RSeq::Explicit { prefix, tail_ratio } => {
                if prefix.is_empty() || prefix.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return Err(Error::invalid("explicit r prefix must be non-empty, positive and finite"));
                }
                if !(*tail_ratio > 0.0 && *tail_ratio < 1.0) {
                    return Err(Error::invalid(format!("r tail ratio {tail_ratio} is not summable")));
                }
                Ok(())
            }
        }
    }

    /// `2^{-k}` for up to 30 jumps; beyond that a geometric sequence whose
    /// `n`-th term is `2^{-30}`, keeping slots above time resolution.
    pub fn for_jumps(n: usize) -> Self {
        if n <= 30 {
            RSeq::default()
        } else {
            RSeq::Geometric { ratio: 0.5f64.powf(30.0 / n as f64) }
        }
    }

    /// `r_k` for `k ≥ 1`.
    pub fn r(&self, k: usize) -> f64 {
        match self {
            RSeq::Geometric { ratio } => ratio.powi(k as i32),
            RSeq::Explicit { prefix, tail_ratio } => {
                if k <= prefix.len() {
                    prefix[k - 1]
                } else {
                    prefix[prefix.len() - 1] * tail_ratio.powi((k - prefix.len()) as i32)
                }
            }
        }
    }
}

/// A rough path with the data needed to fill its jumps.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmissiblePair {
    pub rough: RoughPath,
    pub phi: PathFunction,
    pub r_seq: RSeq,
    pub delta: f64,
}

impl AdmissiblePair {
    pub fn new(rough: RoughPath, phi: PathFunction, r_seq: RSeq, delta: f64) -> Result<Self> {
        r_seq.validate()?;
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0,1], got {delta}")));
        }
        Ok(AdmissiblePair { rough, phi, r_seq, delta })
    }

    /// Log-linear fill-in, `r_k = 2^{-k}`, `δ = 1`.
    pub fn marcus(rough: RoughPath) -> Self {
        AdmissiblePair { rough, phi: PathFunction::LogLinear, r_seq: RSeq::default(), delta: 1.0 }
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        AdmissiblePair::new(self.rough.clone(), self.phi.clone(), self.r_seq.clone(), delta)
    }

    pub fn with_r_seq(&self, r_seq: RSeq) -> Result<Self> {
        AdmissiblePair::new(self.rough.clone(), self.phi.clone(), r_seq, self.delta)
    }
}

/// One fictitious-time slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Slot {
    pub time: f64,
    /// 1-based rank by jump size.
    pub rank: usize,
    pub width: f64,
    pub size: f64,
}

/// The map `τ(t) = t + Σ_k δ r_k 1{t_k ≤ t}` and its slots (in time order).
#[derive(Clone, Debug, PartialEq)]
pub struct TimeExtension {
    pub horizon: f64,
    /// `δ · Σ_k r_k` over the actual jumps.
    pub total: f64,
    pub slots: Vec<Slot>,
}

impl TimeExtension {
    pub fn identity(horizon: f64) -> Self {
        TimeExtension { horizon, total: 0.0, slots: vec![] }
    }

    fn from_sizes(horizon: f64, jumps: Vec<(f64, f64)>, r_seq: &RSeq, delta: f64) -> Self {
        // rank by size, ties by earlier time
        let mut order: Vec<usize> = (0..jumps.len()).collect();
        order.sort_by(|&a, &b| jumps[b].1.total_cmp(&jumps[a].1).then(jumps[a].0.total_cmp(&jumps[b].0)));
        let mut slots = vec![None; jumps.len()];
        for (rank0, &j) in order.iter().enumerate() {
            slots[j] = Some(Slot { time: jumps[j].0, rank: rank0 + 1, width: delta * r_seq.r(rank0 + 1), size: jumps[j].1 });
        }
        let slots: Vec<Slot> = slots.into_iter().map(|s| s.unwrap()).collect();
        let total = slots.iter().map(|s| s.width).sum();
        TimeExtension { horizon, total, slots }
    }

    /// `τ(t)`.
    pub fn tau(&self, t: f64) -> f64 {
        let mut v = t;
        for s in &self.slots {
            if s.time <= t {
                v += s.width;
            }
        }
        v
    }

    /// `τ(t−)`.
    pub fn tau_left(&self, t: f64) -> f64 {
        let mut v = t;
        for s in &self.slots {
            if s.time < t {
                v += s.width;
            }
        }
        v
    }

    pub fn extended_horizon(&self) -> f64 {
        self.horizon + self.total
    }

    /// Slot intervals `[τ(t_k−), τ(t_k)]` in extended time.
    pub fn jump_slots(&self) -> Vec<(f64, f64)> {
        self.slots.iter().map(|s| (self.tau_left(s.time), self.tau(s.time))).collect()
    }

    /// Squeeze factor `T / (T + δr)` of `τ_r⁻¹`.
    pub fn squeeze(&self) -> f64 {
        if self.total == 0.0 {
            1.0
        } else {
            self.horizon / (self.horizon + self.total)
        }
    }
}

/// `τ_x = τ_r⁻¹ ∘ τ : [0,T] → [0,T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeChange {
    pub extension: TimeExtension,
}

impl TimeChange {
    pub fn tau_x(&self, t: f64) -> f64 {
        self.extension.tau(t) * self.extension.squeeze()
    }

    /// `τ_r(t) = t (T + δr) / T`.
    pub fn tau_r(&self, t: f64) -> f64 {
        t / self.extension.squeeze()
    }
}

/// Slots of a single admissible pair.
pub fn time_extension(pair: &AdmissiblePair) -> Result<TimeExtension> {
    pair.r_seq.validate()?;
    let x = &pair.rough;
    let jumps = x.jump_indices().into_iter().map(|k| (x.times()[k], homogeneous_norm(&x.jump_increment(k)))).collect();
    Ok(TimeExtension::from_sizes(x.horizon(), jumps, &pair.r_seq, pair.delta))
}

/// Where a node of the filled path sits relative to the original samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Marker {
    /// Left limit at original sample `k`.
    Pre(usize),
    /// Value at original sample `k`.
    Post(usize),
    /// Both (no slot at this sample).
    Both(usize),
}

/// Node of the filled path in extended time.
#[derive(Clone, Debug)]
pub struct FillNode {
    pub t_ext: f64,
    /// Extended-time length of the segment ending at this node.
    pub dur: f64,
    pub point: GroupElement,
    /// Whether the segment ending here lies inside a slot.
    pub in_slot: bool,
    pub marker: Option<Marker>,
}

/// Nodes of x̂ on `[0, T + δr]` for the given slot structure.
pub fn fill_nodes(pair: &AdmissiblePair, ext: &TimeExtension) -> Result<Vec<FillNode>> {
    let x = &pair.rough;
    let slot_times: Vec<f64> = ext.slots.iter().map(|s| s.time).collect();
    let r = x.refined(&slot_times)?;
    let orig = x.times();
    let orig_index = |t: f64| orig.binary_search_by(|s| s.total_cmp(&t)).ok();
    let mut nodes = Vec::with_capacity(r.len() + 2 * ext.slots.len());
    nodes.push(FillNode { t_ext: 0.0, dur: 0.0, point: r.point(0).clone(), in_slot: false, marker: Some(Marker::Both(0)) });
    let breaks = pair.phi.breakpoints();
    for k in 1..r.len() {
        let t = r.times()[k];
        let ok = orig_index(t);
        let slot = ext.slots.iter().find(|s| s.time == t);
        let t_left = ext.tau_left(t);
        match slot {
            None => {
                if r.is_jump(k) {
                    return Err(Error::invalid(format!("jump at t={t} has no slot")));
                }
                nodes.push(FillNode {
                    t_ext: t_left,
                    dur: t - r.times()[k - 1],
                    point: r.point(k).clone(),
                    in_slot: false,
                    marker: ok.map(Marker::Both),
                });
            }
            Some(s) => {
                let (pre, post) = (r.pre_point(k), r.point(k));
                nodes.push(FillNode {
                    t_ext: t_left,
                    dur: t - r.times()[k - 1],
                    point: pre.clone(),
                    in_slot: false,
                    marker: ok.map(Marker::Pre),
                });
                let mut prev = 0.0;
                if r.is_jump(k) {
                    for &b in &breaks {
                        nodes.push(FillNode {
                            t_ext: t_left + s.width * b,
                            dur: s.width * (b - prev),
                            point: pair.phi.eval(pre, post, b),
                            in_slot: true,
                            marker: None,
                        });
                        prev = b;
                    }
                }
                nodes.push(FillNode {
                    t_ext: ext.tau(t),
                    dur: s.width * (1.0 - prev),
                    point: post.clone(),
                    in_slot: true,
                    marker: ok.map(Marker::Post),
                });
            }
        }
    }
    Ok(nodes)
}

/// The continuous representative together with index maps back to the
/// original samples.
#[derive(Clone, Debug)]
pub struct ContinuousRepresentative {
    pub path: RoughPath,
    /// Index in `path` of the value at each original sample.
    pub sample_index: Vec<usize>,
    /// Index in `path` of the left limit at each original sample.
    pub pre_index: Vec<usize>,
    /// Per node: whether the segment ending there is inside a slot.
    pub in_slot: Vec<bool>,
    pub time_change: TimeChange,
}

fn representative_on(pair: &AdmissiblePair, ext: TimeExtension) -> Result<ContinuousRepresentative> {
    let nodes = fill_nodes(pair, &ext)?;
    let squeeze = ext.squeeze();
    let n0 = pair.rough.len();
    let mut sample_index = vec![0; n0];
    let mut pre_index = vec![0; n0];
    for (i, nd) in nodes.iter().enumerate() {
        match nd.marker {
            Some(Marker::Both(k)) => {
                sample_index[k] = i;
                pre_index[k] = i;
            }
            Some(Marker::Pre(k)) => pre_index[k] = i,
            Some(Marker::Post(k)) => sample_index[k] = i,
            None => {}
        }
    }
    let mut times: Vec<f64> = nodes.iter().map(|n| n.t_ext * squeeze).collect();
    *times.last_mut().unwrap() = pair.rough.horizon();
    let points = nodes.iter().map(|n| n.point.clone()).collect();
    let path = RoughPath::continuous(times, points).map_err(|e| {
        Error::InvalidParameter(format!("slot widths fall below time resolution ({e}); use a slower-decaying r sequence"))
    })?;
    Ok(ContinuousRepresentative {
        path,
        sample_index,
        pre_index,
        in_slot: nodes.iter().map(|n| n.in_slot).collect(),
        time_change: TimeChange { extension: ext },
    })
}

/// `x^φ = x̂ ∘ τ_r` on `[0, T]`.
pub fn continuous_representative(pair: &AdmissiblePair) -> Result<ContinuousRepresentative> {
    let ext = time_extension(pair)?;
    representative_on(pair, ext)
}

/// `τ_x = τ_r⁻¹ ∘ τ`.
pub fn time_change_back(pair: &AdmissiblePair) -> Result<TimeChange> {
    Ok(TimeChange { extension: time_extension(pair)? })
}

/// Per-δ distances and the small-δ estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub per_delta: Vec<(f64, f64)>,
    /// Value at the smallest δ.
    pub estimate: f64,
    /// Last two values agree within 5% (relative) or 1e-12 (absolute).
    pub stagnated: bool,
    /// The two paths jump at different times.
    pub mismatched_jumps: bool,
}

fn finish(per_delta: Vec<(f64, f64)>, mismatched: bool) -> MetricEstimate {
    let estimate = per_delta.last().unwrap().1;
    let stagnated = match per_delta.len() {
        1 => false,
        n => {
            let (a, b) = (per_delta[n - 2].1, per_delta[n - 1].1);
            (a - b).abs() <= 0.05 * a.abs().max(b.abs()) || (a - b).abs() <= 1e-12
        }
    };
    MetricEstimate { per_delta, estimate, stagnated, mismatched_jumps: mismatched }
}

/// Continuous representatives of both pairs at slot scale δ, each on its
/// own slot structure; the flag reports whether the jump time sets differ.
pub fn paired_representatives(
    x: &AdmissiblePair,
    y: &AdmissiblePair,
    delta: f64,
) -> Result<(ContinuousRepresentative, ContinuousRepresentative, bool)> {
    let (xd, yd) = (x.with_delta(delta)?, y.with_delta(delta)?);
    let a = continuous_representative(&xd)?;
    let b = continuous_representative(&yd)?;
    let ta: Vec<f64> = a.time_change.extension.slots.iter().map(|s| s.time).collect();
    let tb: Vec<f64> = b.time_change.extension.slots.iter().map(|s| s.time).collect();
    Ok((a, b, ta != tb))
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::invalid("delta sequence is empty"));
    }
    if deltas.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
        return Err(Error::invalid("delta values must lie in (0,1]"));
    }
    Ok(())
}

/// `ρ_p(X^{φ,δ}, Y^{φ,δ})` for each δ.
pub fn beta_p(x: &AdmissiblePair, y: &AdmissiblePair, p: f64, deltas: &[f64]) -> Result<MetricEstimate> {
    check_deltas(deltas)?;
    let mut out = Vec::with_capacity(deltas.len());
    let mut mism = false;
    for &d in deltas {
        let (a, b, m) = paired_representatives(x, y, d)?;
        mism |= m;
        out.push((d, rho_p(&a.path, &b.path, p)?));
    }
    Ok(finish(out, mism))
}

impl Warpable for RoughPath {
    fn sample_times(&self) -> &[f64] {
        self.times()
    }
    fn salient_times(&self) -> Vec<f64> {
        self.times().to_vec()
    }
    fn refine_at(&self, extra: &[f64]) -> Result<Self> {
        self.refined(extra)
    }
    fn with_times(&self, times: Vec<f64>) -> Result<Self> {
        self.retimed(times)
    }
}

/// Skorokhod-type distance between continuous rough paths: warps on
/// `warp_grid` uniform knots, inner distance ρ_p.
pub fn rough_sigma_p(x: &RoughPath, y: &RoughPath, p: f64, warp_grid: usize) -> Result<f64> {
    if warp_grid < 1 {
        return Err(Error::invalid("warp_grid must be >= 1"));
    }
    let dist = |w: &RoughPath| rho_p(w, y, p);
    warp_search(x, y.times(), x.horizon(), warp_grid, &dist)
}

/// α_p: as [`beta_p`] with the Skorokhod-type distance in place of ρ_p.
pub fn alpha_p(x: &AdmissiblePair, y: &AdmissiblePair, p: f64, deltas: &[f64], warp_grid: usize) -> Result<MetricEstimate> {
    check_deltas(deltas)?;
    let mut out = Vec::with_capacity(deltas.len());
    let mut mism = false;
    for &d in deltas {
        let (a, b, m) = paired_representatives(x, y, d)?;
        mism |= m;
        out.push((d, rough_sigma_p(&a.path, &b.path, p, warp_grid)?));
    }
    Ok(finish(out, mism))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cadlag_path::{p_variation, CadlagPath};
    use crate::lift::marcus_lift;
    use crate::tensor_group::group_exp;

    fn jump_path(t1: f64, size: f64) -> AdmissiblePair {
        let x = CadlagPath::rectangular(vec![0.0, t1, 1.0], vec![0.0, size, size], 1).unwrap();
        AdmissiblePair::marcus(marcus_lift(&x))
    }

    #[test]
    fn path_functions_hit_endpoints() {
        let a = group_exp(&[0.2, 0.1]);
        let b = a.mul(&GroupElement::from_parts(vec![1.0, -0.5], vec![0.5, 0.3, -0.8, 0.125]).unwrap());
        let tab = PathFunction::tabulated(vec![0.0, 0.3, 1.0], vec![0.0, 1.4, 1.0]).unwrap();
        for phi in [PathFunction::LogLinear, PathFunction::Linear, tab] {
            assert_eq!(phi.eval(&a, &b, 0.0), a);
            assert_eq!(phi.eval(&a, &b, 1.0), b);
            let near = phi.eval(&a, &b, 1.0 - 1e-12);
            assert!(near.max_abs_diff(&b) < 1e-9, "{}", phi.name());
            assert!(phi.eval(&a, &b, 0.37).geometric_defect() < 1e-12);
        }
        assert!(PathFunction::tabulated(vec![0.0, 1.0], vec![0.0, 2.0]).is_err());
    }

    #[test]
    fn no_jumps_gives_identity_extension() {
        let x = CadlagPath::scalar(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 0.5]).unwrap();
        let pair = AdmissiblePair::marcus(marcus_lift(&x));
        let ext = time_extension(&pair).unwrap();
        assert_eq!(ext.total, 0.0);
        assert_eq!(ext.tau(0.7), 0.7);
        let rep = continuous_representative(&pair).unwrap();
        assert_eq!(rep.path, pair.rough);
        let tc = time_change_back(&pair).unwrap();
        assert_eq!(tc.tau_x(0.3), 0.3);
    }

    #[test]
    fn single_jump_with_unit_width() {
        let pair = jump_path(0.5, 1.0)
            .with_r_seq(RSeq::Explicit { prefix: vec![1.0], tail_ratio: 0.5 })
            .unwrap();
        let ext = time_extension(&pair).unwrap();
        assert_eq!(ext.total, 1.0);
        assert_eq!(ext.tau(0.49), 0.49);
        assert_eq!(ext.tau(0.5), 1.5);
        assert_eq!(ext.jump_slots(), vec![(0.5, 1.5)]);
        let tc = time_change_back(&pair).unwrap();
        assert_eq!(tc.tau_x(0.5), 0.75);
        assert_eq!(tc.tau_x(0.25), 0.125);
    }

    #[test]
    fn equal_jumps_ranked_by_time() {
        let x = CadlagPath::rectangular(vec![0.0, 0.3, 0.6, 1.0], vec![0.0, 1.0, 2.0, 2.0], 1).unwrap();
        let ext = time_extension(&AdmissiblePair::marcus(marcus_lift(&x))).unwrap();
        assert_eq!(ext.slots[0].rank, 1);
        assert_eq!(ext.slots[1].rank, 2);
        assert_eq!(ext.slots[0].width, 0.5);
        assert_eq!(ext.slots[1].width, 0.25);
    }

    #[test]
    fn larger_jump_gets_the_wider_slot() {
        let x = CadlagPath::rectangular(vec![0.0, 0.3, 0.6, 1.0], vec![0.0, 1.0, 3.0, 3.0], 1).unwrap();
        let ext = time_extension(&AdmissiblePair::marcus(marcus_lift(&x))).unwrap();
        assert_eq!(ext.slots[1].rank, 1);
        assert_eq!(ext.slots[0].rank, 2);
    }

    #[test]
    fn slot_increments_are_marcus_chords() {
        let pair = jump_path(0.5, 1.0);
        let rep = continuous_representative(&pair).unwrap();
        assert!(!rep.path.has_jumps());
        // exp(Δ·ds) over any sub-step of the slot
        let (i, j) = (rep.pre_index[1], rep.sample_index[1]);
        let t0 = rep.path.times()[i];
        let t1 = rep.path.times()[j];
        for &f in &[0.25, 0.5, 0.75] {
            let a = rep.path.point_at(t0 + (t1 - t0) * f);
            let b = rep.path.point_at(t0 + (t1 - t0) * (f + 0.125));
            let inc = a.increment_to(&b);
            assert!(inc.max_abs_diff(&group_exp(&[0.125])) < 1e-12);
            assert!(inc.log().level2_max_abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_through_time_change() {
        let x = CadlagPath::with_left_limits(
            vec![0.0, 0.2, 0.45, 0.7, 1.0],
            vec![0.0, 0.0, 1.0, 1.0, -0.5, 0.2, 0.3, 0.3, 0.9, -1.0],
            vec![0.0, 0.0, 0.4, 0.1, 0.2, 0.6, 0.3, 0.3, 1.1, -0.7],
            2,
        )
        .unwrap();
        for phi in [PathFunction::LogLinear, PathFunction::Linear] {
            let pair = AdmissiblePair::new(marcus_lift(&x), phi, RSeq::Geometric { ratio: 1.0 / 3.0 }, 0.5).unwrap();
            let rep = continuous_representative(&pair).unwrap();
            let tc = time_change_back(&pair).unwrap();
            for k in 0..x.len() {
                let g = rep.path.point_at(tc.tau_x(x.times()[k]));
                assert!(g.max_abs_diff(pair.rough.point(k)) <= 1e-12);
            }
            // the representative visits more points, so it has at least the p-variation of the image subsequence
            let full = p_variation(&rep.path.level1_path(), 2.5).unwrap();
            let sub = p_variation(&pair.rough.level1_path(), 2.5).unwrap();
            assert!(full >= sub - 1e-12);
        }
    }

    #[test]
    fn beta_zero_for_equal_paths_and_delta_free_for_equal_jumps() {
        let a = jump_path(0.5, 1.0);
        let r = beta_p(&a, &a, 2.5, &[1.0, 0.5, 0.25]).unwrap();
        assert!(r.per_delta.iter().all(|(_, v)| *v == 0.0));
        // same jump, different continuous part
        let xb = CadlagPath::with_left_limits(vec![0.0, 0.5, 1.0], vec![0.0, 1.3, 1.3], vec![0.0, 0.3, 1.3], 1).unwrap();
        let xa = CadlagPath::with_left_limits(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 1.0], vec![0.0, 0.0, 1.0], 1).unwrap();
        let (pa, pb) = (AdmissiblePair::marcus(marcus_lift(&xa)), AdmissiblePair::marcus(marcus_lift(&xb)));
        let r = beta_p(&pa, &pb, 2.5, &[1.0, 0.5, 0.25, 0.125]).unwrap();
        let v0 = r.per_delta[0].1;
        assert!(v0 > 0.0);
        for (_, v) in &r.per_delta {
            assert!((v - v0).abs() < 1e-12 * v0, "{:?}", r.per_delta);
        }
        assert!(r.stagnated);
        assert!(!r.mismatched_jumps);
        assert!(beta_p(&pa, &pb, 2.5, &[]).is_err());
    }

    #[test]
    fn beta_shrinks_with_jump_time_shift() {
        let base = jump_path(0.5, 1.0);
        let mut prev = f64::INFINITY;
        for &h in &[0.2, 0.1, 0.05, 0.025] {
            let other = jump_path(0.5 + h, 1.0);
            let r = beta_p(&base, &other, 2.5, &[1.0]).unwrap();
            assert!(r.mismatched_jumps);
            assert!(r.estimate < prev, "h={h}: {} !< {prev}", r.estimate);
            prev = r.estimate;
        }
    }

    #[test]
    fn alpha_not_above_beta() {
        let a = jump_path(0.5, 1.0);
        let b = jump_path(0.55, 1.0);
        let al = alpha_p(&a, &b, 2.5, &[1.0, 0.5], 4).unwrap();
        let be = beta_p(&a, &b, 2.5, &[1.0, 0.5]).unwrap();
        for (x, y) in al.per_delta.iter().zip(&be.per_delta) {
            assert!(x.1 <= y.1 + 1e-12);
        }
    }

    #[test]
    fn non_summable_sequence_rejected() {
        let x = CadlagPath::scalar(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(AdmissiblePair::new(marcus_lift(&x), PathFunction::LogLinear, RSeq::Geometric { ratio: 1.0 }, 1.0).is_err());
        assert!(RSeq::Explicit { prefix: vec![1.0], tail_ratio: 1.5 }.validate().is_err());
    }
}

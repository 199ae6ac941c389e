//! Robust filter: for a fixed observation driver `η` (the lift of `W̃`,
//! or of `L = (W̃, ξ²)` in the infinite-activity regime) solve the joint
//! equation for `(t, W̃, X, Y, I)` per particle under the reference
//! measure and average `f(X_t) exp(I_t)`.
//!
//! The joint system is driven by `(t, B, η)`. Its columns are the
//! reference-measure state columns, the time column `(1, 0, …)` and the
//! log-weight row with drift `−½|h|² − ½ Σ_k D_{G_k} h_k + ∫(1 − λ) dν₂`
//! and `η`-coefficients `h`, where `G_k` is the `η_k` column of the state.
//! Observed `N_λ` atoms enter as discrete events; auxiliary `N_p` atoms
//! split Davie steps at their times.

pub mod experiments;
pub mod oracles;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fillin::{fill_nodes, time_extension, AdmissiblePair, PathFunction, RSeq};
use crate::lift::{marcus_lift, stratonovich_lift};
use crate::rde::{log_ode_rk4, node_times, substeps_for, VectorField, Workspace};
use crate::real::{Dual, Real};
use crate::sim::simulate::{apply_observed_jump, apply_signal_jump};
use crate::sim::{
    h_generic, state_columns, JumpAtom, Layout, Measure, ModelSpec, NoiseBundle, ObservationRecord, Regime, MAX_DIM,
};
use crate::tensor_group::{GroupElement, NORM_CONVENTION};

/// Log-weights above this value abort the run.
pub const LOG_WEIGHT_LIMIT: f64 = 700.0;

/// Largest number of enumerated noise outcomes.
pub const MAX_ENUMERATED: usize = 1 << 20;

const MAX_E: usize = 3 * MAX_DIM + 2;
const MAX_D: usize = 2 * MAX_DIM + 2;
const MAX_COLS: usize = 3 * MAX_DIM * (1 + 2 * MAX_DIM);

type TestFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// A test function `f(x, y)` of signal and observation with declared sup
/// bound and Lipschitz constant (`∞` when unbounded).
#[derive(Clone)]
pub struct TestFunction {
    name: String,
    f: TestFn,
    bound: f64,
    lipschitz: f64,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("bound", &self.bound)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl TestFunction {
    pub fn new(name: impl Into<String>, bound: f64, lipschitz: f64, f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        TestFunction { name: name.into(), f: Arc::new(f), bound, lipschitz }
    }

    /// `f ≡ c`.
    pub fn constant(c: f64) -> Self {
        Self::new(if c == 1.0 { "one".to_string() } else { format!("const:{c}") }, c.abs(), 0.0, move |_, _| c)
    }

    /// `f(x) = x_i`.
    pub fn coordinate(i: usize) -> Self {
        Self::new(if i == 0 { "identity".to_string() } else { format!("x{}", i + 1) }, f64::INFINITY, 1.0, move |x, _| x[i])
    }

    /// `f(x) = x_1`.
    pub fn identity() -> Self {
        Self::coordinate(0)
    }

    /// `f(x) = tanh(x_1)`.
    pub fn tanh() -> Self {
        Self::new("tanh", 1.0, 1.0, |x, _| x[0].tanh())
    }

    /// `f(x) = sin(x_1)`.
    pub fn sin() -> Self {
        Self::new("sin", 1.0, 1.0, |x, _| x[0].sin())
    }

    /// `f(x) = x_1²`.
    pub fn square() -> Self {
        Self::new("square", f64::INFINITY, f64::INFINITY, |x, _| x[0] * x[0])
    }

    /// Parse `one`, `identity`, `x<k>`, `tanh`, `sin`, `square` or
    /// `const:<c>`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(Self::constant(1.0)),
            "identity" => Ok(Self::identity()),
            "tanh" => Ok(Self::tanh()),
            "sin" => Ok(Self::sin()),
            "square" => Ok(Self::square()),
            _ => {
                if let Some(c) = s.strip_prefix("const:") {
                    let c: f64 = c.parse().map_err(|_| Error::invalid(format!("bad constant in test function {s:?}")))?;
                    return Ok(Self::constant(c));
                }
                if let Some(k) = s.strip_prefix('x') {
                    if let Ok(k) = k.parse::<usize>() {
                        if k >= 1 {
                            return Ok(Self::coordinate(k - 1));
                        }
                    }
                }
                Err(Error::invalid(format!("unknown test function {s:?}")))
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn bound(&self) -> f64 {
        self.bound
    }
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.f)(x, y)
    }

    /// Check the declared bound and Lipschitz constant on pairs of probe
    /// points `(x, y)`.
    pub fn check(&self, probes: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
        let dist = |a: &(Vec<f64>, Vec<f64>), b: &(Vec<f64>, Vec<f64>)| {
            a.0.iter().chain(&a.1).zip(b.0.iter().chain(&b.1)).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
        };
        for (i, a) in probes.iter().enumerate() {
            let fa = self.eval(&a.0, &a.1);
            if !fa.is_finite() || fa.abs() > self.bound * (1.0 + 1e-12) {
                return Err(Error::invalid(format!("test function {} exceeds its bound at {a:?}", self.name)));
            }
            for b in &probes[i + 1..] {
                if (fa - self.eval(&b.0, &b.1)).abs() > self.lipschitz * dist(a, b) * (1.0 + 1e-9) + 1e-14 {
                    return Err(Error::invalid(format!("test function {} exceeds its Lipschitz constant", self.name)));
                }
            }
        }
        Ok(())
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Auxiliary noise used for the particles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxNoise {
    /// Independent Brownian motions and Poisson measures per particle.
    MonteCarlo,
    /// Every outcome of `±√Δt` Brownian steps and at most one `ν₁` atom
    /// per step (applied at the step end), with `X₀` at its mean.
    Enumerated { steps: usize },
}

/// Particle filter settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub particles: usize,
    pub seed_base: u64,
    /// Davie steps over the horizon.
    pub steps: usize,
    /// LePage cutoff for the auxiliary small jumps (infinite activity).
    pub epsilon: f64,
    /// Evaluation time (the driver horizon when absent).
    pub t: Option<f64>,
    pub aux: AuxNoise,
}

impl FilterConfig {
    pub fn new(particles: usize, seed_base: u64, steps: usize) -> Self {
        FilterConfig { particles, seed_base, steps, epsilon: 0.05, t: None, aux: AuxNoise::MonteCarlo }
    }
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }
    pub fn with_time(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }
    pub fn with_aux(mut self, aux: AuxNoise) -> Self {
        self.aux = aux;
        self
    }
}

/// Terminal particle states and log-weights. Enumerated runs carry the
/// outcome probabilities.
#[derive(Clone, Debug)]
pub struct ParticleSet {
    pub dx: usize,
    pub dy: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub log_w: Vec<f64>,
    pub prob: Option<Vec<f64>>,
}

/// Sum in a fixed pairwise order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Self-normalized estimate `Σ w f / Σ w` and its delta-method standard
/// error `sqrt(Σ w²(f − θ)²)/Σ w`.
pub fn ratio_estimate(values: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    let den = pairwise_sum(weights);
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::DegenerateWeights(format!("weight sum {den}")));
    }
    let wf: Vec<f64> = values.iter().zip(weights).map(|(f, w)| f * w).collect();
    let theta = pairwise_sum(&wf) / den;
    let sq: Vec<f64> = values.iter().zip(weights).map(|(f, w)| (w * (f - theta)).powi(2)).collect();
    Ok((theta, pairwise_sum(&sq).sqrt() / den))
}

fn mean_and_se(v: &[f64]) -> McEstimate {
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    let sq: Vec<f64> = v.iter().map(|a| (a - mean).powi(2)).collect();
    let var = if v.len() > 1 { pairwise_sum(&sq) / (n - 1.0) } else { 0.0 };
    McEstimate { value: mean, std_error: (var / n).sqrt(), samples: v.len() }
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.log_w.len()
    }
    pub fn is_empty(&self) -> bool {
        self.log_w.is_empty()
    }
    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.dx..(i + 1) * self.dx]
    }
    pub fn y(&self, i: usize) -> &[f64] {
        &self.y[i * self.dy..(i + 1) * self.dy]
    }
    pub fn weights(&self) -> Vec<f64> {
        self.log_w.iter().map(|l| l.exp()).collect()
    }
    fn values(&self, f: &TestFunction) -> Vec<f64> {
        (0..self.len()).map(|i| f.eval(self.x(i), self.y(i))).collect()
    }

    /// `g^f = E[f(X) exp(I)]`.
    pub fn g(&self, f: &TestFunction) -> McEstimate {
        let w = self.weights();
        let v: Vec<f64> = self.values(f).iter().zip(&w).map(|(a, b)| a * b).collect();
        match &self.prob {
            Some(p) => {
                let pv: Vec<f64> = v.iter().zip(p).map(|(a, b)| a * b).collect();
                McEstimate { value: pairwise_sum(&pv), std_error: 0.0, samples: v.len() }
            }
            None => mean_and_se(&v),
        }
    }

    /// `θ = g^f / g^1` and its standard error.
    pub fn theta(&self, f: &TestFunction) -> Result<(f64, f64)> {
        let mut w = self.weights();
        if let Some(p) = &self.prob {
            w.iter_mut().zip(p).for_each(|(a, b)| *a *= b);
        }
        let (t, se) = ratio_estimate(&self.values(f), &w)?;
        Ok((t, if self.prob.is_some() { 0.0 } else { se }))
    }

    /// Effective sample size `(Σ w)²/Σ w²`.
    pub fn ess(&self) -> f64 {
        let w = self.weights();
        let s = pairwise_sum(&w);
        let w2: Vec<f64> = w.iter().map(|a| a * a).collect();
        s * s / pairwise_sum(&w2)
    }
}

/// Summary of the driver a filter run used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverSummary {
    pub dim: usize,
    pub samples: usize,
    pub jumps: usize,
    pub max_jump_norm: f64,
    pub events: usize,
    pub delta: f64,
    pub path_function: String,
}

impl DriverSummary {
    fn of(pair: &AdmissiblePair, events: &[JumpAtom]) -> Self {
        let j = pair.rough.jump_indices();
        DriverSummary {
            dim: pair.rough.dim(),
            samples: pair.rough.len(),
            jumps: j.len(),
            max_jump_norm: j.iter().map(|&k| pair.rough.jump_increment(k).norm()).fold(0.0, f64::max),
            events: events.len(),
            delta: pair.delta,
            path_function: pair.phi.name().to_string(),
        }
    }
}

/// Estimates of one filter run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterResult {
    pub model: String,
    pub test_function: String,
    pub t: f64,
    pub g_f: McEstimate,
    pub g_1: McEstimate,
    pub theta: f64,
    pub theta_se: f64,
    pub ess: f64,
    pub particles: usize,
    pub seed_base: u64,
    pub steps: usize,
    pub driver: DriverSummary,
    pub norm_convention: String,
}

/// The joint vector fields on `(t, W̃, X, Y, I)` driven by `(t, B, η)`.
pub struct JointField<'a, M: ModelSpec + ?Sized> {
    model: &'a M,
    lay: Layout,
    deta: usize,
    infinite: bool,
    mean1: f64,
}

impl<'a, M: ModelSpec + ?Sized> JointField<'a, M> {
    pub fn new(model: &'a M, epsilon: f64) -> Self {
        let lay = Layout::of(model);
        let infinite = model.regime() == Regime::InfiniteJumps;
        JointField {
            model,
            lay,
            deta: lay.dy + usize::from(infinite),
            infinite,
            mean1: if infinite { model.nu1().truncated_mean(epsilon) } else { 0.0 },
        }
    }

    /// Dimension of the observation driver `η`.
    pub fn eta_dim(&self) -> usize {
        self.deta
    }

    fn es(&self) -> usize {
        self.lay.e()
    }

    /// Index of the log-weight in the joint state.
    pub fn weight_index(&self) -> usize {
        self.es() + 1
    }

    /// Joint state at time zero.
    pub fn initial_state(&self, x0: &[f64]) -> Vec<f64> {
        let l = self.lay;
        let mut z = vec![0.0; l.e() + 2];
        z[1 + l.x0()..1 + l.y0()].copy_from_slice(x0);
        z[1 + l.y0()..1 + l.e()].copy_from_slice(&self.model.initial_y());
        z
    }

    /// `out = Σ_c a_c V_c(z)`; false when `σ₂` is singular.
    pub fn combination<S: Real>(&self, z: &[S], a: &[f64], out: &mut [S]) -> bool {
        let m = self.model;
        let l = self.lay;
        let (dx, dy, db, es, nc) = (l.dx, l.dy, l.db, l.e(), l.cols());
        let t = z[0].re();
        let s = &z[1..1 + es];
        let mut cols = [S::zero(); MAX_COLS];
        let mut h = [S::zero(); MAX_DIM];
        if !state_columns(m, t, s, Measure::Reference, &mut cols[..es * nc], &mut h) {
            return false;
        }
        out[0] = S::cst(a[0]);
        for r in 0..es {
            let mut acc = S::zero();
            for c in 0..nc {
                if a[c] != 0.0 {
                    acc += cols[r * nc + c] * a[c];
                }
            }
            out[1 + r] = acc;
        }
        let (x, y) = (&s[dy..dy + dx], &s[dy + dx..]);
        let mut drift = S::zero();
        if a[0] != 0.0 {
            let mut corr = S::zero();
            let mut sd = [Dual::constant(S::zero()); 3 * MAX_DIM];
            let mut hd = [Dual::constant(S::zero()); MAX_DIM];
            for k in 0..dy {
                for r in 0..es {
                    sd[r] = Dual::new(s[r], cols[r * nc + 1 + db + k]);
                }
                if !h_generic(m, t, &sd[..dy], &sd[dy..dy + dx], &sd[dy + dx..es], &mut hd[..dy]) {
                    return false;
                }
                corr += hd[k].eps;
            }
            drift = -(h[..dy].iter().fold(S::zero(), |acc, &v| acc + v * v) + corr) * 0.5;
            if !self.infinite {
                for atom in m.nu2().atoms() {
                    drift += (S::one() - m.lambda(t, x, atom.mark)) * atom.mass;
                }
            }
        }
        let mut acc = drift * a[0];
        for k in 0..dy {
            acc += h[k] * a[1 + db + k];
        }
        out[1 + es] = acc;
        if self.infinite {
            let mut f = [S::zero(); MAX_DIM];
            if self.mean1 != 0.0 && a[0] != 0.0 {
                m.f1(t, x, y, 1.0, &mut f[..dx]);
                for i in 0..dx {
                    out[1 + dy + i] -= f[i] * (self.mean1 * a[0]);
                }
            }
            let ax = a[nc];
            if ax != 0.0 {
                m.f3(t, x, y, 1.0, &mut f[..dx]);
                for i in 0..dx {
                    out[1 + dy + i] += f[i] * ax;
                }
                m.f2(t, y, 1.0, &mut f[..dy]);
                for i in 0..dy {
                    out[1 + dy + dx + i] += f[i] * ax;
                }
            }
        }
        true
    }

    /// `DV_a(z)·u` for the combination `V_a = Σ_c a_c V_c`.
    fn directional(&self, z: &[f64], u: &[f64], a: &[f64], out: &mut [f64]) -> bool {
        let e = z.len();
        let mut zd = [Dual::constant(0.0); MAX_E];
        let mut od = [Dual::constant(0.0); MAX_E];
        for i in 0..e {
            zd[i] = Dual::new(z[i], u[i]);
        }
        if !self.combination(&zd[..e], a, &mut od[..e]) {
            return false;
        }
        for i in 0..e {
            out[i] = od[i].eps;
        }
        true
    }

    /// Davie step with level-1 increment `inc` and level-2 increment
    /// `½ inc⊗inc + A`, where `A` is an antisymmetric `η`-block area.
    pub fn davie(&self, z: &mut [f64], inc: &[f64], area: Option<&[f64]>) -> bool {
        let e = z.len();
        let mut f = [0.0; MAX_E];
        let mut df = [0.0; MAX_E];
        if !self.combination(z, inc, &mut f[..e]) || !self.directional(z, &f[..e], inc, &mut df[..e]) {
            return false;
        }
        let mut corr = [0.0; MAX_E];
        if let Some(a) = area {
            if !self.area_term(z, a, &mut corr[..e]) {
                return false;
            }
        }
        for i in 0..e {
            z[i] += f[i] + 0.5 * df[i] + corr[i];
        }
        true
    }

    /// `Σ_{ij} A_ij DV_{η_j} V_{η_i}` for an antisymmetric `η`-block `A`.
    fn area_term(&self, z: &[f64], area: &[f64], out: &mut [f64]) -> bool {
        let e = z.len();
        let d = self.driver_dim();
        let off = 1 + self.lay.db;
        let q = self.deta;
        let mut cols = [[0.0; MAX_E]; MAX_D];
        let mut unit = [0.0; MAX_D];
        for i in 0..q {
            if (0..q).all(|j| area[i * q + j] == 0.0) {
                continue;
            }
            unit[off + i] = 1.0;
            let ok = self.combination(z, &unit[..d], &mut cols[i][..e]);
            unit[off + i] = 0.0;
            if !ok {
                return false;
            }
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut u = [0.0; MAX_E];
        let mut tmp = [0.0; MAX_E];
        for j in 0..q {
            let mut any = false;
            for k in 0..e {
                u[k] = (0..q).map(|i| area[i * q + j] * cols[i][k]).sum();
                any |= u[k] != 0.0;
            }
            if !any {
                continue;
            }
            unit[off + j] = 1.0;
            let ok = self.directional(z, &u[..e], &unit[..d], &mut tmp[..e]);
            unit[off + j] = 0.0;
            if !ok {
                return false;
            }
            for k in 0..e {
                out[k] += tmp[k];
            }
        }
        true
    }
}

fn nan_fill(out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = f64::NAN);
}

impl<M: ModelSpec + ?Sized> VectorField for JointField<'_, M> {
    fn state_dim(&self) -> usize {
        self.lay.e() + 2
    }
    fn driver_dim(&self) -> usize {
        1 + self.lay.db + self.deta
    }
    fn eval(&self, _t: f64, y: &[f64], out: &mut [f64]) {
        let (e, d) = (self.state_dim(), self.driver_dim());
        let mut unit = [0.0; MAX_D];
        let mut col = [0.0; MAX_E];
        for j in 0..d {
            unit[j] = 1.0;
            if !self.combination(y, &unit[..d], &mut col[..e]) {
                nan_fill(out);
                return;
            }
            unit[j] = 0.0;
            for i in 0..e {
                out[i * d + j] = col[i];
            }
        }
    }
    fn eval_combination(&self, _t: f64, y: &[f64], a: &[f64], out: &mut [f64]) {
        if !self.combination(y, a, out) {
            nan_fill(out);
        }
    }
    fn second_order(&self, t: f64, y: &[f64], a: &[f64], out: &mut [f64]) {
        let (e, d) = (self.state_dim(), self.driver_dim());
        let mut v = vec![0.0; e * d];
        self.eval(t, y, &mut v);
        out.iter_mut().for_each(|x| *x = 0.0);
        let mut unit = [0.0; MAX_D];
        let mut u = [0.0; MAX_E];
        let mut tmp = [0.0; MAX_E];
        for j in 0..d {
            let mut any = false;
            for k in 0..e {
                u[k] = (0..d).map(|i| a[i * d + j] * v[k * d + i]).sum();
                any |= u[k] != 0.0;
            }
            if !any {
                continue;
            }
            unit[j] = 1.0;
            if !self.directional(y, &u[..e], &unit[..d], &mut tmp[..e]) {
                nan_fill(out);
                return;
            }
            unit[j] = 0.0;
            for k in 0..e {
                out[k] += tmp[k];
            }
        }
    }
}

/// One piece of a solve plan.
#[derive(Clone, Debug)]
pub(crate) enum Item {
    /// Original time runs from `t0` to `t1` while `η` moves along the
    /// geodesic with log `(l1, area)`.
    Cont { t0: f64, t1: f64, l1: Vec<f64>, area: Option<Vec<f64>> },
    /// A fill-in slot piece: only `η` moves, time is frozen at `t`.
    Slot { t: f64, g: GroupElement, substeps: usize },
    /// An observed atom.
    Event(JumpAtom),
}

/// The driver-dependent part of a filter run, shared by all particles.
#[derive(Clone, Debug)]
pub(crate) struct Plan {
    pub items: Vec<Item>,
}

/// RK4 substeps per unit homogeneous norm across a slot piece.
pub const SLOT_SUBSTEPS_PER_UNIT: f64 = 16.0;

/// RK4 substeps across a slot piece of homogeneous norm `size`.
pub(crate) fn slot_substeps(size: f64) -> usize {
    ((SLOT_SUBSTEPS_PER_UNIT * size).ceil() as usize).max(4)
}

struct PlanBuilder<'a> {
    items: Vec<Item>,
    events: &'a [JumpAtom],
    next_event: usize,
    t_end: f64,
    done: bool,
    db: usize,
    deta: usize,
}

impl PlanBuilder<'_> {
    fn cont(&mut self, t0: f64, t1: f64, g: &GroupElement, n: usize) {
        let lg = g.log();
        let has_area = lg.level2.iter().any(|&v| v != 0.0);
        let scale = 1.0 / n as f64;
        let l1: Vec<f64> = lg.level1.iter().map(|v| v * scale).collect();
        let area: Option<Vec<f64>> = has_area.then(|| lg.level2.iter().map(|v| v * scale).collect());
        for s in 0..n {
            if self.done {
                return;
            }
            let a = t0 + (t1 - t0) * s as f64 / n as f64;
            let b = if s + 1 == n { t1 } else { t0 + (t1 - t0) * (s + 1) as f64 / n as f64 };
            self.piece(a, b, &l1, area.as_deref());
        }
    }

    fn sub(&mut self, a: f64, b: f64, c0: f64, c1: f64, l1: &[f64], area: Option<&[f64]>) {
        let frac = if b > a { (c1 - c0) / (b - a) } else { 1.0 };
        self.items.push(Item::Cont {
            t0: c0,
            t1: c1,
            l1: l1.iter().map(|v| v * frac).collect(),
            area: area.map(|ar| ar.iter().map(|v| v * frac).collect()),
        });
    }

    fn piece(&mut self, a: f64, b: f64, l1: &[f64], area: Option<&[f64]>) {
        let mut c = a;
        while self.next_event < self.events.len() {
            let ev = self.events[self.next_event];
            if ev.time > b || ev.time > self.t_end {
                break;
            }
            self.next_event += 1;
            if ev.time <= c {
                self.items.push(Item::Event(ev));
                continue;
            }
            self.sub(a, b, c, ev.time, l1, area);
            self.items.push(Item::Event(ev));
            c = ev.time;
        }
        if b >= self.t_end {
            if self.t_end > c {
                self.sub(a, b, c, self.t_end, l1, area);
            }
            self.done = true;
        } else if b > c {
            self.sub(a, b, c, b, l1, area);
        }
    }

    fn slot(&mut self, t: f64, g: &GroupElement) {
        if self.done || g.is_identity() || t > self.t_end {
            return;
        }
        let d = 1 + self.db + self.deta;
        let off = 1 + self.db;
        let mut l1 = vec![0.0; d];
        let mut l2 = vec![0.0; d * d];
        for i in 0..self.deta {
            l1[off + i] = g.level1[i];
            for j in 0..self.deta {
                l2[(off + i) * d + off + j] = g.level2[i * self.deta + j];
            }
        }
        let padded = GroupElement { level1: l1, level2: l2 };
        self.items.push(Item::Slot { t, g: padded, substeps: slot_substeps(g.norm()) });
    }
}

/// Build the particle-independent solve plan: geodesic Davie pieces on
/// continuous stretches (about `steps` over the horizon, by original
/// time), slot pieces across fill-ins, and observed atoms as events,
/// truncated at `t_end`.
pub(crate) fn build_plan(pair: &AdmissiblePair, events: &[JumpAtom], steps: usize, db: usize, t_end: f64) -> Result<Plan> {
    let x = &pair.rough;
    let horizon = x.horizon();
    if !(t_end > 0.0 && t_end <= horizon) {
        return Err(Error::invalid(format!("evaluation time {t_end} outside (0, {horizon}]")));
    }
    if steps == 0 {
        return Err(Error::invalid("steps must be positive"));
    }
    if events.windows(2).any(|w| w[1].time < w[0].time) {
        return Err(Error::invalid("observed atoms must be sorted by time"));
    }
    let mut b = PlanBuilder { items: Vec::new(), events, next_event: 0, t_end, done: false, db, deta: x.dim() };
    if !x.has_jumps() {
        let times = x.times();
        for k in 1..x.len() {
            let n = substeps_for(steps, times[k] - times[k - 1], horizon);
            b.cont(times[k - 1], times[k], &x.segment_increment(k), n);
        }
    } else {
        let ext = time_extension(pair)?;
        let nodes = fill_nodes(pair, &ext)?;
        let ot = node_times(&nodes, pair);
        for i in 1..nodes.len() {
            let g = nodes[i - 1].point.increment_to(&nodes[i].point);
            if nodes[i].in_slot || ot[i] <= ot[i - 1] {
                b.slot(ot[i], &g);
            } else {
                let n = substeps_for(steps, ot[i] - ot[i - 1], horizon);
                b.cont(ot[i - 1], ot[i], &g, n);
            }
        }
    }
    Ok(Plan { items: b.items })
}

/// Auxiliary noise seen by one particle.
pub(crate) trait AuxPath {
    fn b_at(&self, t: f64, out: &mut [f64]);
    fn atoms(&self) -> &[JumpAtom];
}

impl AuxPath for NoiseBundle {
    fn b_at(&self, t: f64, out: &mut [f64]) {
        self.b.value_at(t, out)
    }
    fn atoms(&self) -> &[JumpAtom] {
        &self.p_jumps
    }
}

/// Piecewise-linear Brownian path with prescribed increments on a uniform
/// grid, and signal atoms at step ends.
pub(crate) struct EnumeratedPath {
    dt: f64,
    db: usize,
    /// Cumulative values at grid points, `(steps+1)·db`.
    values: Vec<f64>,
    atoms: Vec<JumpAtom>,
}

impl AuxPath for EnumeratedPath {
    fn b_at(&self, t: f64, out: &mut [f64]) {
        let steps = self.values.len() / self.db.max(1) - 1;
        let k = ((t / self.dt).floor() as usize).min(steps.saturating_sub(1));
        let r = ((t - k as f64 * self.dt) / self.dt).clamp(0.0, 1.0);
        for j in 0..self.db {
            let a = self.values[k * self.db + j];
            let b = self.values[(k + 1) * self.db + j];
            out[j] = a + r * (b - a);
        }
    }
    fn atoms(&self) -> &[JumpAtom] {
        &self.atoms
    }
}

fn step_error(msg: String) -> Error {
    Error::Singular(msg)
}

/// Propagate one particle along the plan; returns the terminal joint
/// state.
pub(crate) fn run_particle<M: ModelSpec + ?Sized>(jf: &JointField<M>, plan: &Plan, aux: &dyn AuxPath, x0: &[f64]) -> Result<Vec<f64>> {
    let m = jf.model;
    let l = jf.lay;
    let (dx, dy, db) = (l.dx, l.dy, l.db);
    let es = l.e();
    let iw = es + 1;
    let mut z = jf.initial_state(x0);
    let d = jf.driver_dim();
    let mut inc = [0.0; MAX_D];
    let mut b0 = [0.0; MAX_DIM];
    let mut b1 = [0.0; MAX_DIM];
    let atoms = aux.atoms();
    let mut ia = 0;
    let mut tc = 0.0;
    aux.b_at(0.0, &mut b0[..db]);
    let mut ws = Workspace::new(es + 2);
    let mut counter = 0usize;
    for item in &plan.items {
        match item {
            Item::Cont { t0, t1, l1, area } => {
                loop {
                    let jump = ia < atoms.len() && atoms[ia].time <= *t1;
                    let tn = if jump { atoms[ia].time } else { *t1 };
                    if tn > tc {
                        let frac = if t1 > t0 { (tn - tc) / (t1 - t0) } else { 1.0 };
                        aux.b_at(tn, &mut b1[..db]);
                        inc[0] = tn - tc;
                        for j in 0..db {
                            inc[1 + j] = b1[j] - b0[j];
                        }
                        for (k, v) in l1.iter().enumerate() {
                            inc[1 + db + k] = v * frac;
                        }
                        let ar: Option<Vec<f64>> = area.as_ref().map(|a| a.iter().map(|v| v * frac).collect());
                        if !jf.davie(&mut z, &inc[..d], ar.as_deref()) {
                            return Err(step_error(format!("sigma2 singular near t = {tc}")));
                        }
                        counter += 1;
                        tc = tn;
                        b0 = b1;
                    }
                    if !jump {
                        break;
                    }
                    apply_signal_jump(m, tc, &mut z[1..1 + es], atoms[ia].mark);
                    ia += 1;
                }
            }
            Item::Slot { t, g, substeps } => {
                log_ode_rk4(jf, *t, &mut z, g, *substeps, &mut ws);
                counter += 1;
            }
            Item::Event(a) => {
                let lam: f64 = m.lambda(a.time, &z[1 + dy..1 + dy + dx], a.mark);
                if !(lam > 0.0) {
                    return Err(Error::invalid(format!("lambda = {lam} <= 0 at t = {}", a.time)));
                }
                z[iw] += lam.ln();
                apply_observed_jump(m, a.time, &mut z[1..1 + es], a.mark);
            }
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: counter });
        }
        if z[iw] > LOG_WEIGHT_LIMIT {
            return Err(Error::DegenerateWeights(format!("log-weight {} exceeds {LOG_WEIGHT_LIMIT}", z[iw])));
        }
    }
    Ok(z)
}

fn check_pair<M: ModelSpec + ?Sized>(jf: &JointField<M>, pair: &AdmissiblePair, model: &M) -> Result<()> {
    if pair.rough.dim() != jf.eta_dim() {
        return Err(Error::DimensionMismatch { expected: jf.eta_dim(), got: pair.rough.dim() });
    }
    if (pair.rough.horizon() - model.horizon()).abs() > 1e-12 * model.horizon() {
        return Err(Error::invalid("driver horizon differs from the model horizon"));
    }
    if model.dims().dx > MAX_DIM || model.dims().dy > MAX_DIM || model.dims().db > MAX_DIM {
        return Err(Error::invalid(format!("dimensions above {MAX_DIM} are not supported")));
    }
    Ok(())
}

fn collect(results: Vec<Result<Vec<f64>>>, lay: Layout, prob: Option<Vec<f64>>) -> Result<ParticleSet> {
    let (dx, dy) = (lay.dx, lay.dy);
    let n = results.len();
    let mut set = ParticleSet {
        dx,
        dy,
        x: Vec::with_capacity(n * dx),
        y: Vec::with_capacity(n * dy),
        log_w: Vec::with_capacity(n),
        prob,
    };
    for (i, r) in results.into_iter().enumerate() {
        let z = r.map_err(|e| Error::Particle { particle: i, source: Box::new(e) })?;
        set.x.extend_from_slice(&z[1 + dy..1 + dy + dx]);
        set.y.extend_from_slice(&z[1 + dy + dx..1 + 2 * dy + dx]);
        set.log_w.push(z[z.len() - 1]);
    }
    Ok(set)
}

fn enumerated_paths<M: ModelSpec>(model: &M, steps: usize) -> Result<Vec<(EnumeratedPath, f64)>> {
    let db = model.dims().db;
    let atoms = model.nu1().atoms().to_vec();
    if !model.nu1().is_finite() {
        return Err(Error::invalid("enumerated noise needs a finite signal jump measure"));
    }
    let horizon = model.horizon();
    let dt = horizon / steps as f64;
    let p_none = 1.0 - atoms.iter().map(|a| a.mass).sum::<f64>() * dt;
    if p_none < 0.0 {
        return Err(Error::invalid("enumeration step too long for the jump intensity"));
    }
    let per_step = (1usize << db) * (1 + atoms.len());
    let total = (per_step as f64).powi(steps as i32);
    if steps == 0 || total > MAX_ENUMERATED as f64 {
        return Err(Error::invalid(format!("enumeration would need {total} outcomes")));
    }
    let sq = dt.sqrt();
    let mut out = Vec::with_capacity(total as usize);
    for mut code in 0..total as usize {
        let mut values = vec![0.0; (steps + 1) * db];
        let mut path_atoms = Vec::new();
        let mut prob = 1.0;
        for k in 0..steps {
            let c = code % per_step;
            code /= per_step;
            let (signs, jump) = (c % (1 << db), c >> db);
            for j in 0..db {
                let s = if signs >> j & 1 == 1 { -1.0 } else { 1.0 };
                values[(k + 1) * db + j] = values[k * db + j] + s * sq;
            }
            prob /= (1 << db) as f64;
            if jump == 0 {
                prob *= p_none;
            } else {
                let a = atoms[jump - 1];
                prob *= a.mass * dt;
                let time = if k + 1 == steps { horizon } else { (k + 1) as f64 * dt };
                path_atoms.push(JumpAtom { time, mark: a.mark, accept: 0.0 });
            }
        }
        out.push((EnumeratedPath { dt, db, values, atoms: path_atoms }, prob));
    }
    Ok(out)
}

/// Per-particle auxiliary noise of a Monte Carlo run (particle `i` uses
/// seed `seed_base + i`).
pub fn auxiliary_noise<M: ModelSpec>(model: &M, cfg: &FilterConfig) -> Result<Vec<NoiseBundle>> {
    (0..cfg.particles)
        .into_par_iter()
        .map(|i| NoiseBundle::auxiliary(model, cfg.steps, cfg.seed_base.wrapping_add(i as u64), cfg.epsilon))
        .collect()
}

fn prepare<'a, M: ModelSpec>(
    model: &'a M,
    pair: &AdmissiblePair,
    events: &[JumpAtom],
    cfg: &FilterConfig,
) -> Result<(JointField<'a, M>, Plan)> {
    let jf = JointField::new(model, cfg.epsilon);
    check_pair(&jf, pair, model)?;
    if model.regime() == Regime::InfiniteJumps && !events.is_empty() {
        return Err(Error::invalid("infinite-activity observations enter through the driver, not as events"));
    }
    let t_end = cfg.t.unwrap_or(pair.rough.horizon());
    let plan = build_plan(pair, events, cfg.steps, model.dims().db, t_end)?;
    Ok((jf, plan))
}

/// Monte Carlo run on precomputed auxiliary noise, so several drivers can
/// share the same draws.
pub fn run_filter_on_noise<M: ModelSpec>(
    model: &M,
    pair: &AdmissiblePair,
    events: &[JumpAtom],
    cfg: &FilterConfig,
    noise: &[NoiseBundle],
) -> Result<ParticleSet> {
    if noise.is_empty() {
        return Err(Error::invalid("particle count must be positive"));
    }
    let (jf, plan) = prepare(model, pair, events, cfg)?;
    let results: Vec<Result<Vec<f64>>> = noise
        .par_iter()
        .map(|nb| {
            let x0 = model.initial_x().from_normals(&nb.x0_normals);
            run_particle(&jf, &plan, nb, &x0)
        })
        .collect();
    collect(results, jf.lay, None)
}

/// Run the particle system on a driver and observed atoms.
pub fn run_filter<M: ModelSpec>(model: &M, pair: &AdmissiblePair, events: &[JumpAtom], cfg: &FilterConfig) -> Result<ParticleSet> {
    let (jf, plan) = prepare(model, pair, events, cfg)?;
    match &cfg.aux {
        AuxNoise::MonteCarlo => {
            if cfg.particles == 0 {
                return Err(Error::invalid("particle count must be positive"));
            }
            let results: Vec<Result<Vec<f64>>> = (0..cfg.particles)
                .into_par_iter()
                .map(|i| {
                    let noise = NoiseBundle::auxiliary(model, cfg.steps, cfg.seed_base.wrapping_add(i as u64), cfg.epsilon)?;
                    let x0 = model.initial_x().from_normals(&noise.x0_normals);
                    run_particle(&jf, &plan, &noise, &x0)
                })
                .collect();
            collect(results, jf.lay, None)
        }
        AuxNoise::Enumerated { steps } => {
            let paths = enumerated_paths(model, *steps)?;
            let x0 = model.initial_x().mean();
            let prob: Vec<f64> = paths.iter().map(|p| p.1).collect();
            let results: Vec<Result<Vec<f64>>> = paths.par_iter().map(|(p, _)| run_particle(&jf, &plan, p, &x0)).collect();
            collect(results, jf.lay, Some(prob))
        }
    }
}

/// `g^f_t(η) = Ẽ[f(X_t) exp(I_t)]`.
pub fn g_functional<M: ModelSpec>(
    model: &M,
    f: &TestFunction,
    pair: &AdmissiblePair,
    events: &[JumpAtom],
    cfg: &FilterConfig,
) -> Result<McEstimate> {
    Ok(run_filter(model, pair, events, cfg)?.g(f))
}

/// `θ^f_t(η) = g^f_t(η)/g^1_t(η)` with common random numbers.
pub fn theta<M: ModelSpec>(
    model: &M,
    f: &TestFunction,
    pair: &AdmissiblePair,
    events: &[JumpAtom],
    cfg: &FilterConfig,
) -> Result<FilterResult> {
    let set = run_filter(model, pair, events, cfg)?;
    result_from_set(model, f, pair, events, cfg, &set)
}

pub(crate) fn result_from_set<M: ModelSpec>(
    model: &M,
    f: &TestFunction,
    pair: &AdmissiblePair,
    events: &[JumpAtom],
    cfg: &FilterConfig,
    set: &ParticleSet,
) -> Result<FilterResult> {
    let g_1 = set.g(&TestFunction::constant(1.0));
    if !(g_1.value > 0.0) {
        return Err(Error::DegenerateWeights(format!("g^1 estimate {}", g_1.value)));
    }
    let (theta, theta_se) = set.theta(f)?;
    Ok(FilterResult {
        model: model.id(),
        test_function: f.name().to_string(),
        t: cfg.t.unwrap_or(pair.rough.horizon()),
        g_f: set.g(f),
        g_1,
        theta,
        theta_se,
        ess: set.ess(),
        particles: set.len(),
        seed_base: cfg.seed_base,
        steps: cfg.steps,
        driver: DriverSummary::of(pair, events),
        norm_convention: NORM_CONVENTION.to_string(),
    })
}

/// Admissible pair for the filter from an observation record: the
/// Stratonovich lift of the piecewise-linear driver when it has no jumps,
/// the Marcus lift with [`RSeq::for_jumps`] slots otherwise.
pub fn observation_pair(obs: &ObservationRecord) -> Result<AdmissiblePair> {
    let driver = obs.driver()?;
    if driver.has_jumps() {
        let rough = marcus_lift(&driver);
        let r_seq = RSeq::for_jumps(rough.jump_indices().len());
        AdmissiblePair::new(rough, PathFunction::LogLinear, r_seq, 1.0)
    } else {
        Ok(AdmissiblePair::marcus(stratonovich_lift(&driver)?))
    }
}

/// `θ^f_t` from an observation record.
pub fn filter_observation<M: ModelSpec>(model: &M, f: &TestFunction, obs: &ObservationRecord, cfg: &FilterConfig) -> Result<FilterResult> {
    let pair = observation_pair(obs)?;
    theta(model, f, &pair, obs.event_atoms(), cfg)
}

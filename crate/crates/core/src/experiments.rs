//! Refinement experiments: Wong–Zakai convergence of rough solutions
//! driven by dyadic piecewise-linear approximations to the Stratonovich
//! SDE solution, and stability of the filter as the small-jump truncation
//! level of shot noise decreases.

use serde::{Deserialize, Serialize};

use crate::cadlag_path::CadlagPath;
use crate::error::{Error, Result};
use crate::fillin::{beta_p, AdmissiblePair, PathFunction, RSeq};
use crate::filter::experiments::{median, simulate_record};
use crate::filter::{filter_observation, FilterConfig, TestFunction};
use crate::lift::{marcus_lift, rho_p, stratonovich_lift, RoughPath};
use crate::rde::{solve_continuous_rde, SmoothField, VectorField};
use crate::real::Real;
use crate::sim::{shot_noise, uniform_grid, BrownianPath, CatalogModel, ModelSpec, Regime};

/// `blocks` uncoupled copies of a non-commuting planar system,
/// `du = (1 + ½ sin v) dW¹ + 0.4 sin u dW²`,
/// `dv = 0.4 cos u dW¹ + (1 + ½ cos v) dW²`,
/// each driven by its own pair of Brownian coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockSystem {
    pub blocks: usize,
}

impl SmoothField for BlockSystem {
    fn state_dim(&self) -> usize {
        2 * self.blocks
    }
    fn driver_dim(&self) -> usize {
        2 * self.blocks
    }
    fn eval_generic<S: Real>(&self, _t: f64, y: &[S], out: &mut [S]) {
        let d = 2 * self.blocks;
        out.iter_mut().for_each(|v| *v = S::zero());
        for b in 0..self.blocks {
            let (i, j) = (2 * b, 2 * b + 1);
            let (u, v) = (y[i], y[j]);
            out[i * d + i] = S::one() + v.sin() * 0.5;
            out[i * d + j] = u.sin() * 0.4;
            out[j * d + i] = u.cos() * 0.4;
            out[j * d + j] = S::one() + v.cos() * 0.5;
        }
    }
}

impl VectorField for BlockSystem {
    fn state_dim(&self) -> usize {
        2 * self.blocks
    }
    fn driver_dim(&self) -> usize {
        2 * self.blocks
    }
    fn eval(&self, t: f64, y: &[f64], out: &mut [f64]) {
        self.eval_generic(t, y, out);
    }
    fn eval_combination(&self, _t: f64, y: &[f64], a: &[f64], out: &mut [f64]) {
        for b in 0..self.blocks {
            let (i, j) = (2 * b, 2 * b + 1);
            let (u, v) = (y[i], y[j]);
            out[i] = (1.0 + 0.5 * v.sin()) * a[i] + 0.4 * u.sin() * a[j];
            out[j] = 0.4 * u.cos() * a[i] + (1.0 + 0.5 * v.cos()) * a[j];
        }
    }
    fn second_order(&self, _t: f64, y: &[f64], a: &[f64], out: &mut [f64]) {
        // blocks do not interact, so only block-diagonal entries of `a` count
        let d = 2 * self.blocks;
        for b in 0..self.blocks {
            let (i, j) = (2 * b, 2 * b + 1);
            let (u, v) = (y[i], y[j]);
            let (su, cu, sv, cv) = (u.sin(), u.cos(), v.sin(), v.cos());
            let fields = [[1.0 + 0.5 * sv, 0.4 * cu], [0.4 * su, 1.0 + 0.5 * cv]];
            let jac = [[[0.0, 0.5 * cv], [-0.4 * su, 0.0]], [[0.4 * cu, 0.0], [0.0, -0.5 * sv]]];
            let idx = [i, j];
            let (mut ou, mut ov) = (0.0, 0.0);
            for p in 0..2 {
                for q in 0..2 {
                    let c = a[idx[p] * d + idx[q]];
                    if c == 0.0 {
                        continue;
                    }
                    let (vp, dq) = (fields[p], jac[q]);
                    ou += c * (dq[0][0] * vp[0] + dq[0][1] * vp[1]);
                    ov += c * (dq[1][0] * vp[0] + dq[1][1] * vp[1]);
                }
            }
            out[i] = ou;
            out[j] = ov;
        }
    }
}

/// Settings of [`wong_zakai_sweep`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WongZakaiConfig {
    /// Dyadic levels `L`: the driver is interpolated linearly on `2^L`
    /// intervals.
    pub levels: Vec<u32>,
    /// Heun steps of the SDE reference are `2^reference_level`.
    pub reference_level: u32,
    pub paths: usize,
    pub seed: u64,
    pub blocks: usize,
    /// Davie steps per interpolation interval.
    pub substeps: usize,
    pub p: f64,
    pub horizon: f64,
}

impl Default for WongZakaiConfig {
    fn default() -> Self {
        WongZakaiConfig {
            levels: (4..=9).collect(),
            reference_level: 16,
            paths: 20,
            seed: 1,
            blocks: 32,
            substeps: 2,
            p: 2.5,
            horizon: 1.0,
        }
    }
}

/// One Brownian sample path of a Wong–Zakai sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WongZakaiPath {
    pub seed: u64,
    /// Euclidean terminal error against the Heun reference, per level.
    pub errors: Vec<f64>,
    /// `ρ_p` between the lift of the first coordinate pair at each level
    /// and one level above the finest.
    pub rho_p: Vec<f64>,
    pub monotone: bool,
}

/// Result of [`wong_zakai_sweep`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WongZakaiReport {
    pub config: WongZakaiConfig,
    pub paths: Vec<WongZakaiPath>,
    pub median_error: Vec<f64>,
    pub median_rho_p: Vec<f64>,
    /// Paths whose terminal error decreases strictly across levels.
    pub monotone_paths: usize,
}

fn heun<V: VectorField>(v: &V, y0: &[f64], increments: &[f64]) -> Vec<f64> {
    let (e, d) = (v.state_dim(), v.driver_dim());
    let mut y = y0.to_vec();
    let (mut k0, mut k1, mut yp) = (vec![0.0; e], vec![0.0; e], vec![0.0; e]);
    for dw in increments.chunks(d) {
        v.eval_combination(0.0, &y, dw, &mut k0);
        for i in 0..e {
            yp[i] = y[i] + k0[i];
        }
        v.eval_combination(0.0, &yp, dw, &mut k1);
        for i in 0..e {
            y[i] += 0.5 * (k0[i] + k1[i]);
        }
    }
    y
}

/// Values of `w` on every `stride`-th grid point, as a piecewise-linear
/// path keeping the coordinates `coords`.
fn dyadic_path(w: &BrownianPath, stride: usize, coords: std::ops::Range<usize>) -> Result<CadlagPath> {
    let n = w.steps() / stride;
    let times = uniform_grid(w.horizon(), n);
    let mut vals = Vec::with_capacity((n + 1) * coords.len());
    for k in 0..=n {
        vals.extend_from_slice(&w.grid_value(k * stride)[coords.clone()]);
    }
    CadlagPath::new(times, vals, coords.len())
}

fn pair_lift(w: &BrownianPath, level: u32) -> Result<RoughPath> {
    stratonovich_lift(&dyadic_path(w, w.steps() >> level, 0..2)?)
}

/// For each Brownian sample path: the Heun solution on `2^reference_level`
/// steps, and the continuous RDE solutions driven by the Stratonovich
/// lifts of the dyadic piecewise-linear approximations at each level.
pub fn wong_zakai_sweep(cfg: &WongZakaiConfig) -> Result<WongZakaiReport> {
    let max_level = cfg.levels.iter().copied().max().ok_or_else(|| Error::invalid("no levels"))?;
    if cfg.levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("levels must increase"));
    }
    if cfg.reference_level < max_level + 2 || cfg.reference_level > 24 {
        return Err(Error::invalid("reference level must exceed the finest level by at least two and be at most 24"));
    }
    if cfg.blocks == 0 || cfg.paths == 0 || cfg.substeps == 0 || !(cfg.horizon > 0.0) {
        return Err(Error::invalid("blocks, paths, substeps and horizon must be positive"));
    }
    let sys = BlockSystem { blocks: cfg.blocks };
    let d = 2 * cfg.blocks;
    let y0 = vec![0.0; d];
    let fine = 1usize << cfg.reference_level;
    let mut paths = Vec::with_capacity(cfg.paths);
    for i in 0..cfg.paths {
        let seed = cfg.seed.wrapping_add(i as u64);
        let w = BrownianPath::new(seed, 0, cfg.horizon, fine, d);
        let mut incs = Vec::with_capacity(fine * d);
        for k in 0..fine {
            let (a, b) = (w.grid_value(k), w.grid_value(k + 1));
            incs.extend(a.iter().zip(b).map(|(a, b)| b - a));
        }
        let reference = heun(&sys, &y0, &incs);
        let top = pair_lift(&w, max_level + 1)?;
        let mut errors = Vec::with_capacity(cfg.levels.len());
        let mut rhos = Vec::with_capacity(cfg.levels.len());
        for &level in &cfg.levels {
            let lift = stratonovich_lift(&dyadic_path(&w, fine >> level, 0..d)?)?;
            let sol = solve_continuous_rde(&sys, &lift, &y0, cfg.substeps << level)?;
            let err = sol.terminal().iter().zip(&reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            errors.push(err);
            rhos.push(rho_p(&pair_lift(&w, level)?, &top, cfg.p)?);
        }
        paths.push(WongZakaiPath { seed, monotone: errors.windows(2).all(|w| w[1] < w[0]), errors, rho_p: rhos });
    }
    let col = |f: &dyn Fn(&WongZakaiPath) -> &Vec<f64>| -> Vec<f64> {
        (0..cfg.levels.len()).map(|k| median(&paths.iter().map(|p| f(p)[k]).collect::<Vec<_>>())).collect()
    };
    Ok(WongZakaiReport {
        median_error: col(&|p| &p.errors),
        median_rho_p: col(&|p| &p.rho_p),
        monotone_paths: paths.iter().filter(|p| p.monotone).count(),
        config: cfg.clone(),
        paths,
    })
}

/// Settings of [`epsilon_stability`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonConfig {
    /// Decreasing truncation levels.
    pub epsilons: Vec<f64>,
    pub seeds: Vec<u64>,
    pub obs_steps: usize,
    pub particles: usize,
    pub seed_base: u64,
    pub steps: usize,
    pub p: f64,
    pub deltas: Vec<f64>,
}

impl Default for EpsilonConfig {
    fn default() -> Self {
        EpsilonConfig {
            epsilons: vec![0.1, 0.05, 0.025, 0.0125],
            seeds: (0..100).collect(),
            obs_steps: 128,
            particles: 200,
            seed_base: 1_000_000,
            steps: 128,
            p: 2.5,
            deltas: vec![0.01, 0.001],
        }
    }
}

/// One observation seed of an ε-stability run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub seed: u64,
    /// `β_p` between Marcus lifts of `ξ^{ε_i}` and `ξ^{ε_{i+1}}`.
    pub beta_p: Vec<f64>,
    /// `θ^{ε_i}`.
    pub theta: Vec<f64>,
    pub theta_se: Vec<f64>,
    /// `|θ^{ε_i} − θ^{ε_{i+1}}|`.
    pub theta_gap: Vec<f64>,
}

/// Result of [`epsilon_stability`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonReport {
    pub model: String,
    pub test_function: String,
    pub config: EpsilonConfig,
    pub rows: Vec<EpsilonRow>,
    pub median_beta_p: Vec<f64>,
    pub median_theta_gap: Vec<f64>,
    pub beta_decreasing: bool,
    pub theta_gap_decreasing: bool,
}

/// Shot-noise truncation sweep on an infinite-activity model. Shot noise
/// with a common seed is nested across truncation levels, so consecutive
/// levels differ only by the jumps in `(ε_{i+1}, ε_i]`. For each seed the
/// observation record and the auxiliary particles are regenerated at each
/// level from the same seeds. All lifts share one slot sequence so that
/// common jumps are traversed alike.
pub fn epsilon_stability(model: &CatalogModel, f: &TestFunction, cfg: &EpsilonConfig) -> Result<EpsilonReport> {
    if model.regime() != Regime::InfiniteJumps {
        return Err(Error::invalid("the truncation sweep needs an infinite-activity model"));
    }
    if cfg.epsilons.len() < 2 || cfg.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("truncation levels must be at least two and strictly decreasing"));
    }
    if cfg.seeds.is_empty() {
        return Err(Error::invalid("no seeds"));
    }
    let grid = uniform_grid(model.horizon(), cfg.obs_steps);
    let mut rows = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let lifts = cfg
            .epsilons
            .iter()
            .map(|&e| Ok(marcus_lift(&shot_noise(model.nu2(), e, seed, &grid)?)))
            .collect::<Result<Vec<_>>>()?;
        let r_seq = RSeq::for_jumps(lifts.iter().map(|l| l.jump_indices().len()).max().unwrap_or(0));
        let pairs = lifts
            .into_iter()
            .map(|l| AdmissiblePair::new(l, PathFunction::LogLinear, r_seq.clone(), 1.0))
            .collect::<Result<Vec<_>>>()?;
        let beta = pairs.windows(2).map(|w| Ok(beta_p(&w[0], &w[1], cfg.p, &cfg.deltas)?.estimate)).collect::<Result<Vec<_>>>()?;
        let mut theta = Vec::with_capacity(cfg.epsilons.len());
        let mut theta_se = Vec::with_capacity(cfg.epsilons.len());
        for &e in &cfg.epsilons {
            let obs = simulate_record(model, seed, cfg.obs_steps, e)?;
            let fcfg = FilterConfig::new(cfg.particles, cfg.seed_base, cfg.steps).with_epsilon(e);
            let r = filter_observation(model, f, &obs, &fcfg)?;
            theta.push(r.theta);
            theta_se.push(r.theta_se);
        }
        let theta_gap = theta.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        rows.push(EpsilonRow { seed, beta_p: beta, theta, theta_se, theta_gap });
    }
    let n = cfg.epsilons.len() - 1;
    let col = |f: &dyn Fn(&EpsilonRow) -> &Vec<f64>| -> Vec<f64> {
        (0..n).map(|k| median(&rows.iter().map(|r| f(r)[k]).collect::<Vec<_>>())).collect()
    };
    let median_beta_p = col(&|r| &r.beta_p);
    let median_theta_gap = col(&|r| &r.theta_gap);
    Ok(EpsilonReport {
        model: model.id(),
        test_function: f.name().to_string(),
        beta_decreasing: median_beta_p.windows(2).all(|w| w[1] < w[0]),
        theta_gap_decreasing: median_theta_gap.windows(2).all(|w| w[1] < w[0]),
        config: cfg.clone(),
        rows,
        median_beta_p,
        median_theta_gap,
    })
}

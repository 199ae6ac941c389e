//! Filter experiments: robustness of `θ` under linear versus rectangular
//! interpolation of a subsampled observation, and consistency of `θ` with
//! independent estimators of the filter.

use serde::{Deserialize, Serialize};

use super::oracles::{kalman_bucy, reference_particle_filter, scalar_flow_filter, KalmanBucy};
use super::{
    auxiliary_noise, observation_pair, pairwise_sum, result_from_set, run_filter_on_noise, FilterConfig, McEstimate,
    ParticleSet, TestFunction,
};
use crate::cadlag_path::CadlagPath;
use crate::error::{Error, Result};
use crate::fillin::{beta_p, continuous_representative, AdmissiblePair, PathFunction, RSeq};
use crate::lift::{marcus_lift, rho_alpha, stratonovich_lift};
use crate::sim::{simulate_pair, CatalogModel, Measure, ModelSpec, NoiseBundle, ObservationRecord, Regime};

/// Settings of [`robustness_experiment`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessConfig {
    /// Numbers of observation intervals kept, each dividing `obs_steps`.
    pub meshes: Vec<usize>,
    pub obs_seed: u64,
    pub obs_steps: usize,
    pub particles: usize,
    pub seed_base: u64,
    /// Davie steps over the horizon.
    pub steps: usize,
    pub alpha: f64,
    pub p: f64,
    pub deltas: Vec<f64>,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        RobustnessConfig {
            meshes: vec![4, 8, 16, 32, 64],
            obs_seed: 1,
            obs_steps: 128,
            particles: 2000,
            seed_base: 1_000_000,
            steps: 128,
            alpha: 0.3,
            p: 2.5,
            deltas: vec![1.0],
        }
    }
}

/// One mesh of a robustness table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub mesh: usize,
    pub theta_lin: f64,
    pub se_lin: f64,
    pub theta_rect: f64,
    pub se_rect: f64,
    pub gap: f64,
    /// `sqrt(se_lin² + se_rect²)`.
    pub combined_se: f64,
    /// Standard error of the gap under common random numbers.
    pub paired_se: f64,
    /// `ρ_α` between the linear lift and the continuous representative of
    /// the rectangular Marcus lift.
    pub rho_alpha: f64,
    pub beta_p: f64,
    /// `gap / ρ_α`.
    pub ratio: f64,
}

/// Robustness table for one observation record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessTable {
    pub model: String,
    pub test_function: String,
    pub config: RobustnessConfig,
    pub rows: Vec<RobustnessRow>,
    /// Gaps non-increasing up to twice the paired standard error.
    pub gap_nonincreasing: bool,
}

/// Standard error of `θ_a − θ_b` for two runs on the same auxiliary
/// draws, by the delta method on the paired influence values.
pub fn paired_gap_se(a: &ParticleSet, b: &ParticleSet, f: &TestFunction) -> Result<f64> {
    if a.len() != b.len() || a.prob.is_some() || b.prob.is_some() {
        return Err(Error::invalid("paired standard error needs two Monte Carlo runs of equal size"));
    }
    let infl = |s: &ParticleSet| -> Result<Vec<f64>> {
        let w = s.weights();
        let (theta, _) = s.theta(f)?;
        let mean_w = pairwise_sum(&w) / w.len() as f64;
        Ok((0..s.len()).map(|i| w[i] * (f.eval(s.x(i), s.y(i)) - theta) / mean_w).collect())
    };
    let (ia, ib) = (infl(a)?, infl(b)?);
    let d: Vec<f64> = ia.iter().zip(&ib).map(|(u, v)| u - v).collect();
    let n = d.len() as f64;
    let mean = pairwise_sum(&d) / n;
    let sq: Vec<f64> = d.iter().map(|v| (v - mean).powi(2)).collect();
    Ok((pairwise_sum(&sq) / (n - 1.0).max(1.0) / n).sqrt())
}

/// Observation record under the model measure.
pub fn simulate_record<M: ModelSpec>(model: &M, seed: u64, steps: usize, epsilon: f64) -> Result<ObservationRecord> {
    let noise = NoiseBundle::sample(model, steps, seed, epsilon)?;
    let sim = simulate_pair(model, &noise, Measure::Original)?;
    ObservationRecord::from_simulation(model, &sim, steps)
}

/// Linear and rectangular interpolants of `W̃` sampled at `mesh + 1`
/// uniform times, as admissible pairs. The rectangular one is
/// Marcus-lifted with slot widths equal to the mesh width.
pub fn mesh_drivers(w_tilde: &CadlagPath, mesh: usize) -> Result<(AdmissiblePair, AdmissiblePair)> {
    if mesh == 0 {
        return Err(Error::invalid("mesh must be positive"));
    }
    let horizon = w_tilde.horizon();
    let times: Vec<f64> = (0..=mesh).map(|i| if i == mesh { horizon } else { horizon * i as f64 / mesh as f64 }).collect();
    let d = w_tilde.dim();
    let mut vals = Vec::with_capacity(times.len() * d);
    for &t in &times {
        vals.extend(w_tilde.value_at(t));
    }
    let lin = CadlagPath::new(times.clone(), vals.clone(), d)?;
    let rect = CadlagPath::rectangular(times, vals, d)?;
    let h = horizon / mesh as f64;
    let lin_pair = AdmissiblePair::marcus(stratonovich_lift(&lin)?);
    let rect_pair = AdmissiblePair::new(
        marcus_lift(&rect),
        PathFunction::LogLinear,
        RSeq::Explicit { prefix: vec![h; mesh], tail_ratio: 0.5 },
        1.0,
    )?;
    Ok((lin_pair, rect_pair))
}

fn gaps_nonincreasing(rows: &[RobustnessRow]) -> bool {
    rows.windows(2).all(|w| w[1].gap <= w[0].gap + 2.0 * (w[0].paired_se.powi(2) + w[1].paired_se.powi(2)).sqrt())
}

/// Simulate one observation record, subsample it at each mesh, build the
/// linear and rectangular interpolants, and compare `θ` on both lifts
/// with common random numbers. Observed jump atoms are kept at their
/// exact times.
pub fn robustness_experiment<M: ModelSpec>(model: &M, f: &TestFunction, cfg: &RobustnessConfig) -> Result<RobustnessTable> {
    if model.regime() == Regime::InfiniteJumps {
        return Err(Error::invalid("the robustness experiment covers finite-activity models"));
    }
    if cfg.meshes.is_empty() || cfg.meshes.iter().any(|&m| m == 0 || cfg.obs_steps % m != 0) {
        return Err(Error::invalid(format!("meshes must be positive divisors of obs_steps = {}", cfg.obs_steps)));
    }
    let obs = simulate_record(model, cfg.obs_seed, cfg.obs_steps, 0.05)?;
    let fcfg = FilterConfig::new(cfg.particles, cfg.seed_base, cfg.steps);
    let noise = auxiliary_noise(model, &fcfg)?;
    let events = obs.event_atoms();
    let mut rows = Vec::with_capacity(cfg.meshes.len());
    for &mesh in &cfg.meshes {
        let (lin, rect) = mesh_drivers(&obs.w_tilde, mesh)?;
        let sl = run_filter_on_noise(model, &lin, events, &fcfg, &noise)?;
        let sr = run_filter_on_noise(model, &rect, events, &fcfg, &noise)?;
        let rl = result_from_set(model, f, &lin, events, &fcfg, &sl)?;
        let rr = result_from_set(model, f, &rect, events, &fcfg, &sr)?;
        let rep = continuous_representative(&rect)?;
        let rho = rho_alpha(&lin.rough, &rep.path, cfg.alpha)?;
        let beta = beta_p(&lin, &rect, cfg.p, &cfg.deltas)?.estimate;
        let gap = (rl.theta - rr.theta).abs();
        rows.push(RobustnessRow {
            mesh,
            theta_lin: rl.theta,
            se_lin: rl.theta_se,
            theta_rect: rr.theta,
            se_rect: rr.theta_se,
            gap,
            combined_se: (rl.theta_se.powi(2) + rr.theta_se.powi(2)).sqrt(),
            paired_se: paired_gap_se(&sl, &sr, f)?,
            rho_alpha: rho,
            beta_p: beta,
            ratio: gap / rho,
        });
    }
    Ok(RobustnessTable {
        model: model.id(),
        test_function: f.name().to_string(),
        config: cfg.clone(),
        gap_nonincreasing: gaps_nonincreasing(&rows),
        rows,
    })
}

/// Seed medians of a robustness sweep, per mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSummary {
    pub meshes: Vec<usize>,
    pub median_gap: Vec<f64>,
    pub median_combined_se: Vec<f64>,
    pub median_rho_alpha: Vec<f64>,
    pub median_ratio: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Median gaps non-increasing in refinement.
    pub trend_nonincreasing: bool,
    /// Median final gap at most three median standard errors.
    pub final_gap_within_3se: bool,
    /// `max/min` of the median ratios.
    pub ratio_spread: f64,
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Summarize robustness tables from several observation seeds.
pub fn summarize_robustness(tables: &[RobustnessTable]) -> Result<RobustnessSummary> {
    let first = tables.first().ok_or_else(|| Error::invalid("no robustness tables"))?;
    let meshes: Vec<usize> = first.rows.iter().map(|r| r.mesh).collect();
    if tables.iter().any(|t| t.rows.iter().map(|r| r.mesh).ne(meshes.iter().copied())) {
        return Err(Error::invalid("robustness tables use different meshes"));
    }
    let col = |f: &dyn Fn(&RobustnessRow) -> f64| -> Vec<f64> {
        (0..meshes.len()).map(|i| median(&tables.iter().map(|t| f(&t.rows[i])).collect::<Vec<_>>())).collect()
    };
    let median_gap = col(&|r| r.gap);
    let median_combined_se = col(&|r| r.combined_se);
    let median_rho_alpha = col(&|r| r.rho_alpha);
    let median_ratio = col(&|r| r.ratio);
    let last = meshes.len() - 1;
    let (mx, mn) = median_ratio.iter().fold((0.0f64, f64::INFINITY), |(a, b), &r| (a.max(r), b.min(r)));
    Ok(RobustnessSummary {
        trend_nonincreasing: median_gap.windows(2).all(|w| w[1] <= w[0]),
        final_gap_within_3se: median_gap[last] <= 3.0 * median_combined_se[last],
        ratio_spread: mx / mn,
        meshes,
        median_gap,
        median_combined_se,
        median_rho_alpha,
        median_ratio,
        seeds: tables.iter().map(|t| t.config.obs_seed).collect(),
    })
}

/// Robustness tables for each observation seed and their summary.
pub fn robustness_sweep<M: ModelSpec>(
    model: &M,
    f: &TestFunction,
    cfg: &RobustnessConfig,
    obs_seeds: &[u64],
) -> Result<(Vec<RobustnessTable>, RobustnessSummary)> {
    let tables = obs_seeds
        .iter()
        .map(|&s| robustness_experiment(model, f, &RobustnessConfig { obs_seed: s, ..cfg.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize_robustness(&tables)?;
    Ok((tables, summary))
}

/// Settings of [`robust_consistency_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub obs_seed: u64,
    pub obs_steps: usize,
    pub particles: usize,
    pub seed_base: u64,
    pub epsilon: f64,
}

/// Rough filter against independent estimators on one observation record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub model: String,
    pub test_function: String,
    pub obs_seed: u64,
    pub theta: McEstimate,
    pub reference: McEstimate,
    pub gap: f64,
    pub combined_se: f64,
    pub pass: bool,
    pub kalman_bucy: Option<KalmanBucy>,
    pub flow_filter: Option<McEstimate>,
    pub flow_gap: Option<f64>,
    pub flow_pass: Option<bool>,
}

/// Simulate a ground-truth pair, evaluate `θ` on the lifted observation,
/// and compare with the reference-measure particle filter on the same
/// record (and, where they apply, the Kalman–Bucy mean and the scalar
/// flow-decomposition filter). Passes when the gap is at most three
/// combined standard errors.
pub fn robust_consistency_check(model: &CatalogModel, f: &TestFunction, cfg: &ConsistencyConfig) -> Result<ConsistencyReport> {
    let obs = simulate_record(model, cfg.obs_seed, cfg.obs_steps, cfg.epsilon)?;
    let fcfg = FilterConfig::new(cfg.particles, cfg.seed_base, cfg.obs_steps).with_epsilon(cfg.epsilon);
    let pair = observation_pair(&obs)?;
    let res = super::theta(model, f, &pair, obs.event_atoms(), &fcfg)?;
    let theta = McEstimate { value: res.theta, std_error: res.theta_se, samples: res.particles };
    let reference = reference_particle_filter(model, f, &obs, &fcfg)?;
    let gap = (theta.value - reference.value).abs();
    let combined_se = (theta.std_error.powi(2) + reference.std_error.powi(2)).sqrt();
    let kalman = match model {
        CatalogModel::LinearGaussian(p) => Some(kalman_bucy(p, &obs.w_tilde, None, 16)?),
        _ => None,
    };
    let flow = if matches!(model, CatalogModel::ScalarJumpDiffusion(p) if p.g3 == 0.0) {
        Some(scalar_flow_filter(model, f, &obs, &fcfg)?)
    } else {
        None
    };
    let flow_gap = flow.map(|e| (e.value - theta.value).abs());
    let flow_pass = flow.map(|e| (e.value - theta.value).abs() <= 3.0 * (e.std_error.powi(2) + theta.std_error.powi(2)).sqrt());
    Ok(ConsistencyReport {
        model: model.id(),
        test_function: f.name().to_string(),
        obs_seed: cfg.obs_seed,
        theta,
        reference,
        gap,
        combined_se,
        pass: gap <= 3.0 * combined_se,
        kalman_bucy: kalman,
        flow_filter: flow,
        flow_gap,
        flow_pass,
    })
}

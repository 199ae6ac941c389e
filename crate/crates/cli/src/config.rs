//! Run configuration: built-in defaults, then a flat TOML file, then
//! command-line flags.

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use roughfilter::experiments::EpsilonConfig;
use roughfilter::sim::{CatalogModel, ModelSpec, Regime};

use crate::Failure;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "ROUGHFILTER_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Lift the observation driver of a simulated record (or `--input`).
    Lift,
    /// Path metrics between linear and rectangular interpolants per mesh,
    /// or between `--input` and `--other`.
    Metrics,
    /// Solve a linear canonical RDE driven by the observation lift.
    Rde,
    /// Simulate the signal, observation and Girsanov exponent.
    Simulate,
    /// Evaluate the robust filter on a simulated observation.
    Filter,
    /// Linear vs rectangular interpolation sweep (finite activity) or
    /// truncation-level sweep (infinite activity).
    Robustness,
    /// Compare the robust filter with independent estimators.
    Consistency,
    /// Wong–Zakai refinement sweep over dyadic levels.
    Wongzakai,
}

#[derive(Debug, Parser)]
#[command(name = "roughfilter", version, about = "Rough path lifts, canonical RDEs and robust filtering experiments")]
pub struct Cli {
    /// Pipeline to run; may be given by `command` in the config file.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// Flat TOML config file (an emitted manifest works too).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model family id.
    #[arg(long)]
    pub model: Option<String>,
    /// Model horizon.
    #[arg(long = "T")]
    pub t: Option<f64>,
    /// Davie steps of the filter, or simulation steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Observation record steps.
    #[arg(long)]
    pub obs_steps: Option<usize>,
    /// Monte Carlo particles per filter evaluation.
    #[arg(long)]
    pub particles: Option<usize>,
    /// Variation exponent of rough metrics, in [2, 3).
    #[arg(long)]
    pub p: Option<f64>,
    /// Hölder exponent, in (0, 1/2].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Small-jump truncation level.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Decreasing truncation levels of the infinite-activity sweep.
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    /// Observation meshes, e.g. `4,8,16,32,64`.
    #[arg(long, value_delimiter = ',')]
    pub meshes: Option<Vec<usize>>,
    /// Slot scales δ for β_p, e.g. `1,0.1,0.01` (default `1`, or `0.01,0.001`
    /// for the infinite-activity robustness sweep).
    #[arg(long = "delta-seq", value_delimiter = ',')]
    pub delta_seq: Option<Vec<f64>>,
    /// Observation seed (the first of `--repeats`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// First auxiliary particle seed.
    #[arg(long)]
    pub seed_base: Option<u64>,
    /// Number of consecutive observation seeds.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Test function: one, identity, x<k>, tanh, sin, square, const:<c>.
    #[arg(long)]
    pub f: Option<String>,
    /// Dyadic levels: a list `4,5,6`, or a count `n` for levels 4..4+n-1.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<u32>>,
    /// Brownian sample paths of the Wong–Zakai sweep.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Model parameter override `name=value` (repeatable).
    #[arg(long = "param")]
    pub params: Vec<String>,
    /// Driver CSV for `lift`, `metrics` and `rde`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Second CSV path for `metrics`.
    #[arg(long)]
    pub other: Option<PathBuf>,
    /// Output directory (default: $ROUGHFILTER_OUT, else `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Fully resolved settings of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub model: String,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    pub steps: usize,
    pub obs_steps: usize,
    pub particles: usize,
    pub p: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub epsilons: Vec<f64>,
    pub meshes: Vec<usize>,
    pub delta_seq: Vec<f64>,
    pub seed: u64,
    pub seed_base: u64,
    pub repeats: usize,
    pub f: String,
    pub levels: Vec<u32>,
    pub paths: usize,
    pub params: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub other: Option<PathBuf>,
    pub out: PathBuf,
}

impl RunConfig {
    fn defaults(command: Command) -> Self {
        RunConfig {
            command,
            model: "linear_gaussian".into(),
            t: None,
            steps: 128,
            obs_steps: 128,
            particles: 1000,
            p: 2.5,
            alpha: 0.3,
            epsilon: 0.05,
            epsilons: vec![0.1, 0.05, 0.025, 0.0125],
            meshes: vec![4, 8, 16, 32, 64],
            delta_seq: vec![1.0],
            seed: 1,
            seed_base: 1_000_000,
            repeats: 1,
            f: "identity".into(),
            levels: (4..=9).collect(),
            paths: 20,
            params: vec![],
            input: None,
            other: None,
            out: std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out")),
        }
    }
}

/// Keys accepted in a config file; manifest-only keys are ignored.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    command: Option<Command>,
    model: Option<String>,
    #[serde(rename = "T")]
    t: Option<f64>,
    steps: Option<usize>,
    obs_steps: Option<usize>,
    particles: Option<usize>,
    p: Option<f64>,
    alpha: Option<f64>,
    epsilon: Option<f64>,
    epsilons: Option<Vec<f64>>,
    meshes: Option<Vec<usize>>,
    delta_seq: Option<Vec<f64>>,
    seed: Option<u64>,
    seed_base: Option<u64>,
    repeats: Option<usize>,
    f: Option<String>,
    levels: Option<Vec<u32>>,
    paths: Option<usize>,
    params: Option<Vec<String>>,
    input: Option<PathBuf>,
    other: Option<PathBuf>,
    out: Option<PathBuf>,
    #[serde(rename = "version")]
    _version: Option<toml::Value>,
    #[serde(rename = "norm_convention")]
    _norm_convention: Option<toml::Value>,
    #[serde(rename = "wall_time_s")]
    _wall_time_s: Option<toml::Value>,
    #[serde(rename = "artifacts")]
    _artifacts: Option<toml::Value>,
}

fn read_file(path: &Path) -> Result<FileConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Validation(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Validation(format!("bad config {}: {e}", path.display())))
}

/// A single flag value is a level count starting at 4.
fn expand_levels(v: Vec<u32>) -> Vec<u32> {
    match v.as_slice() {
        [n] => (4..4 + n).collect(),
        _ => v,
    }
}

macro_rules! layer {
    ($cfg:ident, $src:ident, $($field:ident),*) => {
        $(if let Some(v) = $src.$field { $cfg.$field = v; })*
    };
}

/// Merge defaults, the config file and the flags, then validate.
pub fn resolve(cli: Cli) -> Result<RunConfig, Failure> {
    let file = match &cli.config {
        Some(p) => read_file(p)?,
        None => FileConfig::default(),
    };
    let command = cli
        .command
        .or(file.command)
        .ok_or_else(|| Failure::Validation("no command given (pass one or set `command` in --config)".into()))?;
    let delta_set = file.delta_seq.is_some() || cli.delta_seq.is_some();
    let mut cfg = RunConfig::defaults(command);
    cfg.t = file.t;
    cfg.input = file.input.clone();
    cfg.other = file.other.clone();
    layer!(cfg, file, model, steps, obs_steps, particles, p, alpha, epsilon, epsilons, meshes, delta_seq, seed, seed_base, repeats, f, levels, paths, params, out);
    layer!(cfg, cli, model, steps, obs_steps, particles, p, alpha, epsilon, epsilons, meshes, delta_seq, seed, seed_base, repeats, f, paths, out);
    if cli.t.is_some() {
        cfg.t = cli.t;
    }
    if cli.input.is_some() {
        cfg.input = cli.input;
    }
    if cli.other.is_some() {
        cfg.other = cli.other;
    }
    if let Some(l) = cli.levels {
        cfg.levels = expand_levels(l);
    }
    cfg.params.extend(cli.params);
    if !delta_set && cfg.command == Command::Robustness && infinite_activity(&cfg.model) {
        cfg.delta_seq = EpsilonConfig::default().deltas;
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn infinite_activity(model: &str) -> bool {
    CatalogModel::from_id(model).is_ok_and(|m| m.regime() == Regime::InfiniteJumps)
}

fn bad(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

/// Parameter overrides as `(name, value)` pairs, `T` included.
pub fn model_params(cfg: &RunConfig) -> Result<Vec<(String, f64)>, Failure> {
    let mut out = Vec::new();
    if let Some(t) = cfg.t {
        out.push(("t_end".to_string(), t));
    }
    for s in &cfg.params {
        let (k, v) = s.split_once('=').ok_or_else(|| bad(format!("parameter override '{s}' is not name=value")))?;
        let v: f64 = v.trim().parse().map_err(|_| bad(format!("parameter override '{s}' has a non-numeric value")))?;
        out.push((k.trim().to_string(), v));
    }
    Ok(out)
}

fn validate(cfg: &RunConfig) -> Result<(), Failure> {
    use Command::*;
    if let Some(t) = cfg.t {
        if !(t > 0.0 && t.is_finite()) {
            return Err(bad(format!("T must be positive, got {t}")));
        }
    }
    if cfg.particles == 0 {
        return Err(bad("particles must be at least 1"));
    }
    if cfg.steps == 0 || cfg.obs_steps == 0 || cfg.repeats == 0 || cfg.paths == 0 {
        return Err(bad("steps, obs_steps, repeats and paths must be positive"));
    }
    if matches!(cfg.command, Metrics | Robustness | Wongzakai) && !(2.0..3.0).contains(&cfg.p) {
        return Err(bad(format!("p must lie in [2, 3) for rough metrics, got {}", cfg.p)));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha <= 0.5) {
        return Err(bad(format!("alpha must lie in (0, 1/2], got {}", cfg.alpha)));
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon < 1.0) {
        return Err(bad(format!("epsilon must lie in (0, 1), got {}", cfg.epsilon)));
    }
    if cfg.epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(bad("epsilons must lie in (0, 1)"));
    }
    if cfg.meshes.is_empty() || cfg.meshes.contains(&0) {
        return Err(bad("meshes must be positive"));
    }
    if cfg.delta_seq.is_empty() || cfg.delta_seq.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
        return Err(bad("delta-seq values must lie in (0, 1]"));
    }
    if cfg.levels.is_empty() || cfg.levels.iter().any(|&l| l == 0 || l > 14) {
        return Err(bad("levels must lie in 1..=14"));
    }
    model_params(cfg)?;
    Ok(())
}

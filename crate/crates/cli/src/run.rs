//! Pipelines behind each command and the artifact writer.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use roughfilter::cadlag_path::{format_f64, p_variation, CadlagPath};
use roughfilter::experiments::{epsilon_stability, wong_zakai_sweep, EpsilonConfig, WongZakaiConfig};
use roughfilter::fillin::{beta_p, continuous_representative, AdmissiblePair, PathFunction, RSeq};
use roughfilter::filter::experiments::{
    mesh_drivers, robust_consistency_check, robustness_sweep, simulate_record, ConsistencyConfig, RobustnessConfig,
};
use roughfilter::filter::{filter_observation, observation_pair, FilterConfig, TestFunction};
use roughfilter::lift::{marcus_lift, rho_alpha, rho_p, stratonovich_lift, RoughPath};
use roughfilter::rde::{solve_canonical_rde, LinearField, Smooth, SolverOptions};
use roughfilter::sim::catalog::CatalogModel;
use roughfilter::sim::{girsanov_exponent, simulate_pair, Measure, ModelSpec, NoiseBundle, Regime};
use roughfilter::tensor_group::NORM_CONVENTION;
use serde::Serialize;

use crate::config::{model_params, Command, RunConfig};
use crate::Failure;

/// Writes artifacts into the output directory and remembers their names.
struct Artifacts {
    dir: PathBuf,
    names: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Artifacts { dir: dir.to_path_buf(), names: Vec::new() })
    }

    fn create(&mut self, name: &str) -> Result<File, Failure> {
        let path = self.dir.join(name);
        self.names.push(name.to_string());
        File::create(&path).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
    }

    /// CSV whose rows are prefixed by the provenance columns `seed`, `mesh`
    /// and `norm`.
    fn csv(&mut self, name: &str, header: &[&str], rows: &[(u64, usize, Vec<String>)]) -> Result<(), Failure> {
        let file = self.create(name)?;
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
        let io = |e: csv::Error| Failure::Io(e.to_string());
        let mut head = vec!["seed", "mesh", "norm"];
        head.extend_from_slice(header);
        wr.write_record(&head).map_err(io)?;
        for (seed, mesh, cells) in rows {
            let mut rec = vec![seed.to_string(), mesh.to_string(), NORM_CONVENTION.to_string()];
            rec.extend(cells.iter().cloned());
            wr.write_record(&rec).map_err(io)?;
        }
        wr.flush()?;
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut file = self.create(name)?;
        serde_json::to_writer_pretty(&mut file, value).map_err(|e| Failure::Io(e.to_string()))?;
        file.write_all(b"\n")?;
        Ok(())
    }
}

fn num(v: f64) -> String {
    format_f64(v)
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Run the configured pipeline and write its artifacts and manifest.
pub fn run(cfg: &RunConfig) -> Result<(), Failure> {
    let start = Instant::now();
    let mut art = Artifacts::new(&cfg.out)?;
    match cfg.command {
        Command::Lift => lift(cfg, &mut art)?,
        Command::Metrics => metrics(cfg, &mut art)?,
        Command::Rde => rde(cfg, &mut art)?,
        Command::Simulate => simulate(cfg, &mut art)?,
        Command::Filter => filter(cfg, &mut art)?,
        Command::Robustness => robustness(cfg, &mut art)?,
        Command::Consistency => consistency(cfg, &mut art)?,
        Command::Wongzakai => wongzakai(cfg, &mut art)?,
    }
    write_manifest(cfg, &art, start.elapsed().as_secs_f64())?;
    for name in &art.names {
        println!("{}", art.dir.join(name).display());
    }
    Ok(())
}

fn write_manifest(cfg: &RunConfig, art: &Artifacts, wall_time: f64) -> Result<(), Failure> {
    let mut table = toml::Table::try_from(cfg).map_err(|e| Failure::Io(e.to_string()))?;
    table.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    table.insert("norm_convention".into(), NORM_CONVENTION.into());
    table.insert("wall_time_s".into(), wall_time.into());
    table.insert("artifacts".into(), toml::Value::Array(art.names.iter().map(|n| n.as_str().into()).collect()));
    let text = toml::to_string(&table).map_err(|e| Failure::Io(e.to_string()))?;
    let path = art.dir.join("manifest.toml");
    std::fs::write(&path, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

fn model(cfg: &RunConfig) -> Result<CatalogModel, Failure> {
    Ok(CatalogModel::with_params(&cfg.model, &model_params(cfg)?)?)
}

fn seeds(cfg: &RunConfig) -> Vec<u64> {
    (0..cfg.repeats as u64).map(|i| cfg.seed + i).collect()
}

fn read_path(path: &Path) -> Result<CadlagPath, Failure> {
    CadlagPath::read_csv(path).map_err(|e| match e {
        roughfilter::Error::Io(m) => Failure::Io(format!("{}: {m}", path.display())),
        e => Failure::Validation(format!("{}: {e}", path.display())),
    })
}

/// Marcus lift with log-linear slots of a path with jumps, Stratonovich
/// lift otherwise.
fn pair_of(x: &CadlagPath, jumps: usize) -> Result<AdmissiblePair, Failure> {
    if x.has_jumps() {
        Ok(AdmissiblePair::new(marcus_lift(x), PathFunction::LogLinear, RSeq::for_jumps(jumps), 1.0)?)
    } else {
        Ok(AdmissiblePair::marcus(stratonovich_lift(x)?))
    }
}

/// Drivers per seed: the `--input` path, or the lifted observation of a
/// simulated record for each seed.
fn drivers(cfg: &RunConfig) -> Result<Vec<(u64, AdmissiblePair)>, Failure> {
    if let Some(input) = &cfg.input {
        let x = read_path(input)?;
        return Ok(vec![(cfg.seed, pair_of(&x, x.jump_indices().len())?)]);
    }
    let m = model(cfg)?;
    seeds(cfg)
        .into_iter()
        .map(|s| {
            let obs = simulate_record(&m, s, cfg.obs_steps, cfg.epsilon)?;
            Ok((s, observation_pair(&obs)?))
        })
        .collect()
}

fn lift(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Failure> {
    let drivers = drivers(cfg)?;
    let d = drivers[0].1.rough.dim();
    let mut header = vec!["t".to_string(), "jump".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    for i in 1..=d {
        for j in i + 1..=d {
            header.push(format!("area{i}{j}"));
        }
    }
    header.push("hnorm".into());
    let mut rows = Vec::new();
    for (seed, pair) in &drivers {
        let x: &RoughPath = &pair.rough;
        let mesh = x.len() - 1;
        for k in 0..x.len() {
            let g = x.point(k);
            let mut r = vec![num(x.times()[k]), u8::from(x.is_jump(k)).to_string()];
            r.extend(g.level1.iter().map(|v| num(*v)));
            for i in 0..d {
                for j in i + 1..d {
                    r.push(num(0.5 * (g.level2[i * d + j] - g.level2[j * d + i])));
                }
            }
            r.push(num(g.norm()));
            rows.push((*seed, mesh, r));
        }
        art.json(&format!("lift_seed{seed}.json"), &x.to_json())?;
    }
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    art.csv("lift.csv", &h, &rows)
}

fn metrics(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Failure> {
    let header = ["pvar_x", "pvar_y", "rho_p", "rho_alpha", "beta_p"];
    let mut rows = Vec::new();
    if let Some(input) = &cfg.input {
        let other = cfg.other.as_ref().ok_or_else(|| Failure::Validation("metrics with --input needs --other".into()))?;
        let (x, y) = (read_path(input)?, read_path(other)?);
        let jumps = x.jump_indices().len().max(y.jump_indices().len());
        let (px, py) = (pair_of(&x, jumps)?, pair_of(&y, jumps)?);
        let ra = if x.has_jumps() || y.has_jumps() { None } else { Some(rho_alpha(&px.rough, &py.rough, cfg.alpha)?) };
        rows.push((
            cfg.seed,
            x.len().max(y.len()) - 1,
            vec![
                num(p_variation(&x, cfg.p)?),
                num(p_variation(&y, cfg.p)?),
                num(rho_p(&px.rough, &py.rough, cfg.p)?),
                opt(ra),
                num(beta_p(&px, &py, cfg.p, &cfg.delta_seq)?.estimate),
            ],
        ));
    } else {
        let m = model(cfg)?;
        for seed in seeds(cfg) {
            let obs = simulate_record(&m, seed, cfg.obs_steps, cfg.epsilon)?;
            for &mesh in &cfg.meshes {
                let (lin, rect) = mesh_drivers(&obs.w_tilde, mesh)?;
                let rep = continuous_representative(&rect)?;
                rows.push((
                    seed,
                    mesh,
                    vec![
                        num(p_variation(&lin.rough.level1_path(), cfg.p)?),
                        num(p_variation(&rect.rough.level1_path(), cfg.p)?),
                        num(rho_p(&lin.rough, &rect.rough, cfg.p)?),
                        num(rho_alpha(&lin.rough, &rep.path, cfg.alpha)?),
                        num(beta_p(&lin, &rect, cfg.p, &cfg.delta_seq)?.estimate),
                    ],
                ));
            }
        }
    }
    art.csv("metrics.csv", &header, &rows)
}

/// Built-in linear fields on `R²`: rotation generators for even driver
/// coordinates and hyperbolic ones for odd, scaled down with the index.
fn builtin_linear_field(d: usize) -> LinearField {
    let mats = (0..d)
        .map(|j| {
            let c = 1.0 / (1 + j / 2) as f64;
            if j % 2 == 0 {
                vec![0.0, -c, c, 0.0]
            } else {
                vec![0.5 * c, 0.0, 0.0, -0.5 * c]
            }
        })
        .collect();
    LinearField { e: 2, mats }
}

#[derive(Serialize)]
struct RdeSummary {
    seed: u64,
    y0: Vec<f64>,
    terminal: Vec<f64>,
    davie_steps: usize,
    slot_substeps: usize,
    matrices: Vec<Vec<f64>>,
}

fn rde(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Failure> {
    let y0 = vec![1.0, 0.0];
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (seed, pair) in drivers(cfg)? {
        let field = builtin_linear_field(pair.rough.dim());
        let sol = solve_canonical_rde(&Smooth(field.clone()), &pair, &y0, &SolverOptions::new(cfg.steps))?;
        let mesh = sol.times.len() - 1;
        for k in 0..sol.times.len() {
            let mut r = vec![num(sol.times[k])];
            r.extend(sol.states[k].iter().map(|v| num(*v)));
            r.extend(sol.pre_states[k].iter().map(|v| num(*v)));
            rows.push((seed, mesh, r));
        }
        summary.push(RdeSummary {
            seed,
            y0: y0.clone(),
            terminal: sol.terminal().to_vec(),
            davie_steps: sol.meta.davie_steps,
            slot_substeps: sol.meta.slot_substeps,
            matrices: field.mats,
        });
    }
    art.csv("rde.csv", &["t", "y1", "y2", "pre_y1", "pre_y2"], &rows)?;
    art.json("rde.json", &summary)
}

#[derive(Serialize)]
struct SimSummary {
    seed: u64,
    model: String,
    samples: usize,
    observed_jumps: usize,
    signal_jumps: usize,
    terminal_i: f64,
}

fn simulate(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Failure> {
    let m = model(cfg)?;
    let dims = m.dims();
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=dims.dx).map(|i| format!("x{i}")));
    header.extend((1..=dims.dy).map(|i| format!("y{i}")));
    header.extend((1..=dims.dy).map(|i| format!("w_tilde{i}")));
    header.push("i".into());
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for seed in seeds(cfg) {
        let noise = NoiseBundle::sample(&m, cfg.steps, seed, cfg.epsilon)?;
        let sim = simulate_pair(&m, &noise, Measure::Original)?;
        let girsanov = girsanov_exponent(&m, &sim)?;
        for k in 0..sim.x.len() {
            let mut r = vec![num(sim.x.times()[k])];
            r.extend(sim.x.value(k).iter().map(|v| num(*v)));
            r.extend(sim.y.value(k).iter().map(|v| num(*v)));
            r.extend(sim.w_tilde.value(k).iter().map(|v| num(*v)));
            r.push(num(girsanov.value(k)[0]));
            rows.push((seed, cfg.steps, r));
        }
        summary.push(SimSummary {
            seed,
            model: m.id(),
            samples: sim.x.len(),
            observed_jumps: sim.observed_jumps.len(),
            signal_jumps: sim.signal_jumps.len(),
            terminal_i: *girsanov.last_value().first().unwrap_or(&0.0),
        });
    }
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    art.csv("simulate.csv", &h, &rows)?;
    art.json("simulate.json", &summary)
}

fn filter(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Failure> {
    let m = model(cfg)?;
    let f = TestFunction::parse(&cfg.f)?;
    let fcfg = FilterConfig::new(cfg.particles, cfg.seed_base, cfg.steps).with_epsilon(cfg.epsilon);
    let mut rows = Vec::new();
    let mut results = Vec::new();
    for seed in seeds(cfg) {
        let obs = simulate_record(&m, seed, cfg.obs_steps, cfg.epsilon)?;
        let r = filter_observation(&m, &f, &obs, &fcfg)?;
        rows.push((
            seed,
            cfg.obs_steps,
            vec![
                r.model.clone(),
                r.test_function.clone(),
                num(r.t),
                num(r.theta),
                num(r.theta_se),
                num(r.g_f.value),
                num(r.g_f.std_error),
                num(r.g_1.value),
                num(r.g_1.std_error),
                num(r.ess),
                r.particles.to_string(),
                r.seed_base.to_string(),
                r.steps.to_string(),
                r.driver.jumps.to_string(),
                r.driver.events.to_string(),
            ],
        ));
        results.push(r);
    }
    let header = [
        "model", "f", "t", "theta", "theta_se", "g_f", "g_f_se", "g_1", "g_1_se", "ess", "particles", "seed_base", "steps",
        "driver_jumps", "events",
    ];
    art.csv("filter.csv", &header, &rows)?;
    art.json("filter.json", &results)
}

fn robustness(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Failure> {
    let m = model(cfg)?;
    let f = TestFunction::parse(&cfg.f)?;
    if m.regime() == Regime::InfiniteJumps {
        let ecfg = EpsilonConfig {
            epsilons: cfg.epsilons.clone(),
            seeds: seeds(cfg),
            obs_steps: cfg.obs_steps,
            particles: cfg.particles,
            seed_base: cfg.seed_base,
            steps: cfg.steps,
            p: cfg.p,
            deltas: cfg.delta_seq.clone(),
        };
        let report = epsilon_stability(&m, &f, &ecfg)?;
        let mut rows = Vec::new();
        for row in &report.rows {
            for (i, &eps) in ecfg.epsilons.iter().enumerate() {
                rows.push((
                    row.seed,
                    cfg.obs_steps,
                    vec![
                        num(eps),
                        opt(ecfg.epsilons.get(i + 1).copied()),
                        num(row.theta[i]),
                        num(row.theta_se[i]),
                        opt(row.beta_p.get(i).copied()),
                        opt(row.theta_gap.get(i).copied()),
                    ],
                ));
            }
        }
        art.csv("robustness.csv", &["epsilon", "next_epsilon", "theta", "theta_se", "beta_p_next", "theta_gap_next"], &rows)?;
        println!("beta_p decreasing: {}, theta gap decreasing: {}", report.beta_decreasing, report.theta_gap_decreasing);
        return art.json("robustness.json", &report);
    }
    let rcfg = RobustnessConfig {
        meshes: cfg.meshes.clone(),
        obs_seed: cfg.seed,
        obs_steps: cfg.obs_steps,
        particles: cfg.particles,
        seed_base: cfg.seed_base,
        steps: cfg.steps,
        alpha: cfg.alpha,
        p: cfg.p,
        deltas: cfg.delta_seq.clone(),
    };
    let (tables, summary) = robustness_sweep(&m, &f, &rcfg, &seeds(cfg))?;
    let mut rows = Vec::new();
    for t in &tables {
        for r in &t.rows {
            rows.push((
                t.config.obs_seed,
                r.mesh,
                vec![
                    num(r.theta_lin),
                    num(r.se_lin),
                    num(r.theta_rect),
                    num(r.se_rect),
                    num(r.gap),
                    num(r.combined_se),
                    num(r.paired_se),
                    num(r.rho_alpha),
                    num(r.beta_p),
                    num(r.ratio),
                ],
            ));
        }
    }
    let header =
        ["theta_lin", "se_lin", "theta_rect", "se_rect", "gap", "combined_se", "paired_se", "rho_alpha", "beta_p", "ratio"];
    art.csv("robustness.csv", &header, &rows)?;
    println!("gap trend non-increasing: {}", summary.trend_nonincreasing);
    #[derive(Serialize)]
    struct Out<'a, T, S> {
        tables: &'a T,
        summary: &'a S,
    }
    art.json("robustness.json", &Out { tables: &tables, summary: &summary })
}

fn consistency(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Failure> {
    let m = model(cfg)?;
    let f = TestFunction::parse(&cfg.f)?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for seed in seeds(cfg) {
        let ccfg = ConsistencyConfig {
            obs_seed: seed,
            obs_steps: cfg.obs_steps,
            particles: cfg.particles,
            seed_base: cfg.seed_base,
            epsilon: cfg.epsilon,
        };
        let r = robust_consistency_check(&m, &f, &ccfg)?;
        rows.push((
            seed,
            cfg.obs_steps,
            vec![
                num(r.theta.value),
                num(r.theta.std_error),
                num(r.reference.value),
                num(r.reference.std_error),
                num(r.gap),
                num(r.combined_se),
                r.pass.to_string(),
                opt(r.kalman_bucy.map(|k| k.mean)),
                opt(r.flow_filter.map(|e| e.value)),
                opt(r.flow_filter.map(|e| e.std_error)),
                opt(r.flow_gap),
                r.flow_pass.map(|b| b.to_string()).unwrap_or_default(),
            ],
        ));
        reports.push(r);
    }
    let header = [
        "theta", "theta_se", "reference", "reference_se", "gap", "combined_se", "pass", "kalman_mean", "flow", "flow_se",
        "flow_gap", "flow_pass",
    ];
    art.csv("consistency.csv", &header, &rows)?;
    art.json("consistency.json", &reports)
}

fn wongzakai(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), Failure> {
    let base = WongZakaiConfig::default();
    let top = cfg.levels.iter().copied().max().unwrap_or(0);
    let wcfg = WongZakaiConfig {
        levels: cfg.levels.clone(),
        reference_level: base.reference_level.max(top + 2),
        paths: cfg.paths,
        seed: cfg.seed,
        p: cfg.p,
        ..base
    };
    let report = wong_zakai_sweep(&wcfg)?;
    let mut rows = Vec::new();
    for path in &report.paths {
        for (k, &level) in wcfg.levels.iter().enumerate() {
            rows.push((path.seed, 1usize << level, vec![level.to_string(), num(path.errors[k]), num(path.rho_p[k])]));
        }
    }
    art.csv("wongzakai.csv", &["level", "error", "rho_p"], &rows)?;
    println!("monotone paths: {}/{}", report.monotone_paths, report.paths.len());
    art.json("wongzakai.json", &report)
}

//! Counter-based noise sources: Brownian paths that can be evaluated at any
//! time consistently, Poisson random measures with marks, and ε-truncated
//! shot noise with nested truncation levels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cadlag_path::CadlagPath;
use crate::error::{Error, Result};

use super::{LevyMeasure, ModelSpec};

/// Depth of the dyadic bridge used to evaluate a Brownian path between
/// grid points.
const BRIDGE_DEPTH: u32 = 40;

const STREAM_B: u64 = 1;
const STREAM_W: u64 = 2;
const STREAM_P: u64 = 3;
const STREAM_LAMBDA: u64 = 4;
const STREAM_X0: u64 = 5;
const STREAM_COLLISION: u64 = 6;

/// Uniform grid `t_k = T·k/n`.
pub fn uniform_grid(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| grid_time(horizon, steps, k)).collect()
}

#[inline]
fn grid_time(horizon: f64, steps: usize, k: usize) -> f64 {
    if k == steps {
        horizon
    } else {
        horizon * k as f64 / steps as f64
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Brownian motion in `ℝ^dim` on `[0, T]`. Increments over the uniform
/// grid and every bridge midpoint below it are standard normals addressed
/// by position in a ChaCha8 stream, so the value at a given time does not
/// depend on which other times are queried.
#[derive(Clone, Debug)]
pub struct BrownianPath {
    base: Vec<ChaCha8Rng>,
    horizon: f64,
    steps: usize,
    dim: usize,
    cum: Vec<f64>,
}

impl BrownianPath {
    pub fn new(seed: u64, stream: u64, horizon: f64, steps: usize, dim: usize) -> Self {
        let base: Vec<ChaCha8Rng> = (0..dim).map(|c| stream_rng(seed, (stream << 8) | c as u64)).collect();
        let sdt = (horizon / steps as f64).sqrt();
        let mut cum = vec![0.0; (steps + 1) * dim];
        for c in 0..dim {
            let mut acc = 0.0;
            for k in 0..steps {
                acc += sdt * keyed_normal(&base[c], key(k, 0));
                cum[(k + 1) * dim + c] = acc;
            }
        }
        BrownianPath { base, horizon, steps, dim, cum }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Value at grid index `k`.
    pub fn grid_value(&self, k: usize) -> &[f64] {
        &self.cum[k * self.dim..(k + 1) * self.dim]
    }

    /// Value at an arbitrary time in `[0, T]`.
    pub fn value_at(&self, t: f64, out: &mut [f64]) {
        let t = t.clamp(0.0, self.horizon);
        let dt = self.horizon / self.steps as f64;
        let mut k = ((t / dt).floor() as usize).min(self.steps - 1);
        // guard against rounding in t/dt
        while k > 0 && grid_time(self.horizon, self.steps, k) > t {
            k -= 1;
        }
        while k + 1 < self.steps && grid_time(self.horizon, self.steps, k + 1) <= t {
            k += 1;
        }
        let (a, b) = (grid_time(self.horizon, self.steps, k), grid_time(self.horizon, self.steps, k + 1));
        if t == a {
            out.copy_from_slice(self.grid_value(k));
            return;
        }
        if t == b {
            out.copy_from_slice(self.grid_value(k + 1));
            return;
        }
        for c in 0..self.dim {
            let v0 = self.cum[k * self.dim + c];
            let v1 = self.cum[(k + 1) * self.dim + c];
            let (mut l, mut r, mut vl, mut vr) = (a, b, v0, v1);
            let mut node: u64 = 1;
            let mut exact = None;
            for _ in 0..BRIDGE_DEPTH {
                let m = 0.5 * (l + r);
                let vm = 0.5 * (vl + vr) + (0.25 * (r - l)).sqrt() * keyed_normal(&self.base[c], key(k, node));
                if t == m {
                    exact = Some(vm);
                    break;
                }
                if t < m {
                    r = m;
                    vr = vm;
                    node *= 2;
                } else {
                    l = m;
                    vl = vm;
                    node = 2 * node + 1;
                }
            }
            out[c] = exact.unwrap_or_else(|| vl + (t - l) / (r - l) * (vr - vl));
        }
    }

    /// Increment over `[s, t]`.
    pub fn increment(&self, s: f64, t: f64, out: &mut [f64]) {
        let mut a = vec![0.0; self.dim];
        self.value_at(s, &mut a);
        self.value_at(t, out);
        for (o, v) in out.iter_mut().zip(&a) {
            *o -= v;
        }
    }
}

#[inline]
fn key(step: usize, node: u64) -> u128 {
    ((step as u128) << 41) | node as u128
}

/// Standard normal at a fixed position of a stream (64 words reserved per
/// key).
fn keyed_normal(base: &ChaCha8Rng, k: u128) -> f64 {
    let mut r = base.clone();
    r.set_word_pos(k << 6);
    r.sample(StandardNormal)
}

/// One atom of a Poisson random measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpAtom {
    pub time: f64,
    /// Mark `u` (the jump size for shot noise).
    pub mark: f64,
    /// Uniform variate used for thinning.
    pub accept: f64,
}

/// Sample atoms of a finite measure with total rate `rate_scale · mass`
/// on `[0, T]`, marks drawn from the normalized measure.
fn finite_atoms(rng: &mut ChaCha8Rng, levy: &LevyMeasure, horizon: f64, rate_scale: f64) -> Result<Vec<JumpAtom>> {
    let atoms = match levy {
        LevyMeasure::Zero => return Ok(vec![]),
        LevyMeasure::Atoms(a) => a,
        LevyMeasure::Stable { .. } => return Err(Error::invalid("finite-activity sampler needs an atomic measure")),
    };
    let mass: f64 = atoms.iter().map(|a| a.mass).sum();
    let mean = mass * rate_scale * horizon;
    if mean <= 0.0 {
        return Ok(vec![]);
    }
    let count: f64 = Poisson::new(mean).map_err(|e| Error::invalid(e.to_string()))?.sample(rng);
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count as usize {
        let time = horizon * rng.random::<f64>();
        let pick = mass * rng.random::<f64>();
        let accept = rng.random::<f64>();
        let mut acc = 0.0;
        let mut mark = atoms.last().unwrap().mark;
        for a in atoms {
            acc += a.mass;
            if pick < acc {
                mark = a.mark;
                break;
            }
        }
        out.push(JumpAtom { time, mark, accept });
    }
    Ok(out)
}

/// LePage series for a stable-like measure restricted to `ε < |x| < 1`:
/// jumps come in decreasing size, so smaller ε extends the list of a
/// larger ε with the same seed.
fn stable_atoms(rng: &mut ChaCha8Rng, levy: &LevyMeasure, horizon: f64, epsilon: f64) -> Result<Vec<JumpAtom>> {
    let LevyMeasure::Stable { scale, index, symmetric } = *levy else {
        return Err(Error::invalid("shot noise needs a stable-like measure"));
    };
    check_epsilon(epsilon)?;
    let sides = if symmetric { 2.0 } else { 1.0 };
    let mut gamma = 0.0;
    let mut out = Vec::new();
    loop {
        let e: f64 = Exp1.sample(rng);
        let time = horizon * rng.random::<f64>();
        let sign = rng.random::<f64>();
        gamma += e;
        // tail mass over [0,T] of |x| > r is T·sides·c(r^{-α} − 1)/α
        let r = (index * gamma / (sides * scale * horizon) + 1.0).powf(-1.0 / index);
        if r <= epsilon {
            break;
        }
        let mark = if symmetric && sign < 0.5 { -r } else { r };
        out.push(JumpAtom { time, mark, accept: 0.0 });
    }
    Ok(out)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("truncation level must lie in (0,1), got {epsilon}")));
    }
    Ok(())
}

fn sort_atoms(v: &mut [JumpAtom]) {
    v.sort_by(|a, b| a.time.total_cmp(&b.time));
}

/// All noise driving one realization of the signal–observation system.
#[derive(Clone, Debug)]
pub struct NoiseBundle {
    pub seed: u64,
    pub horizon: f64,
    pub steps: usize,
    pub epsilon: f64,
    pub b: BrownianPath,
    pub w: BrownianPath,
    /// Atoms of `N_p` (or shot-noise jumps of ξ¹).
    pub p_jumps: Vec<JumpAtom>,
    /// Candidate atoms of `N_λ` at rate `λ_max·ν₂` (or shot-noise jumps of
    /// ξ²).
    pub lambda_jumps: Vec<JumpAtom>,
    /// Standard normals for the initial signal value.
    pub x0_normals: Vec<f64>,
}

impl NoiseBundle {
    /// Full bundle for simulating `(X, Y)`.
    pub fn sample<M: ModelSpec>(model: &M, steps: usize, seed: u64, epsilon: f64) -> Result<Self> {
        Self::build(model, steps, seed, epsilon, true)
    }

    /// Signal-only noise `(B, N_p)` plus the initial value, as used by one
    /// filter particle.
    pub fn auxiliary<M: ModelSpec>(model: &M, steps: usize, seed: u64, epsilon: f64) -> Result<Self> {
        Self::build(model, steps, seed, epsilon, false)
    }

    fn build<M: ModelSpec>(model: &M, steps: usize, seed: u64, epsilon: f64, observation: bool) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("steps must be positive"));
        }
        let dims = model.dims();
        let horizon = model.horizon();
        let infinite = model.regime() == super::Regime::InfiniteJumps;
        let sample_measure = |levy: &LevyMeasure, stream: u64, scale: f64| -> Result<Vec<JumpAtom>> {
            let mut rng = stream_rng(seed, stream);
            let mut v = if infinite {
                stable_atoms(&mut rng, levy, horizon, epsilon)?
            } else {
                finite_atoms(&mut rng, levy, horizon, scale)?
            };
            sort_atoms(&mut v);
            Ok(v)
        };
        let mut p_jumps = sample_measure(model.nu1(), STREAM_P, 1.0)?;
        let mut lambda_jumps =
            if observation { sample_measure(model.nu2(), STREAM_LAMBDA, model.lambda_max())? } else { vec![] };
        // the measures never share a time, and no jump sits at t = 0
        let mut rng = stream_rng(seed, STREAM_COLLISION);
        loop {
            let mut times: Vec<(f64, usize)> = p_jumps.iter().map(|a| (a.time, 0)).collect();
            times.extend(lambda_jumps.iter().map(|a| (a.time, 1)));
            times.sort_by(|a, b| a.0.total_cmp(&b.0));
            let bad = times
                .windows(2)
                .find(|w| w[0].0 == w[1].0)
                .map(|w| w[1])
                .or_else(|| times.iter().copied().find(|(t, _)| *t <= 0.0 || *t >= horizon));
            let Some((t, which)) = bad else { break };
            let list = if which == 0 { &mut p_jumps } else { &mut lambda_jumps };
            let i = list.iter().position(|a| a.time == t).unwrap();
            list[i].time = horizon * rng.random::<f64>();
            sort_atoms(list);
        }
        let mut xr = stream_rng(seed, STREAM_X0);
        let x0_normals = (0..dims.dx).map(|_| xr.sample(StandardNormal)).collect();
        Ok(NoiseBundle {
            seed,
            horizon,
            steps,
            epsilon,
            b: BrownianPath::new(seed, STREAM_B, horizon, steps, dims.db),
            w: BrownianPath::new(seed, STREAM_W, horizon, steps, if observation { dims.dy } else { 0 }),
            p_jumps,
            lambda_jumps,
            x0_normals,
        })
    }

    /// Uniform grid joined with every jump time.
    pub fn grid(&self) -> Vec<f64> {
        let mut g = uniform_grid(self.horizon, self.steps);
        g.extend(self.p_jumps.iter().map(|a| a.time));
        g.extend(self.lambda_jumps.iter().map(|a| a.time));
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    }
}

/// Compensated shot noise `ξ^ε_t = Σ_{s ≤ t, ε<|Δ|<1} Δ_s − t ∫_{ε<|x|<1} x ν(dx)`
/// on `grid` joined with the jump times.
pub fn shot_noise(levy: &LevyMeasure, epsilon: f64, seed: u64, grid: &[f64]) -> Result<CadlagPath> {
    check_epsilon(epsilon)?;
    crate::cadlag_path::check_times(grid)?;
    let horizon = *grid.last().unwrap();
    let mut rng = stream_rng(seed, STREAM_P);
    let mut atoms = stable_atoms(&mut rng, levy, horizon, epsilon)?;
    atoms.retain(|a| a.time > 0.0 && a.time <= horizon);
    sort_atoms(&mut atoms);
    shot_noise_path(&atoms, levy.truncated_mean(epsilon), grid)
}

/// Cadlag path of `Σ jumps − t·drift` on `grid ∪ jump times`.
pub fn shot_noise_path(atoms: &[JumpAtom], drift: f64, grid: &[f64]) -> Result<CadlagPath> {
    let mut times: Vec<f64> = grid.to_vec();
    times.extend(atoms.iter().map(|a| a.time));
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut values = Vec::with_capacity(times.len());
    let mut pre = Vec::with_capacity(times.len());
    let mut sum = 0.0;
    let mut j = 0;
    for &t in &times {
        let before = sum - t * drift;
        while j < atoms.len() && atoms[j].time <= t {
            sum += atoms[j].mark;
            j += 1;
        }
        pre.push(before);
        values.push(sum - t * drift);
    }
    CadlagPath::with_left_limits(times, values, pre, 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brownian_value_independent_of_queries() {
        let b = BrownianPath::new(7, 1, 1.0, 16, 2);
        let mut a = [0.0; 2];
        let mut c = [0.0; 2];
        b.value_at(0.3, &mut a);
        b.value_at(0.31, &mut c);
        let mut a2 = [0.0; 2];
        b.value_at(0.3, &mut a2);
        assert_eq!(a, a2);
        b.value_at(0.25, &mut c);
        assert_eq!(c, [b.grid_value(4)[0], b.grid_value(4)[1]]);
    }

    #[test]
    fn brownian_bridge_variance() {
        // Var(W_t | W_a, W_b) at the midpoint is (b − a)/4; total Var(W_t) = t.
        let n = 4000;
        let mut s2 = 0.0;
        let mut s2g = 0.0;
        for seed in 0..n {
            let b = BrownianPath::new(seed, 2, 1.0, 4, 1);
            let mut v = [0.0];
            b.value_at(0.3, &mut v);
            s2 += v[0] * v[0];
            s2g += b.grid_value(4)[0].powi(2);
        }
        let (v, vg) = (s2 / n as f64, s2g / n as f64);
        // 4 standard errors of a variance estimate, √(2/n)·σ²
        assert!((v - 0.3).abs() < 4.0 * 0.3 * (2.0 / n as f64).sqrt(), "{v}");
        assert!((vg - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt(), "{vg}");
    }

    #[test]
    fn lepage_series_is_nested() {
        let levy = LevyMeasure::Stable { scale: 0.3, index: 1.5, symmetric: true };
        let mut r1 = stream_rng(3, STREAM_P);
        let mut r2 = stream_rng(3, STREAM_P);
        let a = stable_atoms(&mut r1, &levy, 1.0, 0.1).unwrap();
        let b = stable_atoms(&mut r2, &levy, 1.0, 0.05).unwrap();
        assert!(b.len() >= a.len());
        assert_eq!(&b[..a.len()], &a[..]);
        assert!(b.iter().all(|x| x.mark.abs() > 0.05 && x.mark.abs() < 1.0));
    }

    #[test]
    fn lepage_count_matches_tail_mass() {
        // expected count over [0,1]: 2c(ε^{-α} − 1)/α
        let levy = LevyMeasure::Stable { scale: 0.3, index: 1.5, symmetric: true };
        let eps: f64 = 0.1;
        let mean = 2.0 * 0.3 * (eps.powf(-1.5) - 1.0) / 1.5;
        let n = 2000;
        let total: usize = (0..n)
            .map(|s| stable_atoms(&mut stream_rng(s, STREAM_P), &levy, 1.0, eps).unwrap().len())
            .sum();
        let m = total as f64 / n as f64;
        assert!((m - mean).abs() < 4.0 * (mean / n as f64).sqrt(), "{m} vs {mean}");
    }

    #[test]
    fn shot_noise_paths() {
        let sym = LevyMeasure::Stable { scale: 0.3, index: 1.5, symmetric: true };
        assert_eq!(sym.truncated_mean(0.1), 0.0);
        let grid = uniform_grid(1.0, 8);
        let p = shot_noise(&sym, 0.9, 1, &grid).unwrap();
        assert!(p.len() >= 9);
        assert!(shot_noise(&sym, 1.0, 1, &grid).is_err());
        let pos = LevyMeasure::Stable { scale: 0.3, index: 1.5, symmetric: false };
        let q = shot_noise(&pos, 0.999, 1, &grid).unwrap();
        // almost no jumps: the path is −t·drift
        let drift = pos.truncated_mean(0.999);
        if !q.has_jumps() {
            assert!((q.last_value()[0] + drift).abs() < 1e-15);
        }
    }

    #[test]
    fn shot_noise_path_bookkeeping() {
        let atoms = [JumpAtom { time: 0.25, mark: 1.0, accept: 0.0 }, JumpAtom { time: 0.6, mark: 1.0, accept: 0.0 }];
        let p = shot_noise_path(&atoms, 1.0, &uniform_grid(1.0, 2)).unwrap();
        // two unit jumps minus unit drift
        assert!((p.last_value()[0] - 1.0).abs() < 1e-15);
        assert_eq!(p.jump_indices().len(), 2);
    }
}

//! Independent estimators of the filter used as oracles: the Kalman–Bucy
//! filter for linear-Gaussian models, a weighted particle filter under the
//! reference measure, and the scalar flow-decomposition filter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ratio_estimate, McEstimate, TestFunction};
use crate::cadlag_path::CadlagPath;
use crate::error::{Error, Result};
use crate::real::{Dual, Real};
use crate::sim::catalog::LinearGaussian;
use crate::sim::simulate::{apply_observed_jump, apply_signal_jump, shot_noise_drift};
use crate::sim::{h_generic, state_columns, Layout, Measure, ModelSpec, NoiseBundle, ObservationRecord, Regime, MAX_DIM};

use super::FilterConfig;

/// Conditional mean and variance of the signal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KalmanBucy {
    pub mean: f64,
    pub variance: f64,
}

/// Kalman–Bucy filter of the linear-Gaussian model with correlated signal
/// and observation noise along the piecewise-linear observation
/// `Y = Y₀ + s₂ W̃`:
/// `dP = 2ÃP + s_b² − P²c²/s₂²`,
/// `dm = Ãm + (s_w/s₂) dY + (Pc/s₂²)(dY − cm dt)`, `Ã = a − s_w c/s₂`,
/// integrated by RK4 with `substeps` per observation segment up to `t`.
pub fn kalman_bucy(model: &LinearGaussian, w_tilde: &CadlagPath, t: Option<f64>, substeps: usize) -> Result<KalmanBucy> {
    if w_tilde.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: w_tilde.dim() });
    }
    if substeps == 0 || !(model.s2 != 0.0) {
        return Err(Error::invalid("Kalman-Bucy needs positive substeps and s2 != 0"));
    }
    let t_end = t.unwrap_or(w_tilde.horizon());
    let LinearGaussian { a, sb, sw, c, s2, m0, p0, .. } = *model;
    let at = a - sw * c / s2;
    let rhs = |m: f64, p: f64, ydot: f64| -> (f64, f64) {
        (at * m + sw / s2 * ydot + p * c / (s2 * s2) * (ydot - c * m), 2.0 * at * p + sb * sb - p * p * c * c / (s2 * s2))
    };
    let (mut m, mut p) = (m0, p0);
    let times = w_tilde.times();
    for k in 1..times.len() {
        let t0 = times[k - 1];
        if t0 >= t_end {
            break;
        }
        let t1 = times[k].min(t_end);
        let full = times[k] - t0;
        let ydot = s2 * (w_tilde.pre_value(k)[0] - w_tilde.value(k - 1)[0]) / full;
        let h = (t1 - t0) / substeps as f64;
        for _ in 0..substeps {
            let k1 = rhs(m, p, ydot);
            let k2 = rhs(m + 0.5 * h * k1.0, p + 0.5 * h * k1.1, ydot);
            let k3 = rhs(m + 0.5 * h * k2.0, p + 0.5 * h * k2.1, ydot);
            let k4 = rhs(m + h * k3.0, p + h * k3.1, ydot);
            m += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            p += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
    }
    Ok(KalmanBucy { mean: m, variance: p })
}

/// Observation values needed by the step-based oracles on a sub-step
/// `[c, n]` of record segment `k`.
struct ObsCursor<'a> {
    obs: &'a ObservationRecord,
}

impl ObsCursor<'_> {
    /// `(W̃, Y)` at time `t` inside segment `k`, using the left limit of
    /// `Y` at the segment end.
    fn at(&self, k: usize, t: f64, w: &mut [f64], y: &mut [f64]) {
        let times = self.obs.y.times();
        let (t0, t1) = (times[k - 1], times[k]);
        let r = if t >= t1 { 1.0 } else { (t - t0) / (t1 - t0) };
        let (w0, w1) = (self.obs.w_tilde.value(k - 1), self.obs.w_tilde.pre_value(k));
        let (y0, y1) = (self.obs.y.value(k - 1), self.obs.y.pre_value(k));
        for i in 0..w.len() {
            w[i] = w0[i] + r * (w1[i] - w0[i]);
            y[i] = y0[i] + r * (y1[i] - y0[i]);
        }
    }
}

/// Left-point Girsanov increment `h·ΔW̃ − ½|h|²Δt + ∫(1 − λ) dν₂ Δt`.
fn weight_increment<M: ModelSpec + ?Sized>(m: &M, t: f64, w: &[f64], x: &[f64], y: &[f64], dw: &[f64], dt: f64) -> Result<f64> {
    let dy = w.len();
    let mut h = [0.0; MAX_DIM];
    if !h_generic(m, t, w, x, y, &mut h[..dy]) {
        return Err(Error::Singular(format!("sigma2 at t={t}")));
    }
    let mut inc = (0..dy).map(|i| h[i] * dw[i] - 0.5 * h[i] * h[i] * dt).sum::<f64>();
    if m.regime() != Regime::InfiniteJumps {
        inc += m.nu2().atoms().iter().map(|a| a.mass * (1.0 - m.lambda(t, x, a.mark))).sum::<f64>() * dt;
    }
    Ok(inc)
}

fn check_record<M: ModelSpec + ?Sized>(m: &M, obs: &ObservationRecord) -> Result<()> {
    if obs.y.dim() != m.dims().dy || obs.w_tilde.dim() != m.dims().dy {
        return Err(Error::DimensionMismatch { expected: m.dims().dy, got: obs.y.dim() });
    }
    if obs.regime != m.regime() {
        return Err(Error::invalid("observation record regime differs from the model"));
    }
    Ok(())
}

/// Heun increment of the signal rows under the reference measure with the
/// observation held at its recorded values.
#[allow(clippy::too_many_arguments)]
fn signal_field<M: ModelSpec + ?Sized>(m: &M, t: f64, s: &[f64], eps: f64, inc: &[f64], cols: &mut [f64], out: &mut [f64]) -> Result<()> {
    let l = Layout::of(m);
    let (dx, dy, e, nc) = (l.dx, l.dy, l.e(), l.cols());
    let mut h = [0.0; MAX_DIM];
    if !state_columns(m, t, s, Measure::Reference, cols, &mut h) {
        return Err(Error::Singular(format!("sigma2 at t={t}")));
    }
    for i in 0..dx {
        out[i] = (0..nc).map(|c| cols[(dy + i) * nc + c] * inc[c]).sum();
    }
    if m.regime() == Regime::InfiniteJumps {
        let mut d = [0.0; 3 * MAX_DIM];
        shot_noise_drift(m, t, s, eps, true, &mut d[..e]);
        for i in 0..dx {
            out[i] += d[dy + i] * inc[0];
        }
    }
    Ok(())
}

/// One particle of the reference-measure filter: returns `(X_T, Y_T, I_T)`.
fn reference_particle<M: ModelSpec>(m: &M, obs: &ObservationRecord, noise: &NoiseBundle) -> Result<(Vec<f64>, f64)> {
    let l = Layout::of(m);
    let (dx, dy, db, e, nc) = (l.dx, l.dy, l.db, l.e(), l.cols());
    let cur = ObsCursor { obs };
    let times = obs.y.times();
    let mut s = vec![0.0; e];
    s[dy..dy + dx].copy_from_slice(&m.initial_x().from_normals(&noise.x0_normals));
    s[dy + dx..].copy_from_slice(obs.y.value(0));
    let mut sp = s.clone();
    let mut cols = vec![0.0; e * nc];
    let (mut k1, mut k2) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
    let mut inc = vec![0.0; nc];
    let (mut b0, mut b1) = (vec![0.0; db], vec![0.0; db]);
    let (mut wn, mut yn) = (vec![0.0; dy], vec![0.0; dy]);
    let mut iw = 0.0;
    let (mut ia, mut ie) = (0, 0);
    let atoms = &noise.p_jumps;
    for k in 1..times.len() {
        let t1 = times[k];
        let mut c = times[k - 1];
        loop {
            let jump = ia < atoms.len() && atoms[ia].time <= t1;
            let tn = if jump { atoms[ia].time } else { t1 };
            if tn > c {
                cur.at(k, tn, &mut wn, &mut yn);
                noise.b.value_at(tn, &mut b1);
                inc[0] = tn - c;
                for j in 0..db {
                    inc[1 + j] = b1[j] - b0[j];
                }
                for j in 0..dy {
                    inc[1 + db + j] = wn[j] - s[j];
                }
                iw += weight_increment(m, c, &s[..dy], &s[dy..dy + dx], &s[dy + dx..], &inc[1 + db..], inc[0])?;
                signal_field(m, c, &s, obs.epsilon, &inc, &mut cols, &mut k1)?;
                sp[..dy].copy_from_slice(&wn);
                sp[dy + dx..].copy_from_slice(&yn);
                for i in 0..dx {
                    sp[dy + i] = s[dy + i] + k1[i];
                }
                signal_field(m, tn, &sp, obs.epsilon, &inc, &mut cols, &mut k2)?;
                for i in 0..dx {
                    s[dy + i] += 0.5 * (k1[i] + k2[i]);
                }
                s[..dy].copy_from_slice(&wn);
                s[dy + dx..].copy_from_slice(&yn);
                std::mem::swap(&mut b0, &mut b1);
                c = tn;
            }
            if !jump {
                break;
            }
            apply_signal_jump(m, c, &mut s, atoms[ia].mark);
            ia += 1;
        }
        while ie < obs.jumps.len() && obs.jumps[ie].time <= t1 {
            let a = obs.jumps[ie];
            ie += 1;
            if m.regime() != Regime::InfiniteJumps {
                let lam: f64 = m.lambda(t1, &s[dy..dy + dx], a.mark);
                if !(lam > 0.0) {
                    return Err(Error::invalid(format!("lambda = {lam} <= 0 at t = {t1}")));
                }
                iw += lam.ln();
            }
            apply_observed_jump(m, t1, &mut s, a.mark);
        }
        s[dy + dx..].copy_from_slice(obs.y.value(k));
        s[..dy].copy_from_slice(obs.w_tilde.value(k));
        if s.iter().any(|v| !v.is_finite()) || !iw.is_finite() {
            return Err(Error::BlowUp { step: k });
        }
    }
    Ok((s, iw))
}

fn ratio_from(results: Vec<Result<(f64, f64)>>) -> Result<McEstimate> {
    let mut vals = Vec::with_capacity(results.len());
    let mut logs = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        let (v, lw) = r.map_err(|e| Error::Particle { particle: i, source: Box::new(e) })?;
        if lw > super::LOG_WEIGHT_LIMIT {
            return Err(Error::DegenerateWeights(format!("log-weight {lw} exceeds {}", super::LOG_WEIGHT_LIMIT)));
        }
        vals.push(v);
        logs.push(lw.exp());
    }
    let (value, std_error) = ratio_estimate(&vals, &logs)?;
    Ok(McEstimate { value, std_error, samples: vals.len() })
}

/// Weighted particle filter under the reference measure on the recorded
/// observation: Heun steps for the signal with the observed `W̃`
/// increments, left-point Girsanov weights, no resampling. Particle `i`
/// uses the auxiliary noise of seed `seed_base + i`, as the rough filter
/// does. Returns the estimate of `π_T(f)` at the record horizon.
pub fn reference_particle_filter<M: ModelSpec>(m: &M, f: &TestFunction, obs: &ObservationRecord, cfg: &FilterConfig) -> Result<McEstimate> {
    check_record(m, obs)?;
    if cfg.particles == 0 {
        return Err(Error::invalid("particle count must be positive"));
    }
    let l = Layout::of(m);
    let results: Vec<Result<(f64, f64)>> = (0..cfg.particles)
        .into_par_iter()
        .map(|i| {
            let noise = NoiseBundle::auxiliary(m, cfg.steps, cfg.seed_base.wrapping_add(i as u64), cfg.epsilon)?;
            let (s, iw) = reference_particle(m, obs, &noise)?;
            Ok((f.eval(&s[l.x0()..l.y0()], &s[l.y0()..]), iw))
        })
        .collect();
    ratio_from(results)
}

/// Flow of the common-noise field in the `w` variable,
/// `∂_r φ = σ₁(r, φ)`, from `r = from` to `r = to`, by RK4.
fn sigma1_flow<M: ModelSpec + ?Sized, S: Real>(m: &M, y_ref: f64, from: f64, to: f64, x: S) -> S {
    let n = ((32.0 * (to - from).abs()).ceil() as usize).max(8);
    let h = (to - from) / n as f64;
    let yv = [S::cst(y_ref)];
    let g = |r: f64, v: S| -> S {
        let mut o = [S::zero()];
        m.sigma1(0.0, &[S::cst(r)], &[v], &yv, &mut o);
        o[0]
    };
    let mut v = x;
    let mut r = from;
    for _ in 0..n {
        let k1 = g(r, v);
        let k2 = g(r + 0.5 * h, v + k1 * (0.5 * h));
        let k3 = g(r + 0.5 * h, v + k2 * (0.5 * h));
        let k4 = g(r + h, v + k3 * h);
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        r += h;
    }
    v
}

/// `(φ(w, x̃), ∂_x̃ φ(w, x̃))`.
fn phi<M: ModelSpec + ?Sized>(m: &M, y_ref: f64, w: f64, xt: f64) -> (f64, f64) {
    let v = sigma1_flow(m, y_ref, 0.0, w, Dual::new(xt, 1.0));
    (v.re, v.eps)
}

/// `ψ(w, x) = φ(w, ·)⁻¹(x)`.
fn psi<M: ModelSpec + ?Sized>(m: &M, y_ref: f64, w: f64, x: f64) -> f64 {
    sigma1_flow(m, y_ref, w, 0.0, x)
}

fn check_scalar_flow_model<M: ModelSpec>(m: &M) -> Result<()> {
    let d = m.dims();
    if d.dx != 1 || d.dy != 1 {
        return Err(Error::invalid("the flow-decomposition filter needs a scalar signal and observation"));
    }
    if m.regime() == Regime::InfiniteJumps {
        return Err(Error::invalid("the flow-decomposition filter covers finite-activity models"));
    }
    if !m.common_noise_commutative() {
        return Err(Error::invalid("common-noise vector field is not commutative; the flow formula does not apply"));
    }
    let probes = [-1.5, -0.3, 0.0, 0.7, 2.0];
    for &x in &probes {
        for &w in &probes {
            let mut a = [0.0];
            let mut b = [0.0];
            m.sigma1(0.0, &[w], &[x], &[0.0], &mut a);
            m.sigma1(0.5 * m.horizon(), &[w], &[x], &[w - x], &mut b);
            if (a[0] - b[0]).abs() > 1e-14 * (1.0 + a[0].abs()) {
                return Err(Error::invalid("the flow-decomposition filter needs sigma1 to depend on (w, x) only"));
            }
            for atom in m.nu2().atoms() {
                m.f3(0.0, &[x], &[w], atom.mark, &mut a);
                if a[0] != 0.0 {
                    return Err(Error::invalid("the flow-decomposition filter needs f3 = 0"));
                }
            }
        }
    }
    Ok(())
}

/// One particle of the flow-decomposition filter: `X = φ(W̃, X̃)` with
/// `dX̃ = (b₃ − c₁)(X, Y)/∂_x̃φ dt + σ₀(X, Y)/∂_x̃φ ∘ dB` and signal jumps
/// `X̃ ← ψ(W̃, X_− + f₁)`. Returns `(X_T, Y_T, I_T)`.
fn flow_particle<M: ModelSpec>(m: &M, obs: &ObservationRecord, noise: &NoiseBundle) -> Result<(f64, f64, f64)> {
    let l = Layout::of(m);
    let (db, e, nc) = (l.db, l.e(), l.cols());
    let cur = ObsCursor { obs };
    let times = obs.y.times();
    let y_ref = obs.y.value(0)[0];
    let mut cols = vec![0.0; e * nc];
    let mut hbuf = [0.0; MAX_DIM];
    // (drift, diffusion columns) of X̃ at (t, w, x̃, y)
    let mut field = |t: f64, w: f64, xt: f64, y: f64, out: &mut [f64]| -> Result<f64> {
        let (x, jac) = phi(m, y_ref, w, xt);
        if !(jac.abs() > 0.0) || !jac.is_finite() {
            return Err(Error::Singular(format!("flow derivative {jac} at t={t}")));
        }
        if !state_columns(m, t, &[w, x, y], Measure::Reference, &mut cols, &mut hbuf) {
            return Err(Error::Singular(format!("sigma2 at t={t}")));
        }
        for c in 0..=db {
            out[c] = cols[nc + c] / jac;
        }
        Ok(x)
    };
    let mut xt = m.initial_x().from_normals(&noise.x0_normals)[0];
    let (mut b0, mut b1) = (vec![0.0; db], vec![0.0; db]);
    let (mut wn, mut yn) = ([0.0], [0.0]);
    let mut wc = 0.0;
    let mut yc = obs.y.value(0)[0];
    let mut iw = 0.0;
    let (mut ia, mut ie) = (0, 0);
    let atoms = &noise.p_jumps;
    let mut g0 = [0.0; MAX_DIM + 1];
    let mut g1 = [0.0; MAX_DIM + 1];
    for k in 1..times.len() {
        let t1 = times[k];
        let mut c = times[k - 1];
        loop {
            let jump = ia < atoms.len() && atoms[ia].time <= t1;
            let tn = if jump { atoms[ia].time } else { t1 };
            if tn > c {
                cur.at(k, tn, &mut wn, &mut yn);
                noise.b.value_at(tn, &mut b1);
                let dt = tn - c;
                let x = field(c, wc, xt, yc, &mut g0)?;
                iw += weight_increment(m, c, &[wc], &[x], &[yc], &[wn[0] - wc], dt)?;
                let k1 = g0[0] * dt + (0..db).map(|j| g0[1 + j] * (b1[j] - b0[j])).sum::<f64>();
                field(tn, wn[0], xt + k1, yn[0], &mut g1)?;
                let k2 = g1[0] * dt + (0..db).map(|j| g1[1 + j] * (b1[j] - b0[j])).sum::<f64>();
                xt += 0.5 * (k1 + k2);
                wc = wn[0];
                yc = yn[0];
                std::mem::swap(&mut b0, &mut b1);
                c = tn;
            }
            if !jump {
                break;
            }
            let (x, _) = phi(m, y_ref, wc, xt);
            let mut f1 = [0.0];
            m.f1(c, &[x], &[yc], atoms[ia].mark, &mut f1);
            xt = psi(m, y_ref, wc, x + f1[0]);
            ia += 1;
        }
        while ie < obs.jumps.len() && obs.jumps[ie].time <= t1 {
            let a = obs.jumps[ie];
            ie += 1;
            let (x, _) = phi(m, y_ref, wc, xt);
            let lam: f64 = m.lambda(t1, &[x], a.mark);
            if !(lam > 0.0) {
                return Err(Error::invalid(format!("lambda = {lam} <= 0 at t = {t1}")));
            }
            iw += lam.ln();
        }
        wc = obs.w_tilde.value(k)[0];
        yc = obs.y.value(k)[0];
        if !xt.is_finite() || !iw.is_finite() {
            return Err(Error::BlowUp { step: k });
        }
    }
    Ok((phi(m, y_ref, wc, xt).0, yc, iw))
}

/// Scalar filter through the flow decomposition `X = φ(W̃, X̃)`, where
/// `φ(w, ·)` is the flow of the common-noise field run for "time" `w` and
/// `X̃` solves the transformed equation without common noise. Same
/// auxiliary noise and weighting rule as [`reference_particle_filter`].
pub fn scalar_flow_filter<M: ModelSpec>(m: &M, f: &TestFunction, obs: &ObservationRecord, cfg: &FilterConfig) -> Result<McEstimate> {
    check_scalar_flow_model(m)?;
    check_record(m, obs)?;
    if cfg.particles == 0 {
        return Err(Error::invalid("particle count must be positive"));
    }
    let results: Vec<Result<(f64, f64)>> = (0..cfg.particles)
        .into_par_iter()
        .map(|i| {
            let noise = NoiseBundle::auxiliary(m, cfg.steps, cfg.seed_base.wrapping_add(i as u64), cfg.epsilon)?;
            let (x, y, iw) = flow_particle(m, obs, &noise)?;
            Ok((f.eval(&[x], &[y]), iw))
        })
        .collect();
    ratio_from(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate_pair, CatalogModel};

    fn lg() -> LinearGaussian {
        LinearGaussian::default()
    }

    #[test]
    fn kalman_without_information_is_the_prior() {
        let model = LinearGaussian { c: 0.0, sw: 0.0, ..lg() };
        let w = CadlagPath::scalar(vec![0.0, 0.3, 1.0], vec![0.0, 0.4, -0.2]).unwrap();
        let kb = kalman_bucy(&model, &w, None, 200).unwrap();
        let (a, t) = (model.a, 1.0);
        let mean = model.m0 * (a * t).exp();
        let var = model.p0 * (2.0 * a * t).exp() + model.sb * model.sb * ((2.0 * a * t).exp() - 1.0) / (2.0 * a);
        assert!((kb.mean - mean).abs() < 1e-12);
        assert!((kb.variance - var).abs() < 1e-10);
    }

    #[test]
    fn kalman_riccati_matches_closed_form() {
        // scalar Riccati P' = 2aP + q − r P² solved in closed form
        let model = LinearGaussian { sw: 0.0, ..lg() };
        let w = CadlagPath::scalar(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let kb = kalman_bucy(&model, &w, None, 400).unwrap();
        let (a, q, r) = (model.a, model.sb * model.sb, model.c * model.c / (model.s2 * model.s2));
        let disc = (a * a + q * r).sqrt();
        let (p1, p2) = ((a + disc) / r, (a - disc) / r);
        let k = (model.p0 - p1) / (model.p0 - p2);
        let e = (-2.0 * disc * 1.0f64).exp();
        let p = (p1 - k * p2 * e) / (1.0 - k * e);
        assert!((kb.variance - p).abs() < 1e-10, "{} vs {}", kb.variance, p);
    }

    #[test]
    fn kalman_mean_is_linear_in_the_observation() {
        let model = lg();
        let base = CadlagPath::scalar(vec![0.0, 0.25, 0.5, 0.75, 1.0], vec![0.0, 0.3, -0.1, 0.2, 0.5]).unwrap();
        let doubled = base.map_values(|v| 2.0 * v);
        let zero_prior = LinearGaussian { m0: 0.0, ..model };
        let a = kalman_bucy(&zero_prior, &base, None, 100).unwrap();
        let b = kalman_bucy(&zero_prior, &doubled, None, 100).unwrap();
        assert!((b.mean - 2.0 * a.mean).abs() < 1e-13);
        assert_eq!(a.variance, b.variance);
    }

    fn record(model: &CatalogModel, seed: u64, steps: usize) -> ObservationRecord {
        let noise = NoiseBundle::sample(model, steps, seed, 0.05).unwrap();
        let sim = simulate_pair(model, &noise, Measure::Original).unwrap();
        ObservationRecord::from_simulation(model, &sim, steps).unwrap()
    }

    #[test]
    fn reference_filter_is_one_for_constant_function() {
        let model = CatalogModel::from_id("scalar_jump_diffusion").unwrap();
        let obs = record(&model, 3, 32);
        let cfg = FilterConfig::new(50, 7, 32);
        let est = reference_particle_filter(&model, &TestFunction::constant(1.0), &obs, &cfg).unwrap();
        assert_eq!(est.value, 1.0);
    }

    #[test]
    fn flow_filter_without_common_noise_equals_reference_filter() {
        let mut model = CatalogModel::from_id("scalar_jump_diffusion").unwrap();
        model.set_param("s1", 0.0).unwrap();
        let obs = record(&model, 11, 64);
        let cfg = FilterConfig::new(200, 100, 64);
        let f = TestFunction::identity();
        let a = reference_particle_filter(&model, &f, &obs, &cfg).unwrap();
        let b = scalar_flow_filter(&model, &f, &obs, &cfg).unwrap();
        assert!((a.value - b.value).abs() < 1e-12, "{} vs {}", a.value, b.value);
    }

    #[test]
    fn geometric_flow_is_exponential() {
        let model = CatalogModel::from_id("scalar_jump_diffusion").unwrap();
        let CatalogModel::ScalarJumpDiffusion(p) = &model else { unreachable!() };
        for &(w, x) in &[(0.3, 1.2), (-1.1, -0.4), (1.7, 2.0)] {
            let (v, jac) = phi(&model, 0.0, w, x);
            assert!((v - x * (p.s1 * w).exp()).abs() < 1e-10);
            assert!((jac - (p.s1 * w).exp()).abs() < 1e-10);
            assert!((psi(&model, 0.0, w, v) - x).abs() < 1e-10);
        }
    }

    #[test]
    fn flow_filter_rejects_unsuitable_models() {
        let multi = CatalogModel::from_id("correlated_jump_multidim").unwrap();
        let obs = record(&CatalogModel::from_id("scalar_jump_diffusion").unwrap(), 1, 16);
        let cfg = FilterConfig::new(4, 0, 16);
        assert!(scalar_flow_filter(&multi, &TestFunction::identity(), &obs, &cfg).is_err());
        let mut g3 = CatalogModel::from_id("scalar_jump_diffusion").unwrap();
        g3.set_param("g3", 0.5).unwrap();
        assert!(scalar_flow_filter(&g3, &TestFunction::identity(), &obs, &cfg).is_err());
    }
}

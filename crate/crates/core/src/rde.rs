//! Level-2 rough differential equations `dy = V(t, y) dX`: a Davie step
//! solver for continuous drivers, forward and inverse flows, and canonical
//! (Marcus) equations for cadlag drivers via jump fill-in.
//!
//! Vector fields use the row-major layout `V[i*d + j] = V_j^i`, where `i`
//! indexes the state and `j` the driver. Jacobians use
//! `J[(i*d + j)*e + k] = ∂_k V_j^i`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cadlag_path::{d_p, format_f64, CadlagPath};
use crate::error::{Error, Result};
use crate::fillin::{beta_p, fill_nodes, time_extension, AdmissiblePair, FillNode, Marker};
use crate::lift::RoughPath;
use crate::real::{Dual, Real};
use crate::tensor_group::GroupElement;

/// Minimum number of RK4 substeps across a jump slot.
pub const MIN_SLOT_SUBSTEPS: usize = 64;

/// A family of `d` vector fields on `ℝ^e`.
pub trait VectorField: Sync {
    fn state_dim(&self) -> usize;
    fn driver_dim(&self) -> usize;

    /// `out[i*d + j] = V_j^i(t, y)`.
    fn eval(&self, t: f64, y: &[f64], out: &mut [f64]);

    /// `out[(i*d + j)*e + k] = ∂_k V_j^i(t, y)`, by central differences
    /// unless overridden.
    fn jacobian(&self, t: f64, y: &[f64], out: &mut [f64]) {
        let (e, d) = (self.state_dim(), self.driver_dim());
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; e * d];
        let mut fm = vec![0.0; e * d];
        for k in 0..e {
            let h = 1e-6 * y[k].abs().max(1.0);
            yp[k] = y[k] + h;
            self.eval(t, &yp, &mut fp);
            yp[k] = y[k] - h;
            self.eval(t, &yp, &mut fm);
            yp[k] = y[k];
            for ij in 0..e * d {
                out[ij * e + k] = (fp[ij] - fm[ij]) / (2.0 * h);
            }
        }
    }

    /// `out = Σ_j a_j V_j(t, y)`.
    fn eval_combination(&self, t: f64, y: &[f64], a: &[f64], out: &mut [f64]) {
        let (e, d) = (self.state_dim(), self.driver_dim());
        let mut v = vec![0.0; e * d];
        self.eval(t, y, &mut v);
        for i in 0..e {
            out[i] = (0..d).map(|j| v[i * d + j] * a[j]).sum();
        }
    }

    /// `out = Σ_{i,j} a_{ij} (DV_j · V_i)(t, y)` for a `d×d` coefficient
    /// matrix `a`.
    fn second_order(&self, t: f64, y: &[f64], a: &[f64], out: &mut [f64]) {
        let (e, d) = (self.state_dim(), self.driver_dim());
        let mut v = vec![0.0; e * d];
        let mut jac = vec![0.0; e * d * e];
        self.eval(t, y, &mut v);
        self.jacobian(t, y, &mut jac);
        for k in 0..e {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    let aij = a[i * d + j];
                    if aij == 0.0 {
                        continue;
                    }
                    let row = &jac[(k * d + j) * e..(k * d + j + 1) * e];
                    s += aij * (0..e).map(|m| row[m] * v[m * d + i]).sum::<f64>();
                }
            }
            out[k] = s;
        }
    }

    /// Declared smoothness `γ` (the field is `Lip^γ`).
    fn lipschitz_gamma(&self) -> f64 {
        f64::INFINITY
    }
}

/// A vector field written once over [`Real`] scalars; wrap it in
/// [`Smooth`] to get exact derivatives through dual numbers.
pub trait SmoothField: Sync {
    fn state_dim(&self) -> usize;
    fn driver_dim(&self) -> usize;
    fn eval_generic<S: Real>(&self, t: f64, y: &[S], out: &mut [S]);
    fn lipschitz_gamma(&self) -> f64 {
        f64::INFINITY
    }
}

/// [`VectorField`] adapter computing Jacobians and second-order terms with
/// forward-mode dual numbers.
#[derive(Clone, Debug)]
pub struct Smooth<F>(pub F);

impl<F: SmoothField> VectorField for Smooth<F> {
    fn state_dim(&self) -> usize {
        self.0.state_dim()
    }
    fn driver_dim(&self) -> usize {
        self.0.driver_dim()
    }
    fn eval(&self, t: f64, y: &[f64], out: &mut [f64]) {
        self.0.eval_generic(t, y, out);
    }
    fn jacobian(&self, t: f64, y: &[f64], out: &mut [f64]) {
        let (e, d) = (self.state_dim(), self.driver_dim());
        let mut yd: Vec<Dual<f64>> = y.iter().map(|&v| Dual::constant(v)).collect();
        let mut o = vec![Dual::constant(0.0); e * d];
        for k in 0..e {
            yd[k].eps = 1.0;
            self.0.eval_generic(t, &yd, &mut o);
            yd[k].eps = 0.0;
            for ij in 0..e * d {
                out[ij * e + k] = o[ij].eps;
            }
        }
    }
    fn second_order(&self, t: f64, y: &[f64], a: &[f64], out: &mut [f64]) {
        let (e, d) = (self.state_dim(), self.driver_dim());
        let mut v = vec![0.0; e * d];
        self.0.eval_generic(t, y, &mut v);
        let mut yd: Vec<Dual<f64>> = y.iter().map(|&v| Dual::constant(v)).collect();
        let mut o = vec![Dual::constant(0.0); e * d];
        out.iter_mut().for_each(|x| *x = 0.0);
        for j in 0..d {
            // direction u_j = Σ_i a_ij V_i
            let mut any = false;
            for m in 0..e {
                let u: f64 = (0..d).map(|i| a[i * d + j] * v[m * d + i]).sum();
                yd[m].eps = u;
                any |= u != 0.0;
            }
            if !any {
                continue;
            }
            self.0.eval_generic(t, &yd, &mut o);
            for k in 0..e {
                out[k] += o[k * d + j].eps;
            }
        }
    }
    fn lipschitz_gamma(&self) -> f64 {
        self.0.lipschitz_gamma()
    }
}

/// Linear fields `V_j(y) = A_j y`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearField {
    pub e: usize,
    /// `d` row-major `e×e` matrices.
    pub mats: Vec<Vec<f64>>,
}

impl SmoothField for LinearField {
    fn state_dim(&self) -> usize {
        self.e
    }
    fn driver_dim(&self) -> usize {
        self.mats.len()
    }
    fn eval_generic<S: Real>(&self, _t: f64, y: &[S], out: &mut [S]) {
        let (e, d) = (self.e, self.mats.len());
        for i in 0..e {
            for j in 0..d {
                let mut s = S::zero();
                for k in 0..e {
                    s += y[k] * self.mats[j][i * e + k];
                }
                out[i * d + j] = s;
            }
        }
    }
}

/// Constant fields `V_j(y) = c_j` (translation).
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantField {
    pub e: usize,
    pub d: usize,
    /// Row-major `e×d`.
    pub values: Vec<f64>,
}

impl SmoothField for ConstantField {
    fn state_dim(&self) -> usize {
        self.e
    }
    fn driver_dim(&self) -> usize {
        self.d
    }
    fn eval_generic<S: Real>(&self, _t: f64, _y: &[S], out: &mut [S]) {
        for (o, &v) in out.iter_mut().zip(&self.values) {
            *o = S::cst(v);
        }
    }
}

/// Solver settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Target number of Davie steps over the whole horizon.
    pub steps: usize,
    /// RK4 substeps per slot piece (raised to at least 64).
    pub slot_substeps: usize,
}

impl SolverOptions {
    pub fn new(steps: usize) -> Self {
        SolverOptions { steps, slot_substeps: MIN_SLOT_SUBSTEPS }
    }
}

/// Step statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemeMeta {
    pub davie_steps: usize,
    pub slot_substeps: usize,
}

/// Solution sampled at the driver's sample times.
#[derive(Clone, Debug, PartialEq)]
pub struct RdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Left limits (equal to `states` where the driver does not jump).
    pub pre_states: Vec<Vec<f64>>,
    pub meta: SchemeMeta,
}

impl RdeSolution {
    pub fn terminal(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    pub fn to_cadlag(&self) -> Result<CadlagPath> {
        let e = self.states[0].len();
        let v = self.states.iter().flatten().copied().collect();
        let p = self.pre_states.iter().flatten().copied().collect();
        CadlagPath::with_left_limits(self.times.clone(), v, p, e)
    }

    /// CSV with header `t,y1..ye` and `\n` line endings.
    pub fn write_csv_to<W: Write>(&self, w: W) -> Result<()> {
        let e = self.states[0].len();
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=e).map(|i| format!("y{i}")));
        wr.write_record(&header)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut row = vec![format_f64(*t)];
            row.extend(s.iter().map(|v| format_f64(*v)));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_csv_to(std::fs::File::create(path)?)
    }
}

/// Scratch buffers for one solve.
pub struct Workspace {
    tmp: Vec<f64>,
    k: [Vec<f64>; 4],
    y1: Vec<f64>,
}

impl Workspace {
    pub fn new(e: usize) -> Self {
        Workspace { tmp: vec![0.0; e], k: [vec![0.0; e], vec![0.0; e], vec![0.0; e], vec![0.0; e]], y1: vec![0.0; e] }
    }
}

fn check_finite(y: &[f64], step: usize) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::BlowUp { step })
    }
}

/// One Davie step `y ← y + V(y) X¹ + Σ_{ij} X²_{ij} DV_j V_i (y)`.
pub fn davie_step<V: VectorField + ?Sized>(v: &V, t: f64, y: &mut [f64], l1: &[f64], l2: &[f64], ws: &mut Workspace) {
    v.eval_combination(t, y, l1, &mut ws.tmp);
    v.second_order(t, y, l2, &mut ws.k[0]);
    for i in 0..y.len() {
        y[i] += ws.tmp[i] + ws.k[0][i];
    }
}

fn log_field<V: VectorField + ?Sized>(v: &V, t: f64, y: &[f64], l1: &[f64], l2: Option<&[f64]>, out: &mut [f64], tmp: &mut [f64]) {
    v.eval_combination(t, y, l1, out);
    if let Some(a) = l2 {
        v.second_order(t, y, a, tmp);
        for (o, s) in out.iter_mut().zip(tmp.iter()) {
            *o += s;
        }
    }
}

/// Time-1 flow of the log-ODE `ẏ = Σ_j l1_j V_j + Σ_{ij} l2_{ij} DV_j V_i`
/// (with `(l1, l2) = log g`) by RK4 with `substeps` steps; the field is
/// frozen at time `t`.
pub fn log_ode_rk4<V: VectorField + ?Sized>(v: &V, t: f64, y: &mut [f64], g: &GroupElement, substeps: usize, ws: &mut Workspace) {
    let l = g.log();
    let area = if l.level2.iter().any(|&a| a != 0.0) { Some(l.level2.as_slice()) } else { None };
    let h = 1.0 / substeps as f64;
    let e = y.len();
    let Workspace { tmp, k, y1 } = ws;
    for _ in 0..substeps {
        log_field(v, t, y, &l.level1, area, &mut k[0], tmp);
        for i in 0..e {
            y1[i] = y[i] + 0.5 * h * k[0][i];
        }
        log_field(v, t, y1, &l.level1, area, &mut k[1], tmp);
        for i in 0..e {
            y1[i] = y[i] + 0.5 * h * k[1][i];
        }
        log_field(v, t, y1, &l.level1, area, &mut k[2], tmp);
        for i in 0..e {
            y1[i] = y[i] + h * k[2][i];
        }
        log_field(v, t, y1, &l.level1, area, &mut k[3], tmp);
        for i in 0..e {
            y[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
    }
}

/// Davie steps along the geodesic `g` split into `n` equal pieces, with
/// time running from `t0` to `t1`.
fn geodesic_steps<V: VectorField + ?Sized>(
    v: &V,
    t0: f64,
    t1: f64,
    y: &mut [f64],
    g: &GroupElement,
    n: usize,
    ws: &mut Workspace,
    counter: &mut usize,
) -> Result<()> {
    let piece = if n == 1 { g.clone() } else { g.log().scale(1.0 / n as f64).exp() };
    for s in 0..n {
        let t = t0 + (t1 - t0) * s as f64 / n as f64;
        davie_step(v, t, y, &piece.level1, &piece.level2, ws);
        *counter += 1;
        check_finite(y, *counter)?;
    }
    Ok(())
}

fn check_dims<V: VectorField + ?Sized>(v: &V, driver_dim: usize, y0: &[f64]) -> Result<()> {
    if v.driver_dim() != driver_dim {
        return Err(Error::DimensionMismatch { expected: v.driver_dim(), got: driver_dim });
    }
    if v.state_dim() != y0.len() {
        return Err(Error::DimensionMismatch { expected: v.state_dim(), got: y0.len() });
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial condition must be finite"));
    }
    Ok(())
}

pub(crate) fn substeps_for(steps: usize, dur: f64, total: f64) -> usize {
    ((steps as f64 * dur / total).round() as usize).max(1)
}

/// Solve `dy = V(t, y) dX` on a continuous rough path with about `steps`
/// Davie steps spread over the horizon (at least one per driver segment).
pub fn solve_continuous_rde<V: VectorField + ?Sized>(v: &V, x: &RoughPath, y0: &[f64], steps: usize) -> Result<RdeSolution> {
    if let Some(k) = x.jump_indices().first() {
        return Err(Error::UnexpectedJump(*k));
    }
    check_dims(v, x.dim(), y0)?;
    if steps == 0 {
        return Err(Error::invalid("steps must be positive"));
    }
    let mut ws = Workspace::new(y0.len());
    let mut y = y0.to_vec();
    let mut states = vec![y.clone()];
    let mut counter = 0;
    let horizon = x.horizon();
    for k in 1..x.len() {
        let (t0, t1) = (x.times()[k - 1], x.times()[k]);
        let g = x.segment_increment(k);
        let n = substeps_for(steps, t1 - t0, horizon);
        geodesic_steps(v, t0, t1, &mut y, &g, n, &mut ws, &mut counter)?;
        states.push(y.clone());
    }
    Ok(RdeSolution {
        times: x.times().to_vec(),
        pre_states: states.clone(),
        states,
        meta: SchemeMeta { davie_steps: counter, slot_substeps: 0 },
    })
}

/// Solve along filled nodes: Davie steps on continuous segments, RK4
/// log-ODE flows across slot pieces. `orig_time[i]` is the original-time
/// label of node `i` (slot interiors carry the jump time).
fn solve_nodes<V: VectorField + ?Sized>(
    v: &V,
    nodes: &[FillNode],
    orig_time: &[f64],
    y0: &[f64],
    opts: &SolverOptions,
    mut visit: impl FnMut(usize, &[f64]),
) -> Result<SchemeMeta> {
    let extended: f64 = nodes.iter().map(|n| n.dur).sum();
    let mut ws = Workspace::new(y0.len());
    let mut y = y0.to_vec();
    let mut meta = SchemeMeta::default();
    let mut counter = 0;
    let slot_n = opts.slot_substeps.max(MIN_SLOT_SUBSTEPS);
    visit(0, &y);
    for i in 1..nodes.len() {
        let g = nodes[i - 1].point.increment_to(&nodes[i].point);
        if nodes[i].in_slot {
            if !g.is_identity() {
                log_ode_rk4(v, orig_time[i], &mut y, &g, slot_n, &mut ws);
                meta.slot_substeps += slot_n;
                counter += 1;
                check_finite(&y, counter)?;
            }
        } else {
            let n = substeps_for(opts.steps, nodes[i].dur, extended);
            geodesic_steps(v, orig_time[i - 1], orig_time[i], &mut y, &g, n, &mut ws, &mut counter)?;
            meta.davie_steps += n;
        }
        visit(i, &y);
    }
    Ok(meta)
}

/// Original-time label per node: sample times at markers, interpolated
/// linearly in extended time elsewhere, frozen inside slots.
pub(crate) fn node_times(nodes: &[FillNode], pair: &AdmissiblePair) -> Vec<f64> {
    let times = pair.rough.times();
    let mut out = vec![0.0; nodes.len()];
    let mut last_marked = 0usize;
    for (i, nd) in nodes.iter().enumerate() {
        match nd.marker {
            Some(Marker::Both(k)) | Some(Marker::Pre(k)) | Some(Marker::Post(k)) => {
                out[i] = times[k];
                // fill unmarked continuous nodes in between
                let (a, b) = (last_marked, i);
                for j in a + 1..b {
                    let w = (nodes[j].t_ext - nodes[a].t_ext) / (nodes[b].t_ext - nodes[a].t_ext);
                    out[j] = if nodes[j].in_slot { times[k] } else { out[a] + w * (out[b] - out[a]) };
                }
                last_marked = i;
            }
            None => {}
        }
    }
    out
}

/// Canonical (Marcus-type) solution `y = ȳ ∘ τ_x`, where `ȳ` solves the
/// continuous equation driven by the jump-filled representative. States
/// are reported at the driver's sample times with left limits at jumps.
pub fn solve_canonical_rde<V: VectorField + ?Sized>(v: &V, pair: &AdmissiblePair, y0: &[f64], opts: &SolverOptions) -> Result<RdeSolution> {
    check_dims(v, pair.rough.dim(), y0)?;
    if opts.steps == 0 {
        return Err(Error::invalid("steps must be positive"));
    }
    let ext = time_extension(pair)?;
    let nodes = fill_nodes(pair, &ext)?;
    let ot = node_times(&nodes, pair);
    let n0 = pair.rough.len();
    let mut states = vec![Vec::new(); n0];
    let mut pre = vec![Vec::new(); n0];
    let meta = solve_nodes(v, &nodes, &ot, y0, opts, |i, y| match nodes[i].marker {
        Some(Marker::Both(k)) => {
            states[k] = y.to_vec();
            pre[k] = y.to_vec();
        }
        Some(Marker::Pre(k)) => pre[k] = y.to_vec(),
        Some(Marker::Post(k)) => states[k] = y.to_vec(),
        None => {}
    })?;
    Ok(RdeSolution { times: pair.rough.times().to_vec(), states, pre_states: pre, meta })
}

/// Forward flow values and the inverse-flow round-trip residual.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowCheck {
    /// `φ(T, x)` per grid point.
    pub phi: Vec<Vec<f64>>,
    /// `ψ(T, φ(T, x))` per grid point.
    pub psi_of_phi: Vec<Vec<f64>>,
    /// `max |ψ(T, φ(T, x)) − x|`.
    pub max_residual: f64,
}

/// Inverse flow `ψ(T, ·)`: solve backwards along the time-reversed driver
/// `s ↦ X_T⁻¹ X_{T−s}` with time running from `T` to `0`.
pub fn inverse_flow<V: VectorField + ?Sized>(v: &V, x: &RoughPath, z: &[f64], steps: usize) -> Result<Vec<f64>> {
    let r = x.reversed()?;
    check_dims(v, r.dim(), z)?;
    let horizon = x.horizon();
    let mut ws = Workspace::new(z.len());
    let mut y = z.to_vec();
    let mut counter = 0;
    for k in 1..r.len() {
        let (s0, s1) = (r.times()[k - 1], r.times()[k]);
        let n = substeps_for(steps, s1 - s0, horizon);
        geodesic_steps(v, horizon - s0, horizon - s1, &mut y, &r.segment_increment(k), n, &mut ws, &mut counter)?;
    }
    Ok(y)
}

/// Forward flow at each grid point and the residual of `ψ ∘ φ = id`.
pub fn flow_and_inverse<V: VectorField + ?Sized>(v: &V, x: &RoughPath, x_grid: &[Vec<f64>], steps: usize) -> Result<FlowCheck> {
    let mut phi = Vec::with_capacity(x_grid.len());
    let mut back = Vec::with_capacity(x_grid.len());
    let mut res: f64 = 0.0;
    for x0 in x_grid {
        let f = solve_continuous_rde(v, x, x0, steps)?.terminal().to_vec();
        let b = inverse_flow(v, x, &f, steps)?;
        res = res.max(b.iter().zip(x0).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max));
        phi.push(f);
        back.push(b);
    }
    Ok(FlowCheck { phi, psi_of_phi: back, max_residual: res })
}

/// Empirical Lipschitz probe for the canonical solution map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityProbe {
    /// p-variation distance of the two solution paths.
    pub sol_dist: f64,
    /// β_p distance of the drivers (smallest δ).
    pub driver_dist: f64,
    /// `sol_dist / driver_dist`, NaN when the driver distance vanishes.
    pub ratio: f64,
}

pub fn stability_probe<V: VectorField + ?Sized>(
    v: &V,
    x: &AdmissiblePair,
    y: &AdmissiblePair,
    y0: &[f64],
    opts: &SolverOptions,
    p: f64,
    deltas: &[f64],
) -> Result<StabilityProbe> {
    let sx = solve_canonical_rde(v, x, y0, opts)?.to_cadlag()?;
    let sy = solve_canonical_rde(v, y, y0, opts)?.to_cadlag()?;
    let sol_dist = d_p(&sx, &sy, p)?;
    let driver_dist = beta_p(x, y, p, deltas)?.estimate;
    let ratio = if driver_dist == 0.0 { f64::NAN } else { sol_dist / driver_dist };
    Ok(StabilityProbe { sol_dist, driver_dist, ratio })
}

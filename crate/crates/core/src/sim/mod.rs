//! Signal–observation jump-diffusions: model descriptions, Lévy measures,
//! pathwise simulation by Heun steps with exact jump insertion, the
//! Girsanov exponent and assumption checks.
//!
//! The signal `X ∈ ℝ^{dx}` and observation `Y ∈ ℝ^{dy}` follow
//!
//! ```text
//! dX = b₁ dt + σ₀∘dB + σ₁∘dW + ∫f₁ Ñ_p(dt,du) + ∫f₃ Ñ_λ(dt,du)
//! dY = b₂ dt + σ₂∘dW + ∫f₂ Ñ_λ(dt,du)
//! ```
//!
//! where `N_λ` has compensator `λ(t, X_{t−}, u) ν₂(du) dt`. In the
//! infinite-activity regime `λ ≡ 1` and the jump terms are Marcus
//! integrals `n₁(X)◇dξ¹`, `n₃(X,Y)◇dξ²`, `n₂(Y)◇dξ²` against compensated
//! ε-truncated shot noise, with `f_i(·, u) = u·n_i(·)`.

pub mod catalog;
pub mod noise;
pub(crate) mod simulate;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

pub use catalog::CatalogModel;
pub use noise::{shot_noise, shot_noise_path, uniform_grid, BrownianPath, JumpAtom, NoiseBundle};
pub use simulate::{girsanov_exponent, recover_w_tilde, simulate_pair, ObservationRecord, SimOutput};

/// Largest supported dimension of `X`, `Y` or `B`.
pub const MAX_DIM: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub dx: usize,
    pub dy: usize,
    pub db: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// One-dimensional signal, observation and noise, commuting common
    /// noise, finitely many jumps.
    Scalar,
    FiniteJumps,
    InfiniteJumps,
}

/// Probability measure under which a realization is simulated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// The model measure `P`.
    Original,
    /// The reference measure `P̃`: `W̃` is a Brownian motion and `N_λ` has
    /// unit intensity.
    Reference,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevyAtom {
    pub mark: f64,
    pub mass: f64,
}

/// Lévy measure on marks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum LevyMeasure {
    #[default]
    Zero,
    /// Finite measure `Σ mass·δ_mark`.
    Atoms(Vec<LevyAtom>),
    /// `scale·|x|^{−1−index}` on `0 < |x| < 1` (on `0 < x < 1` when not
    /// symmetric), `0 < index < 2`.
    Stable { scale: f64, index: f64, symmetric: bool },
}

impl LevyMeasure {
    pub fn atoms(&self) -> &[LevyAtom] {
        match self {
            LevyMeasure::Atoms(a) => a,
            _ => &[],
        }
    }

    pub fn is_finite(&self) -> bool {
        !matches!(self, LevyMeasure::Stable { .. })
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            LevyMeasure::Zero => 0.0,
            LevyMeasure::Atoms(a) => a.iter().map(|a| a.mass).sum(),
            LevyMeasure::Stable { .. } => f64::INFINITY,
        }
    }

    /// `∫ |x|^p ν(dx)`.
    pub fn p_moment(&self, p: f64) -> f64 {
        match *self {
            LevyMeasure::Zero => 0.0,
            LevyMeasure::Atoms(ref a) => a.iter().map(|a| a.mass * a.mark.abs().powf(p)).sum(),
            LevyMeasure::Stable { scale, index, symmetric } => {
                if p <= index {
                    f64::INFINITY
                } else {
                    let sides = if symmetric { 2.0 } else { 1.0 };
                    sides * scale / (p - index)
                }
            }
        }
    }

    /// `∫_{ε<|x|<1} x ν(dx)`, the drift removed from ε-truncated shot noise.
    pub fn truncated_mean(&self, epsilon: f64) -> f64 {
        match *self {
            LevyMeasure::Stable { symmetric: true, .. } | LevyMeasure::Zero => 0.0,
            LevyMeasure::Stable { scale, index, symmetric: false } => {
                if (index - 1.0).abs() < 1e-12 {
                    -scale * epsilon.ln()
                } else {
                    scale * (1.0 - epsilon.powf(1.0 - index)) / (1.0 - index)
                }
            }
            LevyMeasure::Atoms(ref a) => a.iter().map(|a| a.mass * a.mark).sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LevyMeasure::Zero => Ok(()),
            LevyMeasure::Atoms(a) => {
                if a.iter().any(|a| !(a.mass >= 0.0 && a.mass.is_finite() && a.mark.is_finite())) {
                    return Err(Error::ModelValidation("atom masses must be finite and non-negative".into()));
                }
                Ok(())
            }
            LevyMeasure::Stable { scale, index, .. } => {
                if !(*scale > 0.0 && *index > 0.0 && *index < 2.0) {
                    return Err(Error::ModelValidation("stable-like measure needs scale > 0 and index in (0,2)".into()));
                }
                Ok(())
            }
        }
    }
}

/// Law of `X₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitialLaw {
    Dirac(Vec<f64>),
    /// Independent Gaussian coordinates.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

impl InitialLaw {
    /// Value from standard normals `z`.
    pub fn from_normals(&self, z: &[f64]) -> Vec<f64> {
        match self {
            InitialLaw::Dirac(v) => v.clone(),
            InitialLaw::Gaussian { mean, std } => mean.iter().zip(std).zip(z).map(|((m, s), z)| m + s * z).collect(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            InitialLaw::Dirac(v) => v.clone(),
            InitialLaw::Gaussian { mean, .. } => mean.clone(),
        }
    }
}

/// Coefficients of the signal–observation system. Matrices are row-major:
/// `σ₀` is `dx × db`, `σ₁` is `dx × dy`, `σ₂` is `dy × dy`. Coefficient
/// evaluators are generic over [`Real`] so that derivatives come from dual
/// numbers.
pub trait ModelSpec: Sync {
    fn id(&self) -> String;
    fn dims(&self) -> Dims;
    fn regime(&self) -> Regime;
    fn horizon(&self) -> f64;
    fn initial_x(&self) -> InitialLaw;
    fn initial_y(&self) -> Vec<f64>;
    fn nu1(&self) -> &LevyMeasure;
    fn nu2(&self) -> &LevyMeasure;

    fn b1<S: Real>(&self, t: f64, x: &[S], y: &[S], out: &mut [S]);
    fn b2<S: Real>(&self, t: f64, x: &[S], y: &[S], out: &mut [S]);
    fn sigma0<S: Real>(&self, t: f64, x: &[S], y: &[S], out: &mut [S]);
    /// May depend on the running value `w` of `W̃`.
    fn sigma1<S: Real>(&self, t: f64, w: &[S], x: &[S], y: &[S], out: &mut [S]);
    fn sigma2<S: Real>(&self, t: f64, w: &[S], y: &[S], out: &mut [S]);
    fn f1<S: Real>(&self, t: f64, x: &[S], y: &[S], u: f64, out: &mut [S]);
    fn f2<S: Real>(&self, t: f64, y: &[S], u: f64, out: &mut [S]);
    fn f3<S: Real>(&self, t: f64, x: &[S], y: &[S], u: f64, out: &mut [S]);
    fn lambda<S: Real>(&self, t: f64, x: &[S], u: f64) -> S;
    /// Upper bound of `λ`, used for thinning.
    fn lambda_max(&self) -> f64;

    /// Whether `σ₁` is declared to generate a commuting flow (always true
    /// for one-dimensional signals).
    fn common_noise_commutative(&self) -> bool {
        self.dims().dx == 1
    }

    /// Constant `K` of the linear-growth check `|coef| ≤ K(1 + |w| + |x| + |y|)`.
    fn growth_constant(&self) -> f64 {
        10.0
    }
}

/// Solve `a·z = b` in place (`b ← z`) by Gaussian elimination with partial
/// pivoting on the real parts. Returns `false` for a (numerically)
/// singular matrix.
pub(crate) fn solve_small<S: Real>(a: &mut [S], b: &mut [S], n: usize) -> bool {
    for c in 0..n {
        let mut piv = c;
        for r in c + 1..n {
            if a[r * n + c].re().abs() > a[piv * n + c].re().abs() {
                piv = r;
            }
        }
        if !(a[piv * n + c].re().abs() > 1e-300) {
            return false;
        }
        if piv != c {
            for k in 0..n {
                a.swap(c * n + k, piv * n + k);
            }
            b.swap(c, piv);
        }
        let inv = a[c * n + c].recip();
        for r in c + 1..n {
            let f = a[r * n + c] * inv;
            if f.re() == 0.0 {
                continue;
            }
            for k in c..n {
                let v = a[c * n + k];
                a[r * n + k] -= f * v;
            }
            let v = b[c];
            b[r] -= f * v;
        }
    }
    for c in (0..n).rev() {
        let mut s = b[c];
        for k in c + 1..n {
            s -= a[c * n + k] * b[k];
        }
        b[c] = s / a[c * n + c];
    }
    true
}

/// `h = σ₂⁻¹(b₂ + ∫ f₂ (1 − λ) dν₂)`; the integral is absent in the
/// infinite-activity regime. Returns `false` when `σ₂` is singular.
pub(crate) fn h_generic<M: ModelSpec + ?Sized, S: Real>(m: &M, t: f64, w: &[S], x: &[S], y: &[S], out: &mut [S]) -> bool {
    let dy = m.dims().dy;
    let mut sig = [S::zero(); MAX_DIM * MAX_DIM];
    m.b2(t, x, y, &mut out[..dy]);
    if m.regime() != Regime::InfiniteJumps {
        let mut f = [S::zero(); MAX_DIM];
        for a in m.nu2().atoms() {
            m.f2(t, y, a.mark, &mut f[..dy]);
            let c = (S::one() - m.lambda(t, x, a.mark)) * a.mass;
            for i in 0..dy {
                out[i] += f[i] * c;
            }
        }
    }
    m.sigma2(t, w, y, &mut sig[..dy * dy]);
    solve_small(&mut sig[..dy * dy], &mut out[..dy], dy)
}

/// Observation function `h(t, x, y)` at `W̃ = w`.
pub fn h_function<M: ModelSpec + ?Sized>(m: &M, t: f64, w: &[f64], x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; m.dims().dy];
    if !h_generic(m, t, w, x, y, &mut out) {
        return Err(Error::Singular(format!("sigma2 at t={t}")));
    }
    Ok(out)
}

/// Layout of the state `(w, x, y)` and of the driving columns
/// `(dt, dB, dW)` used by the Heun simulator and the filter.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Layout {
    pub dx: usize,
    pub dy: usize,
    pub db: usize,
}

impl Layout {
    pub fn of<M: ModelSpec + ?Sized>(m: &M) -> Self {
        let d = m.dims();
        Layout { dx: d.dx, dy: d.dy, db: d.db }
    }
    /// State length `dy + dx + dy`.
    pub fn e(&self) -> usize {
        2 * self.dy + self.dx
    }
    /// Column count `1 + db + dy`.
    pub fn cols(&self) -> usize {
        1 + self.db + self.dy
    }
    pub fn x0(&self) -> usize {
        self.dy
    }
    pub fn y0(&self) -> usize {
        self.dy + self.dx
    }
}

/// Columns of the state `(w, x, y)`: `out[r*cols + c]` with columns
/// `(dt, dB₁..dB_db, dW₁..dW_dy)`. Under [`Measure::Reference`] the last
/// block is `dW̃`; jump compensators enter the `dt` column.
pub(crate) fn state_columns<M: ModelSpec + ?Sized, S: Real>(m: &M, t: f64, s: &[S], measure: Measure, out: &mut [S], h: &mut [S]) -> bool {
    let l = Layout::of(m);
    let (dx, dy, db, nc) = (l.dx, l.dy, l.db, l.cols());
    let (w, rest) = s.split_at(dy);
    let (x, y) = rest.split_at(dx);
    out.iter_mut().for_each(|v| *v = S::zero());
    if !h_generic(m, t, w, x, y, &mut h[..dy]) {
        return false;
    }
    let mut buf = [S::zero(); MAX_DIM * MAX_DIM];
    let mut vx = [S::zero(); MAX_DIM];
    // w rows
    for i in 0..dy {
        out[i * nc + 1 + db + i] = S::one();
        if measure == Measure::Original {
            out[i * nc] = h[i];
        }
    }
    // x rows
    m.b1(t, x, y, &mut vx[..dx]);
    for i in 0..dx {
        out[(dy + i) * nc] = vx[i];
    }
    m.sigma0(t, x, y, &mut buf[..dx * db]);
    for i in 0..dx {
        for k in 0..db {
            out[(dy + i) * nc + 1 + k] = buf[i * db + k];
        }
    }
    m.sigma1(t, w, x, y, &mut buf[..dx * dy]);
    for i in 0..dx {
        for k in 0..dy {
            let v = buf[i * dy + k];
            out[(dy + i) * nc + 1 + db + k] = v;
            if measure == Measure::Reference {
                out[(dy + i) * nc] -= v * h[k];
            }
        }
    }
    // y rows
    if measure == Measure::Original {
        m.b2(t, x, y, &mut vx[..dy]);
        for i in 0..dy {
            out[(dy + dx + i) * nc] = vx[i];
        }
    }
    m.sigma2(t, w, y, &mut buf[..dy * dy]);
    for i in 0..dy {
        for k in 0..dy {
            out[(dy + dx + i) * nc + 1 + db + k] = buf[i * dy + k];
        }
    }
    // compensators of the finite measures
    if m.regime() != Regime::InfiniteJumps {
        for a in m.nu1().atoms() {
            m.f1(t, x, y, a.mark, &mut vx[..dx]);
            for i in 0..dx {
                out[(dy + i) * nc] -= vx[i] * a.mass;
            }
        }
        for a in m.nu2().atoms() {
            let lam = m.lambda(t, x, a.mark);
            m.f3(t, x, y, a.mark, &mut vx[..dx]);
            for i in 0..dx {
                out[(dy + i) * nc] -= vx[i] * lam * a.mass;
            }
            m.f2(t, y, a.mark, &mut vx[..dy]);
            let c = if measure == Measure::Original { lam * a.mass } else { S::cst(a.mass) };
            for i in 0..dy {
                out[(dy + dx + i) * nc] -= vx[i] * c;
            }
        }
    }
    true
}

/// Outcome of [`validate_model`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub probes: usize,
    pub max_growth_ratio: f64,
    pub min_sigma2_singular: f64,
    pub lambda_range: (f64, f64),
    /// `∫ (1 − λ)²/λ dν₂` maximized over probes (finite regimes).
    pub lambda_integrability: f64,
    /// `∫|x|^p ν dx` at `p = 2` for each measure.
    pub p_moments: (f64, f64),
}

/// Check the standing assumptions at `probes` random points drawn with
/// `seed`: linear growth, invertible `σ₂`, `λ` bounded away from 0 and
/// `λ_max`, finite `λ`-integrability, `p`-moments of the Lévy measures and
/// the regime-specific structure.
pub fn validate_model<M: ModelSpec + ?Sized>(m: &M, probes: usize, seed: u64) -> Result<ValidationReport> {
    let d = m.dims();
    let fail = |s: String| Err(Error::ModelValidation(s));
    if d.dx == 0 || d.dy == 0 || d.dx > MAX_DIM || d.dy > MAX_DIM || d.db > MAX_DIM {
        return fail(format!("dimensions must lie in 1..={MAX_DIM} (db may be 0)"));
    }
    if !(m.horizon() > 0.0 && m.horizon().is_finite()) {
        return fail("horizon must be positive".into());
    }
    if m.initial_y().len() != d.dy {
        return fail("initial observation has the wrong dimension".into());
    }
    match m.initial_x() {
        InitialLaw::Dirac(v) if v.len() != d.dx => return fail("initial signal has the wrong dimension".into()),
        InitialLaw::Gaussian { mean, std } if mean.len() != d.dx || std.len() != d.dx => {
            return fail("initial signal law has the wrong dimension".into())
        }
        _ => {}
    }
    m.nu1().validate()?;
    m.nu2().validate()?;
    let lmax = m.lambda_max();
    if !(lmax >= 1.0 && lmax.is_finite()) {
        return fail("lambda_max must be finite and at least 1".into());
    }
    match m.regime() {
        Regime::Scalar => {
            if d.dx != 1 || d.dy != 1 || d.db != 1 {
                return fail("scalar regime needs dx = dy = db = 1".into());
            }
            if !m.nu1().is_finite() || !m.nu2().is_finite() {
                return fail("scalar regime needs finite Lévy measures".into());
            }
        }
        Regime::FiniteJumps => {
            if !m.nu1().is_finite() || !m.nu2().is_finite() {
                return fail("finite-jump regime needs finite Lévy measures".into());
            }
        }
        Regime::InfiniteJumps => {
            for nu in [m.nu1(), m.nu2()] {
                if !matches!(nu, LevyMeasure::Stable { .. } | LevyMeasure::Zero) {
                    return fail("infinite-activity regime needs stable-like measures".into());
                }
            }
            if d.dy != 1 {
                return fail("infinite-activity regime supports a one-dimensional observation".into());
            }
        }
    }
    let pm = (m.nu1().p_moment(2.0), m.nu2().p_moment(2.0));
    if !pm.0.is_finite() || !pm.1.is_finite() {
        return fail("Lévy measures need a finite p-moment for p in [2,3)".into());
    }
    let k = m.growth_constant();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        2.0 * z
    };
    let mut max_ratio: f64 = 0.0;
    let mut min_sing = f64::INFINITY;
    let mut lrange = (f64::INFINITY, f64::NEG_INFINITY);
    let mut integ: f64 = 0.0;
    let marks: Vec<f64> = match m.regime() {
        Regime::InfiniteJumps => vec![1.0],
        _ => m.nu1().atoms().iter().chain(m.nu2().atoms()).map(|a| a.mark).collect(),
    };
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    for _ in 0..probes {
        let t = m.horizon() * (0.5 + 0.5 * normal().tanh());
        let w: Vec<f64> = (0..d.dy).map(|_| normal()).collect();
        let x: Vec<f64> = (0..d.dx).map(|_| normal()).collect();
        let y: Vec<f64> = (0..d.dy).map(|_| normal()).collect();
        let scale = 1.0 + norm(&w) + norm(&x) + norm(&y);
        let mut check = |name: &str, v: &[f64]| -> Result<()> {
            if v.iter().any(|a| !a.is_finite()) {
                return Err(Error::ModelValidation(format!("{name} is not finite at a probe")));
            }
            max_ratio = max_ratio.max(norm(v) / scale);
            Ok(())
        };
        let mut buf = vec![0.0; MAX_DIM * MAX_DIM];
        m.b1(t, &x, &y, &mut buf[..d.dx]);
        check("b1", &buf[..d.dx])?;
        m.b2(t, &x, &y, &mut buf[..d.dy]);
        check("b2", &buf[..d.dy])?;
        m.sigma0(t, &x, &y, &mut buf[..d.dx * d.db]);
        check("sigma0", &buf[..d.dx * d.db])?;
        m.sigma1(t, &w, &x, &y, &mut buf[..d.dx * d.dy]);
        check("sigma1", &buf[..d.dx * d.dy])?;
        for &u in &marks {
            m.f1(t, &x, &y, u, &mut buf[..d.dx]);
            check("f1", &buf[..d.dx])?;
            m.f2(t, &y, u, &mut buf[..d.dy]);
            check("f2", &buf[..d.dy])?;
            m.f3(t, &x, &y, u, &mut buf[..d.dx]);
            check("f3", &buf[..d.dx])?;
        }
        m.sigma2(t, &w, &y, &mut buf[..d.dy * d.dy]);
        check("sigma2", &buf[..d.dy * d.dy])?;
        let s2 = nalgebra::DMatrix::from_row_slice(d.dy, d.dy, &buf[..d.dy * d.dy]);
        let sv = s2.singular_values();
        let smin = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        min_sing = min_sing.min(smin);
        if !(smin > 1.0 / k) {
            return fail(format!("sigma2 is singular or has unbounded inverse at a probe (smallest singular value {smin:e})"));
        }
        let lam_marks: Vec<f64> = match m.regime() {
            Regime::InfiniteJumps => vec![1.0, -0.5, 0.25],
            _ => m.nu2().atoms().iter().map(|a| a.mark).collect(),
        };
        let mut integral = 0.0;
        for &u in &lam_marks {
            let l: f64 = m.lambda(t, &x, u);
            lrange = (lrange.0.min(l), lrange.1.max(l));
            if !(l > 0.0) || l > lmax * (1.0 + 1e-12) {
                return fail(format!("lambda = {l} outside (0, lambda_max = {lmax}] at a probe"));
            }
            if m.regime() == Regime::InfiniteJumps && l != 1.0 {
                return fail("infinite-activity regime requires lambda = 1".into());
            }
            if let Some(a) = m.nu2().atoms().iter().find(|a| a.mark == u) {
                integral += a.mass * (1.0 - l).powi(2) / l;
            }
        }
        integ = integ.max(integral);
    }
    if max_ratio > k {
        return fail(format!("linear growth bound exceeded: ratio {max_ratio} > {k}"));
    }
    if !integ.is_finite() {
        return fail("lambda integrability functional is infinite".into());
    }
    if probes == 0 {
        lrange = (1.0, 1.0);
        min_sing = f64::NAN;
    }
    Ok(ValidationReport {
        probes,
        max_growth_ratio: max_ratio,
        min_sigma2_singular: min_sing,
        lambda_range: lrange,
        lambda_integrability: integ,
        p_moments: pm,
    })
}

//! Sampled cadlag paths, exact p-variation over the samples, the d_p metric
//! and a Skorokhod-type σ_p surrogate.
//!
//! Between consecutive samples `t_{k-1} < t_k` a path moves linearly from
//! `values[k-1]` to the left limit `pre_values[k]`, then jumps to
//! `values[k]`. A piecewise-constant path is the special case
//! `pre_values[k] = values[k-1]`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    PiecewiseConstant,
    PiecewiseLinear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CadlagPath {
    dim: usize,
    times: Vec<f64>,
    values: Vec<f64>,
    pre_values: Vec<f64>,
    interpolation: Interpolation,
}

/// Indices into [`CadlagPath::point_sequence`] selected by a p-variation
/// maximizer. For jump-free paths these are indices into the sample times.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub indices: Vec<usize>,
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidPath("path needs at least one sample".into()));
    }
    if times[0] != 0.0 {
        return Err(Error::InvalidPath(format!("first time must be 0, got {}", times[0])));
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) || !w[1].is_finite() {
            return Err(Error::InvalidPath(format!("times not strictly increasing at {} -> {}", w[0], w[1])));
        }
    }
    Ok(())
}

impl CadlagPath {
    /// Continuous piecewise-linear path from flat row-major values.
    pub fn new(times: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        let pre = values.clone();
        Self::with_left_limits(times, values, pre, dim)
    }

    pub fn from_rows(times: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        let values = rows.iter().flatten().copied().collect();
        Self::new(times, values, dim)
    }

    /// Scalar continuous path.
    pub fn scalar(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(times, values, 1)
    }

    /// Path with explicit left limits (piecewise linear between samples).
    pub fn with_left_limits(times: Vec<f64>, values: Vec<f64>, pre_values: Vec<f64>, dim: usize) -> Result<Self> {
        let mut p = CadlagPath { dim, times, values, pre_values, interpolation: Interpolation::PiecewiseLinear };
        p.validate()?;
        // The left limit at time 0 is the initial value.
        let d = p.dim;
        let v0 = p.values[..d].to_vec();
        p.pre_values[..d].copy_from_slice(&v0);
        Ok(p)
    }

    /// Piecewise-constant (rectangular) path: holds `values[k-1]` on
    /// `[t_{k-1}, t_k)` and jumps at every sample where the value changes.
    pub fn rectangular(times: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        let mut pre = values.clone();
        if dim > 0 {
            let n = values.len() / dim;
            for k in 1..n {
                pre[k * dim..(k + 1) * dim].copy_from_slice(&values[(k - 1) * dim..k * dim]);
            }
        }
        let mut p = Self::with_left_limits(times, values, pre, dim)?;
        p.interpolation = Interpolation::PiecewiseConstant;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidPath("dimension must be >= 1".into()));
        }
        check_times(&self.times)?;
        let n = self.times.len() * self.dim;
        if self.values.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.values.len() });
        }
        if self.pre_values.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.pre_values.len() });
        }
        if self.values.iter().chain(&self.pre_values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPath("non-finite sample value".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }
    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }
    pub fn values_flat(&self) -> &[f64] {
        &self.values
    }
    pub fn pre_values_flat(&self) -> &[f64] {
        &self.pre_values
    }
    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }
    pub fn pre_value(&self, k: usize) -> &[f64] {
        &self.pre_values[k * self.dim..(k + 1) * self.dim]
    }
    pub fn last_value(&self) -> &[f64] {
        self.value(self.len() - 1)
    }

    pub fn is_jump(&self, k: usize) -> bool {
        self.value(k) != self.pre_value(k)
    }

    pub fn jump_indices(&self) -> Vec<usize> {
        (1..self.len()).filter(|&k| self.is_jump(k)).collect()
    }

    pub fn has_jumps(&self) -> bool {
        (1..self.len()).any(|k| self.is_jump(k))
    }

    /// `x_t − x_{t−}` at sample `k`.
    pub fn jump(&self, k: usize) -> Vec<f64> {
        self.value(k).iter().zip(self.pre_value(k)).map(|(a, b)| a - b).collect()
    }

    /// Index `k` with `t_{k-1} < t ≤ t_k`, or `None` if `t ≤ 0`.
    fn segment_of(&self, t: f64) -> Option<usize> {
        if t <= self.times[0] {
            return None;
        }
        let k = self.times.partition_point(|&s| s < t);
        Some(k.min(self.len() - 1))
    }

    /// Right-continuous value at an arbitrary time in `[0, T]`.
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        match self.segment_of(t) {
            None => self.value(0).to_vec(),
            Some(k) if self.times[k] == t || t > self.horizon() => self.value(k).to_vec(),
            Some(k) => self.interior(k, t),
        }
    }

    /// Left limit at an arbitrary time in `(0, T]`.
    pub fn left_limit_at(&self, t: f64) -> Vec<f64> {
        match self.segment_of(t) {
            None => self.value(0).to_vec(),
            Some(k) if self.times[k] == t || t > self.horizon() => self.pre_value(k).to_vec(),
            Some(k) => self.interior(k, t),
        }
    }

    fn interior(&self, k: usize, t: f64) -> Vec<f64> {
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let th = (t - t0) / (t1 - t0);
        self.value(k - 1).iter().zip(self.pre_value(k)).map(|(a, b)| a + th * (b - a)).collect()
    }

    /// Points visited in order, with the left limit inserted before every
    /// jump. Returns `(times, flat values)`.
    pub fn point_sequence(&self) -> (Vec<f64>, Vec<f64>) {
        let mut ts = Vec::with_capacity(self.len() + 8);
        let mut vs = Vec::with_capacity(self.values.len() + 8 * self.dim);
        for k in 0..self.len() {
            if k > 0 && self.is_jump(k) {
                ts.push(self.times[k]);
                vs.extend_from_slice(self.pre_value(k));
            }
            ts.push(self.times[k]);
            vs.extend_from_slice(self.value(k));
        }
        (ts, vs)
    }

    /// Re-evaluate on `grid`, which must start at 0, end at `T` and contain
    /// every jump time of the path.
    pub fn resample(&self, grid: &[f64]) -> Result<CadlagPath> {
        check_times(grid)?;
        if *grid.last().unwrap() != self.horizon() {
            return Err(Error::InvalidPath("resample grid must end at the path horizon".into()));
        }
        for k in self.jump_indices() {
            if grid.binary_search_by(|s| s.total_cmp(&self.times[k])).is_err() {
                return Err(Error::InvalidPath(format!("resample grid misses jump time {}", self.times[k])));
            }
        }
        let mut values = Vec::with_capacity(grid.len() * self.dim);
        let mut pre = Vec::with_capacity(grid.len() * self.dim);
        for &t in grid {
            values.extend(self.value_at(t));
            pre.extend(self.left_limit_at(t));
        }
        let mut p = CadlagPath::with_left_limits(grid.to_vec(), values, pre, self.dim)?;
        p.interpolation = self.interpolation;
        Ok(p)
    }

    /// Sample-wise combination `f(self, other)` on the merged grid.
    pub fn combine(&self, other: &CadlagPath, f: impl Fn(f64, f64) -> f64) -> Result<CadlagPath> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let grid = merged_grid(&self.times, &other.times)?;
        let a = self.resample(&grid)?;
        let b = other.resample(&grid)?;
        let values = a.values.iter().zip(&b.values).map(|(x, y)| f(*x, *y)).collect();
        let pre = a.pre_values.iter().zip(&b.pre_values).map(|(x, y)| f(*x, *y)).collect();
        CadlagPath::with_left_limits(grid, values, pre, self.dim)
    }

    /// `self − other` on the merged grid.
    pub fn difference(&self, other: &CadlagPath) -> Result<CadlagPath> {
        self.combine(other, |a, b| a - b)
    }

    /// Apply `f` to every sample value and left limit.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> CadlagPath {
        let mut p = self.clone();
        p.values.iter_mut().for_each(|v| *v = f(*v));
        p.pre_values.iter_mut().for_each(|v| *v = f(*v));
        p
    }

    /// Same samples on rescaled times `t ↦ factor·t`.
    pub fn time_scaled(&self, factor: f64) -> Result<CadlagPath> {
        self.retimed(self.times.iter().map(|t| t * factor).collect())
    }

    /// Same samples placed at new strictly increasing times.
    pub fn retimed(&self, times: Vec<f64>) -> Result<CadlagPath> {
        if times.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: times.len() });
        }
        check_times(&times)?;
        let mut p = self.clone();
        p.times = times;
        Ok(p)
    }

    /// Insert extra (non-jump) sample times, evaluated on the current
    /// interpolation.
    pub fn refined(&self, extra: &[f64]) -> Result<CadlagPath> {
        let mut grid: Vec<f64> = extra.iter().copied().filter(|&t| t > 0.0 && t < self.horizon()).collect();
        grid.extend_from_slice(&self.times);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        self.resample(&grid)
    }

    /// Sub-path on the first `n` samples.
    pub fn truncated(&self, n: usize) -> Result<CadlagPath> {
        let d = self.dim;
        let mut p = CadlagPath::with_left_limits(
            self.times[..n].to_vec(),
            self.values[..n * d].to_vec(),
            self.pre_values[..n * d].to_vec(),
            d,
        )?;
        p.interpolation = self.interpolation;
        Ok(p)
    }

    pub fn to_csv_writer<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let jumps = self.has_jumps();
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|i| format!("v{i}")));
        if jumps {
            header.extend((1..=self.dim).map(|i| format!("pre_v{i}")));
        }
        wr.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![format_f64(self.times[k])];
            row.extend(self.value(k).iter().map(|v| format_f64(*v)));
            if jumps {
                row.extend(self.pre_value(k).iter().map(|v| format_f64(*v)));
            }
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.to_csv_writer(std::fs::File::create(path)?)
    }

    /// Parse the CSV format written by [`CadlagPath::to_csv_writer`]. Rows
    /// without `pre_` columns are continuous.
    pub fn from_csv_reader<R: Read>(r: R) -> Result<CadlagPath> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header = rd.headers()?.clone();
        let n_pre = header.iter().filter(|h| h.starts_with("pre_")).count();
        let n_val = header.len().saturating_sub(1 + n_pre);
        if n_val == 0 || (n_pre != 0 && n_pre != n_val) {
            return Err(Error::Parse(format!("bad path header with {} columns", header.len())));
        }
        let (mut times, mut values, mut pre) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rd.records() {
            let rec = rec?;
            let nums = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if nums.len() != header.len() {
                return Err(Error::Parse("ragged CSV row".into()));
            }
            times.push(nums[0]);
            values.extend_from_slice(&nums[1..1 + n_val]);
            if n_pre > 0 {
                pre.extend_from_slice(&nums[1 + n_val..]);
            } else {
                pre.extend_from_slice(&nums[1..1 + n_val]);
            }
        }
        CadlagPath::with_left_limits(times, values, pre, n_val)
    }

    pub fn read_csv(path: &Path) -> Result<CadlagPath> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }
}

/// Shortest decimal representation that round-trips.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Sorted union of two time grids on the same interval.
pub fn merged_grid(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let (ta, tb) = (*a.last().unwrap(), *b.last().unwrap());
    if (ta - tb).abs() > 1e-12 * ta.abs().max(1.0) {
        return Err(Error::InvalidPath(format!("paths live on different intervals [0,{ta}] and [0,{tb}]")));
    }
    let mut g: Vec<f64> = a.iter().chain(b.iter()).copied().filter(|&t| t < ta.min(tb)).collect();
    g.push(ta.min(tb));
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

/// Dynamic program for `max_P Σ dist(t_i, t_{i+1})^p` over partitions of
/// `0..n` containing both endpoints. Returns the maximal sum (not raised to
/// `1/p`) and a maximizing partition.
pub fn pvar_dp(n: usize, p: f64, mut dist: impl FnMut(usize, usize) -> f64) -> (f64, Vec<usize>) {
    if n < 2 {
        return (0.0, (0..n).collect());
    }
    let mut best = vec![0.0f64; n];
    let mut prev = vec![0usize; n];
    for j in 1..n {
        let mut m = f64::NEG_INFINITY;
        let mut arg = 0;
        for i in 0..j {
            let v = best[i] + dist(i, j).powf(p);
            if v > m {
                m = v;
                arg = i;
            }
        }
        best[j] = m;
        prev[j] = arg;
    }
    let mut part = vec![n - 1];
    let mut k = n - 1;
    while k > 0 {
        k = prev[k];
        part.push(k);
    }
    part.reverse();
    (best[n - 1], part)
}

#[inline]
pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// p-variation of the path over its samples (left limits included).
pub fn p_variation(x: &CadlagPath, p: f64) -> Result<f64> {
    Ok(p_variation_with_partition(x, p)?.0)
}

/// p-variation together with a maximizing partition of
/// [`CadlagPath::point_sequence`].
pub fn p_variation_with_partition(x: &CadlagPath, p: f64) -> Result<(f64, Partition)> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::invalid(format!("p-variation needs p >= 1, got {p}")));
    }
    let (_, vs) = x.point_sequence();
    let d = x.dim();
    let n = vs.len() / d;
    let (s, part) = pvar_dp(n, p, |i, j| euclid(&vs[i * d..(i + 1) * d], &vs[j * d..(j + 1) * d]));
    Ok((s.powf(1.0 / p), Partition { indices: part }))
}

/// p-variation of `x − y` on the merged grid.
pub fn d_p(x: &CadlagPath, y: &CadlagPath, p: f64) -> Result<f64> {
    p_variation(&x.difference(y)?, p)
}

/// Paths whose sample times can be moved by a time warp.
pub(crate) trait Warpable: Sized {
    fn sample_times(&self) -> &[f64];
    /// Times that are worth aligning with the other path (jump times when
    /// present, otherwise all samples).
    fn salient_times(&self) -> Vec<f64>;
    fn refine_at(&self, extra: &[f64]) -> Result<Self>;
    fn with_times(&self, times: Vec<f64>) -> Result<Self>;
}

impl Warpable for CadlagPath {
    fn sample_times(&self) -> &[f64] {
        self.times()
    }
    fn salient_times(&self) -> Vec<f64> {
        let j = self.jump_indices();
        if j.is_empty() {
            self.times.clone()
        } else {
            j.into_iter().map(|k| self.times[k]).collect()
        }
    }
    fn refine_at(&self, extra: &[f64]) -> Result<Self> {
        self.refined(extra)
    }
    fn with_times(&self, times: Vec<f64>) -> Result<Self> {
        self.retimed(times)
    }
}

fn strided(v: Vec<f64>, cap: usize) -> Vec<f64> {
    if v.len() <= cap {
        return v;
    }
    let step = v.len().div_ceil(cap);
    v.into_iter().step_by(step).collect()
}

/// Warp μ (the inverse of λ) given by values at uniform knots in x's time
/// domain, applied to sample times.
fn apply_warp(times: &[f64], knots: &[f64], mu: &[f64]) -> Vec<f64> {
    let k_last = knots.len() - 1;
    times
        .iter()
        .map(|&s| {
            let j = knots.partition_point(|&u| u <= s).saturating_sub(1).min(k_last - 1);
            if s == knots[j] {
                mu[j]
            } else if s >= knots[k_last] {
                mu[k_last]
            } else {
                mu[j] + (s - knots[j]) / (knots[j + 1] - knots[j]) * (mu[j + 1] - mu[j])
            }
        })
        .collect()
}

/// Coordinate-descent search for `inf_λ max(|λ|, dist(x∘λ, y))` over
/// piecewise-linear warps with `warp_grid` uniform knots.
pub(crate) fn warp_search<P: Warpable>(
    x: &P,
    y_salient: &[f64],
    horizon: f64,
    warp_grid: usize,
    dist: &dyn Fn(&P) -> Result<f64>,
) -> Result<f64> {
    Ok(warp_search_inner(x, y_salient, horizon, warp_grid, dist)?.0)
}

fn warp_search_inner<P: Warpable>(
    x: &P,
    y_salient: &[f64],
    horizon: f64,
    k: usize,
    dist: &dyn Fn(&P) -> Result<f64>,
) -> Result<(f64, Vec<f64>)> {
    if k <= 1 {
        return Ok((dist(x)?.max(0.0), vec![0.0, horizon]));
    }
    let knots: Vec<f64> = (0..=k).map(|j| if j == k { horizon } else { horizon * j as f64 / k as f64 }).collect();
    let (coarse_val, mut mu) = if k % 2 == 0 {
        let (v, m) = warp_search_inner(x, y_salient, horizon, k / 2, dist)?;
        let mut fine = vec![0.0; k + 1];
        for j in 0..=k {
            fine[j] = if j % 2 == 0 { m[j / 2] } else { 0.5 * (m[j / 2] + m[j / 2 + 1]) };
        }
        (v, fine)
    } else {
        (f64::INFINITY, knots.clone())
    };
    let xr = x.refine_at(&knots[1..k])?;
    let x_times = xr.sample_times().to_vec();
    let salient = strided(x.salient_times(), 48);
    let y_sal = strided(y_salient.to_vec(), 48);
    let eval = |mu: &[f64]| -> f64 {
        let dev = mu.iter().zip(&knots).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        match xr.with_times(apply_warp(&x_times, &knots, mu)) {
            Ok(w) => dist(&w).map(|v| v.max(dev)).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    };
    let mut cur = eval(&mu);
    for _sweep in 0..6 {
        let mut improved = false;
        for j in 1..k {
            let (lo, hi) = (mu[j - 1], mu[j + 1]);
            let margin = 1e-9 * (hi - lo);
            let mut cands: Vec<f64> = (1..=16).map(|m| lo + (hi - lo) * m as f64 / 17.0).collect();
            for &s in salient.iter().filter(|&&s| s > knots[j - 1] && s < knots[j + 1]) {
                for &r in y_sal.iter().filter(|&&r| r > lo && r < hi) {
                    let v = if s == knots[j] {
                        r
                    } else if s < knots[j] {
                        lo + (r - lo) * (knots[j] - knots[j - 1]) / (s - knots[j - 1])
                    } else {
                        let a = (s - knots[j]) / (knots[j + 1] - knots[j]);
                        (r - a * hi) / (1.0 - a)
                    };
                    cands.push(v);
                }
            }
            let old = mu[j];
            let mut best = (cur, old);
            for c in cands {
                if !(c > lo + margin && c < hi - margin) {
                    continue;
                }
                mu[j] = c;
                let v = eval(&mu);
                if v < best.0 {
                    best = (v, c);
                }
            }
            mu[j] = best.1;
            if best.0 < cur {
                cur = best.0;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    Ok((cur.min(coarse_val), mu))
}

/// Skorokhod-type σ_p surrogate: the minimum over piecewise-linear warps on
/// `warp_grid` uniform knots of `max(|λ|, d_p(x∘λ, y))`. This is an upper
/// bound of the infimum over all increasing bijections; it is
/// non-increasing along nested dyadic knot grids.
pub fn skorokhod_sigma_p(x: &CadlagPath, y: &CadlagPath, p: f64, warp_grid: usize) -> Result<f64> {
    if warp_grid < 1 {
        return Err(Error::invalid("warp_grid must be >= 1"));
    }
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("p must be >= 1, got {p}")));
    }
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), got: y.dim() });
    }
    merged_grid(x.times(), y.times())?;
    let dist = |w: &CadlagPath| d_p(w, y, p);
    warp_search(x, &y.salient_times(), x.horizon(), warp_grid, &dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[f64], d: usize, p: f64) -> f64 {
        let n = points.len() / d;
        let mut best: f64 = 0.0;
        for mask in 0u32..(1 << (n - 2)) {
            let mut idx = vec![0];
            idx.extend((1..n - 1).filter(|i| mask & (1 << (i - 1)) != 0));
            idx.push(n - 1);
            let s: f64 = idx
                .windows(2)
                .map(|w| euclid(&points[w[0] * d..w[0] * d + d], &points[w[1] * d..w[1] * d + d]).powf(p))
                .sum();
            best = best.max(s);
        }
        best.powf(1.0 / p)
    }

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn simple_values() {
        let x = CadlagPath::scalar(grid(3), vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(p_variation(&x, 1.0).unwrap(), 2.0);
        let c = CadlagPath::scalar(grid(4), vec![2.0; 4]).unwrap();
        assert_eq!(p_variation(&c, 2.5).unwrap(), 0.0);
        assert!(p_variation(&x, 0.5).is_err());
    }

    #[test]
    fn jumps_are_counted_through_left_limits() {
        // 0 → 1 linearly, then jump back to 0
        let x = CadlagPath::with_left_limits(vec![0.0, 1.0], vec![0.0, 0.0], vec![0.0, 1.0], 1).unwrap();
        assert!(x.is_jump(1));
        assert_eq!(p_variation(&x, 1.0).unwrap(), 2.0);
        assert_eq!(x.left_limit_at(1.0), vec![1.0]);
        assert_eq!(x.value_at(0.5), vec![0.5]);
    }

    #[test]
    fn rectangular_path_jumps_at_changes() {
        let x = CadlagPath::rectangular(grid(3), vec![0.0, 1.0, 1.0], 1).unwrap();
        assert_eq!(x.jump_indices(), vec![1]);
        assert_eq!(x.value_at(0.4), vec![0.0]);
        assert_eq!(x.left_limit_at(0.5), vec![0.0]);
    }

    #[test]
    fn d_p_degenerate_cases() {
        let x = CadlagPath::scalar(grid(5), vec![0.0, 0.3, -0.2, 0.9, 0.1]).unwrap();
        assert_eq!(d_p(&x, &x, 2.0).unwrap(), 0.0);
        let shifted = x.map_values(|v| v + 3.0);
        assert!(d_p(&x, &shifted, 2.0).unwrap() < 1e-12);
    }

    #[test]
    fn d_p_two_five_point_paths_matches_enumeration() {
        let x = CadlagPath::scalar(grid(5), vec![0.0, 0.7, -0.4, 0.2, 1.1]).unwrap();
        let y = CadlagPath::scalar(vec![0.0, 0.1, 0.45, 0.8, 1.0], vec![0.2, -0.3, 0.5, 0.0, 0.4]).unwrap();
        let diff = x.difference(&y).unwrap();
        let (_, pts) = diff.point_sequence();
        for &p in &[1.0, 2.0, 2.5] {
            let v = d_p(&x, &y, p).unwrap();
            assert!((v - brute(&pts, 1, p)).abs() < 1e-12);
        }
    }

    #[test]
    fn skorokhod_shifted_jump() {
        let h = 0.05;
        let x = CadlagPath::rectangular(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 1.0], 1).unwrap();
        let y = CadlagPath::rectangular(vec![0.0, 0.5 + h, 1.0], vec![0.0, 1.0, 1.0], 1).unwrap();
        assert_eq!(skorokhod_sigma_p(&x, &x, 2.0, 4).unwrap(), 0.0);
        let s1 = skorokhod_sigma_p(&x, &y, 2.0, 1).unwrap();
        assert_eq!(s1, d_p(&x, &y, 2.0).unwrap());
        let s2 = skorokhod_sigma_p(&x, &y, 2.0, 2).unwrap();
        assert!(s2 <= h + 1e-12, "{s2}");
        let s8 = skorokhod_sigma_p(&x, &y, 2.0, 8).unwrap();
        assert!(s8 <= s2);
        assert!(skorokhod_sigma_p(&x, &y, 2.0, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let x = CadlagPath::with_left_limits(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0], vec![0.0, 1.0, 2.0, 2.5, 4.0, 5.0], 2)
            .unwrap();
        let mut buf = Vec::new();
        x.to_csv_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,v1,v2,pre_v1,pre_v2\n"));
        let back = CadlagPath::from_csv_reader(&buf[..]).unwrap();
        assert_eq!(back, x);
    }

    proptest! {
        #[test]
        fn dp_equals_enumeration(vals in prop::collection::vec(-3.0..3.0f64, 2..11), p in 1.0..3.0f64) {
            let x = CadlagPath::scalar(grid(vals.len()), vals.clone()).unwrap();
            let v = p_variation(&x, p).unwrap();
            prop_assert!((v - brute(&vals, 1, p)).abs() <= 1e-12 * (1.0 + v));
        }

        #[test]
        fn monotone_in_p(vals in prop::collection::vec(-3.0..3.0f64, 2..30)) {
            let x = CadlagPath::scalar(grid(vals.len()), vals).unwrap();
            let v: Vec<f64> = [1.0, 1.5, 2.0, 2.5].iter().map(|&p| p_variation(&x, p).unwrap()).collect();
            for w in v.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
            }
        }

        #[test]
        fn triangle_inequality(a in prop::collection::vec(-2.0..2.0f64, 6),
                               b in prop::collection::vec(-2.0..2.0f64, 6),
                               c in prop::collection::vec(-2.0..2.0f64, 6)) {
            let (x, y, z) = (CadlagPath::scalar(grid(6), a).unwrap(),
                             CadlagPath::scalar(grid(6), b).unwrap(),
                             CadlagPath::scalar(grid(6), c).unwrap());
            let p = 2.2;
            prop_assert!(d_p(&x, &z, p).unwrap() <= d_p(&x, &y, p).unwrap() + d_p(&y, &z, p).unwrap() + 1e-10);
        }

        #[test]
        fn rescaling_time_keeps_p_variation(vals in prop::collection::vec(-3.0..3.0f64, 2..20), f in 0.2..5.0f64) {
            let x = CadlagPath::scalar(grid(vals.len()), vals).unwrap();
            let y = x.time_scaled(f).unwrap();
            prop_assert_eq!(p_variation(&x, 2.3).unwrap(), p_variation(&y, 2.3).unwrap());
        }
    }
}

//! Gevrey norms, decay-index regression, the truncation-doubling divergence
//! witness, time-weighted derivative norms and the mixed-norm Minkowski check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{ModeGrid, PhaseField, Repr, C64};
use crate::toy::{self, ToySpec};

/// Amplitudes at or below this are treated as absent.
pub const AMP_FLOOR: f64 = 1e-300;

const LOG_MAX: f64 = 709.0;

fn xi_radius(m: &[i64], eta: &[f64]) -> f64 {
    let m2: f64 = m.iter().map(|&x| (x * x) as f64).sum();
    let e2: f64 = eta.iter().map(|x| x * x).sum();
    (m2 + e2).sqrt()
}

fn require_eta(field: &PhaseField) -> Result<()> {
    if field.repr != Repr::EtaSpace {
        return Err(Error::Contract("expected an EtaSpace field".into()));
    }
    Ok(())
}

/// Visits every `(|ξ|, |F|)` of an EtaSpace field.
fn for_each_point(field: &PhaseField, mut f: impl FnMut(f64, f64)) {
    let g = &field.grid;
    let nvel = g.n_vel();
    for mi in 0..g.n_modes() {
        let m = g.mode(mi);
        for vi in 0..nvel {
            let eta = g.eta_point(vi);
            f(xi_radius(&m, &eta[..g.dv]), field.data[mi * nvel + vi].norm());
        }
    }
}

/// Numerically stable `log Σ e^{x_i}` accumulator.
#[derive(Clone, Copy, Debug)]
struct LogSum {
    max: f64,
    acc: f64,
}

impl LogSum {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            acc: 0.0,
        }
    }

    fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.acc = self.acc * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.acc += (x - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        if self.acc == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.acc.ln()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GevreyNorm {
    /// `+∞` when the weighted sum overflows.
    pub value: f64,
    /// Natural log of the squared norm (finite even when `value` is not).
    pub log_sq: f64,
    /// First unit-width shell `⌊|ξ|⌋` whose term alone overflows.
    pub overflow_shell: Option<usize>,
}

/// `(Σ e^{2c|ξ|^{1/r}} |F|²)^{1/2}` with `|ξ|² = |m|² + |η|²`.
pub fn gevrey_norm(field: &PhaseField, r: f64, c: f64) -> Result<GevreyNorm> {
    require_eta(field)?;
    if !(r > 0.0) || !(c >= 0.0) {
        return Err(Error::Contract(format!("gevrey_norm needs r > 0, c >= 0 (r={r}, c={c})")));
    }
    let mut ls = LogSum::new();
    let mut first: Option<usize> = None;
    for_each_point(field, |rad, amp| {
        if amp == 0.0 {
            return;
        }
        let term = 2.0 * c * rad.powf(1.0 / r) + 2.0 * amp.ln();
        if term > LOG_MAX {
            let sh = rad.floor() as usize;
            first = Some(first.map_or(sh, |f: usize| f.min(sh)));
        }
        ls.add(term);
    });
    let log_sq = ls.value();
    let value = if log_sq / 2.0 > LOG_MAX {
        f64::INFINITY
    } else {
        (log_sq / 2.0).exp()
    };
    let overflow_shell = if value.is_infinite() {
        first.or(Some(0))
    } else {
        None
    };
    Ok(GevreyNorm {
        value,
        log_sq,
        overflow_shell,
    })
}

/// `log Σ_{lo ≤ |ξ| < hi} e^{2c|ξ|^{1/r}}|F|²`, `-∞` for an empty range.
pub fn log_weighted_sum(field: &PhaseField, r: f64, c: f64, lo: f64, hi: f64) -> f64 {
    let mut ls = LogSum::new();
    for_each_point(field, |rad, amp| {
        if amp > 0.0 && rad >= lo && rad < hi {
            ls.add(2.0 * c * rad.powf(1.0 / r) + 2.0 * amp.ln());
        }
    });
    ls.value()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GevreyFit {
    pub sigma: f64,
    pub c: f64,
    pub log_a: f64,
    /// Exponent `q` of the algebraic prefactor `|ξ|^{-q}`.
    pub poly_order: f64,
    pub r2: f64,
    pub shells_used: usize,
    pub decaying: bool,
    /// `(radius of the shell maximum, ln max amplitude)`.
    pub shells: Vec<(f64, f64)>,
}

const FIT_SHELLS: usize = 40;

/// Shell maxima over `FIT_SHELLS` logarithmic shells of `[shell_min, shell_max]`.
pub fn shell_maxima(field: &PhaseField, shell_min: f64, shell_max: f64) -> Result<Vec<(f64, f64)>> {
    require_eta(field)?;
    if !(shell_min > 0.0 && shell_max > shell_min) {
        return Err(Error::Contract(format!(
            "need 0 < shell_min < shell_max (got {shell_min}, {shell_max})"
        )));
    }
    let ratio = (shell_max / shell_min).ln() / FIT_SHELLS as f64;
    let mut best = vec![(0.0f64, 0.0f64); FIT_SHELLS];
    for_each_point(field, |rad, amp| {
        if rad < shell_min || rad >= shell_max {
            return;
        }
        let k = (((rad / shell_min).ln() / ratio) as usize).min(FIT_SHELLS - 1);
        if amp > best[k].1 {
            best[k] = (rad, amp);
        }
    });
    Ok(best
        .into_iter()
        .filter(|&(_, a)| a > AMP_FLOOR)
        .map(|(r, a)| (r, a.ln()))
        .collect())
}

pub(crate) fn lsq(cols: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = y.len();
    let a = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let b = DVector::from_column_slice(y);
    let sol = a.clone().svd(true, true).solve(&b, 1e-14).ok()?;
    let res = &a * &sol - &b;
    Some((sol.iter().copied().collect(), res.norm_squared()))
}

fn fit_at(sigma: f64, pts: &[(f64, f64)]) -> Option<(Vec<f64>, f64)> {
    let ones = vec![1.0; pts.len()];
    let logs: Vec<f64> = pts.iter().map(|p| -p.0.ln()).collect();
    let pw: Vec<f64> = pts.iter().map(|p| -p.0.powf(2.0 * sigma)).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    lsq(&[ones, logs, pw], &y)
}

/// Least-squares fit of `ln max_shell|F| ≈ ln A - q ln|ξ| - c|ξ|^{2σ}`.
pub fn fit_decay(field: &PhaseField, shell_min: f64, shell_max: f64) -> Result<GevreyFit> {
    let pts = shell_maxima(field, shell_min, shell_max)?;
    if pts.len() < 8 {
        return Err(Error::TooFewShells {
            usable: pts.iter().map(|p| p.0).collect(),
        });
    }
    let mut best = (f64::INFINITY, 0.0);
    let mut k = 0;
    loop {
        let sigma = 0.02 + 0.001 * k as f64;
        if sigma > 1.5 {
            break;
        }
        if let Some((_, sse)) = fit_at(sigma, &pts) {
            if sse < best.0 {
                best = (sse, sigma);
            }
        }
        k += 1;
    }
    let (mut lo, mut hi) = (best.1 - 0.001, best.1 + 0.001);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let sse = |s: f64| fit_at(s, &pts).map_or(f64::INFINITY, |r| r.1);
    for _ in 0..40 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if sse(a) < sse(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let sigma = 0.5 * (lo + hi);
    let (coef, sse_min) = fit_at(sigma, &pts).ok_or_else(|| Error::Format("degenerate fit".into()))?;
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if sst > 0.0 { (1.0 - sse_min / sst).max(0.0) } else { 0.0 };
    let drop = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - y.iter().cloned().fold(f64::INFINITY, f64::min);
    let decaying = coef[2] > 0.0 && r2 >= 0.9 && drop >= 100f64.ln();
    Ok(GevreyFit {
        sigma,
        c: coef[2],
        log_a: coef[0],
        poly_order: coef[1],
        r2,
        shells_used: pts.len(),
        decaying,
        shells: pts,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharpnessSetup {
    pub n_v: usize,
    pub v_max: f64,
    pub m_max: usize,
    /// Decay order of the initial data `(1 + |m| + |η|)^{-p}`.
    pub p: f64,
    /// First truncation radius; the others are `2R` and `4R`.
    pub r0: f64,
    pub quad_tol: f64,
}

impl Default for SharpnessSetup {
    fn default() -> Self {
        Self {
            n_v: 8192,
            v_max: std::f64::consts::PI,
            m_max: 8,
            p: 4.0,
            r0: 500.0,
            quad_tol: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Divergent,
    Convergent,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharpnessReport {
    pub s: f64,
    pub r: f64,
    pub t: f64,
    pub c: f64,
    pub radii: Vec<f64>,
    /// `ln` of the partial sums of the squared Gevrey norm.
    pub log_partial_sums: Vec<f64>,
    /// `ln(S(2R)/S(R))` for each doubling.
    pub log_growth: Vec<f64>,
    /// `[S(4R) - S(2R)] / [S(2R) - S(R)]`.
    pub increment_ratio: f64,
    pub overflow: bool,
    pub verdict: Verdict,
}

/// Polynomially decaying data `(1 + |m| + |η|)^{-p}` on a 1D × 1D grid.
pub fn polynomial_data(grid: &ModeGrid, p: f64) -> PhaseField {
    PhaseField::from_eta_fn(grid, |m, eta| {
        let mm: f64 = m.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
        let ee: f64 = eta.iter().map(|x| x * x).sum::<f64>().sqrt();
        C64::new((1.0 + mm + ee).powf(-p), 0.0)
    })
}

/// Partial sums of `gevrey_norm(exact_evolve(F₀, t), r, c)²` over `|ξ| ≤ R, 2R, 4R`.
pub fn sharpness_witness(s: f64, r: f64, t: f64, c: f64, setup: &SharpnessSetup) -> Result<SharpnessReport> {
    let grid = ModeGrid::new(1, setup.m_max, 1, setup.n_v, setup.v_max)?;
    let spec = ToySpec::new(s, 0.0, t.max(1e-12), setup.quad_tol)?;
    if 4.0 * setup.r0 > grid.eta_max() {
        return Err(Error::Contract(format!(
            "largest truncation radius {} exceeds the grid's eta_max {}",
            4.0 * setup.r0,
            grid.eta_max()
        )));
    }
    let f0 = polynomial_data(&grid, setup.p);
    let f = toy::exact_evolve(&f0, t, &spec)?;
    let radii = vec![setup.r0, 2.0 * setup.r0, 4.0 * setup.r0];
    let inner = log_weighted_sum(&f, r, c, 0.0, radii[0] + 1e-9);
    let a1 = log_weighted_sum(&f, r, c, radii[0] + 1e-9, radii[1] + 1e-9);
    let a2 = log_weighted_sum(&f, r, c, radii[1] + 1e-9, radii[2] + 1e-9);
    let lse = |x: f64, y: f64| {
        let m = x.max(y);
        if m == f64::NEG_INFINITY {
            m
        } else {
            m + ((x - m).exp() + (y - m).exp()).ln()
        }
    };
    let s1 = inner;
    let s2 = lse(s1, a1);
    let s3 = lse(s2, a2);
    let sums = vec![s1, s2, s3];
    let growth = vec![s2 - s1, s3 - s2];
    let increment_ratio = if a1 == f64::NEG_INFINITY {
        0.0
    } else {
        (a2 - a1).exp()
    };
    let overflow = sums.iter().any(|&x| x / 2.0 > LOG_MAX);
    let verdict = if growth.iter().all(|&g| g >= 10f64.ln()) {
        Verdict::Divergent
    } else if increment_ratio <= 0.5 {
        Verdict::Convergent
    } else {
        Verdict::Inconclusive
    };
    Ok(SharpnessReport {
        s,
        r,
        t,
        c,
        radii,
        log_partial_sums: sums,
        log_growth: growth,
        increment_ratio,
        overflow,
        verdict,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedEntry {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    pub t: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedNormTable {
    pub lambda: f64,
    pub tau: f64,
    pub entries: Vec<WeightedEntry>,
    /// `(k, max over |α|+|β| = k of sup_t value)`.
    pub per_order: Vec<(usize, f64)>,
    /// Geometric rate `C` of the fit `value_k / (k!)^τ ≈ A C^k`.
    pub fit_rate: f64,
    pub fit_log_amplitude: f64,
    /// Root-mean-square residual of the log-linear fit.
    pub fit_residual: f64,
}

/// Gevrey index `τ = max{1/(2s), 1}`.
pub fn tau_of(s: f64) -> f64 {
    (1.0 / (2.0 * s)).max(1.0)
}

pub fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

fn multi_indices(dim: usize, order: usize) -> Vec<Vec<usize>> {
    if dim == 0 {
        return if order == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in (0..=order).rev() {
        for mut rest in multi_indices(dim - 1, order - first) {
            let mut v = vec![first];
            v.append(&mut rest);
            out.push(v);
        }
    }
    out
}

fn ipow(x: f64, k: usize) -> f64 {
    x.powi(k as i32)
}

/// `‖∂_x^α ∂_v^β f‖_{L²}` of an EtaSpace field via `(im)^α (iη)^β`.
pub fn derivative_norm(field: &PhaseField, alpha: &[usize], beta: &[usize]) -> f64 {
    let g = &field.grid;
    let nvel = g.n_vel();
    let mut acc = 0.0;
    for mi in 0..g.n_modes() {
        let m = g.mode(mi);
        let wm: f64 = m.iter().zip(alpha).map(|(&x, &a)| ipow(x as f64, a)).product();
        if wm == 0.0 {
            continue;
        }
        for vi in 0..nvel {
            let eta = g.eta_point(vi);
            let we: f64 = eta.iter().zip(beta).map(|(&x, &b)| ipow(x, b)).product();
            acc += (wm * we).powi(2) * field.data[mi * nvel + vi].norm_sqr();
        }
    }
    (acc * g.eta_measure()).sqrt()
}

/// Table of `t^{(λ+1)|α| + λ|β|} ‖∂_x^α ∂_v^β f(t)‖` over a family of
/// EtaSpace snapshots.
pub fn weighted_norms(family: &[PhaseField], lambda: f64, s: f64, max_order: usize) -> Result<WeightedNormTable> {
    if !(lambda > 1.0 + 1.0 / (2.0 * s)) {
        return Err(Error::OutOfRange {
            name: "lambda",
            value: lambda,
            reason: format!("need lambda > 1 + 1/(2s) = {}", 1.0 + 1.0 / (2.0 * s)),
        });
    }
    let Some(first) = family.first() else {
        return Err(Error::Contract("weighted_norms needs at least one snapshot".into()));
    };
    for f in family {
        require_eta(f)?;
    }
    let (dx, dv) = (first.grid.dx, first.grid.dv);
    let tau = tau_of(s);
    let mut entries = Vec::new();
    let mut per_order = Vec::new();
    for k in 0..=max_order {
        let mut best = 0.0f64;
        for na in 0..=k {
            for alpha in multi_indices(dx, na) {
                for beta in multi_indices(dv, k - na) {
                    for f in family {
                        let w = if na + (k - na) == 0 {
                            1.0
                        } else {
                            f.time.powf((lambda + 1.0) * na as f64 + lambda * (k - na) as f64)
                        };
                        let value = w * derivative_norm(f, &alpha, &beta);
                        best = best.max(value);
                        entries.push(WeightedEntry {
                            alpha: alpha.clone(),
                            beta: beta.clone(),
                            t: f.time,
                            value,
                        });
                    }
                }
            }
        }
        per_order.push((k, best));
    }
    let pts: Vec<(f64, f64)> = per_order
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|&(k, v)| (k as f64, v.ln() - tau * ln_factorial(k)))
        .collect();
    let (rate, amp, resid) = if pts.len() >= 2 {
        let ones = vec![1.0; pts.len()];
        let ks: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let (coef, sse) = lsq(&[ones, ks], &y).ok_or_else(|| Error::Format("degenerate fit".into()))?;
        (coef[1].exp(), coef[0], (sse / pts.len() as f64).sqrt())
    } else {
        (0.0, f64::NEG_INFINITY, 0.0)
    };
    Ok(WeightedNormTable {
        lambda,
        tau,
        entries,
        per_order,
        fit_rate: rate,
        fit_log_amplitude: amp,
        fit_residual: resid,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinkowskiResult {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub holds: bool,
}

/// Both sides of the mixed-norm Minkowski inequality for nonnegative data
/// `f[j][m][t] = ‖f̂_j(t,m)‖`, `g[j][m][t] = ⦀ĝ_j(t,m)⦀` on a 1D mode range,
/// with time-quadrature weights `w`.
pub fn minkowski_check(f: &[Vec<Vec<f64>>], g: &[Vec<Vec<f64>>], w: &[f64]) -> Result<MinkowskiResult> {
    if f.len() != g.len() || f.is_empty() {
        return Err(Error::Contract("f and g need the same nonzero number of terms".into()));
    }
    let nm = f[0].len();
    let nt = w.len();
    for arr in f.iter().chain(g) {
        if arr.len() != nm || arr.iter().any(|row| row.len() != nt) {
            return Err(Error::Contract("inconsistent (m, t) shapes".into()));
        }
        if arr.iter().flatten().any(|&x| !(x >= 0.0)) {
            return Err(Error::Contract("data must be nonnegative".into()));
        }
    }
    let mut lhs = 0.0;
    for out in 0..(2 * nm - 1) {
        let mut acc = 0.0;
        for ti in 0..nt {
            let mut inner = 0.0;
            for j in 0..f.len() {
                for l in 0..nm {
                    if out >= l && out - l < nm {
                        inner += f[j][out - l][ti] * g[j][l][ti];
                    }
                }
            }
            acc += w[ti] * inner * inner;
        }
        lhs += acc.sqrt();
    }
    let mut rhs = 0.0;
    for j in 0..f.len() {
        let a: f64 = f[j].iter().map(|row| row.iter().cloned().fold(0.0, f64::max)).sum();
        let b: f64 = g[j]
            .iter()
            .map(|row| row.iter().zip(w).map(|(x, wt)| wt * x * x).sum::<f64>().sqrt())
            .sum();
        rhs += a * b;
    }
    let ratio = if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(MinkowskiResult {
        lhs,
        rhs,
        ratio,
        holds: ratio <= 1.0 + 1e-10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(1, 3), vec![vec![3]]);
        assert_eq!(multi_indices(3, 2).len(), 6);
        assert_eq!(multi_indices(2, 0), vec![vec![0, 0]]);
    }

    #[test]
    fn log_sum_accumulates() {
        let mut ls = LogSum::new();
        for x in [0.0, 1.0, -2.0] {
            ls.add(x);
        }
        let direct = (1f64 + 1f64.exp() + (-2f64).exp()).ln();
        assert!((ls.value() - direct).abs() < 1e-14);
    }
}

//! Linearized inhomogeneous equation `∂_t f + v_1 ∂_x f + L f = 0` on one
//! spatial Fourier axis, and the regularization diagnostics measured on its
//! trajectories.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{CollisionQuadrature, KernelSpec, LMatrix};
use crate::error::{Error, Result};
use crate::gevrey::{ln_factorial, lsq};
use crate::spectral::{self, PhaseField, Repr, C64};
use crate::vecfield::{apply_h_pow, VectorFieldSpec};

/// Largest share of `a_k` that may come from the outer quarter of the η box
/// before order `k` counts as under-resolved.
pub const ALIAS_EDGE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRunSpec {
    pub m_max: usize,
    pub quad: CollisionQuadrature,
    pub kernel: KernelSpec,
    pub dt: f64,
    pub t_end: f64,
    /// Output times; each must be a whole number of steps.
    pub snapshots: Vec<f64>,
    pub delta_list: Vec<f64>,
    pub k_max: usize,
}

impl LinearRunSpec {
    pub fn validate(&self) -> Result<()> {
        self.quad.validate()?;
        self.kernel.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::OutOfRange {
                name: "dt",
                value: self.dt,
                reason: "need dt > 0".into(),
            });
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::OutOfRange {
                name: "t_end",
                value: self.t_end,
                reason: "need t_end >= 0".into(),
            });
        }
        if self.k_max > 8 {
            return Err(Error::OutOfRange {
                name: "k_max",
                value: self.k_max as f64,
                reason: "need k_max <= 8".into(),
            });
        }
        let lo = 1.0 + 1.0 / (2.0 * self.kernel.s);
        for &d in &self.delta_list {
            if !(d > lo) {
                return Err(Error::OutOfRange {
                    name: "delta",
                    value: d,
                    reason: format!("need delta > 1 + 1/(2s) = {lo}"),
                });
            }
        }
        self.steps()?;
        for &t in &self.snapshots {
            self.step_index(t)?;
        }
        Ok(())
    }

    pub fn steps(&self) -> Result<usize> {
        self.step_index(self.t_end)
    }

    fn step_index(&self, t: f64) -> Result<usize> {
        let n = (t / self.dt).round();
        if (n * self.dt - t).abs() > 1e-9 * t.abs().max(1.0) || t < 0.0 || t > self.t_end + 1e-12 {
            return Err(Error::OutOfRange {
                name: "snapshot time",
                value: t,
                reason: format!("not a step multiple of dt = {} within [0, {}]", self.dt, self.t_end),
            });
        }
        Ok(n as usize)
    }
}

/// `e^{-dt L}` on one velocity block.
#[derive(Clone, Debug)]
pub struct CollisionPropagator {
    pub dt: f64,
    pub matrix: DMatrix<f64>,
    pub checksum: String,
}

impl CollisionPropagator {
    pub fn new(l: &LMatrix, dt: f64) -> Self {
        let m = l.to_dmatrix() * (-dt);
        Self {
            dt,
            matrix: m.exp(),
            checksum: l.checksum(),
        }
    }

    fn apply(&self, block: &mut [C64]) {
        let n = block.len();
        let re = nalgebra::DVector::from_iterator(n, block.iter().map(|z| z.re));
        let im = nalgebra::DVector::from_iterator(n, block.iter().map(|z| z.im));
        let (re, im) = (&self.matrix * re, &self.matrix * im);
        for (i, z) in block.iter_mut().enumerate() {
            *z = C64::new(re[i], im[i]);
        }
    }
}

#[derive(Clone, Debug)]
pub struct LinearRun {
    pub snapshots: Vec<PhaseField>,
    /// `(t, ‖f(t)‖_{L²})` after every step, starting at `t = 0`.
    pub norms: Vec<(f64, f64)>,
}

impl LinearRun {
    /// Largest `(‖f(t_{n+1})‖ - ‖f(t_n)‖)/Δt` over the run, floored at 0.
    pub fn norm_growth_rate(&self) -> f64 {
        self.norms
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .fold(0.0, f64::max)
    }
}

fn transport_half(field: &mut PhaseField, dt: f64) {
    let g = field.grid.clone();
    let nvel = g.n_vel();
    let v1: Vec<f64> = (0..nvel).map(|vi| g.v_point(vi)[0]).collect();
    field
        .data
        .par_chunks_mut(nvel)
        .enumerate()
        .for_each(|(mi, block)| {
            let m = g.mode(mi)[0] as f64;
            if m == 0.0 {
                return;
            }
            for (z, v) in block.iter_mut().zip(&v1) {
                *z *= C64::from_polar(1.0, -m * v * 0.5 * dt);
            }
        });
}

fn check_grid(f0: &PhaseField, spec: &LinearRunSpec) -> Result<()> {
    let g = &f0.grid;
    if g.dx != 1 || g.dv != 3 {
        return Err(Error::Contract(format!("linear runs need d_x = 1, d_v = 3 (got {}, {})", g.dx, g.dv)));
    }
    if g.m_max != spec.m_max || g.nv != spec.quad.n_v || (g.v_max - spec.quad.v_max).abs() > 1e-12 {
        return Err(Error::Mismatch {
            expected: format!("M = {}, N_v = {}, V = {}", spec.m_max, spec.quad.n_v, spec.quad.v_max),
            found: format!("M = {}, N_v = {}, V = {}", g.m_max, g.nv, g.v_max),
        });
    }
    Ok(())
}

/// Strang splitting: half transport (exact phase `e^{-imv_1 dt/2}`), full
/// collision `e^{-dt L}`, half transport. `op = None` is free transport.
/// Snapshots come back in velocity space, ordered by time.
pub fn evolve_linear(f0: &PhaseField, spec: &LinearRunSpec, op: Option<&LMatrix>) -> Result<LinearRun> {
    spec.validate()?;
    check_grid(f0, spec)?;
    let prop = match op {
        Some(l) => {
            l.check_compatible(&spec.kernel, &spec.quad)?;
            Some(CollisionPropagator::new(l, spec.dt))
        }
        None => None,
    };
    evolve_with(f0, spec, prop.as_ref())
}

/// As [`evolve_linear`] with a prebuilt propagator.
pub fn evolve_with(f0: &PhaseField, spec: &LinearRunSpec, prop: Option<&CollisionPropagator>) -> Result<LinearRun> {
    spec.validate()?;
    check_grid(f0, spec)?;
    if let Some(p) = prop {
        if (p.dt - spec.dt).abs() > 1e-15 * spec.dt || p.matrix.nrows() != f0.grid.n_vel() {
            return Err(Error::Mismatch {
                expected: format!("propagator for dt = {} on {} points", spec.dt, f0.grid.n_vel()),
                found: format!("dt = {}, {} points (sha256 {})", p.dt, p.matrix.nrows(), p.checksum),
            });
        }
    }
    let mut f = match f0.repr {
        Repr::VSpace => f0.clone(),
        Repr::EtaSpace => spectral::to_v(f0)?,
    };
    f.time = 0.0;
    let n_steps = spec.steps()?;
    let mut want: Vec<(usize, f64)> = spec
        .snapshots
        .iter()
        .map(|&t| spec.step_index(t).map(|i| (i, t)))
        .collect::<Result<_>>()?;
    want.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut snapshots = Vec::new();
    let mut norms = vec![(0.0, f.norm())];
    let mut next = 0;
    let nvel = f.grid.n_vel();
    for step in 0..=n_steps {
        while next < want.len() && want[next].0 == step {
            snapshots.push(f.clone().with_time(want[next].1));
            next += 1;
        }
        if step == n_steps {
            break;
        }
        transport_half(&mut f, spec.dt);
        if let Some(p) = prop {
            f.data.par_chunks_mut(nvel).for_each(|block| p.apply(block));
        }
        transport_half(&mut f, spec.dt);
        f.time = (step + 1) as f64 * spec.dt;
        norms.push((f.time, f.norm()));
    }
    Ok(LinearRun { snapshots, norms })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauFit {
    pub tau: f64,
    /// `(a_k (k+1)² / (k!)^τ)^{1/k}` for `k = 1..`.
    pub normalized: Vec<f64>,
    /// Consecutive ratios of `normalized`.
    pub ratios: Vec<f64>,
    /// `L` of the fit `a_k (k+1)²/(k!)^τ ≈ A L^k`.
    pub l_fit: f64,
    pub log_amplitude: f64,
    pub rms_residual: f64,
    /// Every ratio lies in `[0.2, 5]`.
    pub bounded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub delta: f64,
    /// `a_k = sup_t Σ_m ‖(H_δ^k f)(m)‖` for `k = 0..=k_used`.
    pub a: Vec<f64>,
    /// Orders dropped by the aliasing guard start here, if any.
    pub truncated_at: Option<usize>,
    pub fits: Vec<TauFit>,
}

/// `Σ_m ‖f(m) 1_{max_a |η_a| ≥ 3η_max/4}‖`, the edge part of the mixed norm.
fn edge_mixed_norm(f: &PhaseField) -> f64 {
    let g = &f.grid;
    let nvel = g.n_vel();
    let cut = 0.75 * g.eta_max();
    let edge: Vec<bool> = (0..nvel)
        .map(|vi| g.eta_point(vi)[..g.dv].iter().any(|x| x.abs() >= cut))
        .collect();
    (0..g.n_modes())
        .map(|mi| {
            let b = f.block(mi);
            let e: f64 = b.iter().zip(&edge).filter(|(_, &e)| e).map(|(z, _)| z.norm_sqr()).sum();
            (e * g.eta_measure()).sqrt()
        })
        .sum()
}

fn fit_tau(a: &[f64], tau: f64) -> TauFit {
    let y: Vec<(f64, f64)> = a
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(k, &v)| (k as f64, v.ln() + 2.0 * ((k + 1) as f64).ln() - tau * ln_factorial(k)))
        .collect();
    let normalized: Vec<f64> = y.iter().filter(|p| p.0 > 0.0).map(|&(k, l)| (l / k).exp()).collect();
    let ratios: Vec<f64> = normalized.windows(2).map(|w| w[1] / w[0]).collect();
    let bounded = normalized.iter().all(|x| x.is_finite()) && ratios.iter().all(|&r| (0.2..=5.0).contains(&r));
    let (l_fit, log_amplitude, rms_residual) = if y.len() >= 2 {
        let ones = vec![1.0; y.len()];
        let ks: Vec<f64> = y.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = y.iter().map(|p| p.1).collect();
        match lsq(&[ones, ks], &ys) {
            Some((c, sse)) => (c[1].exp(), c[0], (sse / y.len() as f64).sqrt()),
            None => (f64::NAN, f64::NAN, f64::NAN),
        }
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    TauFit {
        tau,
        normalized,
        ratios,
        l_fit,
        log_amplitude,
        rms_residual,
        bounded,
    }
}

/// `a_k` over the snapshots with `t > 0`, then the normalized sequence and
/// fit for each `τ` in `taus`.
pub fn growth_report(traj: &[PhaseField], delta: f64, k_max: usize, taus: &[f64]) -> Result<GrowthReport> {
    let pos: Vec<&PhaseField> = traj.iter().filter(|f| f.time > 0.0).collect();
    if pos.is_empty() {
        return Err(Error::Contract("growth_report needs a snapshot with t > 0".into()));
    }
    let horizon = pos.iter().map(|f| f.time).fold(1.0, f64::max);
    let hs = VectorFieldSpec::unchecked(delta, 1, horizon)?;
    let etas: Vec<PhaseField> = pos
        .iter()
        .map(|f| match f.repr {
            Repr::EtaSpace => Ok((*f).clone()),
            Repr::VSpace => spectral::to_eta(f),
        })
        .collect::<Result<_>>()?;
    let mut a = Vec::new();
    let mut truncated_at = None;
    'k: for k in 0..=k_max {
        let (mut best, mut edge): (f64, f64) = (0.0, 0.0);
        for f in &etas {
            let h = apply_h_pow(f, &hs, k as u32, f.time)?;
            best = best.max(h.mixed_norm());
            edge = edge.max(edge_mixed_norm(&h));
        }
        if k > 0 && edge > ALIAS_EDGE * best {
            truncated_at = Some(k);
            break 'k;
        }
        a.push(best);
    }
    let fits = taus.iter().map(|&tau| fit_tau(&a, tau)).collect();
    Ok(GrowthReport {
        delta,
        a,
        truncated_at,
        fits,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingEntry {
    pub n: usize,
    pub beta: [usize; 3],
    /// `sup_t t^{(1+2s)/(2s)(N+|β|)} Σ_m |m|^N ‖∂_v^β f̂(t, m)‖`.
    pub value: f64,
    pub finite: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub entries: Vec<SmoothingEntry>,
    /// `(t, ‖f̂(t, ±M)‖²)` for the outermost mode shell.
    pub shell: Vec<(f64, f64)>,
}

fn beta_list(beta_max: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for total in 0..=beta_max {
        for b0 in (0..=total).rev() {
            for b1 in (0..=total - b0).rev() {
                out.push([b0, b1, total - b0 - b1]);
            }
        }
    }
    out
}

pub fn smoothing_weights_report(traj: &[PhaseField], s: f64, n_max: usize, beta_max: usize) -> Result<SmoothingReport> {
    let first = traj
        .first()
        .ok_or_else(|| Error::Contract("smoothing report needs snapshots".into()))?;
    let g = first.grid.clone();
    let etas: Vec<PhaseField> = traj
        .iter()
        .map(|f| match f.repr {
            Repr::EtaSpace => Ok(f.clone()),
            Repr::VSpace => spectral::to_eta(f),
        })
        .collect::<Result<_>>()?;
    let nvel = g.n_vel();
    let expo = (1.0 + 2.0 * s) / (2.0 * s);
    let mut entries = Vec::new();
    for n in 0..=n_max {
        for beta in beta_list(beta_max) {
            let order = (n + beta.iter().sum::<usize>()) as f64;
            let mut best: f64 = 0.0;
            for f in &etas {
                let mut sum = 0.0;
                for mi in 0..g.n_modes() {
                    let m = g.mode(mi);
                    let wm = m.iter().map(|&c| (c.unsigned_abs() as f64).powi(n as i32)).product::<f64>();
                    if wm == 0.0 {
                        continue;
                    }
                    let mut acc = 0.0;
                    for vi in 0..nvel {
                        let eta = g.eta_point(vi);
                        let we: f64 = (0..g.dv).map(|a| eta[a].powi(beta[a] as i32)).product();
                        acc += (we * we) * f.data[mi * nvel + vi].norm_sqr();
                    }
                    sum += wm * (acc * g.eta_measure()).sqrt();
                }
                let w = if order == 0.0 { 1.0 } else { f.time.powf(expo * order) };
                best = best.max(w * sum);
            }
            entries.push(SmoothingEntry {
                n,
                beta,
                value: best,
                finite: best.is_finite(),
            });
        }
    }
    let outer: Vec<usize> = (0..g.n_modes())
        .filter(|&mi| g.mode(mi).iter().any(|&c| c.unsigned_abs() as usize == g.m_max))
        .collect();
    let shell = traj
        .iter()
        .map(|f| (f.time, outer.iter().map(|&mi| f.mode_norm_sq(mi)).sum()))
        .collect();
    Ok(SmoothingReport { entries, shell })
}

/// `true` when the series is strictly decreasing on `[t0, t1]` (at least
/// two samples).
pub fn decreasing_on(series: &[(f64, f64)], t0: f64, t1: f64) -> bool {
    let w: Vec<f64> = series
        .iter()
        .filter(|(t, _)| *t >= t0 - 1e-12 && *t <= t1 + 1e-12)
        .map(|p| p.1)
        .collect();
    w.len() >= 2 && w.windows(2).all(|p| p[1] < p[0])
}

/// `max ‖f_a - f_b‖ / ‖f_b - f_c‖` style Richardson ratio for three runs at
/// `dt, dt/2, dt/4` compared at their common final time.
pub fn richardson_ratio(coarse: &PhaseField, mid: &PhaseField, fine: &PhaseField) -> Result<f64> {
    let d1 = coarse.combine(C64::new(1.0, 0.0), mid, C64::new(-1.0, 0.0))?.norm();
    let d2 = mid.combine(C64::new(1.0, 0.0), fine, C64::new(-1.0, 0.0))?.norm();
    Ok(d1 / d2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::ModeGrid;

    fn spec(m: usize) -> LinearRunSpec {
        LinearRunSpec {
            m_max: m,
            quad: CollisionQuadrature::new(8, 5.0, 4, 4).unwrap(),
            kernel: KernelSpec::default(),
            dt: 0.1,
            t_end: 1.0,
            snapshots: vec![0.0, 0.5, 1.0],
            delta_list: vec![3.0],
            k_max: 4,
        }
    }

    #[test]
    fn free_transport_is_a_phase() {
        let g = ModeGrid::new(1, 2, 3, 8, 5.0).unwrap();
        let f0 = PhaseField::from_v_fn(&g, |m, v| {
            C64::new((-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 2.0).exp() / (1.0 + m[0].abs() as f64), 0.0)
        });
        let run = evolve_linear(&f0, &spec(2), None).unwrap();
        let last = run.snapshots.last().unwrap();
        let exact = PhaseField::from_v_fn(&g, |m, v| {
            let a = (-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 2.0).exp() / (1.0 + m[0].abs() as f64);
            C64::from_polar(a, -(m[0] as f64) * v[0])
        });
        assert!(last.max_abs_diff(&exact) < 1e-13);
        assert_eq!(run.snapshots.len(), 3);
    }

    #[test]
    fn snapshot_times_must_be_steps() {
        let mut s = spec(1);
        s.snapshots = vec![0.33];
        assert!(s.validate().is_err());
    }

    #[test]
    fn zero_field_has_zero_growth() {
        let g = ModeGrid::new(1, 1, 3, 8, 5.0).unwrap();
        let f = PhaseField::zeros(&g, Repr::VSpace).with_time(0.5);
        let r = growth_report(&[f], 3.0, 4, &[1.0]).unwrap();
        assert!(r.a.iter().all(|&x| x == 0.0));
    }
}

//! The time-weighted vector field
//! `H_δ = t^{δ+1}/(δ+1) ∂_{x_j} + t^δ ∂_{v_j}` as a Fourier multiplier, and
//! checks of its algebraic identities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, ModeGrid, PhaseField, Repr, C64};
use crate::toy::{self, ToySpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldSpec {
    pub delta: f64,
    /// Axis `j`, 1-based.
    pub axis: usize,
    pub horizon: f64,
}

fn relation_bound(s: f64) -> f64 {
    1.0 + 1.0 / (2.0 * s)
}

impl VectorFieldSpec {
    /// Validates `δ > 1 + 1/(2s)` against the active exponent `s`.
    pub fn new(delta: f64, axis: usize, horizon: f64, s: f64) -> Result<Self> {
        if !(delta > relation_bound(s)) {
            return Err(Error::OutOfRange {
                name: "delta",
                value: delta,
                reason: format!("need delta > 1 + 1/(2s) = {}", relation_bound(s)),
            });
        }
        Self::unchecked(delta, axis, horizon)
    }

    /// Skips the `δ` lower bound; used for purely algebraic checks.
    pub fn unchecked(delta: f64, axis: usize, horizon: f64) -> Result<Self> {
        if !(1..=3).contains(&axis) {
            return Err(Error::Contract(format!("axis {axis} not in 1..=3")));
        }
        if !(horizon >= 1.0) {
            return Err(Error::OutOfRange {
                name: "horizon",
                value: horizon,
                reason: "need T >= 1".into(),
            });
        }
        Ok(Self {
            delta,
            axis,
            horizon,
        })
    }
}

/// `i(t^{δ+1} m_j/(δ+1) + t^δ η_j)`; components beyond the slices count as 0.
pub fn h_symbol(spec: &VectorFieldSpec, t: f64, m: &[f64], eta: &[f64]) -> C64 {
    if t == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let j = spec.axis - 1;
    let mj = m.get(j).copied().unwrap_or(0.0);
    let ej = eta.get(j).copied().unwrap_or(0.0);
    let d = spec.delta;
    C64::new(0.0, t.powf(d + 1.0) * mj / (d + 1.0) + t.powf(d) * ej)
}

fn mode_f64(m: &[i64]) -> Vec<f64> {
    m.iter().map(|&x| x as f64).collect()
}

/// Applies `h(t, m, η)^k` to an EtaSpace field.
pub fn apply_h_pow(field: &PhaseField, spec: &VectorFieldSpec, k: u32, t: f64) -> Result<PhaseField> {
    if k == 0 {
        if field.repr != Repr::EtaSpace {
            return Err(Error::Contract("apply_h_pow expects an EtaSpace field".into()));
        }
        return Ok(field.clone());
    }
    spectral::apply_multiplier(field, |m, eta| h_symbol(spec, t, &mode_f64(m), eta).powu(k))
}

/// Source of exact values along transport characteristics.
pub trait CharacteristicSolution {
    fn grid(&self) -> &ModeGrid;

    /// EtaSpace array whose entry at grid frequency `η` is `F(t+τ, m, η - τm)`.
    fn along_characteristic(&self, t: f64, tau: f64) -> Result<PhaseField>;
}

/// Any time-indexed family of EtaSpace fields, moved onto the characteristic
/// by modulation.
pub struct SnapshotSolution<F: Fn(f64) -> Result<PhaseField>> {
    pub grid: ModeGrid,
    pub field_at: F,
}

impl<F: Fn(f64) -> Result<PhaseField>> CharacteristicSolution for SnapshotSolution<F> {
    fn grid(&self) -> &ModeGrid {
        &self.grid
    }

    fn along_characteristic(&self, t: f64, tau: f64) -> Result<PhaseField> {
        let f = (self.field_at)(t + tau)?;
        spectral::modulate_shift(&f, -tau)
    }
}

/// The exact γ = 0 toy solution. Along a characteristic the shifted datum
/// `F₀(m, η + tm)` is unchanged, so only `ψ` is re-evaluated.
pub struct ToyExactSolution {
    pub f0: PhaseField,
    pub spec: ToySpec,
}

impl CharacteristicSolution for ToyExactSolution {
    fn grid(&self) -> &ModeGrid {
        &self.f0.grid
    }

    fn along_characteristic(&self, t: f64, tau: f64) -> Result<PhaseField> {
        let eta0 = match self.f0.repr {
            Repr::EtaSpace => self.f0.clone(),
            Repr::VSpace => spectral::to_eta(&self.f0)?,
        };
        let mut out = spectral::modulate_shift(&eta0, t)?;
        let g = out.grid.clone();
        let nvel = g.n_vel();
        let (s, tol) = (self.spec.s, self.spec.quad_tol);
        for mi in 0..g.n_modes() {
            let m = mode_f64(&g.mode(mi));
            for vi in 0..nvel {
                let mut eta = g.eta_point(vi);
                for i in 0..g.dx {
                    eta[i] -= tau * m[i];
                }
                out.data[mi * nvel + vi] *= (-toy::psi(t + tau, &m, &eta[..g.dv], s, tol)).exp();
            }
        }
        out.time = t + tau;
        Ok(out)
    }
}

/// `H^k P(H^j F) - P(H^{j+k} F)` with `P = ∂_t + v·∂_x` realized by a
/// central difference along characteristics.
pub fn commutator_field(
    spec: &VectorFieldSpec,
    j: u32,
    k: u32,
    t: f64,
    h_t: f64,
    sol: &dyn CharacteristicSolution,
) -> Result<PhaseField> {
    if !(t - h_t > 0.0) {
        return Err(Error::Contract(format!("need t - h_t > 0 (t={t}, h_t={h_t})")));
    }
    let fc = sol.along_characteristic(t, 0.0)?;
    let fp = sol.along_characteristic(t, h_t)?;
    let fm = sol.along_characteristic(t, -h_t)?;
    let g = fc.grid.clone();
    let nvel = g.n_vel();
    let mut out = fc.clone();
    for mi in 0..g.n_modes() {
        let m = mode_f64(&g.mode(mi));
        for vi in 0..nvel {
            let eta = g.eta_point(vi);
            let mut ep = eta;
            let mut em = eta;
            for i in 0..g.dx {
                ep[i] -= h_t * m[i];
                em[i] += h_t * m[i];
            }
            let hc = h_symbol(spec, t, &m, &eta[..g.dv]);
            let hp = h_symbol(spec, t + h_t, &m, &ep[..g.dv]);
            let hm = h_symbol(spec, t - h_t, &m, &em[..g.dv]);
            let idx = mi * nvel + vi;
            let p_inner = (hp.powu(j) * fp.data[idx] - hm.powu(j) * fm.data[idx]) / (2.0 * h_t);
            let p_outer = (hp.powu(j + k) * fp.data[idx] - hm.powu(j + k) * fm.data[idx]) / (2.0 * h_t);
            out.data[idx] = hc.powu(k) * p_inner - p_outer;
        }
    }
    Ok(out)
}

/// `-δ k t^{δ-1} ∂_{v_j} H^{k-1} F` at time `t`.
pub fn commutator_rhs(spec: &VectorFieldSpec, k: u32, t: f64, sol: &dyn CharacteristicSolution) -> Result<PhaseField> {
    let fc = sol.along_characteristic(t, 0.0)?;
    let d = spec.delta;
    let coef = -d * k as f64 * t.powf(d - 1.0);
    let ax = spec.axis - 1;
    spectral::apply_multiplier(&fc, |m, eta| {
        let e = eta.get(ax).copied().unwrap_or(0.0);
        let h = h_symbol(spec, t, &mode_f64(m), eta);
        C64::new(0.0, e) * h.powu(k.saturating_sub(1)) * coef
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorResidual {
    pub k: u32,
    pub h_t: f64,
    /// Relative residual, or absolute when `absolute` is set.
    pub residual: f64,
    pub absolute: bool,
}

pub fn commutator_residual(
    spec: &VectorFieldSpec,
    k: u32,
    t: f64,
    h_t: f64,
    sol: &dyn CharacteristicSolution,
) -> Result<CommutatorResidual> {
    let lhs = commutator_field(spec, 0, k, t, h_t, sol)?;
    let rhs = commutator_rhs(spec, k, t, sol)?;
    let diff = lhs.combine(C64::new(1.0, 0.0), &rhs, C64::new(-1.0, 0.0))?.norm();
    let rn = rhs.norm();
    let absolute = rn < 1e-14;
    Ok(CommutatorResidual {
        k,
        h_t,
        residual: if absolute { diff } else { diff / rn },
        absolute,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaPair {
    pub lambda: f64,
    pub delta1: f64,
    pub delta2: f64,
}

pub fn delta_pair(lambda: f64, s: f64) -> Result<DeltaPair> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::OutOfRange {
            name: "s",
            value: s,
            reason: "need 0 < s < 1".into(),
        });
    }
    if !(lambda > relation_bound(s)) {
        return Err(Error::OutOfRange {
            name: "lambda",
            value: lambda,
            reason: format!("need lambda > 1 + 1/(2s) = {}", relation_bound(s)),
        });
    }
    let delta2 = if s < 0.5 {
        1.0 + 2.0 * s + (1.0 - 2.0 * s) * lambda
    } else {
        0.5 * (lambda + 1.0 + 1.0 / (2.0 * s))
    };
    let pair = DeltaPair {
        lambda,
        delta1: lambda,
        delta2,
    };
    assert!(
        pair.delta1 > pair.delta2 && pair.delta2 > relation_bound(s),
        "delta ordering violated: {pair:?}"
    );
    Ok(pair)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationResidual {
    pub abs_x: f64,
    pub abs_v: f64,
    /// Residuals scaled by the largest term of each identity.
    pub rel_x: f64,
    pub rel_v: f64,
}

fn scaled(diff: f64, terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(0.0, f64::max);
    if m == 0.0 {
        diff
    } else {
        diff / m
    }
}

/// Symbol-level check that `t^{λ+1}∂_{x_1}` and `t^λ∂_{v_1}` are the stated
/// combinations of `H_{δ_1}` and `t^{δ_1-δ_2}H_{δ_2}`.
pub fn generation_check(pair: &DeltaPair, t: f64, m: &[f64], eta: &[f64]) -> GenerationResidual {
    let (d1, d2) = (pair.delta1, pair.delta2);
    let s1 = VectorFieldSpec {
        delta: d1,
        axis: 1,
        horizon: 1.0,
    };
    let s2 = VectorFieldSpec {
        delta: d2,
        axis: 1,
        horizon: 1.0,
    };
    let h1 = h_symbol(&s1, t, m, eta);
    let h2 = h_symbol(&s2, t, m, eta) * t.powf(d1 - d2);
    let m1 = m.first().copied().unwrap_or(0.0);
    let e1 = eta.first().copied().unwrap_or(0.0);

    let lhs_x = C64::new(0.0, t.powf(pair.lambda + 1.0) * m1);
    let kx = (d2 + 1.0) * (d1 + 1.0) / (d2 - d1);
    let (ax, bx) = (h1 * kx, h2 * (-kx));
    let abs_x = (lhs_x - ax - bx).norm();

    let lhs_v = C64::new(0.0, t.powf(pair.lambda) * e1);
    let (av, bv) = (h1 * (-(d1 + 1.0) / (d2 - d1)), h2 * ((d2 + 1.0) / (d2 - d1)));
    let abs_v = (lhs_v - av - bv).norm();

    GenerationResidual {
        abs_x,
        abs_v,
        rel_x: scaled(abs_x, &[lhs_x.norm(), ax.norm(), bx.norm()]),
        rel_v: scaled(abs_v, &[lhs_v.norm(), av.norm(), bv.norm()]),
    }
}

/// `‖(A₁+A₂)^k f‖ / (2^k(‖A₁^k f‖ + ‖A₂^k f‖))`.
pub fn split_inequality_check<A1, A2>(a1: A1, a2: A2, k: u32, field: &PhaseField) -> Result<f64>
where
    A1: Fn(&[i64], &[f64]) -> C64,
    A2: Fn(&[i64], &[f64]) -> C64,
{
    let lhs = spectral::apply_multiplier(field, |m, e| (a1(m, e) + a2(m, e)).powu(k))?.norm();
    let r1 = spectral::apply_multiplier(field, |m, e| a1(m, e).powu(k))?.norm();
    let r2 = spectral::apply_multiplier(field, |m, e| a2(m, e).powu(k))?.norm();
    let rhs = 2f64.powi(k as i32) * (r1 + r2);
    Ok(if rhs == 0.0 { 0.0 } else { lhs / rhs })
}

/// Scaled derivatives `H̃_p(x) = e^{x²/4} d^p/dx^p e^{-x²/4}` for `p = 0..=p_max`,
/// from `H̃_{p+1} = -(x/2)H̃_p - (p/2)H̃_{p-1}`.
pub fn hermite_scaled(p_max: usize, x: f64) -> Vec<f64> {
    let mut h = Vec::with_capacity(p_max + 1);
    h.push(1.0);
    if p_max >= 1 {
        h.push(-x / 2.0);
    }
    for p in 1..p_max {
        let next = -(x / 2.0) * h[p] - (p as f64 / 2.0) * h[p - 1];
        h.push(next);
    }
    h
}

/// `μ^{1/2}(v) = (2π)^{-3/4} e^{-|v|²/4}`.
pub fn sqrt_maxwellian(v: &[f64]) -> f64 {
    let r2: f64 = v.iter().map(|x| x * x).sum();
    (2.0 * std::f64::consts::PI).powf(-0.75) * (-r2 / 4.0).exp()
}

/// `t^{δp} ∂_{v_1}^p μ^{1/2}(v)`.
pub fn h_weight(delta: f64, t: f64, p: usize, v: &[f64]) -> f64 {
    let h = hermite_scaled(p, v[0]);
    t.powf(delta * p as f64) * h[p] * sqrt_maxwellian(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianBound {
    pub worst_ratio: f64,
    pub worst_p: usize,
    pub worst_v: [f64; 3],
}

/// Worst `|t^{δp}∂_{v_1}^p μ^{1/2}| / ((2T^δ)^p p! μ^{1/4})` at `t = T` over
/// the given velocity points and `p ≤ p_max`.
pub fn gaussian_bound_check(delta: f64, horizon: f64, p_max: usize, points: &[[f64; 3]]) -> Result<GaussianBound> {
    if p_max > 12 {
        return Err(Error::OutOfRange {
            name: "p_max",
            value: p_max as f64,
            reason: "need p_max <= 12".into(),
        });
    }
    let mut best = GaussianBound {
        worst_ratio: 0.0,
        worst_p: 0,
        worst_v: [0.0; 3],
    };
    let tp = horizon.powf(delta);
    for v in points {
        let r2: f64 = v.iter().map(|x| x * x).sum();
        let mu14 = (2.0 * std::f64::consts::PI).powf(-0.375) * (-r2 / 8.0).exp();
        let mu12 = (2.0 * std::f64::consts::PI).powf(-0.75) * (-r2 / 4.0).exp();
        let h = hermite_scaled(p_max, v[0]);
        let mut fact = 1.0;
        for p in 0..=p_max {
            if p > 0 {
                fact *= p as f64;
            }
            if !h[p].is_finite() {
                return Err(Error::Format(format!("Hermite recurrence overflow at p = {p}")));
            }
            let num = tp.powi(p as i32) * h[p].abs() * mu12;
            let den = (2.0 * tp).powi(p as i32) * fact * mu14;
            let ratio = num / den;
            if ratio > best.worst_ratio {
                best = GaussianBound {
                    worst_ratio: ratio,
                    worst_p: p,
                    worst_v: *v,
                };
            }
        }
    }
    Ok(best)
}

/// Exact toy data evolved to `t` (EtaSpace), a convenience for the checks above.
pub fn toy_snapshot(f0: &PhaseField, t: f64, spec: &ToySpec) -> Result<PhaseField> {
    toy::exact_evolve(f0, t, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_arithmetic() {
        let spec = VectorFieldSpec::unchecked(1.0, 1, 1.0).unwrap();
        assert_eq!(h_symbol(&spec, 1.0, &[2.0], &[3.0]), C64::new(0.0, 4.0));
        assert_eq!(h_symbol(&spec, 0.0, &[2.0], &[3.0]), C64::new(0.0, 0.0));
    }

    #[test]
    fn delta_pair_branches() {
        let p = delta_pair(4.0, 0.25).unwrap();
        assert_eq!((p.delta1, p.delta2), (4.0, 3.5));
        let p = delta_pair(4.0, 0.5).unwrap();
        assert_eq!((p.delta1, p.delta2), (4.0, 3.0));
        assert!(delta_pair(2.0, 0.25).is_err());
    }

    #[test]
    fn hermite_low_orders() {
        let x = 0.7;
        let h = hermite_scaled(3, x);
        assert!((h[2] - (x * x / 4.0 - 0.5)).abs() < 1e-15);
        assert!((h[3] - (-x * x * x / 8.0 + 3.0 * x / 4.0)).abs() < 1e-15);
    }
}

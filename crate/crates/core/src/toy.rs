//! Fractional kinetic Fokker–Planck toy models
//! `∂_t g + v·∂_x g + ⟨v⟩^γ (-Δ_v)^s g = 0`, exact (γ = 0) and split-step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::spectral::{self, PhaseField, Repr, C64};

/// Stability constant of the explicit four-stage integrator.
pub const C_STAB: f64 = 2.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub s: f64,
    pub gamma: f64,
    pub t_end: f64,
    pub quad_tol: f64,
}

impl ToySpec {
    pub fn new(s: f64, gamma: f64, t_end: f64, quad_tol: f64) -> Result<Self> {
        let spec = Self {
            s,
            gamma,
            t_end,
            quad_tol,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::OutOfRange {
                name: "s",
                value: self.s,
                reason: "need 0 < s < 1".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::OutOfRange {
                name: "gamma",
                value: self.gamma,
                reason: "need 0 <= gamma <= 1".into(),
            });
        }
        if !(self.t_end > 0.0) {
            return Err(Error::OutOfRange {
                name: "t_end",
                value: self.t_end,
                reason: "need t_end > 0".into(),
            });
        }
        if !(self.quad_tol > 0.0 && self.quad_tol <= 1e-6) {
            return Err(Error::OutOfRange {
                name: "quad_tol",
                value: self.quad_tol,
                reason: "need 0 < quad_tol <= 1e-6".into(),
            });
        }
        Ok(())
    }
}

/// Coefficients of `|η + ρm|² = aρ² + bρ + c` and the squared distance of
/// `η` from the line spanned by `m`, times `|m|²`.
fn quadratic(m: &[f64], eta: &[f64]) -> (f64, f64, f64, f64) {
    let a: f64 = m.iter().map(|x| x * x).sum();
    let c: f64 = eta.iter().map(|x| x * x).sum();
    let dot: f64 = m.iter().zip(eta).map(|(x, y)| x * y).sum();
    let mut perp = 0.0;
    for i in 0..m.len() {
        for j in (i + 1)..m.len() {
            let w = m[i] * eta[j] - m[j] * eta[i];
            perp += w * w;
        }
    }
    let tail: f64 = eta.iter().skip(m.len()).map(|x| x * x).sum();
    perp += a * tail;
    (a, 2.0 * dot, c, perp)
}

fn signed_power(x: f64, p: f64) -> f64 {
    x.signum() * x.abs().powf(p)
}

/// `ψ(t, m, η) = ∫₀ᵗ |η + ρm|^{2s} dρ`. The pairing `η + ρm` uses the first
/// `m.len()` components of `η`.
pub fn psi(t: f64, m: &[f64], eta: &[f64], s: f64, tol: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let (a, b, c, perp) = quadratic(m, eta);
    if a == 0.0 {
        return t * c.powf(s);
    }
    if s == 1.0 {
        return t * c + t * t * b / 2.0 + t * t * t * a / 3.0;
    }
    let rho_star = -b / (2.0 * a);
    if perp == 0.0 {
        let p = 2.0 * s + 1.0;
        return a.powf(s) * (signed_power(t - rho_star, p) - signed_power(-rho_star, p)) / p;
    }
    if s == 0.5 {
        return sqrt_quadratic_integral(t, a, b, c, 4.0 * perp);
    }
    psi_quadrature(t, a, b, c, s, tol)
}

/// `∫₀ᵗ √(aρ² + bρ + c) dρ` for `a > 0` and `4ac - b² = disc > 0`.
fn sqrt_quadratic_integral(t: f64, a: f64, b: f64, c: f64, disc: f64) -> f64 {
    let prim = |r: f64| {
        let q = (a * r * r + b * r + c).max(0.0);
        let y = 2.0 * a * r + b;
        y * q.sqrt() / (4.0 * a) + disc / (8.0 * a.powf(1.5)) * (y / disc.sqrt()).asinh()
    };
    prim(t) - prim(0.0)
}

/// Adaptive quadrature of `∫₀ᵗ (aρ² + bρ + c)^s dρ`, split at the closest
/// approach `ρ* = -b/2a`.
pub fn psi_quadrature(t: f64, a: f64, b: f64, c: f64, s: f64, tol: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if a <= 0.0 {
        return t * c.max(0.0).powf(s);
    }
    let rs = -b / (2.0 * a);
    let q0 = (c - b * b / (4.0 * a)).max(0.0);
    let f = |r: f64| (a * (r - rs) * (r - rs) + q0).powf(s);
    let brk = vec![rs];
    quad::adaptive(f, 0.0, t, &brk, tol)
}

fn mode_f64(m: &[i64]) -> Vec<f64> {
    m.iter().map(|&x| x as f64).collect()
}

/// Exact solution of the γ = 0 model: `F(t,m,η) = e^{-ψ(t,m,η)} F₀(m, η + tm)`.
pub fn exact_evolve(f0: &PhaseField, t: f64, spec: &ToySpec) -> Result<PhaseField> {
    if spec.gamma != 0.0 {
        return Err(Error::Contract("exact_evolve requires gamma = 0".into()));
    }
    let eta0 = match f0.repr {
        Repr::EtaSpace => f0.clone(),
        Repr::VSpace => spectral::to_eta(f0)?,
    };
    let mut out = spectral::modulate_shift(&eta0, t)?;
    let g = out.grid.clone();
    let nvel = g.n_vel();
    let (s, tol) = (spec.s, spec.quad_tol);
    out.data
        .par_chunks_mut(nvel)
        .enumerate()
        .for_each(|(mi, block)| {
            let m = mode_f64(&g.mode(mi));
            for (vi, z) in block.iter_mut().enumerate() {
                let eta = g.eta_point(vi);
                *z *= (-psi(t, &m, &eta[..g.dv], s, tol)).exp();
            }
        });
    out.time = f0.time + t;
    Ok(out)
}

/// Largest stable step for the diffusion substep.
pub fn max_stable_dt(grid: &spectral::ModeGrid, gamma: f64, s: f64) -> f64 {
    let dvf = grid.dv as f64;
    let eta = dvf.sqrt() * grid.eta_max();
    let weight = (1.0 + dvf * grid.v_max * grid.v_max).sqrt().powf(gamma);
    C_STAB / (weight * eta.powf(2.0 * s))
}

fn diffusion_rhs(f: &PhaseField, spec: &ToySpec, weight: Option<&[f64]>) -> Result<PhaseField> {
    let s = spec.s;
    let lap = spectral::apply_multiplier(f, |_, eta| {
        let r2: f64 = eta.iter().map(|x| x * x).sum();
        C64::new(-r2.powf(s), 0.0)
    })?;
    match weight {
        None => Ok(lap),
        Some(w) => {
            let mut v = spectral::to_v(&lap)?;
            let nvel = v.grid.n_vel();
            for block in v.data.chunks_mut(nvel) {
                for (z, wi) in block.iter_mut().zip(w) {
                    *z *= *wi;
                }
            }
            spectral::to_eta(&v)
        }
    }
}

fn rk4(f: &PhaseField, spec: &ToySpec, dt: f64, weight: Option<&[f64]>) -> Result<PhaseField> {
    let one = C64::new(1.0, 0.0);
    let k1 = diffusion_rhs(f, spec, weight)?;
    let k2 = diffusion_rhs(&f.combine(one, &k1, C64::new(dt / 2.0, 0.0))?, spec, weight)?;
    let k3 = diffusion_rhs(&f.combine(one, &k2, C64::new(dt / 2.0, 0.0))?, spec, weight)?;
    let k4 = diffusion_rhs(&f.combine(one, &k3, C64::new(dt, 0.0))?, spec, weight)?;
    let mut out = f.clone();
    for i in 0..out.data.len() {
        out.data[i] += (k1.data[i] + 2.0 * k2.data[i] + 2.0 * k3.data[i] + k4.data[i]) * (dt / 6.0);
    }
    Ok(out)
}

/// Strang splitting: half transport, four-stage diffusion step, half
/// transport. Returns the final field and `‖F‖` after every step.
pub fn step_evolve_with_norms(
    f0: &PhaseField,
    spec: &ToySpec,
    dt: f64,
    n_steps: usize,
) -> Result<(PhaseField, Vec<f64>)> {
    spec.validate()?;
    let mut f = match f0.repr {
        Repr::EtaSpace => f0.clone(),
        Repr::VSpace => spectral::to_eta(f0)?,
    };
    if n_steps == 0 {
        return Ok((f0.clone(), vec![f0.norm()]));
    }
    let g = f.grid.clone();
    let max_dt = max_stable_dt(&g, spec.gamma, spec.s);
    if !(dt > 0.0) || dt > max_dt {
        return Err(Error::Stability {
            dt,
            max_dt,
            suggested: 0.9 * max_dt,
        });
    }
    spectral::check_shift(&g, dt * n_steps as f64)?;
    let weight: Option<Vec<f64>> = if spec.gamma == 0.0 {
        None
    } else {
        Some(
            (0..g.n_vel())
                .map(|vi| {
                    let v = g.v_point(vi);
                    let r2: f64 = v.iter().map(|x| x * x).sum();
                    (1.0 + r2).powf(spec.gamma / 2.0)
                })
                .collect(),
        )
    };
    let mut norms = vec![f.norm()];
    let t0 = f.time;
    for step in 0..n_steps {
        f = spectral::modulate_shift(&f, dt / 2.0)?;
        f = rk4(&f, spec, dt, weight.as_deref())?;
        f = spectral::modulate_shift(&f, dt / 2.0)?;
        f.time = t0 + (step + 1) as f64 * dt;
        norms.push(f.norm());
    }
    Ok((f, norms))
}

pub fn step_evolve(f0: &PhaseField, spec: &ToySpec, dt: f64, n_steps: usize) -> Result<PhaseField> {
    step_evolve_with_norms(f0, spec, dt, n_steps).map(|r| r.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquivScan {
    pub s: f64,
    pub t: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `min(min_ratio, 1/max_ratio)`.
    pub c: f64,
}

/// Ratio `ψ / [t(|η|² + t²|m|²)^s]` over every grid point except the origin.
pub fn equiv_scan(grid: &spectral::ModeGrid, s: f64, t: f64, tol: f64) -> EquivScan {
    let nvel = grid.n_vel();
    let (lo, hi) = (0..grid.n_modes())
        .into_par_iter()
        .map(|mi| {
            let m = mode_f64(&grid.mode(mi));
            let m2: f64 = m.iter().map(|x| x * x).sum();
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for vi in 0..nvel {
                let eta = grid.eta_point(vi);
                let e2: f64 = eta.iter().map(|x| x * x).sum();
                let base = e2 + t * t * m2;
                if base == 0.0 {
                    continue;
                }
                let r = psi(t, &m, &eta[..grid.dv], s, tol) / (t * base.powf(s));
                lo = lo.min(r);
                hi = hi.max(r);
            }
            (lo, hi)
        })
        .reduce(|| (f64::INFINITY, 0.0), |x, y| (x.0.min(y.0), x.1.max(y.1)));
    EquivScan {
        s,
        t,
        min_ratio: lo,
        max_ratio: hi,
        c: lo.min(1.0 / hi),
    }
}

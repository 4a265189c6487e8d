use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{axis_values, field_axis_values, forward_spectrum, translate, Fft3};
use super::{
    displacement, gamma_apply, gamma_apply_modes, l_apply, sigma_nodes, CollisionQuadrature, KernelSpec, ModeVelField,
    SepWeight, VelField,
};
use crate::error::{Error, Result};
use crate::spectral::C64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleNormValue {
    pub value: f64,
    pub part1: f64,
    pub part2: f64,
    /// Set when a negative roundoff part below `-1e-12` was clipped.
    pub clipped: bool,
}

/// `(f, g)` over the grid, conjugating `g`.
pub fn inner(f: &[C64], g: &[C64], q: &CollisionQuadrature) -> C64 {
    f.iter().zip(g).map(|(a, b)| a * b.conj()).sum::<C64>() * q.dv().powi(3)
}

pub fn l2_norm(f: &VelField, q: &CollisionQuadrature) -> f64 {
    let v = f.values(q);
    inner(&v, &v, q).re.max(0.0).sqrt()
}

/// `‖(1+|η|²)^{s/2} f̂‖` of the band-limited interpolant of the grid values.
pub fn hs_norm(f: &VelField, s: f64, q: &CollisionQuadrature) -> f64 {
    let n = q.n_v;
    let fft = Fft3::new(n);
    let spec = forward_spectrum(&fft, &f.values(q));
    let dv = q.dv();
    let eta = |k: usize| {
        let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        2.0 * PI * kk / (n as f64 * dv)
    };
    let mut acc = 0.0;
    for (i, z) in spec.iter().enumerate() {
        let (a, b, c) = (eta(i / (n * n)), eta((i / n) % n), eta(i % n));
        acc += (1.0 + a * a + b * b + c * c).powf(s) * z.norm_sqr();
    }
    (acc * dv.powi(3) / (n * n * n) as f64).sqrt()
}

/// Both integrals of the triple norm by the collision quadrature.
pub fn triple_norm(f: &VelField, k: &KernelSpec, q: &CollisionQuadrature) -> Result<TripleNormValue> {
    k.validate()?;
    q.validate()?;
    let n = q.n_v;
    let np = q.n_points();
    if f.samples.len() != np {
        return Err(Error::Mismatch {
            expected: format!("{np} samples"),
            found: format!("{}", f.samples.len()),
        });
    }
    let fft = Fft3::new(n);
    let spec = forward_spectrum(&fft, &f.samples);
    let vals = f.values(q);
    let axis = q.v_axis();
    let dv = q.dv();
    let cell = dv.powi(3);
    let nodes = sigma_nodes(k, q);
    let mu = SepWeight::maxwellian();
    let smu = SepWeight::sqrt_maxwellian();
    let lattice = q.u_lattice();
    let prod = |w: &[Vec<f64>; 3], j: usize| w[0][j / (n * n)] * w[1][(j / n) % n] * w[2][j % n];
    let parts: Vec<(f64, f64)> = lattice
        .par_chunks(16)
        .map(|chunk| {
            let (mut p1, mut p2) = (0.0, 0.0);
            let (mut ft, mut tmp) = (Vec::new(), Vec::new());
            for &(_, u) in chunk {
                let ru = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
                let wu = cell * ru.powf(k.gamma);
                let mu_star = axis_values(&mu, &axis, [-u[0], -u[1], -u[2]]);
                let s_at_v = axis_values(&smu, &axis, u);
                for nd in &nodes {
                    let d = displacement(u, nd);
                    let w = wu * nd.weight;
                    translate(&fft, &spec, d, dv, &mut ft, &mut tmp);
                    let fw = field_axis_values(&f.weight, &axis, d, q.support_radius());
                    let s_at_vp = axis_values(&smu, &axis, [u[0] + d[0], u[1] + d[1], u[2] + d[2]]);
                    let mut a1 = 0.0;
                    let mut a2 = 0.0;
                    for j in 0..np {
                        let fp = ft[j] * (f.weight.coef * prod(&fw, j));
                        a1 += mu.coef * prod(&mu_star, j) * (vals[j] - fp).norm_sqr();
                        let ds = smu.coef * (prod(&s_at_vp, j) - prod(&s_at_v, j));
                        a2 += vals[j].norm_sqr() * ds * ds;
                    }
                    p1 += w * a1;
                    p2 += w * a2;
                }
            }
            (p1 * cell, p2 * cell)
        })
        .collect();
    let (mut part1, mut part2) = (0.0, 0.0);
    for (a, b) in parts {
        part1 += a;
        part2 += b;
    }
    let clipped = part1 < -1e-12 || part2 < -1e-12;
    let (part1, part2) = (part1.max(0.0), part2.max(0.0));
    Ok(TripleNormValue {
        value: (part1 + part2).sqrt(),
        part1,
        part2,
        clipped,
    })
}

/// Gaussian-modulated random trigonometric polynomial of degree one per
/// axis: `e^{-a|v|²} Σ_k c_k e^{2πi k·(v+V)/L}` with real values.
pub fn random_smooth_field(q: &CollisionQuadrature, rng: &mut ChaCha8Rng, complex: bool) -> VelField {
    let a = rng.random_range(0.25..0.5);
    let l = 2.0 * q.v_max;
    let mut terms = Vec::new();
    for k0 in -1i32..=1 {
        for k1 in -1i32..=1 {
            for k2 in -1i32..=1 {
                let re = rng.random_range(-1.0..1.0);
                let im = if complex { rng.random_range(-1.0..1.0) } else { 0.0 };
                let ph = rng.random_range(0.0..2.0 * PI);
                terms.push(([k0, k1, k2], re, im, ph));
            }
        }
    }
    let samples = (0..q.n_points())
        .map(|i| {
            let p = q.point(i);
            let mut z = C64::new(0.0, 0.0);
            for (kk, re, im, ph) in &terms {
                let arg = 2.0 * PI * (0..3).map(|a| kk[a] as f64 * (p[a] + q.v_max)).sum::<f64>() / l + ph;
                z += C64::new(*re, *im) * arg.cos();
            }
            z
        })
        .collect();
    VelField {
        samples,
        weight: SepWeight::gaussian(1.0, a),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Minimum (coercivity) or maximum (trilinear) ratio.
    pub value: f64,
    pub ratios: Vec<f64>,
    pub skipped: usize,
    pub seed: u64,
}

fn finish(ratios: Vec<f64>, skipped: usize, seed: u64, take_min: bool) -> ProbeReport {
    let value = if take_min {
        ratios.iter().cloned().fold(f64::INFINITY, f64::min)
    } else {
        ratios.iter().cloned().fold(0.0, f64::max)
    };
    ProbeReport {
        value,
        ratios,
        skipped,
        seed,
    }
}

/// `min ((Lf, f) + ‖f‖²) / ⦀f⦀²` over random smooth `f`.
pub fn coercivity_probe(n_samples: usize, seed: u64, k: &KernelSpec, q: &CollisionQuadrature) -> Result<ProbeReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields: Vec<VelField> = (0..n_samples).map(|_| random_smooth_field(q, &mut rng, false)).collect();
    let mut ratios = Vec::new();
    let mut skipped = 0;
    for f in &fields {
        let lf = l_apply(f, k, q)?;
        let v = f.values(q);
        let num = inner(lf.values(), &v, q).re + inner(&v, &v, q).re;
        let t = triple_norm(f, k, q)?.value;
        if t * t < 1e-300 {
            skipped += 1;
            continue;
        }
        ratios.push(num / (t * t));
    }
    Ok(finish(ratios, skipped, seed, true))
}

/// `max |(Γ(f,g), h)| / (‖f‖ ⦀g⦀ ⦀h⦀)` over random smooth triples.
pub fn trilinear_probe(n_samples: usize, seed: u64, k: &KernelSpec, q: &CollisionQuadrature) -> Result<ProbeReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::new();
    let mut skipped = 0;
    for _ in 0..n_samples {
        let f = random_smooth_field(q, &mut rng, false);
        let g = random_smooth_field(q, &mut rng, false);
        let h = random_smooth_field(q, &mut rng, false);
        let gam = gamma_apply(&f, &g, k, q)?;
        let num = inner(gam.values(), &h.values(q), q).norm();
        let den = l2_norm(&f, q) * triple_norm(&g, k, q)?.value * triple_norm(&h, k, q)?.value;
        if den < 1e-300 {
            skipped += 1;
            continue;
        }
        ratios.push(num / den);
    }
    Ok(finish(ratios, skipped, seed, false))
}

fn random_modes(q: &CollisionQuadrature, rng: &mut ChaCha8Rng, m_max: i64) -> ModeVelField {
    let base = random_smooth_field(q, rng, true);
    let modes = (-m_max..=m_max)
        .map(|m| {
            let f = random_smooth_field(q, rng, true);
            let scale = rng.random_range(0.2..1.0);
            (
                m,
                VelField {
                    samples: f.samples.iter().map(|z| z * scale).collect(),
                    weight: base.weight.clone(),
                },
            )
        })
        .collect();
    ModeVelField { modes }
}

/// Mode-resolved version: `max_m |(Γ̂(f̂,ĝ)(m), ĥ(m))| /
/// (⦀ĥ(m)⦀ Σ_ℓ ‖f̂(m-ℓ)‖ ⦀ĝ(ℓ)⦀)` over random multi-mode triples.
pub fn trilinear_probe_fourier(
    n_samples: usize,
    seed: u64,
    m_max: i64,
    k: &KernelSpec,
    q: &CollisionQuadrature,
) -> Result<ProbeReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::new();
    let mut skipped = 0;
    for _ in 0..n_samples {
        let f = random_modes(q, &mut rng, m_max);
        let g = random_modes(q, &mut rng, m_max);
        let h = random_modes(q, &mut rng, m_max);
        let gam = gamma_apply_modes(&f, &g, k, q)?;
        let fn_: Vec<(i64, f64)> = f.modes.iter().map(|(m, x)| (*m, l2_norm(x, q))).collect();
        let gt: Vec<(i64, f64)> = g
            .modes
            .iter()
            .map(|(m, x)| triple_norm(x, k, q).map(|t| (*m, t.value)))
            .collect::<Result<_>>()?;
        let mut best: f64 = 0.0;
        for (m, hm) in &h.modes {
            let out = match gam.mode(*m) {
                Some(o) => o,
                None => continue,
            };
            let num = inner(out, &hm.values(q), q).norm();
            let conv: f64 = gt
                .iter()
                .filter_map(|(l, tg)| fn_.iter().find(|(mf, _)| *mf == m - l).map(|(_, nf)| nf * tg))
                .sum();
            let den = triple_norm(hm, k, q)?.value * conv;
            if den < 1e-300 {
                skipped += 1;
                continue;
            }
            best = best.max(num / den);
        }
        ratios.push(best);
    }
    Ok(finish(ratios, skipped, seed, false))
}

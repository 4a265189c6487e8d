use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::engine::{forward_spectrum, translate, Fft3};
use super::{t_apply_modes, CollisionQuadrature, KernelSpec, ModeVelField, Omega, SepWeight, VelField};
use crate::error::{Error, Result};
use crate::spectral::C64;

const D1: [f64; 7] = [-1.0 / 60.0, 3.0 / 20.0, -3.0 / 4.0, 0.0, 3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
const D2: [f64; 7] = [
    1.0 / 90.0,
    -3.0 / 20.0,
    3.0 / 2.0,
    -49.0 / 18.0,
    3.0 / 2.0,
    -3.0 / 20.0,
    1.0 / 90.0,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeibnizReport {
    pub k: u32,
    pub residual: f64,
    pub norm_a: f64,
    pub norm_b: f64,
}

fn binom(n: u32, r: u32) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn eta_axis0(q: &CollisionQuadrature) -> Vec<f64> {
    let n = q.n_v;
    (0..n)
        .map(|k| {
            if k == n / 2 {
                0.0
            } else {
                let kk = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
                2.0 * PI * kk / (n as f64 * q.dv())
            }
        })
        .collect()
}

fn nyquist_content(spec: &[C64], n: usize) -> f64 {
    let mut m: f64 = 0.0;
    for (i, z) in spec.iter().enumerate() {
        let ix = [i / (n * n), (i / n) % n, i % n];
        if ix.contains(&(n / 2)) {
            m = m.max(z.norm());
        }
    }
    m
}

/// Drops every spectral component on a Nyquist plane of the samples.
pub fn remove_nyquist(f: &VelField, q: &CollisionQuadrature) -> VelField {
    let n = q.n_v;
    let fft = Fft3::new(n);
    let mut spec = forward_spectrum(&fft, &f.samples);
    for (i, z) in spec.iter_mut().enumerate() {
        let ix = [i / (n * n), (i / n) % n, i % n];
        if ix.contains(&(n / 2)) {
            *z = C64::new(0.0, 0.0);
        }
    }
    let mut tmp = Vec::new();
    fft.run(&mut spec, &mut tmp, false);
    let s = 1.0 / (n * n * n) as f64;
    VelField {
        samples: spec.into_iter().map(|z| z * s).collect(),
        weight: f.weight.clone(),
    }
}

/// `H f` with `H = α ∂_x + β ∂_{v_1}` acting spectrally on the samples.
fn apply_h(f: &ModeVelField, alpha: f64, beta: f64, q: &CollisionQuadrature, fft: &Fft3) -> ModeVelField {
    let n = q.n_v;
    let eta = eta_axis0(q);
    let s = 1.0 / (n * n * n) as f64;
    let modes = f
        .modes
        .iter()
        .map(|(m, x)| {
            let mut spec = forward_spectrum(fft, &x.samples);
            for (i, z) in spec.iter_mut().enumerate() {
                *z *= C64::new(0.0, alpha * *m as f64 + beta * eta[i / (n * n)]) * s;
            }
            let mut tmp = Vec::new();
            fft.run(&mut spec, &mut tmp, false);
            (
                *m,
                VelField {
                    samples: spec,
                    weight: x.weight.clone(),
                },
            )
        })
        .collect();
    ModeVelField { modes }
}

fn translated(f: &ModeVelField, e: f64, q: &CollisionQuadrature, fft: &Fft3) -> ModeVelField {
    let modes = f
        .modes
        .iter()
        .map(|(m, x)| {
            let spec = forward_spectrum(fft, &x.samples);
            let (mut out, mut tmp) = (Vec::new(), Vec::new());
            translate(fft, &spec, [e, 0.0, 0.0], q.dv(), &mut out, &mut tmp);
            (
                *m,
                VelField {
                    samples: out,
                    weight: x.weight.clone(),
                },
            )
        })
        .collect();
    ModeVelField { modes }
}

fn accumulate(dst: &mut Vec<(i64, Vec<C64>)>, src: &[(i64, Vec<C64>)], c: C64) {
    for (m, v) in src {
        match dst.iter_mut().find(|(k, _)| k == m) {
            Some((_, d)) => {
                for (x, y) in d.iter_mut().zip(v) {
                    *x += y * c;
                }
            }
            None => dst.push((*m, v.iter().map(|y| y * c).collect())),
        }
    }
}

/// `H_δ^k Γ̂(f̂, f̂)` two ways: (a) `Γ̂` evaluated at points shifted along
/// `v_1`, differentiated by 7-point central differences with step `fd_step`
/// and combined with the exact `im` factor; (b) the Leibniz sum of
/// `T̂(H^{k-j}f, H^{j-p}f, H^pμ^{1/2})` with `H` applied spectrally.
pub fn leibniz_gamma_check(
    delta: f64,
    k: u32,
    t: f64,
    f: &ModeVelField,
    kern: &KernelSpec,
    q: &CollisionQuadrature,
    fd_step: f64,
) -> Result<LeibnizReport> {
    if k > 2 {
        return Err(Error::OutOfRange {
            name: "k",
            value: k as f64,
            reason: "need k <= 2".into(),
        });
    }
    if q.n_v > 16 {
        return Err(Error::Budget(format!("Leibniz check refuses N_v = {} > 16", q.n_v)));
    }
    if f.modes.iter().any(|(m, _)| m.abs() > 2) {
        return Err(Error::Contract("modes must satisfy |m| <= 2".into()));
    }
    if f.modes.iter().any(|(_, x)| !x.weight.is_one()) {
        return Err(Error::Contract("Leibniz check needs sample-represented fields".into()));
    }
    let fft = Fft3::new(q.n_v);
    for (m, x) in &f.modes {
        let spec = forward_spectrum(&fft, &x.samples);
        let nyq = nyquist_content(&spec, q.n_v);
        let scale = spec.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if nyq > 1e-12 * scale.max(1e-300) {
            return Err(Error::Contract(format!(
                "mode {m} has Nyquist content {nyq:.3e}; apply remove_nyquist first"
            )));
        }
    }
    let alpha = t.powf(delta + 1.0) / (delta + 1.0);
    let beta = t.powf(delta);
    let smu = SepWeight::sqrt_maxwellian();

    // route (a)
    let mut route_a: Vec<(i64, Vec<C64>)> = Vec::new();
    let offsets: Vec<i32> = if k == 0 { vec![0] } else { (-3..=3).collect() };
    let mut samples = Vec::new();
    for &i in &offsets {
        let e = i as f64 * fd_step;
        let fe = if i == 0 { f.clone() } else { translated(f, e, q, &fft) };
        let om = Omega::Analytic(smu.shifted([e, 0.0, 0.0]));
        samples.push(t_apply_modes(&fe, &fe, &om, kern, q)?.modes);
    }
    let center = offsets.iter().position(|&i| i == 0).unwrap();
    for r in 0..=k {
        let mut deriv: Vec<(i64, Vec<C64>)> = Vec::new();
        if r == 0 {
            accumulate(&mut deriv, &samples[center], C64::new(1.0, 0.0));
        } else {
            let (w, hp) = if r == 1 { (&D1, fd_step) } else { (&D2, fd_step * fd_step) };
            for (idx, s) in samples.iter().enumerate() {
                if w[idx] != 0.0 {
                    accumulate(&mut deriv, s, C64::new(w[idx] / hp, 0.0));
                }
            }
        }
        let c = binom(k, r) * beta.powi(r as i32);
        for (m, v) in deriv {
            let x = C64::new(0.0, alpha * m as f64).powu(k - r) * c;
            accumulate(&mut route_a, &[(m, v)], x);
        }
    }

    // route (b)
    let mut hf = vec![f.clone()];
    for _ in 0..k {
        let next = apply_h(hf.last().unwrap(), alpha, beta, q, &fft);
        hf.push(next);
    }
    let mut route_b: Vec<(i64, Vec<C64>)> = Vec::new();
    for j in 0..=k {
        for p in 0..=j {
            let om = Omega::Analytic(SepWeight::h_sqrt_maxwellian(delta, t, p as usize));
            let term = t_apply_modes(&hf[(k - j) as usize], &hf[(j - p) as usize], &om, kern, q)?;
            accumulate(&mut route_b, &term.modes, C64::new(binom(k, j) * binom(j, p), 0.0));
        }
    }

    let (mut diff, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (m, a) in &route_a {
        let b = route_b
            .iter()
            .find(|(k, _)| k == m)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Contract(format!("route (b) lacks mode {m}")))?;
        for (x, y) in a.iter().zip(b) {
            diff += (x - y).norm_sqr();
            na += x.norm_sqr();
            nb += y.norm_sqr();
        }
    }
    let (na, nb) = (na.sqrt(), nb.sqrt());
    Ok(LeibnizReport {
        k,
        residual: if na > 0.0 { diff.sqrt() / na } else { diff.sqrt() },
        norm_a: na,
        norm_b: nb,
    })
}

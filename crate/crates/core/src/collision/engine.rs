use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::{displacement, sigma_nodes, CollisionOutput, CollisionQuadrature, KernelSpec, SepWeight, VelField};
use crate::error::{Error, Result};
use crate::spectral::C64;

/// Weight `ω(v_*)` of the trilinear operator.
#[derive(Clone, Debug, PartialEq)]
pub enum Omega {
    One,
    Analytic(SepWeight),
    /// Grid values, read at lattice points `v - u`.
    Sampled(Vec<f64>),
}

const U_CHUNK: usize = 16;

/// Unnormalized 3D FFT on an `n³` row-major cube.
pub(crate) struct Fft3 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    pub(crate) fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            n,
            fwd: p.plan_fft_forward(n),
            inv: p.plan_fft_inverse(n),
        }
    }

    pub(crate) fn run(&self, data: &mut [C64], tmp: &mut Vec<C64>, forward: bool) {
        let n = self.n;
        let fft = if forward { &self.fwd } else { &self.inv };
        tmp.resize(n * n * n, C64::new(0.0, 0.0));
        fft.process(data);
        // axis 1
        for i0 in 0..n {
            let base = i0 * n * n;
            for i1 in 0..n {
                for i2 in 0..n {
                    tmp[base + i2 * n + i1] = data[base + i1 * n + i2];
                }
            }
        }
        fft.process(tmp);
        for i0 in 0..n {
            let base = i0 * n * n;
            for i1 in 0..n {
                for i2 in 0..n {
                    data[base + i1 * n + i2] = tmp[base + i2 * n + i1];
                }
            }
        }
        // axis 0
        for i0 in 0..n {
            for r in 0..n * n {
                tmp[r * n + i0] = data[i0 * n * n + r];
            }
        }
        fft.process(tmp);
        for i0 in 0..n {
            for r in 0..n * n {
                data[i0 * n * n + r] = tmp[r * n + i0];
            }
        }
    }
}

/// Per-axis spectral multipliers realizing a translation by `s` of the
/// band-limited interpolant (symmetric Nyquist treatment).
pub(crate) fn shift_phases(n: usize, dv: f64, s: f64) -> Vec<C64> {
    (0..n)
        .map(|k| {
            if k == n / 2 {
                C64::new((PI / dv * s).cos(), 0.0)
            } else {
                let kk = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
                let eta = 2.0 * PI * kk / (n as f64 * dv);
                C64::from_polar(1.0, eta * s)
            }
        })
        .collect()
}

/// Values of the interpolant of `spec` (forward FFT of samples) at `v_j + s`.
pub(crate) fn translate(fft: &Fft3, spec: &[C64], s: [f64; 3], dv: f64, out: &mut Vec<C64>, tmp: &mut Vec<C64>) {
    let n = fft.n;
    let p: Vec<Vec<C64>> = (0..3).map(|a| shift_phases(n, dv, s[a])).collect();
    let norm = 1.0 / (n * n * n) as f64;
    out.resize(n * n * n, C64::new(0.0, 0.0));
    for k0 in 0..n {
        for k1 in 0..n {
            let c = p[0][k0] * p[1][k1] * norm;
            let base = (k0 * n + k1) * n;
            for k2 in 0..n {
                out[base + k2] = spec[base + k2] * c * p[2][k2];
            }
        }
    }
    fft.run(out, tmp, false);
}

pub(crate) fn forward_spectrum(fft: &Fft3, samples: &[C64]) -> Vec<C64> {
    let mut d = samples.to_vec();
    let mut tmp = Vec::new();
    fft.run(&mut d, &mut tmp, true);
    d
}

/// Per-axis products of a separable weight over the grid axis evaluated
/// at `x_j + off[a]` (coefficient excluded).
pub(crate) fn axis_values(w: &SepWeight, axis: &[f64], off: [f64; 3]) -> [Vec<f64>; 3] {
    let f = |a: usize| -> Vec<f64> {
        if w.axes[a].is_one() {
            vec![1.0; axis.len()]
        } else {
            axis.iter().map(|&x| w.axes[a].eval(x + off[a])).collect()
        }
    };
    [f(0), f(1), f(2)]
}

/// As [`axis_values`] for a field operand: zero wherever the evaluation
/// point leaves `[-R, R]` with `R` the support radius.
pub(crate) fn field_axis_values(w: &SepWeight, axis: &[f64], off: [f64; 3], r: f64) -> [Vec<f64>; 3] {
    let mut v = axis_values(w, axis, off);
    for a in 0..3 {
        for (j, x) in axis.iter().enumerate() {
            if !in_box(x + off[a], r) {
                v[a][j] = 0.0;
            }
        }
    }
    v
}

pub(crate) fn in_box(x: f64, r: f64) -> bool {
    x.abs() <= r * (1.0 + 1e-12)
}

fn outer3(a: &[Vec<f64>; 3], b: &[Vec<f64>; 3], c: Option<&[Vec<f64>; 3]>, out: &mut Vec<f64>) {
    let n = a[0].len();
    out.resize(n * n * n, 0.0);
    let ax = |i: usize, j: usize| a[i][j] * b[i][j] * c.map_or(1.0, |c| c[i][j]);
    let x0: Vec<f64> = (0..n).map(|j| ax(0, j)).collect();
    let x1: Vec<f64> = (0..n).map(|j| ax(1, j)).collect();
    let x2: Vec<f64> = (0..n).map(|j| ax(2, j)).collect();
    for i0 in 0..n {
        for i1 in 0..n {
            let c01 = x0[i0] * x1[i1];
            let base = (i0 * n + i1) * n;
            for i2 in 0..n {
                out[base + i2] = c01 * x2[i2];
            }
        }
    }
}

fn shared_weight<'a>(ops: &[(i64, &'a VelField)]) -> Result<&'a SepWeight> {
    let w = &ops
        .first()
        .ok_or_else(|| Error::Contract("empty operand list".into()))?
        .1
        .weight;
    if ops.iter().any(|(_, f)| &f.weight != w) {
        return Err(Error::Contract("all modes of an operand must share one weight".into()));
    }
    Ok(w)
}

/// `out(m) = W_out(v) Σ_{u,σ} B ω(v_*) Σ_{a+b=m} [A_a(v'_*) B_b(v') - A_a(v_*) B_b(v)]`
/// on the grid, with gain and loss combined node by node.
pub(crate) fn collide(
    k: &KernelSpec,
    q: &CollisionQuadrature,
    a_ops: &[(i64, &VelField)],
    b_ops: &[(i64, &VelField)],
    omega: &Omega,
    out_weight: Option<&SepWeight>,
) -> Result<CollisionOutput> {
    k.validate()?;
    q.validate()?;
    let n = q.n_v;
    let np = q.n_points();
    for (_, f) in a_ops.iter().chain(b_ops) {
        if f.samples.len() != np {
            return Err(Error::Mismatch {
                expected: format!("{np} samples"),
                found: format!("{}", f.samples.len()),
            });
        }
    }
    if let Omega::Sampled(w) = omega {
        if w.len() != np {
            return Err(Error::Mismatch {
                expected: format!("{np} omega samples"),
                found: format!("{}", w.len()),
            });
        }
    }
    let wa = shared_weight(a_ops)?;
    let wb = shared_weight(b_ops)?;
    let boundary_max = a_ops
        .iter()
        .chain(b_ops)
        .map(|(_, f)| f.boundary_max(q))
        .fold(0.0, f64::max);

    let mut out_modes: Vec<i64> = Vec::new();
    for (ma, _) in a_ops {
        for (mb, _) in b_ops {
            if !out_modes.contains(&(ma + mb)) {
                out_modes.push(ma + mb);
            }
        }
    }
    out_modes.sort();
    let pairs: Vec<(usize, usize, usize)> = a_ops
        .iter()
        .enumerate()
        .flat_map(|(ia, (ma, _))| {
            let om = &out_modes;
            b_ops
                .iter()
                .enumerate()
                .map(move |(ib, (mb, _))| (ia, ib, om.iter().position(|&m| m == ma + mb).unwrap()))
        })
        .collect();

    let fft = Fft3::new(n);
    let a_spec: Vec<Vec<C64>> = a_ops.iter().map(|(_, f)| forward_spectrum(&fft, &f.samples)).collect();
    let b_spec: Vec<Vec<C64>> = b_ops.iter().map(|(_, f)| forward_spectrum(&fft, &f.samples)).collect();
    let nodes = sigma_nodes(k, q);
    let lattice = q.u_lattice();
    let axis = q.v_axis();
    let dv = q.dv();
    let cell = dv.powi(3);
    let b_loss = axis_values(wb, &axis, [0.0; 3]);
    let coef_omega = match omega {
        Omega::Analytic(w) => w.coef,
        _ => 1.0,
    };
    let coef = wa.coef * wb.coef * coef_omega;

    let n_out = out_modes.len();
    let partials: Vec<Vec<Vec<C64>>> = lattice
        .par_chunks(U_CHUNK)
        .map(|chunk| {
            let mut acc = vec![vec![C64::new(0.0, 0.0); np]; n_out];
            let mut tmp = Vec::new();
            let mut at: Vec<Vec<C64>> = vec![Vec::new(); a_ops.len()];
            let mut bt: Vec<Vec<C64>> = vec![Vec::new(); b_ops.len()];
            let mut gfac = Vec::new();
            let mut lfac = Vec::new();
            let mut a_loss_idx = vec![0usize; np];
            for &(iu, u) in chunk {
                let ru = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
                let wu = cell * ru.powf(k.gamma);
                let mu = [-u[0], -u[1], -u[2]];
                let om_axes = match omega {
                    Omega::Analytic(w) => Some(axis_values(w, &axis, mu)),
                    _ => None,
                };
                let a_l = field_axis_values(wa, &axis, mu, q.support_radius());
                outer3(&a_l, &b_loss, om_axes.as_ref(), &mut lfac);
                let wrap = |j: usize, i: i64| ((j as i64 - i).rem_euclid(n as i64)) as usize;
                for j0 in 0..n {
                    for j1 in 0..n {
                        for j2 in 0..n {
                            a_loss_idx[(j0 * n + j1) * n + j2] =
                                (wrap(j0, iu[0]) * n + wrap(j1, iu[1])) * n + wrap(j2, iu[2]);
                        }
                    }
                }
                let om_sampled: Option<Vec<f64>> = match omega {
                    Omega::Sampled(w) => Some(a_loss_idx.iter().map(|&i| w[i]).collect()),
                    _ => None,
                };
                for node in &nodes {
                    let d = displacement(u, node);
                    let w = wu * node.weight;
                    let sa = [-u[0] - d[0], -u[1] - d[1], -u[2] - d[2]];
                    for (i, s) in a_spec.iter().enumerate() {
                        translate(&fft, s, sa, dv, &mut at[i], &mut tmp);
                    }
                    for (i, s) in b_spec.iter().enumerate() {
                        translate(&fft, s, d, dv, &mut bt[i], &mut tmp);
                    }
                    let a_g = field_axis_values(wa, &axis, sa, q.support_radius());
                    let b_g = field_axis_values(wb, &axis, d, q.support_radius());
                    outer3(&a_g, &b_g, om_axes.as_ref(), &mut gfac);
                    for &(ia, ib, io) in &pairs {
                        let (ag, bg) = (&at[ia], &bt[ib]);
                        let (al, bl) = (&a_ops[ia].1.samples, &b_ops[ib].1.samples);
                        let dst = &mut acc[io];
                        match &om_sampled {
                            None => {
                                for j in 0..np {
                                    let gain = ag[j] * bg[j] * gfac[j];
                                    let loss = al[a_loss_idx[j]] * bl[j] * lfac[j];
                                    dst[j] += (gain - loss) * w;
                                }
                            }
                            Some(os) => {
                                for j in 0..np {
                                    let gain = ag[j] * bg[j] * gfac[j];
                                    let loss = al[a_loss_idx[j]] * bl[j] * lfac[j];
                                    dst[j] += (gain - loss) * (w * os[j]);
                                }
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect();

    let mut total = vec![vec![C64::new(0.0, 0.0); np]; n_out];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part) {
            for (x, y) in t.iter_mut().zip(p) {
                *x += y;
            }
        }
    }
    let mut clipped = 0;
    let wout: Option<Vec<f64>> = out_weight.map(|w| (0..np).map(|i| w.eval(q.point(i))).collect());
    for t in total.iter_mut() {
        for (j, x) in t.iter_mut().enumerate() {
            let mut c = coef;
            if let Some(wo) = &wout {
                c *= wo[j];
            }
            let y = *x * c;
            if y.re.is_finite() && y.im.is_finite() {
                *x = y;
            } else {
                *x = C64::new(0.0, 0.0);
                clipped += 1;
            }
        }
    }
    Ok(CollisionOutput {
        modes: out_modes.into_iter().zip(total).collect(),
        boundary_max,
        clipped,
    })
}

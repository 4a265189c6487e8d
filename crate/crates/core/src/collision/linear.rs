use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    displacement, engine, sigma_nodes, CollisionOutput, CollisionQuadrature, KernelSpec, Omega, SepWeight, VelField,
};
use crate::error::{Error, Result};
use crate::spectral::C64;

/// Largest assembly cost (multiply-adds) accepted without an override.
pub const L_BUDGET: f64 = 2e10;

const MAGIC: &[u8; 8] = b"KINLMAT1";

fn gamma_pair_ops<'a>(
    sqrt_mu: &'a VelField,
    fields: &'a [VelField],
) -> (Vec<(i64, &'a VelField)>, Vec<(i64, &'a VelField)>) {
    let a = vec![(0, sqrt_mu)];
    let b = fields.iter().enumerate().map(|(i, f)| (i as i64, f)).collect();
    (a, b)
}

/// `(Γ(μ^{1/2}, f), Γ(f, μ^{1/2}))` for each field.
fn gamma_pairs(fields: &[VelField], k: &KernelSpec, q: &CollisionQuadrature) -> Result<Vec<(Vec<C64>, Vec<C64>)>> {
    let w = SepWeight::sqrt_maxwellian();
    let mu = VelField::analytic(q, SepWeight::maxwellian());
    let weighted: Vec<VelField> = fields
        .iter()
        .map(|f| {
            Ok(VelField {
                samples: f.samples.clone(),
                weight: f.weight.mul(&w)?,
            })
        })
        .collect::<Result<_>>()?;
    let inv = SepWeight::inv_sqrt_maxwellian();
    let (a, b) = gamma_pair_ops(&mu, &weighted);
    let first = engine::collide(k, q, &a, &b, &Omega::One, Some(&inv))?;
    let second = engine::collide(k, q, &b, &a, &Omega::One, Some(&inv))?;
    Ok((0..fields.len())
        .map(|i| {
            let x = first.mode(i as i64).unwrap().to_vec();
            let y = second.mode(i as i64).unwrap().to_vec();
            (x, y)
        })
        .collect())
}

/// `L f = -Γ(μ^{1/2}, f) - Γ(f, μ^{1/2})` for several fields at once.
pub fn l_apply_batch(fields: &[VelField], k: &KernelSpec, q: &CollisionQuadrature) -> Result<Vec<Vec<C64>>> {
    if fields.is_empty() {
        return Ok(Vec::new());
    }
    Ok(gamma_pairs(fields, k, q)?
        .into_iter()
        .map(|(x, y)| x.iter().zip(&y).map(|(p, q)| -(p + q)).collect())
        .collect())
}

/// Residuals of `L` on `μ^{1/2}, v_1μ^{1/2}, v_2μ^{1/2}, v_3μ^{1/2}, |v|²μ^{1/2}`,
/// each `‖Lφ‖ / (S_b ‖φ‖)` with `S_b = ∫b dσ` the operator scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullSpaceReport {
    pub residuals: [f64; 5],
    pub absolute: [f64; 5],
}

pub fn null_space_residuals(k: &KernelSpec, q: &CollisionQuadrature) -> Result<NullSpaceReport> {
    let mut fields = vec![VelField::analytic(q, SepWeight::sqrt_maxwellian())];
    for a in 0..3 {
        fields.push(VelField::analytic(q, SepWeight::monomial_sqrt_maxwellian(a, 1)));
    }
    for a in 0..3 {
        fields.push(VelField::analytic(q, SepWeight::monomial_sqrt_maxwellian(a, 2)));
    }
    let mut pairs = Vec::new();
    for f in &fields {
        pairs.extend(gamma_pairs(std::slice::from_ref(f), k, q)?);
    }
    let sq: Vec<(Vec<C64>, Vec<C64>)> = pairs.drain(4..).collect();
    let add = |a: &[C64], b: &[C64], c: &[C64]| -> Vec<C64> { (0..a.len()).map(|i| a[i] + b[i] + c[i]).collect() };
    pairs.push((add(&sq[0].0, &sq[1].0, &sq[2].0), add(&sq[0].1, &sq[1].1, &sq[2].1)));
    let nrm = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut phi: Vec<Vec<C64>> = fields[..4].iter().map(|f| f.values(q)).collect();
    let sq: Vec<Vec<C64>> = fields[4..].iter().map(|f| f.values(q)).collect();
    phi.push(add(&sq[0], &sq[1], &sq[2]));
    let mut residuals = [0.0; 5];
    let mut absolute = [0.0; 5];
    for (i, (x, y)) in pairs.iter().enumerate() {
        let l: Vec<C64> = x.iter().zip(y).map(|(p, q)| p + q).collect();
        absolute[i] = nrm(&l) * q.dv().powf(1.5);
        residuals[i] = nrm(&l) / (k.sphere_weight() * nrm(&phi[i]));
    }
    Ok(NullSpaceReport { residuals, absolute })
}

pub fn l_apply(f: &VelField, k: &KernelSpec, q: &CollisionQuadrature) -> Result<CollisionOutput> {
    let mut v = l_apply_batch(std::slice::from_ref(f), k, q)?;
    Ok(CollisionOutput {
        modes: vec![(0, v.pop().unwrap())],
        boundary_max: f.boundary_max(q),
        clipped: 0,
    })
}

/// Periodic band-limited interpolation kernel for an impulse at the origin.
fn kernel_1d(n: usize, l: f64, x: f64) -> f64 {
    let mut s = 1.0 + (PI * n as f64 * x / l).cos();
    for k in 1..n / 2 {
        s += 2.0 * (2.0 * PI * k as f64 * x / l).cos();
    }
    s / n as f64
}

/// Dense `L` on the grid basis (values at grid points, real).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LMatrix {
    pub kernel: KernelSpec,
    pub quad: CollisionQuadrature,
    pub dim: usize,
    /// Row-major entries.
    #[serde(skip)]
    pub data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kernel: KernelSpec,
    quad: CollisionQuadrature,
    dim: usize,
    sha256: String,
}

fn cost(k: &KernelSpec, q: &CollisionQuadrature) -> f64 {
    let nodes = sigma_nodes(k, q).len() as f64;
    let np = q.n_points() as f64;
    q.u_lattice().len() as f64 * nodes * 2.0 * np * np
}

/// Assembles `L` node by node as Kronecker products of per-axis
/// interpolation matrices; refuses above `N_v = 16` or the cost budget.
pub fn l_matrix(k: &KernelSpec, q: &CollisionQuadrature) -> Result<LMatrix> {
    l_matrix_with_override(k, q, false)
}

pub fn l_matrix_with_override(k: &KernelSpec, q: &CollisionQuadrature, allow: bool) -> Result<LMatrix> {
    k.validate()?;
    q.validate()?;
    let c = cost(k, q);
    if !allow && (q.n_v > 16 || c > L_BUDGET) {
        return Err(Error::Budget(format!(
            "L assembly at N_v = {} needs ~{c:.2e} multiply-adds (budget {L_BUDGET:.0e}); pass an override",
            q.n_v
        )));
    }
    let n = q.n_v;
    let np = q.n_points();
    let axis = q.v_axis();
    let dv = q.dv();
    let period = n as f64 * dv;
    let nodes = sigma_nodes(k, q);
    let lattice = q.u_lattice();
    let coef = (2.0 * PI).powf(-1.5);
    let cell = dv.powi(3);

    let parts: Vec<Vec<f64>> = lattice
        .par_chunks(32)
        .map(|chunk| {
            let mut m = vec![0.0; np * np];
            let mut g = [vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n]];
            for &(iu, u) in chunk {
                let ru = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
                let wu = cell * ru.powf(k.gamma) * coef;
                let wsum: f64 = nodes.iter().map(|nd| nd.weight).sum::<f64>() * wu;
                for r in 0..np {
                    let (r0, r1, r2) = (r / (n * n), (r / n) % n, r % n);
                    let v = [axis[r0], axis[r1], axis[r2]];
                    let mut diag = 1.0;
                    let mut perm = 1.0;
                    for a in 0..3 {
                        let x = v[a] - u[a];
                        diag *= (-0.5 * x * x).exp();
                        perm *= (0.25 * v[a] * v[a] - 0.25 * x * x - 0.5 * v[a] * v[a]).exp();
                    }
                    if (0..3).all(|a| engine::in_box(v[a] - u[a], q.support_radius())) {
                        m[r * np + r] += wsum * diag;
                    }
                    let w = |j: usize, i: i64| ((j as i64 - i).rem_euclid(n as i64)) as usize;
                    let col = (w(r0, iu[0]) * n + w(r1, iu[1])) * n + w(r2, iu[2]);
                    if (0..3).all(|a| engine::in_box(v[a] - u[a], q.support_radius())) {
                        m[r * np + col] += wsum * perm;
                    }
                }
                for nd in &nodes {
                    let d = displacement(u, nd);
                    let w = -wu * nd.weight;
                    for term in 0..2 {
                        for a in 0..3 {
                            for i in 0..n {
                                let v = axis[i];
                                let vs = v - u[a] - d[a];
                                let vp = v + d[a];
                                let (fac, at, other) = if term == 0 {
                                    ((0.25 * v * v - 0.5 * vs * vs - 0.25 * vp * vp).exp(), vp, vs)
                                } else {
                                    ((0.25 * v * v - 0.25 * vs * vs - 0.5 * vp * vp).exp(), vs, vp)
                                };
                                let r = q.support_radius();
                                let fac = if engine::in_box(at, r) && engine::in_box(other, r) { fac } else { 0.0 };
                                for j in 0..n {
                                    g[a][i * n + j] = fac * kernel_1d(n, period, at - axis[j]);
                                }
                            }
                        }
                        for r0 in 0..n {
                            for c0 in 0..n {
                                let x0 = w * g[0][r0 * n + c0];
                                for r1 in 0..n {
                                    for c1 in 0..n {
                                        let x01 = x0 * g[1][r1 * n + c1];
                                        let row = (r0 * n + r1) * n;
                                        let colb = (c0 * n + c1) * n;
                                        for r2 in 0..n {
                                            let dst = &mut m[(row + r2) * np + colb..(row + r2) * np + colb + n];
                                            let gr = &g[2][r2 * n..r2 * n + n];
                                            for c2 in 0..n {
                                                dst[c2] += x01 * gr[c2];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            m
        })
        .collect();
    let mut data = vec![0.0; np * np];
    for p in parts {
        for (x, y) in data.iter_mut().zip(p) {
            *x += y;
        }
    }
    Ok(LMatrix {
        kernel: k.clone(),
        quad: q.clone(),
        dim: np,
        data,
    })
}

impl LMatrix {
    pub fn apply(&self, f: &[C64]) -> Result<Vec<C64>> {
        if f.len() != self.dim {
            return Err(Error::Mismatch {
                expected: format!("vector of length {}", self.dim),
                found: format!("{}", f.len()),
            });
        }
        Ok((0..self.dim)
            .map(|r| {
                let row = &self.data[r * self.dim..(r + 1) * self.dim];
                row.iter().zip(f).map(|(a, x)| x * *a).sum()
            })
            .collect())
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    /// `(L + Lᵀ)/2` weighted by the cell measure, i.e. the quadratic form
    /// `f ↦ (Lf, f)` on real grid values.
    pub fn symmetric_form(&self) -> DMatrix<f64> {
        let m = self.to_dmatrix();
        (&m + m.transpose()) * (0.5 * self.quad.dv().powi(3))
    }

    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for x in &self.data {
            h.update(x.to_le_bytes());
        }
        hex_string(&h.finalize())
    }

    /// Container: magic, header length (u64 LE), JSON header with grid,
    /// kernel and SHA-256 of the payload, then row-major f64 LE entries.
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = serde_json::to_vec(&Header {
            kernel: self.kernel.clone(),
            quad: self.quad.clone(),
            dim: self.dim,
            sha256: self.checksum(),
        })
        .map_err(|e| Error::Format(e.to_string()))?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(MAGIC)?;
        f.write_all(&(header.len() as u64).to_le_bytes())?;
        f.write_all(&header)?;
        for x in &self.data {
            f.write_all(&x.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 16 || &buf[..8] != MAGIC {
            return Err(Error::Format("not an operator container".into()));
        }
        let hl = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
        let body = buf
            .get(16..16 + hl)
            .ok_or_else(|| Error::Format("truncated header".into()))?;
        let h: Header = serde_json::from_slice(body).map_err(|e| Error::Format(e.to_string()))?;
        let payload = &buf[16 + hl..];
        if payload.len() != h.dim * h.dim * 8 {
            return Err(Error::Format(format!(
                "payload has {} bytes, expected {}",
                payload.len(),
                h.dim * h.dim * 8
            )));
        }
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let m = LMatrix {
            kernel: h.kernel,
            quad: h.quad,
            dim: h.dim,
            data,
        };
        let sum = m.checksum();
        if sum != h.sha256 {
            return Err(Error::Mismatch {
                expected: h.sha256,
                found: sum,
            });
        }
        Ok(m)
    }

    /// Errors unless this matrix was built for `(k, q)`.
    pub fn check_compatible(&self, k: &KernelSpec, q: &CollisionQuadrature) -> Result<()> {
        if &self.kernel != k || &self.quad != q {
            return Err(Error::Mismatch {
                expected: format!("{k:?} {q:?}"),
                found: format!("{:?} {:?} (sha256 {})", self.kernel, self.quad, self.checksum()),
            });
        }
        Ok(())
    }
}

pub(crate) fn hex_string(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

//! Non-cutoff collision operators `Q`, `Γ`, `T` and `L` by tensor quadrature
//! over `(v_*, σ)`, with off-grid values from band-limited interpolation.
//!
//! Velocity fields carry an optional separable analytic weight; a field's
//! value at any point `p` is `weight(p) · interp(samples)(p)`. Weights are
//! evaluated at unwrapped physical points, so Gaussian factors such as `μ`
//! and `μ^{1/2}` enter the quadrature without interpolation error. Fields
//! are the periodic interpolant on `[-R, R]³` with `R = V + Δv/2` (a half-cell
//! halo that keeps grazing gain/loss pairs together at the box faces) and
//! vanish outside it, so distant periodic images never enter.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{ModeGrid, PhaseField, Repr, C64};

mod engine;
mod leibniz;
mod linear;
mod norms;

pub use engine::Omega;
pub use leibniz::{leibniz_gamma_check, remove_nyquist, LeibnizReport};
pub use linear::{
    l_apply, l_apply_batch, l_matrix, l_matrix_with_override, null_space_residuals, LMatrix, NullSpaceReport, L_BUDGET,
};
pub use norms::{
    coercivity_probe, hs_norm, inner, l2_norm, random_smooth_field, triple_norm, trilinear_probe,
    trilinear_probe_fourier, ProbeReport, TripleNormValue,
};

/// Default quadrature tolerance used for conservation and null-space checks.
pub const QUAD_TOL: f64 = 1e-3;

/// Amplitude above which a field is considered not to decay at the box edge.
pub const BOUNDARY_DECAY: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub gamma: f64,
    pub s: f64,
    pub k_b: f64,
    pub theta_min: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            s: 0.5,
            k_b: 1.0,
            theta_min: 1e-3,
        }
    }
}

impl KernelSpec {
    pub fn new(gamma: f64, s: f64, k_b: f64, theta_min: f64) -> Result<Self> {
        let k = Self {
            gamma,
            s,
            k_b,
            theta_min,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, value, reason: &str| {
            Err(Error::OutOfRange {
                name,
                value,
                reason: reason.into(),
            })
        };
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma", self.gamma, "need 0 <= gamma <= 1");
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return bad("s", self.s, "need 0 < s < 1");
        }
        if !(self.k_b > 0.0) {
            return bad("k_b", self.k_b, "need K_b > 0");
        }
        if !(self.theta_min > 0.0 && self.theta_min <= PI / 4.0) {
            return bad("theta_min", self.theta_min, "need 0 < theta_min <= pi/4");
        }
        Ok(())
    }

    /// `b(cos θ)` with `sin θ · b(cos θ) = K_b θ^{-1-2s}` on `[θ_min, π/2]`.
    pub fn angular(&self, theta: f64) -> f64 {
        if theta < self.theta_min || theta > PI / 2.0 {
            return 0.0;
        }
        self.k_b * theta.powf(-1.0 - 2.0 * self.s) / theta.sin()
    }

    /// Analytic `∫ b(cos θ) dσ` over the support.
    pub fn sphere_weight(&self) -> f64 {
        let e = 2.0 * self.s;
        2.0 * PI * self.k_b * (self.theta_min.powf(-e) - (PI / 2.0).powf(-e)) / e
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionQuadrature {
    pub n_v: usize,
    pub v_max: f64,
    pub n_theta: usize,
    pub n_phi: usize,
    /// Relative velocities are restricted to `|v - v_*| ≤ u_radius`.
    pub u_radius: f64,
}

impl CollisionQuadrature {
    pub fn new(n_v: usize, v_max: f64, n_theta: usize, n_phi: usize) -> Result<Self> {
        let q = Self {
            n_v,
            v_max,
            n_theta,
            n_phi,
            u_radius: v_max,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn with_u_radius(mut self, r: f64) -> Result<Self> {
        self.u_radius = r;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_v < 4 || self.n_v % 2 != 0 {
            return Err(Error::Contract(format!("N_v = {} must be even and >= 4", self.n_v)));
        }
        if !(self.v_max > 0.0) {
            return Err(Error::Contract("V must be positive".into()));
        }
        if self.n_theta == 0 || self.n_phi < 2 {
            return Err(Error::Contract("need N_theta >= 1 and N_phi >= 2".into()));
        }
        if !(self.u_radius > 0.0) {
            return Err(Error::Contract("u_radius must be positive".into()));
        }
        Ok(())
    }

    pub fn dv(&self) -> f64 {
        2.0 * self.v_max / self.n_v as f64
    }

    /// Half-width `V + Δv/2` of the region where fields are nonzero.
    pub fn support_radius(&self) -> f64 {
        self.v_max + 0.5 * self.dv()
    }

    pub fn n_points(&self) -> usize {
        self.n_v.pow(3)
    }

    pub fn v_axis(&self) -> Vec<f64> {
        let h = self.dv();
        (0..self.n_v).map(|j| -self.v_max + j as f64 * h).collect()
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let n = self.n_v;
        let h = self.dv();
        let ix = [idx / (n * n), (idx / n) % n, idx % n];
        [
            -self.v_max + ix[0] as f64 * h,
            -self.v_max + ix[1] as f64 * h,
            -self.v_max + ix[2] as f64 * h,
        ]
    }

    /// Same grid with `N_theta` and `N_phi` scaled by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n_theta: self.n_theta * factor,
            n_phi: self.n_phi * factor,
            ..self.clone()
        }
    }

    /// Lattice of relative velocities `u = iΔv`, `0 < |u| ≤ u_radius`,
    /// with `|i_a| < N_v/2` so the set is symmetric under `u → -u`.
    pub(crate) fn u_lattice(&self) -> Vec<([i64; 3], [f64; 3])> {
        let n = self.n_v as i64;
        let h = self.dv();
        let mut out = Vec::new();
        for a in 1 - n / 2..n / 2 {
            for b in 1 - n / 2..n / 2 {
                for c in 1 - n / 2..n / 2 {
                    if a == 0 && b == 0 && c == 0 {
                        continue;
                    }
                    let u = [a as f64 * h, b as f64 * h, c as f64 * h];
                    if (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt() <= self.u_radius + 1e-12 {
                        out.push(([a, b, c], u));
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaNode {
    pub theta: f64,
    pub phi: f64,
    /// Includes `b(cos θ) sin θ` and the azimuthal weight.
    pub weight: f64,
}

/// Gauss–Legendre in `y = ln θ` on `[ln θ_min, ln(π/2)]` times equispaced `φ`.
/// The θ weights are rescaled so the total matches the analytic sphere weight.
pub fn sigma_nodes(k: &KernelSpec, q: &CollisionQuadrature) -> Vec<SigmaNode> {
    let (x, w) = crate::quad::gauss_legendre(q.n_theta);
    let (y0, y1) = (k.theta_min.ln(), (PI / 2.0).ln());
    let (mid, half) = (0.5 * (y0 + y1), 0.5 * (y1 - y0));
    let e = 2.0 * k.s;
    let mut th: Vec<(f64, f64)> = x
        .iter()
        .zip(&w)
        .map(|(&xi, &wi)| {
            let y = mid + half * xi;
            (y.exp(), wi * half * k.k_b * (-e * y).exp())
        })
        .collect();
    let total: f64 = th.iter().map(|p| p.1).sum();
    let scale = k.sphere_weight() / (2.0 * PI * total);
    for p in th.iter_mut() {
        p.1 *= scale;
    }
    let wphi = 2.0 * PI / q.n_phi as f64;
    let mut out = Vec::with_capacity(q.n_theta * q.n_phi);
    for &(theta, wt) in &th {
        for j in 0..q.n_phi {
            out.push(SigmaNode {
                theta,
                phi: (j as f64 + 0.5) * wphi,
                weight: wt * wphi,
            });
        }
    }
    out
}

fn norm3(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Orthonormal `(e1, e2)` completing the unit vector `n`.
pub(crate) fn frame(n: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let ax = if n[0].abs() <= n[1].abs() && n[0].abs() <= n[2].abs() {
        [1.0, 0.0, 0.0]
    } else if n[1].abs() <= n[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let c = cross(n, ax);
    let l = norm3(c);
    let e1 = [c[0] / l, c[1] / l, c[2] / l];
    (e1, cross(n, e1))
}

/// Displacement `d = (|u|σ - u)/2` with `σ` placed at `(θ, φ)` about `û`,
/// so that `v' = v + d` and `v'_* = v - u - d`.
pub(crate) fn displacement(u: [f64; 3], node: &SigmaNode) -> [f64; 3] {
    let r = norm3(u);
    let n = [u[0] / r, u[1] / r, u[2] / r];
    let (e1, e2) = frame(n);
    let (st, ct) = node.theta.sin_cos();
    let (sp, cp) = node.phi.sin_cos();
    let mut d = [0.0; 3];
    for i in 0..3 {
        let sigma = ct * n[i] + st * (cp * e1[i] + sp * e2[i]);
        d[i] = 0.5 * (r * sigma - u[i]);
    }
    d
}

/// Post-collision velocities in the σ-representation.
pub fn post_collision(v: [f64; 3], v_star: [f64; 3], sigma: [f64; 3]) -> Result<([f64; 3], [f64; 3])> {
    let ns = norm3(sigma);
    if (ns - 1.0).abs() > 1e-12 {
        return Err(Error::Contract(format!("sigma is not a unit vector (|sigma| = {ns})")));
    }
    let r = norm3([v[0] - v_star[0], v[1] - v_star[1], v[2] - v_star[2]]);
    let mut vp = [0.0; 3];
    let mut vsp = [0.0; 3];
    for i in 0..3 {
        let mid = 0.5 * (v[i] + v_star[i]);
        let h = 0.5 * r * sigma[i];
        vp[i] = mid + h;
        vsp[i] = mid - h;
    }
    Ok((vp, vsp))
}

/// `poly(x + shift) · exp(-gauss (x + shift)²)` on one axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisFn {
    pub poly: Vec<f64>,
    pub gauss: f64,
    pub shift: f64,
}

impl AxisFn {
    pub fn one() -> Self {
        Self {
            poly: vec![1.0],
            gauss: 0.0,
            shift: 0.0,
        }
    }

    pub fn gaussian(a: f64) -> Self {
        Self {
            poly: vec![1.0],
            gauss: a,
            shift: 0.0,
        }
    }

    pub fn is_one(&self) -> bool {
        self.gauss == 0.0 && self.poly.len() == 1 && self.poly[0] == 1.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        let y = x + self.shift;
        let p = self.poly.iter().rev().fold(0.0, |acc, &c| acc * y + c);
        if self.gauss == 0.0 {
            p
        } else {
            p * (-self.gauss * y * y).exp()
        }
    }

    pub fn mul(&self, other: &AxisFn) -> Result<AxisFn> {
        if self.shift != other.shift && !(self.is_one() || other.is_one()) {
            return Err(Error::Contract("cannot multiply axis weights with different shifts".into()));
        }
        if self.is_one() {
            return Ok(other.clone());
        }
        if other.is_one() {
            return Ok(self.clone());
        }
        let mut poly = vec![0.0; self.poly.len() + other.poly.len() - 1];
        for (i, a) in self.poly.iter().enumerate() {
            for (j, b) in other.poly.iter().enumerate() {
                poly[i + j] += a * b;
            }
        }
        Ok(AxisFn {
            poly,
            gauss: self.gauss + other.gauss,
            shift: self.shift,
        })
    }
}

/// Coefficients of `H̃_p(x) = e^{x²/4} d^p/dx^p e^{-x²/4}`, lowest degree first.
pub fn hermite_scaled_poly(p: usize) -> Vec<f64> {
    let mut prev = vec![1.0];
    if p == 0 {
        return prev;
    }
    let mut cur = vec![0.0, -0.5];
    for k in 1..p {
        let mut next = vec![0.0; k + 2];
        for (i, c) in cur.iter().enumerate() {
            next[i + 1] -= 0.5 * c;
        }
        for (i, c) in prev.iter().enumerate() {
            next[i] -= 0.5 * k as f64 * c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// Separable analytic weight `coef · Π_a axes[a](v_a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SepWeight {
    pub coef: f64,
    pub axes: [AxisFn; 3],
}

impl SepWeight {
    pub fn one() -> Self {
        Self::gaussian(1.0, 0.0)
    }

    /// `c · e^{-a|v|²}`.
    pub fn gaussian(c: f64, a: f64) -> Self {
        Self {
            coef: c,
            axes: [AxisFn::gaussian(a), AxisFn::gaussian(a), AxisFn::gaussian(a)],
        }
    }

    pub fn maxwellian() -> Self {
        Self::gaussian((2.0 * PI).powf(-1.5), 0.5)
    }

    pub fn sqrt_maxwellian() -> Self {
        Self::gaussian((2.0 * PI).powf(-0.75), 0.25)
    }

    pub fn inv_sqrt_maxwellian() -> Self {
        Self::gaussian((2.0 * PI).powf(0.75), -0.25)
    }

    /// `v_axis^degree μ^{1/2}`.
    pub fn monomial_sqrt_maxwellian(axis: usize, degree: usize) -> Self {
        let mut w = Self::sqrt_maxwellian();
        let mut poly = vec![0.0; degree + 1];
        poly[degree] = 1.0;
        w.axes[axis].poly = poly;
        w
    }

    /// `t^{δp} ∂_{v_1}^p μ^{1/2}`.
    pub fn h_sqrt_maxwellian(delta: f64, t: f64, p: usize) -> Self {
        let mut w = Self::sqrt_maxwellian();
        let scale = t.powf(delta * p as f64);
        w.axes[0].poly = hermite_scaled_poly(p).into_iter().map(|c| c * scale).collect();
        w
    }

    pub fn is_one(&self) -> bool {
        self.coef == 1.0 && self.axes.iter().all(|a| a.is_one())
    }

    pub fn eval(&self, v: [f64; 3]) -> f64 {
        self.coef * self.axes[0].eval(v[0]) * self.axes[1].eval(v[1]) * self.axes[2].eval(v[2])
    }

    pub fn mul(&self, other: &SepWeight) -> Result<SepWeight> {
        Ok(SepWeight {
            coef: self.coef * other.coef,
            axes: [
                self.axes[0].mul(&other.axes[0])?,
                self.axes[1].mul(&other.axes[1])?,
                self.axes[2].mul(&other.axes[2])?,
            ],
        })
    }

    /// The weight of `v ↦ w(v + e)`.
    pub fn shifted(&self, e: [f64; 3]) -> SepWeight {
        let mut w = self.clone();
        for a in 0..3 {
            if !w.axes[a].is_one() {
                w.axes[a].shift += e[a];
            }
        }
        w
    }

    /// `|w(v)| ≤ C μ(v)^{1/4}`: the smallest such `C` over the grid.
    pub fn quarter_maxwellian_bound(&self, q: &CollisionQuadrature) -> f64 {
        let mu14 = Self::gaussian((2.0 * PI).powf(-0.375), 0.125);
        (0..q.n_points())
            .map(|i| {
                let p = q.point(i);
                self.eval(p).abs() / mu14.eval(p)
            })
            .fold(0.0, f64::max)
    }
}

/// A velocity field on the collision grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VelField {
    pub samples: Vec<C64>,
    pub weight: SepWeight,
}

impl VelField {
    pub fn from_samples(q: &CollisionQuadrature, samples: Vec<C64>) -> Result<Self> {
        Self::weighted(q, samples, SepWeight::one())
    }

    pub fn weighted(q: &CollisionQuadrature, samples: Vec<C64>, weight: SepWeight) -> Result<Self> {
        if samples.len() != q.n_points() {
            return Err(Error::Mismatch {
                expected: format!("{} samples", q.n_points()),
                found: format!("{}", samples.len()),
            });
        }
        Ok(Self { samples, weight })
    }

    pub fn from_real(q: &CollisionQuadrature, samples: &[f64]) -> Result<Self> {
        Self::from_samples(q, samples.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Samples of `f` at the grid points.
    pub fn from_fn(q: &CollisionQuadrature, f: impl Fn([f64; 3]) -> f64) -> Self {
        let samples = (0..q.n_points()).map(|i| C64::new(f(q.point(i)), 0.0)).collect();
        Self {
            samples,
            weight: SepWeight::one(),
        }
    }

    /// The weight itself, with unit samples.
    pub fn analytic(q: &CollisionQuadrature, weight: SepWeight) -> Self {
        Self {
            samples: vec![C64::new(1.0, 0.0); q.n_points()],
            weight,
        }
    }

    pub fn zeros(q: &CollisionQuadrature) -> Self {
        Self::from_fn(q, |_| 0.0)
    }

    /// Values `weight(v_j) · samples_j` at the grid points.
    pub fn values(&self, q: &CollisionQuadrature) -> Vec<C64> {
        if self.weight.is_one() {
            return self.samples.clone();
        }
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| s * self.weight.eval(q.point(i)))
            .collect()
    }

    pub fn scaled(&self, a: C64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * a).collect(),
            weight: self.weight.clone(),
        }
    }

    /// Largest `|value|` on grid points with some coordinate at `-V`.
    pub fn boundary_max(&self, q: &CollisionQuadrature) -> f64 {
        let n = q.n_v;
        let vals = self.values(q);
        let mut m: f64 = 0.0;
        for (i, v) in vals.iter().enumerate() {
            let ix = [i / (n * n), (i / n) % n, i % n];
            if ix.contains(&0) {
                m = m.max(v.norm());
            }
        }
        m
    }
}

/// Values `Σ` of a field with spatial modes `m` (one spatial dimension).
#[derive(Clone, Debug, PartialEq)]
pub struct ModeVelField {
    pub modes: Vec<(i64, VelField)>,
}

impl ModeVelField {
    pub fn single(f: VelField) -> Self {
        Self { modes: vec![(0, f)] }
    }

    pub fn get(&self, m: i64) -> Option<&VelField> {
        self.modes.iter().find(|(k, _)| *k == m).map(|(_, f)| f)
    }

    /// Block of a `d_x = 1`, `d_v = 3` VSpace field on a matching grid.
    pub fn from_phase_field(field: &PhaseField, q: &CollisionQuadrature) -> Result<Self> {
        let g = &field.grid;
        if g.dx != 1 || g.dv != 3 || g.nv != q.n_v || (g.v_max - q.v_max).abs() > 1e-12 {
            return Err(Error::Mismatch {
                expected: format!("d_x = 1, d_v = 3, N_v = {}, V = {}", q.n_v, q.v_max),
                found: format!("d_x = {}, d_v = {}, N_v = {}, V = {}", g.dx, g.dv, g.nv, g.v_max),
            });
        }
        if field.repr != Repr::VSpace {
            return Err(Error::Contract("expected a VSpace field".into()));
        }
        let modes = (0..g.n_modes())
            .map(|mi| (g.mode(mi)[0], VelField::from_samples(q, field.block(mi).to_vec())))
            .map(|(m, f)| f.map(|f| (m, f)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { modes })
    }

    /// Grid values as a VSpace field; modes outside the grid are dropped.
    pub fn to_phase_field(&self, q: &CollisionQuadrature, m_max: usize) -> Result<PhaseField> {
        let grid = ModeGrid::new(1, m_max, 3, q.n_v, q.v_max)?;
        let mut out = PhaseField::zeros(&grid, Repr::VSpace);
        for (m, f) in &self.modes {
            if let Some(mi) = grid.mode_index(&[*m]) {
                out.block_mut(mi).copy_from_slice(&f.values(q));
            }
        }
        Ok(out)
    }
}

/// Output of a collision evaluation at the grid points.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionOutput {
    pub modes: Vec<(i64, Vec<C64>)>,
    /// Largest input amplitude on the box boundary.
    pub boundary_max: f64,
    /// Output points dropped because the output weight overflowed.
    pub clipped: usize,
}

impl CollisionOutput {
    pub fn values(&self) -> &[C64] {
        &self.modes[0].1
    }

    pub fn real(&self) -> Vec<f64> {
        self.values().iter().map(|z| z.re).collect()
    }

    pub fn mode(&self, m: i64) -> Option<&[C64]> {
        self.modes.iter().find(|(k, _)| *k == m).map(|(_, v)| v.as_slice())
    }

    /// `Some(amplitude)` when an input failed the boundary-decay guard.
    pub fn boundary_warning(&self) -> Option<f64> {
        (self.boundary_max > BOUNDARY_DECAY).then_some(self.boundary_max)
    }
}

/// `|∫ φ Q| / ∫ |φ Q|` for `φ ∈ {1, v₁, v₂, v₃, |v|²}` on the real part of
/// grid values.
pub fn moment_residuals(values: &[C64], q: &CollisionQuadrature) -> [f64; 5] {
    let mut m = [0.0; 5];
    let mut a = [0.0; 5];
    for (i, z) in values.iter().enumerate() {
        let p = q.point(i);
        let phi = [1.0, p[0], p[1], p[2], p[0] * p[0] + p[1] * p[1] + p[2] * p[2]];
        for k in 0..5 {
            m[k] += z.re * phi[k];
            a[k] += (z.re * phi[k]).abs();
        }
    }
    std::array::from_fn(|k| if a[k] > 0.0 { m[k].abs() / a[k] } else { 0.0 })
}

fn single_mode(f: &VelField) -> Vec<(i64, &VelField)> {
    vec![(0, f)]
}

/// `Q(g, f)` on the grid.
pub fn q_apply(g: &VelField, f: &VelField, k: &KernelSpec, q: &CollisionQuadrature) -> Result<CollisionOutput> {
    engine::collide(k, q, &single_mode(g), &single_mode(f), &Omega::One, None)
}

/// `T(g, h, ω)` on the grid.
pub fn t_apply(g: &VelField, h: &VelField, omega: &Omega, k: &KernelSpec, q: &CollisionQuadrature) -> Result<CollisionOutput> {
    engine::collide(k, q, &single_mode(g), &single_mode(h), omega, None)
}

fn sqrt_mu_weighted(f: &VelField) -> Result<VelField> {
    Ok(VelField {
        samples: f.samples.clone(),
        weight: f.weight.mul(&SepWeight::sqrt_maxwellian())?,
    })
}

/// `Γ(g, h) = μ^{-1/2} Q(μ^{1/2} g, μ^{1/2} h)`.
pub fn gamma_apply(g: &VelField, h: &VelField, k: &KernelSpec, q: &CollisionQuadrature) -> Result<CollisionOutput> {
    let (gw, hw) = (sqrt_mu_weighted(g)?, sqrt_mu_weighted(h)?);
    engine::collide(
        k,
        q,
        &single_mode(&gw),
        &single_mode(&hw),
        &Omega::One,
        Some(&SepWeight::inv_sqrt_maxwellian()),
    )
}

/// Mode-convolution form `T̂(ĝ, ĥ, ω)(m) = Σ_ℓ T(ĝ(m-ℓ), ĥ(ℓ), ω)`.
pub fn t_apply_modes(
    g: &ModeVelField,
    h: &ModeVelField,
    omega: &Omega,
    k: &KernelSpec,
    q: &CollisionQuadrature,
) -> Result<CollisionOutput> {
    let a: Vec<(i64, &VelField)> = g.modes.iter().map(|(m, f)| (*m, f)).collect();
    let b: Vec<(i64, &VelField)> = h.modes.iter().map(|(m, f)| (*m, f)).collect();
    engine::collide(k, q, &a, &b, omega, None)
}

/// `Γ̂(ĝ, ĥ)` mode by mode, through `T̂(·, ·, μ^{1/2})`.
pub fn gamma_apply_modes(g: &ModeVelField, h: &ModeVelField, k: &KernelSpec, q: &CollisionQuadrature) -> Result<CollisionOutput> {
    t_apply_modes(g, h, &Omega::Analytic(SepWeight::sqrt_maxwellian()), k, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_weight_matches_analytic() {
        let k = KernelSpec::new(0.0, 0.3, 1.7, 1e-3).unwrap();
        let q = CollisionQuadrature::new(8, 5.0, 6, 5).unwrap();
        let nodes = sigma_nodes(&k, &q);
        let total: f64 = nodes.iter().map(|n| n.weight).sum();
        assert!((total / k.sphere_weight() - 1.0).abs() < 1e-12);
        assert!(nodes.iter().all(|n| n.theta > k.theta_min && n.theta < PI / 2.0 && n.weight > 0.0));
    }

    #[test]
    fn displacement_is_a_collision() {
        let u = [0.3, -1.1, 0.7];
        let node = SigmaNode {
            theta: 0.4,
            phi: 2.0,
            weight: 1.0,
        };
        let d = displacement(u, &node);
        let v = [0.2, 0.1, -0.5];
        let vs = [v[0] - u[0], v[1] - u[1], v[2] - u[2]];
        let vp = [v[0] + d[0], v[1] + d[1], v[2] + d[2]];
        let vsp = [vs[0] - d[0], vs[1] - d[1], vs[2] - d[2]];
        let e0: f64 = v.iter().chain(&vs).map(|x| x * x).sum();
        let e1: f64 = vp.iter().chain(&vsp).map(|x| x * x).sum();
        assert!((e0 - e1).abs() < 1e-14);
        let r = norm3(u);
        let cos = (0..3).map(|i| (vp[i] - vsp[i]) * u[i]).sum::<f64>() / (r * r);
        assert!((cos - 0.4f64.cos()).abs() < 1e-14);
    }

    #[test]
    fn hermite_poly_matches_recurrence() {
        for p in 0..8 {
            let c = hermite_scaled_poly(p);
            let x = 1.3;
            let v = c.iter().rev().fold(0.0, |acc, &a| acc * x + a);
            let r = crate::vecfield::hermite_scaled(p, x)[p];
            assert!((v - r).abs() < 1e-12 * r.abs().max(1.0), "p={p}");
        }
    }

    #[test]
    fn non_unit_sigma_rejected() {
        assert!(post_collision([0.0; 3], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]).is_err());
    }
}

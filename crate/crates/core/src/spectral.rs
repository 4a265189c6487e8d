//! Mode × velocity grids, the centered velocity DFT, and Fourier multipliers.
//!
//! Conventions: `F(η) = ∫ e^{-i v·η} f(v) dv`, so `∂_v ↔ iη`, `∂_x ↔ im`,
//! and the modulation `f(v) e^{-i t m·v}` maps to `F(η + t m)`.
//! Velocity nodes are `v_j = -V + jΔv`, frequencies `η_k = (k - N/2)Δη`
//! with `Δη = π/V`. Discretely
//! `F_k = Δv Σ_j e^{-iη_k v_j} f_j` and `f_j = (Δη/2π) Σ_k e^{iη_k v_j} F_k`
//! per velocity axis, which gives
//! `Σ|f|²Δv^d = Σ|F|²Δη^d/(2π)^d`.
//!
//! Modes are enumerated lexicographically with the first component slowest,
//! each component running from `-M` to `M`. Velocity points are row-major
//! with axis 1 slowest. Spatial component `i` pairs with velocity axis `i`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Half-Nyquist safety factor for `modulate_shift`.
pub const ALIAS_SAFETY: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeGrid {
    pub dx: usize,
    pub m_max: usize,
    pub dv: usize,
    pub nv: usize,
    pub v_max: f64,
}

impl ModeGrid {
    pub fn new(dx: usize, m_max: usize, dv: usize, nv: usize, v_max: f64) -> Result<Self> {
        if !(1..=3).contains(&dx) {
            return Err(Error::Contract(format!("d_x = {dx} not in 1..=3")));
        }
        if dv != 1 && dv != 3 {
            return Err(Error::Contract(format!("d_v = {dv} not in {{1, 3}}")));
        }
        if nv < 2 || !nv.is_power_of_two() {
            return Err(Error::Contract(format!("N_v = {nv} is not a power of two")));
        }
        if !(v_max > 0.0 && v_max.is_finite()) {
            return Err(Error::Contract(format!("V = {v_max} must be positive")));
        }
        Ok(Self {
            dx,
            m_max,
            dv,
            nv,
            v_max,
        })
    }

    pub fn n_modes(&self) -> usize {
        (2 * self.m_max + 1).pow(self.dx as u32)
    }

    pub fn n_vel(&self) -> usize {
        self.nv.pow(self.dv as u32)
    }

    pub fn len(&self) -> usize {
        self.n_modes() * self.n_vel()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dv_step(&self) -> f64 {
        2.0 * self.v_max / self.nv as f64
    }

    pub fn deta(&self) -> f64 {
        PI / self.v_max
    }

    /// Largest |η| along one axis, `N_v Δη / 2`.
    pub fn eta_max(&self) -> f64 {
        self.nv as f64 * self.deta() / 2.0
    }

    pub fn v_axis(&self) -> Vec<f64> {
        let h = self.dv_step();
        (0..self.nv).map(|j| -self.v_max + j as f64 * h).collect()
    }

    pub fn eta_axis(&self) -> Vec<f64> {
        let h = self.deta();
        let half = (self.nv / 2) as f64;
        (0..self.nv).map(|k| (k as f64 - half) * h).collect()
    }

    pub fn mode(&self, idx: usize) -> Vec<i64> {
        let w = 2 * self.m_max + 1;
        let mut out = vec![0i64; self.dx];
        let mut r = idx;
        for i in (0..self.dx).rev() {
            out[i] = (r % w) as i64 - self.m_max as i64;
            r /= w;
        }
        out
    }

    pub fn mode_index(&self, m: &[i64]) -> Option<usize> {
        if m.len() != self.dx {
            return None;
        }
        let w = 2 * self.m_max as i64 + 1;
        let mut idx = 0i64;
        for &c in m {
            if c.abs() > self.m_max as i64 {
                return None;
            }
            idx = idx * w + c + self.m_max as i64;
        }
        Some(idx as usize)
    }

    /// Per-axis indices of a flat velocity index.
    pub fn vel_multi(&self, idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut r = idx;
        for i in (0..self.dv).rev() {
            out[i] = r % self.nv;
            r /= self.nv;
        }
        out
    }

    pub fn v_point(&self, idx: usize) -> [f64; 3] {
        let ix = self.vel_multi(idx);
        let h = self.dv_step();
        let mut p = [0.0; 3];
        for i in 0..self.dv {
            p[i] = -self.v_max + ix[i] as f64 * h;
        }
        p
    }

    pub fn eta_point(&self, idx: usize) -> [f64; 3] {
        let ix = self.vel_multi(idx);
        let h = self.deta();
        let half = (self.nv / 2) as f64;
        let mut p = [0.0; 3];
        for i in 0..self.dv {
            p[i] = (ix[i] as f64 - half) * h;
        }
        p
    }

    /// Velocity-cell measure `Δv^{d_v}`.
    pub fn v_measure(&self) -> f64 {
        self.dv_step().powi(self.dv as i32)
    }

    /// Frequency-cell measure `Δη^{d_v} / (2π)^{d_v}`.
    pub fn eta_measure(&self) -> f64 {
        (self.deta() / (2.0 * PI)).powi(self.dv as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Repr {
    VSpace,
    EtaSpace,
}

#[derive(Clone, Debug)]
pub struct PhaseField {
    pub grid: ModeGrid,
    pub repr: Repr,
    pub data: Vec<C64>,
    pub time: f64,
}

impl PhaseField {
    pub fn zeros(grid: &ModeGrid, repr: Repr) -> Self {
        Self {
            grid: grid.clone(),
            repr,
            data: vec![C64::new(0.0, 0.0); grid.len()],
            time: 0.0,
        }
    }

    pub fn from_data(grid: &ModeGrid, repr: Repr, data: Vec<C64>, time: f64) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Contract(format!(
                "data length {} != (2M+1)^dx * N_v^dv = {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            repr,
            data,
            time,
        })
    }

    /// Samples `f(m, v)` on the velocity grid.
    pub fn from_v_fn(grid: &ModeGrid, f: impl Fn(&[i64], &[f64]) -> C64) -> Self {
        Self::sample(grid, Repr::VSpace, f)
    }

    /// Samples `F(m, η)` on the frequency grid.
    pub fn from_eta_fn(grid: &ModeGrid, f: impl Fn(&[i64], &[f64]) -> C64) -> Self {
        Self::sample(grid, Repr::EtaSpace, f)
    }

    fn sample(grid: &ModeGrid, repr: Repr, f: impl Fn(&[i64], &[f64]) -> C64) -> Self {
        let nvel = grid.n_vel();
        let mut data = Vec::with_capacity(grid.len());
        for mi in 0..grid.n_modes() {
            let m = grid.mode(mi);
            for vi in 0..nvel {
                let p = match repr {
                    Repr::VSpace => grid.v_point(vi),
                    Repr::EtaSpace => grid.eta_point(vi),
                };
                data.push(f(&m, &p[..grid.dv]));
            }
        }
        Self {
            grid: grid.clone(),
            repr,
            data,
            time: 0.0,
        }
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = t;
        self
    }

    pub fn block(&self, mode_idx: usize) -> &[C64] {
        let n = self.grid.n_vel();
        &self.data[mode_idx * n..(mode_idx + 1) * n]
    }

    pub fn block_mut(&mut self, mode_idx: usize) -> &mut [C64] {
        let n = self.grid.n_vel();
        &mut self.data[mode_idx * n..(mode_idx + 1) * n]
    }

    fn measure(&self) -> f64 {
        match self.repr {
            Repr::VSpace => self.grid.v_measure(),
            Repr::EtaSpace => self.grid.eta_measure(),
        }
    }

    /// Squared L² norm of one mode block, with the representation's measure.
    pub fn mode_norm_sq(&self, mode_idx: usize) -> f64 {
        self.block(mode_idx).iter().map(|z| z.norm_sqr()).sum::<f64>() * self.measure()
    }

    /// `Σ_m Σ |f|² · measure`, identical in both representations.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.measure()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `Σ_m ‖f(m)‖_{L²_v}`.
    pub fn mixed_norm(&self) -> f64 {
        (0..self.grid.n_modes()).map(|i| self.mode_norm_sq(i).sqrt()).sum()
    }

    pub fn scale(&self, a: C64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= a);
        out
    }

    /// `a·self + b·other`; grids and representations must match.
    pub fn combine(&self, a: C64, other: &PhaseField, b: C64) -> Result<Self> {
        if self.grid != other.grid || self.repr != other.repr {
            return Err(Error::Contract("combine: grid or representation mismatch".into()));
        }
        let mut out = self.clone();
        for (z, w) in out.data.iter_mut().zip(&other.data) {
            *z = a * *z + b * *w;
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &PhaseField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Applies the centered 1D transform along every velocity axis of every
/// mode block.
fn transform(field: &mut PhaseField, forward: bool) {
    let g = field.grid.clone();
    let n = g.nv;
    let mut planner = FftPlanner::<f64>::new();
    let fft: Arc<dyn Fft<f64>> = if forward {
        planner.plan_fft_forward(n)
    } else {
        planner.plan_fft_inverse(n)
    };
    let scale = if forward {
        g.dv_step()
    } else {
        g.deta() / (2.0 * PI)
    };
    let half = n / 2;
    let sign_j: Vec<f64> = (0..n).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let sign_k: Vec<f64> = (0..n)
        .map(|k| if (k + half) % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    let (pre, post) = if forward {
        (sign_j, sign_k)
    } else {
        (sign_k, sign_j)
    };
    let nvel = g.n_vel();
    field.data.par_chunks_mut(nvel).for_each(|block| {
        let mut line = vec![C64::new(0.0, 0.0); n];
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for axis in 0..g.dv {
            let stride = n.pow((g.dv - 1 - axis) as u32);
            let outer = nvel / (n * stride);
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * n * stride + s;
                    for j in 0..n {
                        line[j] = block[base + j * stride] * pre[j];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for k in 0..n {
                        block[base + k * stride] = line[k] * (post[k] * scale);
                    }
                }
            }
        }
    });
}

pub fn to_eta(field: &PhaseField) -> Result<PhaseField> {
    if field.repr != Repr::VSpace {
        return Err(Error::Contract("to_eta expects a VSpace field".into()));
    }
    let mut out = field.clone();
    transform(&mut out, true);
    out.repr = Repr::EtaSpace;
    Ok(out)
}

pub fn to_v(field: &PhaseField) -> Result<PhaseField> {
    if field.repr != Repr::EtaSpace {
        return Err(Error::Contract("to_v expects an EtaSpace field".into()));
    }
    let mut out = field.clone();
    transform(&mut out, false);
    out.repr = Repr::VSpace;
    Ok(out)
}

/// Multiplies `F(m, η)` by `symbol(m, η)` pointwise.
pub fn apply_multiplier<S>(field: &PhaseField, symbol: S) -> Result<PhaseField>
where
    S: Fn(&[i64], &[f64]) -> C64,
{
    if field.repr != Repr::EtaSpace {
        return Err(Error::Contract("apply_multiplier expects an EtaSpace field".into()));
    }
    let g = &field.grid;
    let nvel = g.n_vel();
    let mut out = field.clone();
    for mi in 0..g.n_modes() {
        let m = g.mode(mi);
        for vi in 0..nvel {
            let eta = g.eta_point(vi);
            let a = symbol(&m, &eta[..g.dv]);
            if !(a.re.is_finite() && a.im.is_finite()) {
                return Err(Error::NonFinite {
                    mode: m,
                    eta: eta[..g.dv].to_vec(),
                });
            }
            out.data[mi * nvel + vi] *= a;
        }
    }
    Ok(out)
}

/// Largest admissible `|t|·M` for `modulate_shift` on this grid.
pub fn shift_limit(grid: &ModeGrid) -> f64 {
    ALIAS_SAFETY * grid.eta_max()
}

pub fn check_shift(grid: &ModeGrid, t: f64) -> Result<()> {
    let limit = shift_limit(grid);
    if t.abs() * grid.m_max as f64 >= limit && grid.m_max > 0 && t != 0.0 {
        return Err(Error::Aliasing {
            t,
            m_max: grid.m_max,
            n_v: grid.nv,
            v_max: grid.v_max,
            limit,
        });
    }
    Ok(())
}

/// In-place `f(m, v) ← e^{-i t m·v} f(m, v)` on a VSpace field.
pub fn modulate_in_place(field: &mut PhaseField, t: f64) {
    let g = field.grid.clone();
    let axis = g.v_axis();
    for mi in 0..g.n_modes() {
        let m = g.mode(mi);
        if m.iter().all(|&c| c == 0) {
            continue;
        }
        let block = field.block_mut(mi);
        for (vi, z) in block.iter_mut().enumerate() {
            let ix = g.vel_multi(vi);
            let mut phase = 0.0;
            for i in 0..g.dx {
                phase += m[i] as f64 * axis[ix[i]];
            }
            *z *= C64::from_polar(1.0, -t * phase);
        }
    }
}

/// Realizes `F(m, η) ↦ F(m, η + t m)` by modulation in velocity space.
/// Returns the field in its input representation.
pub fn modulate_shift(field: &PhaseField, t: f64) -> Result<PhaseField> {
    let g = &field.grid;
    if g.dx > g.dv {
        return Err(Error::Contract(format!(
            "modulate_shift needs d_x <= d_v (got {} > {})",
            g.dx, g.dv
        )));
    }
    check_shift(g, t)?;
    if t == 0.0 {
        return Ok(field.clone());
    }
    match field.repr {
        Repr::VSpace => {
            let mut out = field.clone();
            modulate_in_place(&mut out, t);
            Ok(out)
        }
        Repr::EtaSpace => {
            let mut v = to_v(field)?;
            modulate_in_place(&mut v, t);
            let mut out = to_eta(&v)?;
            for mi in 0..g.n_modes() {
                if g.mode(mi).iter().all(|&c| c == 0) {
                    out.block_mut(mi).copy_from_slice(field.block(mi));
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_enumeration_is_lexicographic() {
        let g = ModeGrid::new(2, 1, 3, 4, 2.0).unwrap();
        assert_eq!(g.mode(0), vec![-1, -1]);
        assert_eq!(g.mode(1), vec![-1, 0]);
        assert_eq!(g.mode(8), vec![1, 1]);
        for i in 0..g.n_modes() {
            assert_eq!(g.mode_index(&g.mode(i)), Some(i));
        }
    }

    #[test]
    fn impulse_has_constant_modulus() {
        let g = ModeGrid::new(1, 0, 1, 16, 4.0).unwrap();
        let mut f = PhaseField::zeros(&g, Repr::VSpace);
        f.data[8] = C64::new(1.0, 0.0);
        let e = to_eta(&f).unwrap();
        for z in &e.data {
            assert!((z.norm() - g.dv_step()).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_wrong_representation() {
        let g = ModeGrid::new(1, 0, 1, 8, 4.0).unwrap();
        let f = PhaseField::zeros(&g, Repr::EtaSpace);
        assert!(to_eta(&f).is_err());
        assert!(to_v(&to_v(&f).unwrap()).is_err());
        assert!(apply_multiplier(&to_v(&f).unwrap(), |_, _| C64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn nonfinite_symbol_reports_location() {
        let g = ModeGrid::new(1, 1, 1, 8, 4.0).unwrap();
        let f = PhaseField::zeros(&g, Repr::EtaSpace);
        let r = apply_multiplier(&f, |m, eta| {
            if m[0] == 1 && eta[0] == 0.0 {
                C64::new(f64::NAN, 0.0)
            } else {
                C64::new(1.0, 0.0)
            }
        });
        match r {
            Err(Error::NonFinite { mode, eta }) => {
                assert_eq!(mode, vec![1]);
                assert_eq!(eta, vec![0.0]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn aliasing_guard_names_parameters() {
        let g = ModeGrid::new(1, 4, 1, 16, 4.0).unwrap();
        let f = PhaseField::zeros(&g, Repr::EtaSpace);
        let limit = shift_limit(&g);
        assert!(modulate_shift(&f, 0.9 * limit / 4.0).is_ok());
        match modulate_shift(&f, 1.1 * limit / 4.0) {
            Err(Error::Aliasing { m_max, n_v, .. }) => {
                assert_eq!(m_max, 4);
                assert_eq!(n_v, 16);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

use std::f64::consts::PI;

use kinlab::spectral::*;
use kinlab::toy::*;

/// Composite Simpson on `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[test]
fn psi_matches_fixed_grid_simpson() {
    let (t, eta, m, s) = (0.7, 2.0, 3.0, 0.3);
    let got = psi(t, &[m, 0.0, 0.0], &[eta, 0.0, 0.0], s, 1e-12);
    let oracle = simpson(|r: f64| (eta + r * m).abs().powf(2.0 * s), 0.0, t, 100_000);
    assert!((got - oracle).abs() / oracle <= 1e-9, "{got} vs {oracle}");
    // Same integrand with a zero crossing inside [0, t], split at the root.
    let (eta, m) = (-1.0, 2.0);
    let r0 = 0.5;
    let f = |r: f64| (eta + r * m).abs().powf(2.0 * s);
    let oracle = simpson(f, 0.0, r0, 100_000) + simpson(f, r0, t, 100_000);
    let got = psi(t, &[m, 0.0, 0.0], &[eta, 0.0, 0.0], s, 1e-12);
    assert!((got - oracle).abs() / oracle <= 1e-9, "{got} vs {oracle}");
}

fn gaussian_data(grid: &ModeGrid, only_mode: Option<i64>) -> PhaseField {
    let f = PhaseField::from_v_fn(grid, |m, v| {
        if only_mode.is_some_and(|k| k != m[0]) {
            return C64::new(0.0, 0.0);
        }
        C64::new((-(v[0] - 0.4).powi(2) / 2.0).exp() / (1.0 + m[0].abs() as f64), 0.0)
    });
    to_eta(&f).unwrap()
}

#[test]
fn exact_evolution_is_a_semigroup_on_the_zero_mode() {
    let g = ModeGrid::new(1, 2, 1, 256, 4.0 * PI).unwrap();
    let f0 = gaussian_data(&g, None);
    let spec = ToySpec::new(0.4, 0.0, 2.0, 1e-12).unwrap();
    let two = exact_evolve(&exact_evolve(&f0, 0.3, &spec).unwrap(), 0.5, &spec).unwrap();
    let one = exact_evolve(&f0, 0.8, &spec).unwrap();
    let mi = g.mode_index(&[0]).unwrap();
    let d = two.block(mi).iter().zip(one.block(mi)).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let n = one.block(mi).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(d <= 1e-10 * n);
    // The zero mode is pure fractional heat decay.
    for (vi, z) in one.block(mi).iter().enumerate() {
        let eta = g.eta_point(vi)[0];
        let want = f0.block(mi)[vi] * (-0.8 * eta.abs().powf(0.8)).exp();
        assert!((z - want).norm() <= 1e-14 * (1.0 + want.norm()));
    }
}

#[test]
fn strang_steps_converge_at_order_two() {
    // Δη = 0.0025 puts every half-step shift dt·m/2 on the η lattice, so the
    // comparison with the exact solution is free of interpolation error.
    let g = ModeGrid::new(1, 1, 1, 8192, PI / 0.0025).unwrap();
    let f0 = PhaseField::from_eta_fn(&g, |m, eta| {
        let on = if m[0] == 1 { 1.0 } else { 0.0 };
        C64::new(on * (-(eta[0] - 0.5).powi(2) / 2.0).exp(), 0.0)
    });
    let spec = ToySpec::new(0.5, 0.0, 1.0, 1e-12).unwrap();
    let exact = exact_evolve(&f0, 0.5, &spec).unwrap();
    let errs: Vec<f64> = [0.02f64, 0.01, 0.005]
        .iter()
        .map(|&dt| {
            let n = (0.5 / dt).round() as usize;
            let f = step_evolve(&f0, &spec, dt, n).unwrap();
            f.max_abs_diff(&exact) / exact.max_abs()
        })
        .collect();
    for w in errs.windows(2) {
        let r = w[0] / w[1];
        assert!((3.4..=4.6).contains(&r), "errors {errs:?}");
    }
}

#[test]
fn weighted_diffusion_decays_monotonically() {
    let g = ModeGrid::new(1, 2, 1, 128, 4.0 * PI).unwrap();
    let f0 = gaussian_data(&g, None);
    let spec = ToySpec::new(0.5, 1.0, 1.0, 1e-12).unwrap();
    let dt = 0.9 * max_stable_dt(&g, 1.0, 0.5);
    let (_, norms) = step_evolve_with_norms(&f0, &spec, dt, 20).unwrap();
    assert!(norms.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(step_evolve(&f0, &spec, dt, 0).unwrap().data, f0.data);
}

//! Randomized invariants of the spectral core, toy solvers, Gevrey tools,
//! vector fields and collision operator.

use std::f64::consts::PI;

use kinlab::collision::*;
use kinlab::gevrey::*;
use kinlab::spectral::*;
use kinlab::toy::*;
use kinlab::vecfield::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(grid: &ModeGrid, repr: Repr, seed: u64) -> PhaseField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..grid.len())
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    PhaseField::from_data(grid, repr, data, 0.0).unwrap()
}

fn rel_diff(a: &PhaseField, b: &PhaseField) -> f64 {
    let d: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let n: f64 = b.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    d / n
}

fn grid_strategy() -> impl Strategy<Value = ModeGrid> {
    (1usize..=2, 0usize..=3, prop_oneof![Just(1usize), Just(3usize)], 2u32..=5, 1.0f64..8.0).prop_filter_map(
        "d_x <= d_v",
        |(dx, m, dv, p, v)| {
            let nv = if dv == 3 { 1usize << p.min(4) } else { 1usize << (p + 3) };
            (dx <= dv).then(|| ModeGrid::new(dx, m, dv, nv, v).unwrap())
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn grid_steps_are_dual(g in grid_strategy()) {
        prop_assert!((g.dv_step() * g.deta() - 2.0 * PI / g.nv as f64).abs() < 1e-14);
        prop_assert_eq!(g.len(), (2 * g.m_max + 1).pow(g.dx as u32) * g.nv.pow(g.dv as u32));
    }

    #[test]
    fn transform_round_trip_and_parseval(g in grid_strategy(), seed in any::<u64>()) {
        let f = random_field(&g, Repr::VSpace, seed);
        let fe = to_eta(&f).unwrap();
        let back = to_v(&fe).unwrap();
        prop_assert!(rel_diff(&back, &f) <= 1e-12);
        let lhs: f64 = f.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.dv_step().powi(g.dv as i32);
        let rhs: f64 = fe.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.deta().powi(g.dv as i32)
            / (2.0 * PI).powi(g.dv as i32);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs);
    }

    #[test]
    fn operations_are_linear(
        g in grid_strategy(),
        seed in any::<u64>(),
        a in (-2.0f64..2.0, -2.0f64..2.0),
        b in (-2.0f64..2.0, -2.0f64..2.0),
    ) {
        let (a, b) = (C64::new(a.0, a.1), C64::new(b.0, b.1));
        let f = random_field(&g, Repr::VSpace, seed);
        let h = random_field(&g, Repr::VSpace, seed ^ 0x5a5a);
        let comb = f.combine(a, &h, b).unwrap();
        let lin = |op: &dyn Fn(&PhaseField) -> PhaseField| {
            let lhs = op(&comb);
            let rhs = op(&f).combine(a, &op(&h), b).unwrap();
            rel_diff(&lhs, &rhs)
        };
        prop_assert!(lin(&|x| to_eta(x).unwrap()) <= 1e-13);
        prop_assert!(lin(&|x| apply_multiplier(&to_eta(x).unwrap(), |m, e| C64::new(m[0] as f64, e[0])).unwrap()) <= 1e-13);
        let t = 0.3 * shift_limit(&g) / (g.m_max.max(1) as f64);
        prop_assert!(lin(&|x| modulate_shift(x, t).unwrap()) <= 1e-13);
    }

    #[test]
    fn shifts_compose(g in grid_strategy(), seed in any::<u64>(), u in -0.45f64..0.45, w in -0.45f64..0.45) {
        let unit = shift_limit(&g) / (g.m_max.max(1) as f64);
        let (t1, t2) = (u * unit, w * unit);
        let f = random_field(&g, Repr::EtaSpace, seed);
        let two = modulate_shift(&modulate_shift(&f, t1).unwrap(), t2).unwrap();
        let one = modulate_shift(&f, t1 + t2).unwrap();
        prop_assert!(rel_diff(&two, &one) <= 1e-12);
    }

    #[test]
    fn exact_evolution_contracts_and_fixes_origin(
        s in 0.1f64..0.95,
        t in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let g = ModeGrid::new(1, 2, 1, 64, 4.0 * PI).unwrap();
        let f0 = random_field(&g, Repr::EtaSpace, seed);
        let spec = ToySpec::new(s, 0.0, 1.0, 1e-10).unwrap();
        let f = exact_evolve(&f0, t, &spec).unwrap();
        prop_assert!(f.norm() <= f0.norm() * (1.0 + 1e-12));
        let mi = g.mode_index(&[0]).unwrap();
        let ei = g.nv / 2;
        prop_assert_eq!(f.block(mi)[ei], f0.block(mi)[ei]);
    }

    #[test]
    fn psi_is_nonnegative_and_increasing(
        s in 0.05f64..1.0,
        t in 0.01f64..3.0,
        dt in 0.0f64..1.0,
        m in -5.0f64..5.0,
        eta in proptest::array::uniform3(-10.0f64..10.0),
    ) {
        let a = psi(t, &[m], &eta, s, 1e-10);
        let b = psi(t + dt, &[m], &eta, s, 1e-10);
        prop_assert!(a >= 0.0);
        prop_assert!(b >= a * (1.0 - 1e-10));
    }

    #[test]
    fn gevrey_norm_monotone_in_c_and_r(
        seed in any::<u64>(),
        r in 1.0f64..4.0,
        dr in 0.0f64..2.0,
        c in 0.0f64..1.0,
        dc in 0.0f64..1.0,
    ) {
        let g = ModeGrid::new(1, 3, 1, 64, 2.0 * PI).unwrap();
        let f = random_field(&g, Repr::EtaSpace, seed);
        let base = gevrey_norm(&f, r, c).unwrap().log_sq;
        prop_assert!(gevrey_norm(&f, r, c + dc).unwrap().log_sq >= base - 1e-12);
        // |ξ| ≥ 1 except at the origin, so a larger r weakens the weight.
        prop_assert!(gevrey_norm(&f, r + dr, c).unwrap().log_sq <= base + 1e-12);
    }

    #[test]
    fn h_powers_multiply(seed in any::<u64>(), k1 in 0u32..4, k2 in 0u32..4, t in 0.1f64..1.0, delta in 2.5f64..5.0) {
        let g = ModeGrid::new(1, 2, 1, 32, 2.0 * PI).unwrap();
        let f = random_field(&g, Repr::EtaSpace, seed);
        let spec = VectorFieldSpec::new(delta, 1, 1.0, 0.5).unwrap();
        let lhs = apply_h_pow(&f, &spec, k1 + k2, t).unwrap();
        let rhs = apply_h_pow(&apply_h_pow(&f, &spec, k2, t).unwrap(), &spec, k1, t).unwrap();
        prop_assert!(rel_diff(&rhs, &lhs) <= 1e-12);
    }

    #[test]
    fn delta_pair_is_ordered(s in 0.02f64..0.98, excess in 1e-6f64..10.0) {
        let lo = 1.0 + 1.0 / (2.0 * s);
        let p = delta_pair(lo + excess, s).unwrap();
        prop_assert!(p.delta1 > p.delta2 && p.delta2 > lo);
        prop_assert!(p.delta1.is_finite() && p.delta2.is_finite());
    }

    #[test]
    fn minkowski_holds(seed in any::<u64>(), nj in 1usize..4, nm in 1usize..6, nt in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut arr = || -> Vec<Vec<Vec<f64>>> {
            (0..nj).map(|_| (0..nm).map(|_| (0..nt).map(|_| rng.random_range(0.0..1.0)).collect()).collect()).collect()
        };
        let f = arr();
        let g = arr();
        let w = vec![1.0 / nt as f64; nt];
        prop_assert!(minkowski_check(&f, &g, &w).unwrap().holds);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn triple_norm_parts_and_homogeneity(seed in any::<u64>(), lam in 0.1f64..5.0) {
        let k = KernelSpec::default();
        let q = CollisionQuadrature::new(8, 5.0, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_smooth_field(&q, &mut rng, false);
        let a = triple_norm(&f, &k, &q).unwrap();
        prop_assert!((a.value * a.value - a.part1 - a.part2).abs() <= 1e-12 * a.value * a.value);
        let b = triple_norm(&f.scaled(C64::new(lam, 0.0)), &k, &q).unwrap();
        prop_assert!((b.value - lam * a.value).abs() <= 1e-10 * lam * a.value);
    }

    #[test]
    fn collision_is_bilinear(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let k = KernelSpec::default();
        let q = CollisionQuadrature::new(8, 5.0, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_smooth_field(&q, &mut rng, false);
        let f1 = VelField::from_samples(&q, random_smooth_field(&q, &mut rng, false).values(&q)).unwrap();
        let f2 = VelField::from_samples(&q, random_smooth_field(&q, &mut rng, false).values(&q)).unwrap();
        let comb: Vec<C64> = f1.values(&q).iter().zip(f2.values(&q)).map(|(x, y)| x * a + y * b).collect();
        let comb = VelField::from_samples(&q, comb).unwrap();
        let lhs = q_apply(&g, &comb, &k, &q).unwrap();
        let r1 = q_apply(&g, &f1, &k, &q).unwrap();
        let r2 = q_apply(&g, &f2, &k, &q).unwrap();
        let num: f64 = lhs.values().iter().zip(r1.values().iter().zip(r2.values()))
            .map(|(l, (x, y))| (l - (x * a + y * b)).norm_sqr()).sum::<f64>().sqrt();
        let den: f64 = lhs.values().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(num <= 1e-12 * den.max(1e-300));
    }
}

#[test]
fn fit_recovers_planted_exponents() {
    let g = ModeGrid::new(1, 8, 1, 8192, PI).unwrap();
    for sigma in [0.15, 0.3, 0.5, 0.75] {
        // Exponent 200 at the outer shell, so the stretched exponential dominates the prefactor.
        let c = 200.0 / 4000f64.powf(2.0 * sigma);
        let f = PhaseField::from_eta_fn(&g, |m, e| {
            let r = ((m[0] * m[0]) as f64 + e[0] * e[0]).sqrt();
            C64::new((1.0 + r).powi(-2) * (-c * r.powf(2.0 * sigma)).exp(), 0.0)
        });
        let fit = fit_decay(&f, 20.0, 4000.0).unwrap();
        assert!((fit.sigma - sigma).abs() <= 0.02, "planted {sigma}, fitted {}", fit.sigma);
        assert!(fit.sigma.is_finite() && fit.r2.is_finite());
    }
}

#[test]
fn sigma_nodes_inside_support_with_exact_weight() {
    for s in [0.2, 0.5, 0.8] {
        let k = KernelSpec::new(0.0, s, 1.0, 1e-3).unwrap();
        let q = CollisionQuadrature::new(8, 5.0, 6, 4).unwrap();
        let nodes = sigma_nodes(&k, &q);
        let total: f64 = nodes.iter().map(|n| n.weight).sum();
        assert!(nodes.iter().all(|n| n.weight > 0.0 && n.theta > k.theta_min && n.theta < PI / 2.0));
        assert!((total - k.sphere_weight()).abs() <= 1e-10 * k.sphere_weight());
    }
}

#[test]
fn linearized_operator_is_nonnegative() {
    let k = KernelSpec::default();
    let q = CollisionQuadrature::new(8, 5.0, 4, 4).unwrap();
    let sym = l_matrix(&k, &q).unwrap().symmetric_form();
    let eig = sym.symmetric_eigenvalues();
    let top = eig.iter().cloned().fold(0.0, f64::max);
    let bottom = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(bottom >= -QUAD_TOL * top, "lowest eigenvalue {bottom:e} vs top {top:e}");
}

#[test]
fn grazing_cutoff_halving_is_benign() {
    let q = CollisionQuadrature::new(8, 5.0, 4, 4).unwrap();
    let f = kinlab::cli::commands::conservation_test_field(&q);
    for s in [0.3, 0.5, 0.6] {
        let run = |theta_min: f64| {
            let k = KernelSpec::new(0.0, s, 1.0, theta_min).unwrap();
            q_apply(&f, &f, &k, &q).unwrap().values().to_vec()
        };
        let a = run(1e-3);
        let b = run(5e-4);
        let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        let n: f64 = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        assert!(d / n <= 0.02, "s = {s}: relative change {}", d / n);
    }
}

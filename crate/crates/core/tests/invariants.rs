use std::sync::Arc;

use nalgebra::{DVector, Vector2};
use proptest::prelude::*;
use randhyp_core::cocycle::{birkhoff_sum_phi, cocycle_product, iterate, unit_tangent_step};
use randhyp_core::ergodic::{
    empirical_minimizing_sequence, integrate_observable, integrate_phi, necklaces,
    pushforward_projection, Atom, EmpiricalMeasure,
};
use randhyp_core::expansion::{
    min_expansion_table, recursion_check, supadditivity_residuals, tempered_constant,
};
use randhyp_core::lyapunov::{mean_log_det, oseledets_spectrum};
use randhyp_core::manifold::{circle_delta, wrap_unit};
use randhyp_core::seeding;
use randhyp_core::splitting::{finite_time_bundles, invariance_residual};
use randhyp_core::{
    BaseState, BaseSystem, BaseSystemSpec, FiberFamily, FiberFamilySpec, ManifoldPoint,
    UnitTangentPoint,
};

fn catalog() -> Vec<(FiberFamily, Arc<BaseSystem>)> {
    let coin = BaseSystemSpec::bernoulli(vec![0.5, 0.5]);
    let pairs = [
        (FiberFamilySpec::doubling(), BaseSystemSpec::dirac()),
        (
            FiberFamilySpec::perturbed_doubling(0.1),
            BaseSystemSpec::markov(vec![vec![0.9, 0.1], vec![0.4, 0.6]]),
        ),
        (FiberFamilySpec::bernoulli_linear(vec![2.0, 3.0]), coin.clone()),
        (
            FiberFamilySpec::diagonal(vec![2.0, 3.0], vec![3.0, 2.0]),
            BaseSystemSpec::rotation(0.5f64.sqrt(), 2),
        ),
        (
            FiberFamilySpec::random_cat(),
            BaseSystemSpec::bernoulli(vec![0.3, 0.7]),
        ),
    ];
    pairs
        .into_iter()
        .map(|(f, b)| (FiberFamily::new(&f).unwrap(), BaseSystem::new(&b).unwrap()))
        .collect()
}

fn start(family: &FiberFamily, system: &Arc<BaseSystem>, seed: u64) -> UnitTangentPoint {
    let dim = family.manifold_dim();
    UnitTangentPoint::new(
        BaseState::new(system, seed),
        seeding::fiber_point(seed, 0, dim),
        seeding::unit_vector(seed, 0, dim),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chain_rule(family_index in 0usize..5, seed in any::<u64>(), n in 1usize..15, k in 1usize..15) {
        let (family, system) = &catalog()[family_index];
        let p = start(family, system, seed);
        let orbit = iterate(family, &p.omega, &p.x, n).unwrap();
        let whole = cocycle_product(family, &p.omega, &p.x, n + k).unwrap();
        let first = cocycle_product(family, &p.omega, &p.x, n).unwrap();
        let second = cocycle_product(family, &p.omega.advance(n as i64), &orbit[n], k).unwrap();
        let composed = second.after(&first);
        let err = (whole.entries() - composed.entries()).norm() / whole.entries().norm();
        prop_assert!(err < 1e-9, "relative error {err}");
    }

    #[test]
    fn birkhoff_sums_telescope(family_index in 0usize..5, seed in any::<u64>(), n in 1usize..30) {
        let (family, system) = &catalog()[family_index];
        let p = start(family, system, seed);
        let direct = cocycle_product(family, &p.omega, &p.x, n).unwrap().apply(&p.v).norm().ln();
        let sum = birkhoff_sum_phi(family, &p, n).unwrap();
        prop_assert!((sum - direct).abs() < 1e-9 * n as f64 * direct.abs().max(1.0));
    }

    #[test]
    fn tangent_steps_stay_unit(family_index in 0usize..5, seed in any::<u64>()) {
        let (family, system) = &catalog()[family_index];
        let mut p = start(family, system, seed);
        for _ in 0..20 {
            p = unit_tangent_step(family, &p).unwrap();
            prop_assert!((p.v.norm() - 1.0).abs() < 1e-12);
            prop_assert!(p.x.coords().iter().all(|c| (0.0..1.0).contains(c)));
        }
    }

    #[test]
    fn circle_derivative_matches_finite_differences(family_index in 0usize..3, seed in any::<u64>(), x in 0.01f64..0.99) {
        let (family, system) = &catalog()[family_index];
        let w = BaseState::new(system, seed);
        let local = family.local(&w).unwrap();
        let h = 1e-6;
        let fd = (local.lift(x + h) - local.lift(x - h)) / (2.0 * h);
        prop_assert!((fd - local.circle_derivative(x)).abs() < 1e-6);
    }

    #[test]
    fn derivative_bounds_are_sound(family_index in 0usize..5, seed in any::<u64>()) {
        let (family, system) = &catalog()[family_index];
        let b = family.derivative_bounds();
        let p = start(family, system, seed);
        let d = family.fiber_derivative(&p.omega, &p.x).unwrap();
        let stretch = d.apply(&p.v).norm();
        prop_assert!(stretch <= b.sup_dphi * (1.0 + 1e-12));
        prop_assert!(1.0 / stretch <= b.sup_dphi_inv * (1.0 + 1e-12));
    }

    #[test]
    fn base_shifts_compose(family_index in 0usize..5, seed in any::<u64>(), a in -200i64..200, b in -200i64..200) {
        let (_, system) = &catalog()[family_index];
        let w = BaseState::new(system, seed);
        let ab = w.advance(a).advance(b);
        let direct = w.advance(a + b);
        prop_assert_eq!(ab.symbol_at(0).unwrap(), direct.symbol_at(0).unwrap());
        prop_assert_eq!(w.advance(a).symbol_at(b).unwrap(), w.symbol_at(a + b).unwrap());
    }

    #[test]
    fn certified_lower_bound_is_below_every_point(seed in any::<u64>(), n in 1usize..8, x in 0.0f64..1.0) {
        let (family, system) = &catalog()[1];
        let w = BaseState::new(system, seed);
        let table = min_expansion_table(family, &w, n, 256).unwrap();
        let row = table.row(n);
        let p = UnitTangentPoint::new(w, ManifoldPoint::circle(x), DVector::from_element(1, 1.0)).unwrap();
        let at_x = birkhoff_sum_phi(family, &p, n).unwrap();
        prop_assert!(row.lower <= row.upper);
        prop_assert!(row.lower <= at_x + 1e-12);
    }

    #[test]
    fn supadditivity_holds_with_certified_bounds(seed in any::<u64>(), n_total in 2usize..8) {
        let (family, system) = &catalog()[1];
        let w = BaseState::new(system, seed);
        let r = supadditivity_residuals(family, &w, n_total, 512).unwrap();
        prop_assert!(r.min_residual >= -1e-9, "residual {}", r.min_residual);
    }

    #[test]
    fn tempered_constant_decreases_with_depth(family_index in 0usize..4, seed in any::<u64>(), depth in 1usize..20) {
        let (family, system) = &catalog()[family_index];
        let w = BaseState::new(system, seed);
        let shallow = tempered_constant(family, &w, 0.2, depth, 256).unwrap().value;
        let deep = tempered_constant(family, &w, 0.2, depth + 1, 256).unwrap().value;
        prop_assert!(deep <= shallow);
        prop_assert!(deep > 0.0);
    }

    #[test]
    fn recursion_bound_on_exact_families(family_index in 0usize..5, seed in any::<u64>(), rate in 0.05f64..0.6) {
        prop_assume!(family_index != 1);
        let (family, system) = &catalog()[family_index];
        let w = BaseState::new(system, seed);
        let c = recursion_check(family, &w, rate, 30, 64).unwrap();
        prop_assert!(c.ratio_margin >= -1e-12);
        if let Some(m) = c.step_margin {
            prop_assert!(m >= -1e-12);
        }
    }

    #[test]
    fn spectrum_sum_rule(family_index in 0usize..5, seed in any::<u64>()) {
        let (family, system) = &catalog()[family_index];
        let p = start(family, system, seed);
        let s = oseledets_spectrum(family, &p.omega, &p.x, 300).unwrap();
        let det = mean_log_det(family, &p.omega, &p.x, 300).unwrap();
        prop_assert!((s.sum() - det).abs() < 1e-8);
        prop_assert!(s.exponents.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn empirical_measure_reproduces_minimal_expansion(family_index in 0usize..5, seed in any::<u64>(), n in 1usize..10) {
        let (family, system) = &catalog()[family_index];
        let w = BaseState::new(system, seed);
        let (m, _) = empirical_minimizing_sequence(family, &w, n, 512).unwrap();
        let table = min_expansion_table(family, &w, n, 512).unwrap();
        let integral = integrate_phi(family, &m).unwrap();
        prop_assert!((integral - table.row(n).upper / n as f64).abs() < 1e-12);
    }

    #[test]
    fn projection_preserves_integrals(seed in any::<u64>(), weights in prop::collection::vec(0.01f64..1.0, 1..8), a in -2.0f64..2.0) {
        let (_, system) = &catalog()[2];
        let total: f64 = weights.iter().sum();
        let atoms = weights
            .iter()
            .enumerate()
            .map(|(i, wt)| Atom {
                omega: BaseState::new(system, seed.wrapping_add(i as u64)),
                x: seeding::fiber_point(seed, i as u64, 1),
                v: DVector::from_element(1, if i % 2 == 0 { 1.0 } else { -1.0 }),
                weight: wt / total,
            })
            .collect();
        let m = EmpiricalMeasure::new(atoms).unwrap().normalize();
        let f = |w: &BaseState, x: &ManifoldPoint| a * x.x() + w.symbol_at(0).unwrap() as f64;
        let lifted = integrate_observable(&m, |atom| Ok(f(&atom.omega, &atom.x))).unwrap();
        let projected = pushforward_projection(&m).unwrap().integrate(f).unwrap();
        prop_assert!((lifted - projected).abs() < 1e-12);
    }

    #[test]
    fn wrap_lands_in_unit_interval(x in -1e6f64..1e6) {
        let y = wrap_unit(x);
        prop_assert!((0.0..1.0).contains(&y));
        prop_assert!(circle_delta(y, x).abs() < 1e-9);
    }
}

#[test]
fn necklaces_are_rotation_minimal() {
    for word in necklaces(3, 5) {
        for r in 1..word.len() {
            let rotated: Vec<usize> = word[r..].iter().chain(&word[..r]).copied().collect();
            assert!(rotated >= word);
        }
    }
}

#[test]
fn markov_symbol_frequencies_match_stationary_vector() {
    let system = BaseSystem::new(&BaseSystemSpec::markov(vec![vec![0.9, 0.1], vec![0.4, 0.6]])).unwrap();
    let pi = system.stationary();
    let n = 40_000;
    let w = BaseState::new(&system, 17);
    let ones = (-(n as i64) / 2..n as i64 / 2)
        .filter(|k| w.symbol_at(*k).unwrap() == 1)
        .count();
    assert!((ones as f64 / n as f64 - pi[1]).abs() < 0.02);
}

#[test]
fn random_cat_bundles_converge_and_are_invariant() {
    let (family, system) = &catalog()[4];
    for seed in 0..10 {
        let w = BaseState::new(system, seed);
        let x = ManifoldPoint::origin(2);
        let truth = finite_time_bundles(family, &w, &x, 80).unwrap();
        let gap = |h: usize| {
            let p = finite_time_bundles(family, &w, &x, h).unwrap();
            let a = randhyp_core::linalg::line_angle(&p.gamma2(), &truth.gamma2());
            let b = randhyp_core::linalg::line_angle(&p.gamma1(), &truth.gamma1());
            a.max(b)
        };
        assert!(gap(12) < gap(6) || gap(6) < 1e-14);
        let r5 = invariance_residual(family, &w, &x, &finite_time_bundles(family, &w, &x, 5).unwrap()).unwrap();
        let r10 = invariance_residual(family, &w, &x, &finite_time_bundles(family, &w, &x, 10).unwrap()).unwrap();
        assert!(r10 < r5);
        let pair = finite_time_bundles(family, &w, &x, 50).unwrap();
        let g2: Vector2<f64> = pair.gamma2();
        assert!((g2.norm() - 1.0).abs() < 1e-12);
    }
}

//! Independent re-implementations checked against the library.

use std::f64::consts::{LN_2, PI};

use randhyp_core::expansion::{min_expansion_table, tempered_constant};
use randhyp_core::lyapunov::{oseledets_spectrum, top_exponent};
use randhyp_core::{
    BaseState, BaseSystem, BaseSystemSpec, FiberFamily, FiberFamilySpec, ManifoldPoint,
    UnitTangentPoint,
};

/// log|(φⁿ)'(x)| for x ↦ 2x + ε sin 2πx with ε = eps_max·s/(alphabet−1).
fn brute_log_expansion(symbols: &[usize], eps_max: f64, alphabet: usize, x0: f64) -> f64 {
    let mut x = x0;
    let mut total = 0.0;
    for &s in symbols {
        let eps = if alphabet > 1 { eps_max * s as f64 / (alphabet - 1) as f64 } else { eps_max };
        total += (2.0 + 2.0 * PI * eps * (2.0 * PI * x).cos()).abs().ln();
        x = (2.0 * x + eps * (2.0 * PI * x).sin()).rem_euclid(1.0);
    }
    total
}

#[test]
fn certified_bounds_bracket_a_dense_minimum() {
    let family = FiberFamily::new(&FiberFamilySpec::perturbed_doubling(0.1)).unwrap();
    let system = BaseSystem::new(&BaseSystemSpec::bernoulli(vec![0.5, 0.5])).unwrap();
    let n = 6;
    for seed in [3u64, 17, 2024] {
        let w = BaseState::new(&system, seed);
        let symbols: Vec<usize> = (0..n as i64).map(|k| w.symbol_at(k).unwrap()).collect();
        let points = 1_000_000;
        let brute = (0..points)
            .map(|i| brute_log_expansion(&symbols, 0.1, 2, i as f64 / points as f64))
            .fold(f64::INFINITY, f64::min);
        let table = min_expansion_table(&family, &w, n, 8192).unwrap();
        for (k, row) in table.rows.iter().enumerate() {
            let prefix = (0..points / 10)
                .map(|i| brute_log_expansion(&symbols[..=k], 0.1, 2, i as f64 / (points / 10) as f64))
                .fold(f64::INFINITY, f64::min);
            assert!(row.lower <= prefix, "n={} lower {} > {}", k + 1, row.lower, prefix);
            assert!(row.upper - prefix < 1e-4, "n={} upper {} vs {}", k + 1, row.upper, prefix);
        }
        let last = table.row(n);
        assert!(last.lower <= brute && brute <= last.upper + 1e-12, "{last:?} vs {brute}");
        assert!(last.upper - brute < 1e-4, "grid gap {}", last.upper - brute);
    }
}

#[test]
fn one_point_base_minimum_matches_brute_force() {
    let family = FiberFamily::new(&FiberFamilySpec::perturbed_doubling(0.1)).unwrap();
    let system = BaseSystem::new(&BaseSystemSpec::dirac()).unwrap();
    let w = BaseState::new(&system, 0);
    let n = 4;
    let points = 400_000;
    let brute = (0..points)
        .map(|i| brute_log_expansion(&[0; 4], 0.1, 1, i as f64 / points as f64))
        .fold(f64::INFINITY, f64::min);
    let row = min_expansion_table(&family, &w, n, 8192).unwrap().row(n);
    assert!(row.lower <= brute && brute <= row.upper + 1e-12);
    assert!(brute / n as f64 >= (2.0 - 0.2 * PI).ln());
}

#[test]
fn doubling_constants_are_exact() {
    let family = FiberFamily::new(&FiberFamilySpec::doubling()).unwrap();
    let system = BaseSystem::new(&BaseSystemSpec::dirac()).unwrap();
    let w = BaseState::new(&system, 0);
    let table = min_expansion_table(&family, &w, 30, 8192).unwrap();
    for (k, row) in table.rows.iter().enumerate() {
        assert_eq!(row.lower, row.upper);
        assert!((row.lower - (k + 1) as f64 * LN_2).abs() < 1e-12);
    }
    let c = tempered_constant(&family, &w, LN_2, 30, 8192).unwrap();
    assert!((c.value - 1.0).abs() < 1e-12);
    let p = UnitTangentPoint::along_first_axis(w, ManifoldPoint::circle(0.3));
    let top = top_exponent(&family, &p, 1000, 10).unwrap();
    assert!((top.value - LN_2).abs() < 1e-12);
}

#[test]
fn diagonal_spectrum_is_the_mean_log_entries() {
    let family = FiberFamily::new(&FiberFamilySpec::diagonal(vec![2.0, 0.5], vec![3.0, 0.25])).unwrap();
    let system = BaseSystem::new(&BaseSystemSpec::bernoulli(vec![0.5, 0.5])).unwrap();
    let w = BaseState::new(&system, 4);
    let n = 2000;
    let (mut la, mut lb) = (0.0, 0.0);
    for k in 0..n as i64 {
        let s = w.symbol_at(k).unwrap();
        la += [2.0f64, 0.5][s].ln();
        lb += [3.0f64, 0.25][s].ln();
    }
    let (la, lb) = (la / n as f64, lb / n as f64);
    let s = oseledets_spectrum(&family, &w, &ManifoldPoint::torus(0.1, 0.2), n).unwrap();
    assert!((s.bottom() - la.min(lb)).abs() < 1e-9, "{s:?} vs {la} {lb}");
    assert!((s.top() - la.max(lb)).abs() < 1e-9);
}

#[test]
fn cat_exponents_match_the_eigenvalues() {
    let family = FiberFamily::new(&FiberFamilySpec::random_cat()).unwrap();
    let system = BaseSystem::new(&BaseSystemSpec::dirac()).unwrap();
    let golden = ((3.0 + 5f64.sqrt()) / 2.0).ln();
    let s = oseledets_spectrum(&family, &BaseState::new(&system, 1), &ManifoldPoint::torus(0.3, 0.7), 1000)
        .unwrap();
    assert!((s.top() - golden).abs() < 1e-3);
    assert!((s.bottom() + golden).abs() < 1e-3);
}

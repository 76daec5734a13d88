//! Stable and unstable bundles of invertible linear cocycles.
//!
//! Γ²(ω) is approximated by the top left-singular direction of the product
//! over the window θ^{-h}ω … θ^{-1}ω, and Γ¹(ω) by the top left-singular
//! direction of the inverse product over ω … θ^{h-1}ω. Growth along Γ² is
//! measured by iterating forward; contraction along Γ¹ is measured by
//! iterating the inverse cocycle backward from Γ¹(θⁿω), where Γ¹ is
//! attracting and round-off does not blow up.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{sample_states, BaseState, BaseSystem};
use crate::cocycle::{TangentWalker, UnitTangentPoint};
use crate::error::{Error, Result};
use crate::expansion::{doubling_schedule, CurvePoint, DEFAULT_DEPTH, DEFAULT_TEMPEREDNESS_THRESHOLD};
use crate::fiber::{FiberFamily, LocalMap};
use crate::linalg;
use crate::lyapunov::{oseledets_spectrum_after, top_exponent, DEFAULT_BATCHES};
use crate::manifold::ManifoldPoint;
use crate::seeding;

pub const INVARIANCE_TOLERANCE: f64 = 1e-6;
pub const HORIZON_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundlePair {
    /// Contracting direction.
    pub gamma1: [f64; 2],
    /// Expanding direction.
    pub gamma2: [f64; 2],
    pub horizon: usize,
    /// Principal angle in (0, π/2].
    pub angle: f64,
}

impl BundlePair {
    pub fn gamma1(&self) -> Vector2<f64> {
        Vector2::new(self.gamma1[0], self.gamma1[1])
    }

    pub fn gamma2(&self) -> Vector2<f64> {
        Vector2::new(self.gamma2[0], self.gamma2[1])
    }
}

fn matrix_at(family: &FiberFamily, omega: &BaseState) -> Result<Matrix2<f64>> {
    match family.local(omega)? {
        LocalMap::Linear(m) => Ok(m),
        LocalMap::Circle { .. } => unreachable!("checked by require_invertible"),
    }
}

fn require_invertible(family: &FiberFamily) -> Result<()> {
    if !(family.is_linear() && family.invertible()) {
        return Err(Error::Unsupported(format!(
            "family `{}` is not an invertible linear cocycle",
            family.id().name()
        )));
    }
    Ok(())
}

/// Sign convention so that equal lines give equal vectors.
fn canonical(v: Vector2<f64>) -> [f64; 2] {
    let v = v.normalize();
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        [-v[0], -v[1]]
    } else {
        [v[0], v[1]]
    }
}

fn gamma2_at(family: &FiberFamily, omega: &BaseState, horizon: usize) -> Result<Vector2<f64>> {
    let mut acc = Matrix2::identity();
    for k in (1..=horizon as i64).rev() {
        acc = matrix_at(family, &omega.advance(-k))? * acc;
        acc /= acc.amax();
    }
    Ok(linalg::top_left_singular_vector(&acc))
}

fn gamma1_at(family: &FiberFamily, omega: &BaseState, horizon: usize) -> Result<Vector2<f64>> {
    let mut acc = Matrix2::identity();
    for i in 0..horizon as i64 {
        acc *= linalg::inverse(&matrix_at(family, &omega.advance(i))?);
        acc /= acc.amax();
    }
    Ok(linalg::top_left_singular_vector(&acc))
}

/// Finite-time approximations of Γ¹(ω) and Γ²(ω). For linear cocycles the
/// bundles do not depend on `x`, which is accepted for interface symmetry.
pub fn finite_time_bundles(
    family: &FiberFamily,
    omega: &BaseState,
    x: &ManifoldPoint,
    horizon: usize,
) -> Result<BundlePair> {
    require_invertible(family)?;
    if horizon < 2 {
        return Err(Error::Contract(format!("bundle horizon must be ≥ 2, got {horizon}")));
    }
    if x.dim() != 2 {
        return Err(Error::Contract("bundles live over the 2-torus".into()));
    }
    let g1 = gamma1_at(family, omega, horizon)?;
    let g2 = gamma2_at(family, omega, horizon)?;
    Ok(BundlePair {
        gamma1: canonical(g1),
        gamma2: canonical(g2),
        horizon,
        angle: linalg::line_angle(&g1, &g2),
    })
}

/// max over i of sin∠(Dφ_ω Γⁱ(ω), Γⁱ(θω)), with the pair at θω recomputed
/// at the same horizon.
pub fn invariance_residual(
    family: &FiberFamily,
    omega: &BaseState,
    x: &ManifoldPoint,
    pair: &BundlePair,
) -> Result<f64> {
    require_invertible(family)?;
    let local = family.local(omega)?;
    let d = matrix_at(family, omega)?;
    let next = finite_time_bundles(family, &omega.base_step(), &local.apply(x), pair.horizon)?;
    let r1 = linalg::line_sine(&(d * pair.gamma1()), &next.gamma1());
    let r2 = linalg::line_sine(&(d * pair.gamma2()), &next.gamma2());
    Ok(r1.max(r2))
}

/// Prefix sums t_k = −log|D⁽ᵏ⁾_ω Γ¹(ω)| for k = 0..=n, from a backward sweep
/// of the inverse cocycle started at Γ¹(θⁿω).
fn contraction_profile(family: &FiberFamily, omega: &BaseState, horizon: usize, n: usize) -> Result<Vec<f64>> {
    let mut u = gamma1_at(family, &omega.advance(n as i64), horizon)?;
    let mut terms = vec![0.0; n];
    for i in (0..n).rev() {
        let w = linalg::inverse(&matrix_at(family, &omega.advance(i as i64))?) * u;
        let r = w.norm();
        terms[i] = r.ln();
        u = w / r;
    }
    let mut out = Vec::with_capacity(n + 1);
    let mut s = 0.0;
    out.push(0.0);
    for t in terms {
        s += t;
        out.push(s);
    }
    Ok(out)
}

/// Prefix sums log|D⁽ᵏ⁾_ω Γ²(ω)| for k = 0..=n.
fn expansion_profile(family: &FiberFamily, omega: &BaseState, gamma2: Vector2<f64>, n: usize) -> Result<Vec<f64>> {
    let mut v = gamma2;
    let mut w = omega.clone();
    let mut out = Vec::with_capacity(n + 1);
    let mut s = 0.0;
    out.push(0.0);
    for _ in 0..n {
        let image = matrix_at(family, &w)? * v;
        let r = image.norm();
        s += r.ln();
        v = image / r;
        out.push(s);
        w = w.base_step();
    }
    Ok(out)
}

/// log of min over 1 ≤ k ≤ depth of e^{profile[k] − λk}.
fn log_constant(profile: &[f64], rate: f64, depth: usize) -> f64 {
    (1..=depth.min(profile.len() - 1))
        .map(|k| profile[k] - rate * k as f64)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundleRates {
    /// −(1/n)·log|D⁽ⁿ⁾Γ¹|, positive for contraction.
    pub rate1: f64,
    /// (1/n)·log|D⁽ⁿ⁾Γ²|.
    pub rate2: f64,
    /// C₁ with |D⁽ᵏ⁾ξ| ≤ C₁⁻¹e^{-λk}|ξ| on Γ¹ over the depth window.
    pub c1: Option<f64>,
    /// C₂ with |D⁽ᵏ⁾η| ≥ C₂e^{λk}|η| on Γ² over the depth window.
    pub c2: Option<f64>,
}

/// Rates along the bundles over `n` steps. With a rate λ the truncated
/// constants C₁, C₂ are computed by the minimal-expansion recipe on each
/// bundle: Γ² under the forward cocycle, Γ¹ under the inverse cocycle.
pub fn bundle_rates(
    family: &FiberFamily,
    omega: &BaseState,
    x: &ManifoldPoint,
    pair: &BundlePair,
    n: usize,
    rate: Option<f64>,
    depth: usize,
) -> Result<BundleRates> {
    require_invertible(family)?;
    if n == 0 || x.dim() != 2 {
        return Err(Error::Contract("bundle rates need n ≥ 1 on the 2-torus".into()));
    }
    let len = n.max(depth);
    let contraction = contraction_profile(family, omega, pair.horizon, len)?;
    let expansion = expansion_profile(family, omega, pair.gamma2(), len)?;
    let (c1, c2) = match rate {
        Some(r) => (
            Some(log_constant(&contraction, r, depth).exp()),
            Some(log_constant(&expansion, r, depth).exp()),
        ),
        None => (None, None),
    };
    Ok(BundleRates {
        rate1: contraction[n] / n as f64,
        rate2: expansion[n] / n as f64,
        c1,
        c2,
    })
}

/// (log C₁, log C₂) at ω.
fn log_constants(family: &FiberFamily, omega: &BaseState, horizon: usize, rate: f64, depth: usize) -> Result<(f64, f64)> {
    let contraction = contraction_profile(family, omega, horizon, depth)?;
    let g2 = gamma2_at(family, omega, horizon)?;
    let expansion = expansion_profile(family, omega, g2, depth)?;
    Ok((
        log_constant(&contraction, rate, depth),
        log_constant(&expansion, rate, depth),
    ))
}

/// Smallest bundle angle along the orbit θ⁰ω … θ^{len-1}ω.
pub fn orbit_min_angle(family: &FiberFamily, omega: &BaseState, horizon: usize, len: usize) -> Result<f64> {
    require_invertible(family)?;
    let mut min = f64::INFINITY;
    for k in 0..len as i64 {
        let w = omega.advance(k);
        let a = linalg::line_angle(&gamma1_at(family, &w, horizon)?, &gamma2_at(family, &w, horizon)?);
        min = min.min(a);
    }
    Ok(min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplittingVerdict {
    CertifiedHyperbolic,
    Inconclusive,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingOptions {
    pub samples: usize,
    pub horizon: usize,
    /// Steps for the rate fits.
    pub n: usize,
    /// λ; defaults to half the smallest sampled bundle rate.
    pub rate: Option<f64>,
    pub depth: usize,
    pub curve_n_max: usize,
    pub angle_orbit_len: usize,
    pub temperedness_threshold: f64,
}

impl Default for SplittingOptions {
    fn default() -> Self {
        Self {
            samples: 50,
            horizon: 50,
            n: 10_000,
            rate: None,
            depth: DEFAULT_DEPTH,
            curve_n_max: 1000,
            angle_orbit_len: 1000,
            temperedness_threshold: DEFAULT_TEMPEREDNESS_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingSample {
    pub index: usize,
    pub angle: f64,
    pub orbit_min_angle: f64,
    pub rate1: f64,
    pub rate2: f64,
    pub residual: f64,
    /// Largest angle between bundles at horizons 4h/5 and 6h/5.
    pub horizon_gap: f64,
    pub top_exponent: f64,
    pub top_exponent_std_err: f64,
    pub bottom_exponent: f64,
    pub rates_consistent: bool,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingCertificate {
    pub lambda: Option<f64>,
    pub angle_min: f64,
    pub invariance_residual_max: f64,
    pub horizon_gap_max: f64,
    pub rates_consistent: bool,
    pub min_rate: f64,
    pub c1_curve: Vec<CurvePoint>,
    pub c2_curve: Vec<CurvePoint>,
    pub temperedness_threshold: f64,
    pub horizon: usize,
    pub n: usize,
    pub depth: usize,
    pub samples: Vec<SplittingSample>,
    pub verdict: SplittingVerdict,
}

/// Aggregate evidence that the torus is a random uniformly hyperbolic set.
pub fn hyperbolicity_certificate(
    family: &FiberFamily,
    system: &Arc<BaseSystem>,
    seed: u64,
    opts: &SplittingOptions,
) -> Result<SplittingCertificate> {
    require_invertible(family)?;
    if opts.horizon < 3 {
        return Err(Error::Contract(format!("horizon must be ≥ 3, got {}", opts.horizon)));
    }
    if opts.n < DEFAULT_BATCHES {
        return Err(Error::Contract(format!("n must be ≥ {DEFAULT_BATCHES}, got {}", opts.n)));
    }
    let states = sample_states(system, seed, opts.samples)?;
    let h = opts.horizon;
    let (h_short, h_long) = ((4 * h / 5).max(2), 6 * h / 5);

    struct Raw {
        pair: BundlePair,
        rates: BundleRates,
        residual: f64,
        horizon_gap: f64,
        orbit_min_angle: f64,
        top: f64,
        top_se: f64,
        bottom: f64,
    }

    let raw: Vec<Raw> = states
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let x = seeding::fiber_point(seed, i as u64, 2);
            let pair = finite_time_bundles(family, w, &x, h)?;
            let short = finite_time_bundles(family, w, &x, h_short)?;
            let long = finite_time_bundles(family, w, &x, h_long)?;
            let horizon_gap = linalg::line_angle(&short.gamma1(), &long.gamma1())
                .max(linalg::line_angle(&short.gamma2(), &long.gamma2()));
            let residual = invariance_residual(family, w, &x, &pair)?;
            let rates = bundle_rates(family, w, &x, &pair, opts.n, None, opts.depth)?;
            // Both check estimators are warmed up over θ^{-h}ω … θ^{-1}ω so
            // that their window is the one the bundle rates use.
            let v = seeding::unit_vector(seed, i as u64, 2);
            let warm_start = w.advance(-(h as i64));
            let p = UnitTangentPoint::new(warm_start.clone(), x, v)?;
            let mut walker = TangentWalker::new(family, &p)?;
            for _ in 0..h {
                walker.step()?;
            }
            let top = top_exponent(family, &walker.point(), opts.n, DEFAULT_BATCHES)?;
            let spectrum = oseledets_spectrum_after(family, &warm_start, &x, opts.n, h)?;
            let orbit_min_angle = orbit_min_angle(family, w, h, opts.angle_orbit_len.max(1))?;
            Ok(Raw {
                pair,
                rates,
                residual,
                horizon_gap,
                orbit_min_angle,
                top: top.value,
                top_se: top.batch_std_err,
                bottom: spectrum.bottom(),
            })
        })
        .collect::<Result<_>>()?;

    let min_rate = raw
        .iter()
        .map(|r| r.rates.rate1.min(r.rates.rate2))
        .fold(f64::INFINITY, f64::min);
    let rate = match opts.rate {
        Some(r) if r > 0.0 && r.is_finite() => Some(r),
        Some(r) => {
            return Err(Error::config(
                "task_params.lambda",
                format!("λ = {r} violates Λ > λ > 0: λ must be positive"),
            ))
        }
        None => (min_rate > 0.0).then_some(0.5 * min_rate),
    };

    let constants: Vec<(f64, f64)> = match rate {
        Some(r) => states
            .par_iter()
            .map(|w| log_constants(family, w, h, r, opts.depth))
            .collect::<Result<_>>()?,
        None => vec![(f64::NAN, f64::NAN); states.len()],
    };

    let samples: Vec<SplittingSample> = raw
        .iter()
        .zip(&constants)
        .enumerate()
        .map(|(index, (r, c))| {
            let tol = 3.0 * r.top_se + 1e-9;
            let rates_consistent =
                (r.rates.rate2 - r.top).abs() <= tol && (r.rates.rate1 + r.bottom).abs() <= tol;
            SplittingSample {
                index,
                angle: r.pair.angle,
                orbit_min_angle: r.orbit_min_angle,
                rate1: r.rates.rate1,
                rate2: r.rates.rate2,
                residual: r.residual,
                horizon_gap: r.horizon_gap,
                top_exponent: r.top,
                top_exponent_std_err: r.top_se,
                bottom_exponent: r.bottom,
                rates_consistent,
                c1: c.0.exp(),
                c2: c.1.exp(),
            }
        })
        .collect();

    let (c1_curve, c2_curve) = match rate {
        Some(r) => constant_curves(family, &states, h, r, opts.depth, opts.curve_n_max)?,
        None => (Vec::new(), Vec::new()),
    };

    let angle_min = samples
        .iter()
        .map(|s| s.angle.min(s.orbit_min_angle))
        .fold(f64::INFINITY, f64::min);
    let invariance_residual_max = samples.iter().map(|s| s.residual).fold(0.0, f64::max);
    let horizon_gap_max = samples.iter().map(|s| s.horizon_gap).fold(0.0, f64::max);
    let rates_consistent = samples.iter().all(|s| s.rates_consistent);

    let verdict = if min_rate <= 0.0 {
        SplittingVerdict::Violated
    } else {
        let lambda = rate.expect("positive rates give a default λ");
        let tempered = [&c1_curve, &c2_curve].iter().all(|curve| {
            curve
                .last()
                .is_some_and(|p| p.value.abs() < opts.temperedness_threshold)
        });
        let constants_ok = samples
            .iter()
            .all(|s| s.c1 > 0.0 && s.c1.is_finite() && s.c2 > 0.0 && s.c2.is_finite());
        if invariance_residual_max < INVARIANCE_TOLERANCE
            && angle_min > 0.0
            && horizon_gap_max < HORIZON_TOLERANCE
            && rates_consistent
            && min_rate >= lambda
            && constants_ok
            && tempered
        {
            SplittingVerdict::CertifiedHyperbolic
        } else {
            SplittingVerdict::Inconclusive
        }
    };

    Ok(SplittingCertificate {
        lambda: rate,
        angle_min,
        invariance_residual_max,
        horizon_gap_max,
        rates_consistent,
        min_rate,
        c1_curve,
        c2_curve,
        temperedness_threshold: opts.temperedness_threshold,
        horizon: h,
        n: opts.n,
        depth: opts.depth,
        samples,
        verdict,
    })
}

fn constant_curves(
    family: &FiberFamily,
    states: &[BaseState],
    horizon: usize,
    rate: f64,
    depth: usize,
    n_max: usize,
) -> Result<(Vec<CurvePoint>, Vec<CurvePoint>)> {
    let schedule = doubling_schedule(n_max);
    let per_state: Vec<Vec<(f64, f64)>> = states
        .par_iter()
        .map(|w| {
            schedule
                .iter()
                .map(|&m| log_constants(family, &w.advance(m as i64), horizon, rate, depth))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let count = per_state.len() as f64;
    let mut c1 = Vec::with_capacity(schedule.len());
    let mut c2 = Vec::with_capacity(schedule.len());
    for (i, &m) in schedule.iter().enumerate() {
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in &per_state {
            s1 += v[i].0 / m as f64;
            s2 += v[i].1 / m as f64;
        }
        c1.push(CurvePoint { n: m, value: s1 / count });
        c2.push(CurvePoint { n: m, value: s2 / count });
    }
    Ok((c1, c2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::BaseSystemSpec;
    use crate::fiber::FiberFamilySpec;
    use approx::assert_relative_eq;

    fn dirac_system() -> Arc<BaseSystem> {
        BaseSystem::new(&BaseSystemSpec::dirac()).unwrap()
    }

    fn dirac() -> BaseState {
        BaseState::new(&dirac_system(), 0)
    }

    fn cat() -> FiberFamily {
        FiberFamily::new(&FiberFamilySpec::random_cat()).unwrap()
    }

    fn origin() -> ManifoldPoint {
        ManifoldPoint::origin(2)
    }

    #[test]
    fn cat_bundles_are_eigenvectors() {
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let e2 = Vector2::new(1.0, phi);
        let e1 = Vector2::new(1.0, -(5f64.sqrt() + 1.0) / 2.0);
        for h in [20, 40] {
            let pair = finite_time_bundles(&cat(), &dirac(), &origin(), h).unwrap();
            assert!(linalg::line_angle(&pair.gamma2(), &e2) < 1e-8);
            assert!(linalg::line_angle(&pair.gamma1(), &e1) < 1e-8);
            assert_relative_eq!(pair.angle, std::f64::consts::FRAC_PI_2, epsilon = 1e-8);
        }
    }

    #[test]
    fn diagonal_bundles_are_axes() {
        let f = FiberFamily::new(&FiberFamilySpec::diagonal(vec![2.0], vec![0.5])).unwrap();
        let pair = finite_time_bundles(&f, &dirac(), &origin(), 10).unwrap();
        assert_eq!(pair.gamma2, [1.0, 0.0]);
        assert_eq!(pair.gamma1, [0.0, 1.0]);
        assert_eq!(invariance_residual(&f, &dirac(), &origin(), &pair).unwrap(), 0.0);
        let r = bundle_rates(&f, &dirac(), &origin(), &pair, 100, None, 10).unwrap();
        assert_relative_eq!(r.rate1, 2f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(r.rate2, 2f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn cat_rates_and_residual() {
        let pair = finite_time_bundles(&cat(), &dirac(), &origin(), 40).unwrap();
        assert!(invariance_residual(&cat(), &dirac(), &origin(), &pair).unwrap() < 1e-10);
        let r = bundle_rates(&cat(), &dirac(), &origin(), &pair, 1000, Some(0.5), 50).unwrap();
        let expected = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        assert_relative_eq!(r.rate1, expected, epsilon = 1e-3);
        assert_relative_eq!(r.rate2, expected, epsilon = 1e-3);
        assert!(r.c1.unwrap() > 0.0 && r.c2.unwrap() > 0.0);
    }

    #[test]
    fn expanding_maps_are_unsupported() {
        let f = FiberFamily::new(&FiberFamilySpec::doubling()).unwrap();
        assert!(matches!(
            finite_time_bundles(&f, &dirac(), &ManifoldPoint::circle(0.1), 10),
            Err(Error::Unsupported(_))
        ));
        let sys = dirac_system();
        assert!(hyperbolicity_certificate(&f, &sys, 1, &SplittingOptions::default()).is_err());
    }

    #[test]
    fn deterministic_cat_certificate() {
        let opts = SplittingOptions {
            samples: 4,
            n: 1000,
            angle_orbit_len: 20,
            ..Default::default()
        };
        let cert = hyperbolicity_certificate(&cat(), &dirac_system(), 1, &opts).unwrap();
        assert_eq!(cert.verdict, SplittingVerdict::CertifiedHyperbolic);
        assert_relative_eq!(cert.angle_min, std::f64::consts::FRAC_PI_2, epsilon = 1e-8);
    }
}

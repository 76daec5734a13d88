//! Measures on Ω × SM and the minimal average Λ = min_m ∫Φ dm.
//!
//! Three surrogates bound Λ from above: the empirical measures μₙ built on a
//! minimizing orbit segment (their Φ-integral is Aₙ(ω)/n), Birkhoff averages
//! from random starts, and periodic orbits of symbolic words. Periodic orbit
//! measures do not project to ℙ on the base, so their values are reported as
//! heuristic context and never enter the estimate.

use std::sync::Arc;

use nalgebra::{DVector, Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{sample_states, sample_states_in, BaseKind, BaseState, BaseSystem};
use crate::cocycle::{TangentWalker, UnitTangentPoint};
use crate::error::{Error, Result};
use crate::expansion::{self, min_expansion_table};
use crate::fiber::{FiberFamily, LocalMap};
use crate::linalg;
use crate::manifold::{circle_delta, wrap_unit, ManifoldPoint};
use crate::seeding::{self, stream};
use crate::stats::{self, MeanEstimate};

pub const MAX_PERIOD: usize = 12;
/// Roots of φ_w(x) = x + k examined per word; longer lists are subsampled evenly.
pub const MAX_ROOTS_PER_WORD: usize = 4096;
const MAX_WORDS: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub omega: BaseState,
    pub x: ManifoldPoint,
    pub v: DVector<f64>,
    pub weight: f64,
}

/// Finitely supported measure on Ω × SM.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<Atom>,
    pub normalized: bool,
}

fn weights_sum_to_one(total: f64, count: usize) -> bool {
    (total - 1.0).abs() <= 1e-12f64.max(4.0 * count as f64 * f64::EPSILON)
}

impl EmpiricalMeasure {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.iter().any(|a| !(a.weight > 0.0 && a.weight.is_finite())) {
            return Err(Error::Contract("atom weights must be positive".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        Ok(Self {
            normalized: weights_sum_to_one(total, atoms.len()),
            atoms,
        })
    }

    /// Uniform weights on the TF̂-orbit of `p` of length `n`.
    pub fn orbit(family: &FiberFamily, p: &UnitTangentPoint, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Contract("orbit measures need n ≥ 1".into()));
        }
        let mut walker = TangentWalker::new(family, p)?;
        let weight = 1.0 / n as f64;
        let mut atoms = Vec::with_capacity(n);
        for _ in 0..n {
            let q = walker.point();
            atoms.push(Atom {
                omega: q.omega,
                x: q.x,
                v: q.v,
                weight,
            });
            walker.step()?;
        }
        Self::new(atoms)
    }

    pub fn normalize(mut self) -> Self {
        let total: f64 = self.atoms.iter().map(|a| a.weight).sum();
        for a in &mut self.atoms {
            a.weight /= total;
        }
        self.normalized = true;
        self
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Φ(ω, x, v) = log|D_xφ_ω v|.
pub fn phi_at(family: &FiberFamily, omega: &BaseState, x: &ManifoldPoint, v: &DVector<f64>) -> Result<f64> {
    let d = family.fiber_derivative(omega, x)?;
    Ok(d.apply(v).norm().ln())
}

/// Σ weight·f over the atoms.
pub fn integrate_observable<F>(measure: &EmpiricalMeasure, f: F) -> Result<f64>
where
    F: Fn(&Atom) -> Result<f64>,
{
    if !measure.normalized {
        return Err(Error::Contract("integration needs a normalized measure".into()));
    }
    let mut total = 0.0;
    for a in &measure.atoms {
        total += a.weight * f(a)?;
    }
    Ok(total)
}

pub fn integrate_phi(family: &FiberFamily, measure: &EmpiricalMeasure) -> Result<f64> {
    integrate_observable(measure, |a| phi_at(family, &a.omega, &a.x, &a.v))
}

/// μₙ: uniform measure on the TF̂-orbit of a grid minimizer (xₙ, vₙ) of
/// log|D_xφ_ω⁽ⁿ⁾v|. Returns the measure and the minimizer.
pub fn empirical_minimizing_sequence(
    family: &FiberFamily,
    omega: &BaseState,
    n: usize,
    grid_size: usize,
) -> Result<(EmpiricalMeasure, UnitTangentPoint)> {
    let table = min_expansion_table(family, omega, n, grid_size)?;
    let (x, v) = table.argmin[n - 1];
    let v = match x.dim() {
        1 => DVector::from_element(1, 1.0),
        _ => DVector::from_column_slice(v.as_slice()),
    };
    let start = UnitTangentPoint::new(omega.clone(), x, v)?;
    let measure = EmpiricalMeasure::orbit(family, &start, n)?;
    Ok((measure, start))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedAtom {
    pub omega: BaseState,
    pub x: ManifoldPoint,
    pub weight: f64,
}

/// Measure on Ω × M.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedMeasure {
    pub atoms: Vec<ProjectedAtom>,
    pub normalized: bool,
}

impl ProjectedMeasure {
    pub fn integrate<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&BaseState, &ManifoldPoint) -> f64,
    {
        if !self.normalized {
            return Err(Error::Contract("integration needs a normalized measure".into()));
        }
        Ok(self.atoms.iter().map(|a| a.weight * f(&a.omega, &a.x)).sum())
    }
}

/// π*m: forget the tangent direction.
pub fn pushforward_projection(measure: &EmpiricalMeasure) -> Result<ProjectedMeasure> {
    if !measure.normalized {
        return Err(Error::Contract("projection needs a normalized measure".into()));
    }
    Ok(ProjectedMeasure {
        atoms: measure
            .atoms
            .iter()
            .map(|a| ProjectedAtom {
                omega: a.omega.clone(),
                x: a.x,
                weight: a.weight,
            })
            .collect(),
        normalized: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbitRecord {
    pub symbol_word: Vec<usize>,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub period: usize,
    /// (1/period)·Σ Φ along the orbit.
    pub phi_average: f64,
    /// Closure error |φ_w(x0) − x0| (per coordinate, on the torus).
    pub residual: f64,
}

/// Smallest word of each rotation class, lengths 1..=p_max, in
/// length-then-lexicographic order.
pub fn necklaces(alphabet: usize, p_max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for p in 1..=p_max {
        let total = alphabet.pow(p as u32);
        for code in 0..total {
            let mut word = vec![0; p];
            let mut c = code;
            for slot in word.iter_mut().rev() {
                *slot = c % alphabet;
                c /= alphabet;
            }
            let minimal = (1..p).all(|r| {
                let rotated = word[r..].iter().chain(&word[..r]);
                rotated.cmp(word.iter()) != std::cmp::Ordering::Less
            });
            if minimal {
                out.push(word);
            }
        }
    }
    out
}

/// Periodic orbits over words of length ≤ `p_max` of a full shift, sorted
/// by `phi_average`. For circle maps each word keeps its root with the
/// smallest Φ-average; linear maps use the origin with the least expanded
/// eigendirection of the word product.
pub fn enumerate_periodic_orbits(
    family: &FiberFamily,
    system: &BaseSystem,
    p_max: usize,
) -> Result<Vec<PeriodicOrbitRecord>> {
    if !matches!(system.kind(), BaseKind::Bernoulli | BaseKind::Dirac) {
        return Err(Error::Unsupported(format!(
            "periodic orbit enumeration needs a full shift base, got {:?}",
            system.kind()
        )));
    }
    if p_max == 0 || p_max > MAX_PERIOD {
        return Err(Error::Contract(format!(
            "period bound must be in 1..={MAX_PERIOD}, got {p_max}"
        )));
    }
    let alphabet = system.alphabet_size();
    if (alphabet as f64).powi(p_max as i32) > MAX_WORDS as f64 {
        return Err(Error::Contract(format!(
            "{alphabet}^{p_max} words exceed the enumeration limit {MAX_WORDS}"
        )));
    }
    let words = necklaces(alphabet, p_max);
    let mut records: Vec<PeriodicOrbitRecord> = words
        .par_iter()
        .map(|w| {
            let maps = w
                .iter()
                .map(|&s| family.local_for_symbol(s, alphabet))
                .collect::<Result<Vec<_>>>()?;
            Ok(match maps[0] {
                LocalMap::Circle { .. } => circle_orbit(w, &maps),
                LocalMap::Linear(_) => linear_orbit(w, &maps),
            })
        })
        .collect::<Result<_>>()?;
    records.sort_by(|a, b| a.phi_average.total_cmp(&b.phi_average));
    Ok(records)
}

fn circle_orbit_average(maps: &[LocalMap], x0: f64) -> (f64, f64) {
    let mut x = x0;
    let mut sum = 0.0;
    for m in maps {
        sum += m.circle_derivative(x).abs().ln();
        x = wrap_unit(m.lift(x));
    }
    (sum / maps.len() as f64, circle_delta(x, x0).abs())
}

fn circle_orbit(word: &[usize], maps: &[LocalMap]) -> PeriodicOrbitRecord {
    let lift = |x: f64| maps.iter().fold(x, |y, m| m.lift(y));
    let record = |x0: f64, (phi_average, residual): (f64, f64)| PeriodicOrbitRecord {
        symbol_word: word.to_vec(),
        x0: vec![x0],
        v0: vec![1.0],
        period: word.len(),
        phi_average,
        residual,
    };
    if maps.iter().all(LocalMap::x_independent) {
        return record(0.0, circle_orbit_average(maps, 0.0));
    }
    // x ↦ lift(x) − x increases from 0 to degree − 1 on [0, 1].
    let degree = lift(1.0).round() as usize;
    let roots = degree.saturating_sub(1).max(1);
    let ks: Vec<usize> = if roots <= MAX_ROOTS_PER_WORD {
        (0..roots).collect()
    } else {
        (0..MAX_ROOTS_PER_WORD)
            .map(|j| j * roots / MAX_ROOTS_PER_WORD)
            .collect()
    };
    let mut best: Option<PeriodicOrbitRecord> = None;
    for k in ks {
        let target = k as f64;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if lift(mid) - mid < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * 0.5 {
                break;
            }
        }
        let x0 = wrap_unit(0.5 * (lo + hi));
        let r = record(x0, circle_orbit_average(maps, x0));
        if best.as_ref().is_none_or(|b| r.phi_average < b.phi_average) {
            best = Some(r);
        }
    }
    best.expect("at least one root")
}

fn linear_orbit(word: &[usize], maps: &[LocalMap]) -> PeriodicOrbitRecord {
    let mats: Vec<Matrix2<f64>> = maps
        .iter()
        .map(|m| match m {
            LocalMap::Linear(d) => *d,
            LocalMap::Circle { .. } => unreachable!("families have one dimension"),
        })
        .collect();
    let mut product = Matrix2::identity();
    for m in &mats {
        product = m * product;
        product /= product.amax();
    }
    let v0 = least_expanded_direction(&product);
    let mut v = v0;
    let mut sum = 0.0;
    for m in &mats {
        let w = m * v;
        let r = w.norm();
        sum += r.ln();
        v = w / r;
    }
    PeriodicOrbitRecord {
        symbol_word: word.to_vec(),
        x0: vec![0.0, 0.0],
        v0: vec![v0[0], v0[1]],
        period: word.len(),
        phi_average: sum / word.len() as f64,
        residual: 0.0,
    }
}

/// Eigendirection of the smallest |eigenvalue| when the spectrum is real,
/// otherwise the least stretched right singular direction.
fn least_expanded_direction(p: &Matrix2<f64>) -> Vector2<f64> {
    let (a, b, c, d) = (p[(0, 0)], p[(0, 1)], p[(1, 0)], p[(1, 1)]);
    let tr = a + d;
    let disc = tr * tr - 4.0 * (a * d - b * c);
    if disc >= 0.0 {
        let s = disc.sqrt();
        let (m1, m2) = ((tr + s) / 2.0, (tr - s) / 2.0);
        let mu = if m1.abs() <= m2.abs() { m1 } else { m2 };
        let u = Vector2::new(b, mu - a);
        let w = Vector2::new(mu - d, c);
        let v = if u.norm() >= w.norm() { u } else { w };
        if v.norm() > 0.0 {
            return v.normalize();
        }
        // Scalar matrix: every direction is an eigendirection.
        return Vector2::new(1.0, 0.0);
    }
    let top = linalg::top_right_singular_vector(p);
    Vector2::new(-top[1], top[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffSummary {
    pub min: f64,
    pub mean: MeanEstimate,
    pub argmin: usize,
    pub n: usize,
    pub per_sample: Vec<f64>,
}

/// (1/n)·Σ Φ along TF̂ from `samples` random starts (ω, x, v).
pub fn birkhoff_minimum(
    family: &FiberFamily,
    system: &Arc<BaseSystem>,
    seed: u64,
    samples: usize,
    n: usize,
) -> Result<BirkhoffSummary> {
    if n == 0 {
        return Err(Error::Contract("Birkhoff averages need n ≥ 1".into()));
    }
    let states = sample_states_in(system, seed, stream::BIRKHOFF_START, samples)?;
    let start_seed = seeding::child_seed(seed, stream::BIRKHOFF_START, u64::MAX);
    let dim = family.manifold_dim();
    let per_sample: Vec<f64> = states
        .into_par_iter()
        .enumerate()
        .map(|(i, w)| {
            let x = seeding::fiber_point(start_seed, i as u64, dim);
            let v = seeding::unit_vector(start_seed, i as u64, dim);
            let p = UnitTangentPoint::new(w, x, v)?;
            let mut walker = TangentWalker::new(family, &p)?;
            let mut sum = 0.0;
            for _ in 0..n {
                sum += walker.step()?;
            }
            Ok(sum / n as f64)
        })
        .collect::<Result<_>>()?;
    let mut min = f64::INFINITY;
    let mut argmin = 0;
    for (i, v) in per_sample.iter().enumerate() {
        if *v < min {
            min = *v;
            argmin = i;
        }
    }
    Ok(BirkhoffSummary {
        min,
        mean: stats::mean_std_err(&per_sample),
        argmin,
        n,
        per_sample,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaOptions {
    /// ω samples for the empirical measures μₙ.
    pub samples: usize,
    /// n for μₙ and for the comparison rate A.
    pub n_max: usize,
    pub grid_size: usize,
    pub birkhoff_samples: usize,
    pub birkhoff_n: usize,
    /// Period bound for the heuristic orbit search; skipped on non-shift bases.
    pub p_max: Option<usize>,
}

impl Default for LambdaOptions {
    fn default() -> Self {
        Self {
            samples: 20,
            n_max: 16,
            grid_size: expansion::DEFAULT_GRID,
            birkhoff_samples: 20,
            birkhoff_n: 10_000,
            p_max: Some(8),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSummary {
    pub min_phi_average: f64,
    pub orbits: usize,
    pub best_word: Vec<usize>,
    /// Always true: orbit measures are not ℙ-compatible.
    pub heuristic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaReport {
    /// Sample mean over ω of ∫Φ dμₙ(ω).
    pub empirical: MeanEstimate,
    /// Largest |∫Φ dμₙ − Aₙ/n| over the samples (grid value of Aₙ).
    pub construction_residual: f64,
    pub birkhoff: BirkhoffSummary,
    /// min(empirical mean, Birkhoff minimum).
    pub lambda_estimate: f64,
    pub periodic: Option<PeriodicSummary>,
    pub a_estimate: f64,
    pub a_lower: f64,
    /// Λ_estimate − A_estimate.
    pub gap_vs_a: f64,
    pub n_max: usize,
}

pub fn lambda_estimate(
    family: &FiberFamily,
    system: &Arc<BaseSystem>,
    seed: u64,
    opts: &LambdaOptions,
) -> Result<LambdaReport> {
    let n = opts.n_max;
    let states = sample_states_in(system, seed, stream::LAMBDA_SAMPLE, opts.samples)?;
    let pairs: Vec<(f64, f64)> = states
        .par_iter()
        .map(|w| {
            let table = min_expansion_table(family, w, n, opts.grid_size)?;
            let (measure, _) = empirical_minimizing_sequence(family, w, n, opts.grid_size)?;
            let integral = integrate_phi(family, &measure)?;
            Ok((integral, (integral - table.row(n).upper / n as f64).abs()))
        })
        .collect::<Result<_>>()?;
    let integrals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let construction_residual = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    let empirical = stats::mean_std_err(&integrals);

    let birkhoff = birkhoff_minimum(family, system, seed, opts.birkhoff_samples, opts.birkhoff_n)?;
    let lambda = empirical.mean.min(birkhoff.min);

    let periodic = match opts.p_max {
        Some(p) if matches!(system.kind(), BaseKind::Bernoulli | BaseKind::Dirac) => {
            let orbits = enumerate_periodic_orbits(family, system, p)?;
            orbits.first().map(|best| PeriodicSummary {
                min_phi_average: best.phi_average,
                orbits: orbits.len(),
                best_word: best.symbol_word.clone(),
                heuristic: true,
            })
        }
        _ => None,
    };

    let a_states = sample_states(system, seed, opts.samples)?;
    let rate = expansion::rate_estimate_for(family, &a_states, n.max(4), opts.grid_size)?;
    Ok(LambdaReport {
        empirical,
        construction_residual,
        birkhoff,
        lambda_estimate: lambda,
        periodic,
        a_estimate: rate.a_estimate,
        a_lower: rate.a_lower,
        gap_vs_a: lambda - rate.a_estimate,
        n_max: n,
    })
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

    fn family(spec: FiberFamilySpec) -> FiberFamily {
        FiberFamily::new(&spec).unwrap()
    }

    fn atom(omega: &BaseState, x: f64, weight: f64) -> Atom {
        Atom {
            omega: omega.clone(),
            x: ManifoldPoint::circle(x),
            v: DVector::from_element(1, 1.0),
            weight,
        }
    }

    #[test]
    fn two_atom_integral() {
        let f = family(FiberFamilySpec::bernoulli_linear(vec![2.0, 3.0]));
        let sys = BaseSystem::new(&BaseSystemSpec::bernoulli(vec![0.5, 0.5])).unwrap();
        let w0 = (0..).map(|s| BaseState::new(&sys, s)).find(|w| w.symbol_at(0).unwrap() == 0).unwrap();
        let w1 = (0..).map(|s| BaseState::new(&sys, s)).find(|w| w.symbol_at(0).unwrap() == 1).unwrap();
        let m = EmpiricalMeasure::new(vec![atom(&w0, 0.1, 0.5), atom(&w1, 0.7, 0.5)]).unwrap();
        assert!(m.normalized);
        assert_relative_eq!(integrate_phi(&f, &m).unwrap(), 6f64.ln() / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn unnormalized_measures_are_rejected() {
        let w = BaseState::new(&dirac_system(), 0);
        let m = EmpiricalMeasure::new(vec![atom(&w, 0.1, 0.3)]).unwrap();
        assert!(!m.normalized);
        assert!(integrate_observable(&m, |_| Ok(1.0)).is_err());
        assert!(pushforward_projection(&m).is_err());
        assert!(m.normalize().normalized);
    }

    #[test]
    fn doubling_empirical_measure() {
        let f = family(FiberFamilySpec::doubling());
        let w = BaseState::new(&dirac_system(), 0);
        let (m, start) = empirical_minimizing_sequence(&f, &w, 5, 64).unwrap();
        assert_eq!(m.len(), 5);
        assert_relative_eq!(integrate_phi(&f, &m).unwrap(), 2f64.ln(), max_relative = 1e-14);
        assert_eq!(start.x.x(), 0.0);
        let projected = pushforward_projection(&m).unwrap();
        assert!(projected.atoms.iter().all(|a| a.x.x() == 0.0));
    }

    #[test]
    fn perturbed_first_minimizer() {
        let f = family(FiberFamilySpec::perturbed_doubling(0.1));
        let w = BaseState::new(&dirac_system(), 0);
        let (m, start) = empirical_minimizing_sequence(&f, &w, 1, 4096).unwrap();
        assert_relative_eq!(start.x.x(), 0.5, epsilon = 1.0 / 4096.0);
        let expected = (2.0 - 0.2 * std::f64::consts::PI).ln();
        assert_relative_eq!(integrate_phi(&f, &m).unwrap(), expected, epsilon = 1e-6);
    }

    #[test]
    fn necklace_counts() {
        // Binary necklaces of length 1..=4: 2, 3, 4, 6.
        assert_eq!(necklaces(2, 4).len(), 15);
        assert_eq!(necklaces(1, 3), vec![vec![0], vec![0, 0], vec![0, 0, 0]]);
    }

    #[test]
    fn doubling_orbits() {
        let f = family(FiberFamilySpec::doubling());
        let orbits = enumerate_periodic_orbits(&f, &dirac_system(), 3).unwrap();
        assert_eq!(orbits.len(), 3);
        for o in &orbits {
            assert_relative_eq!(o.phi_average, 2f64.ln(), max_relative = 1e-14);
        }
    }

    #[test]
    fn perturbed_orbits_close_and_are_bracketed() {
        let f = family(FiberFamilySpec::perturbed_doubling(0.1));
        let orbits = enumerate_periodic_orbits(&f, &dirac_system(), 8).unwrap();
        let lo = (2.0 - 0.2 * std::f64::consts::PI).ln();
        assert!(orbits[0].phi_average >= lo && orbits[0].phi_average <= 2f64.ln());
        assert!(orbits.iter().all(|o| o.residual < 1e-8));
    }

    #[test]
    fn markov_bases_are_unsupported() {
        let f = family(FiberFamilySpec::doubling());
        let sys = BaseSystem::new(&BaseSystemSpec::markov(vec![vec![0.5, 0.5], vec![1.0, 0.0]])).unwrap();
        assert!(matches!(enumerate_periodic_orbits(&f, &sys, 3), Err(Error::Unsupported(_))));
    }

    #[test]
    fn cat_orbit_uses_contracting_direction() {
        let f = family(FiberFamilySpec::random_cat());
        let orbits = enumerate_periodic_orbits(&f, &dirac_system(), 1).unwrap();
        let golden = (3.0 - 5f64.sqrt()) / 2.0;
        assert_relative_eq!(orbits[0].phi_average, golden.ln(), max_relative = 1e-10);
    }

    #[test]
    fn doubling_lambda() {
        let f = family(FiberFamilySpec::doubling());
        let opts = LambdaOptions {
            birkhoff_n: 500,
            ..Default::default()
        };
        let r = lambda_estimate(&f, &dirac_system(), 4, &opts).unwrap();
        assert_relative_eq!(r.lambda_estimate, 2f64.ln(), max_relative = 1e-12);
        assert!(r.gap_vs_a.abs() < 1e-12);
        assert!(r.periodic.unwrap().heuristic);
    }
}

//! Orbits, derivative cocycles and the projectivized tangent map.
//!
//! `TF̂(ω, x, v) = (θω, φ_ω(x), D_xφ_ω v / |D_xφ_ω v|)` and the observable
//! `Φ(ω, x, v) = log|D_xφ_ω v|`. Birkhoff sums of Φ along TF̂ telescope to
//! `log|D_xφ_ω⁽ⁿ⁾ v|`, which is how every exponent estimator in the crate
//! avoids forming long matrix products.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::base::BaseState;
use crate::error::{Error, Result};
use crate::fiber::{FiberFamily, LocalMap};
use crate::manifold::ManifoldPoint;

/// Entries beyond this magnitude are reported as a range error.
pub const PRODUCT_LIMIT: f64 = 1e300;

/// D_xφ_ω⁽ⁿ⁾ as an m×m matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CocycleMatrix {
    entries: DMatrix<f64>,
    steps: usize,
}

impl CocycleMatrix {
    pub fn new(entries: DMatrix<f64>, steps: usize) -> Self {
        Self { entries, steps }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn determinant(&self) -> f64 {
        self.entries.determinant()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.entries * v
    }

    /// Composition `self ∘ earlier` (apply `earlier` first).
    pub fn after(&self, earlier: &CocycleMatrix) -> CocycleMatrix {
        CocycleMatrix {
            entries: &self.entries * &earlier.entries,
            steps: self.steps + earlier.steps,
        }
    }
}

/// A point (ω, x, v) of Ω × SM.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitTangentPoint {
    pub omega: BaseState,
    pub x: ManifoldPoint,
    pub v: DVector<f64>,
}

impl UnitTangentPoint {
    /// Normalizes `v`; fails on a zero vector or a dimension mismatch.
    pub fn new(omega: BaseState, x: ManifoldPoint, v: DVector<f64>) -> Result<Self> {
        if v.len() != x.dim() {
            return Err(Error::Contract(format!(
                "tangent vector of length {} at a point of dimension {}",
                v.len(),
                x.dim()
            )));
        }
        let norm = v.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Contract("tangent vector must be nonzero and finite".into()));
        }
        Ok(Self {
            omega,
            x,
            v: v / norm,
        })
    }

    /// Unit tangent point with the first coordinate direction.
    pub fn along_first_axis(omega: BaseState, x: ManifoldPoint) -> Self {
        let mut v = DVector::zeros(x.dim());
        v[0] = 1.0;
        Self { omega, x, v }
    }
}

/// Compact tangent state used inside iteration loops. For circle maps only
/// `v[0]` is meaningful and holds ±1.
#[derive(Debug, Clone)]
pub(crate) struct TangentWalker<'a> {
    family: &'a FiberFamily,
    pub omega: BaseState,
    pub x: ManifoldPoint,
    pub v: Vector2<f64>,
}

impl<'a> TangentWalker<'a> {
    pub fn new(family: &'a FiberFamily, p: &UnitTangentPoint) -> Result<Self> {
        if p.x.dim() != family.manifold_dim() || p.v.len() != family.manifold_dim() {
            return Err(Error::Contract(format!(
                "family `{}` acts on dimension {}",
                family.id().name(),
                family.manifold_dim()
            )));
        }
        let v = if p.v.len() == 1 {
            Vector2::new(p.v[0].signum(), 0.0)
        } else {
            Vector2::new(p.v[0], p.v[1]).normalize()
        };
        Ok(Self {
            family,
            omega: p.omega.clone(),
            x: p.x,
            v,
        })
    }

    /// Advance by TF̂, returning Φ at the point before the step.
    pub fn step(&mut self) -> Result<f64> {
        let local = self.family.local(&self.omega)?;
        let phi = match local {
            LocalMap::Circle { .. } => {
                let d = local.circle_derivative(self.x.x());
                self.x = ManifoldPoint::circle(local.lift(self.x.x()));
                self.v[0] *= d.signum();
                d.abs().ln()
            }
            LocalMap::Linear(m) => {
                let w = m * self.v;
                let r = w.norm();
                self.v = w / r;
                self.x = local.apply(&self.x);
                r.ln()
            }
        };
        self.omega = self.omega.base_step();
        Ok(phi)
    }

    pub fn point(&self) -> UnitTangentPoint {
        let v = match self.x.dim() {
            1 => DVector::from_element(1, self.v[0]),
            _ => DVector::from_column_slice(self.v.as_slice()),
        };
        UnitTangentPoint {
            omega: self.omega.clone(),
            x: self.x,
            v,
        }
    }
}

/// (x, φ_ω⁽¹⁾(x), …, φ_ω⁽ⁿ⁾(x)).
pub fn iterate(
    family: &FiberFamily,
    omega: &BaseState,
    x: &ManifoldPoint,
    n: usize,
) -> Result<Vec<ManifoldPoint>> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(*x);
    let mut w = omega.clone();
    let mut y = *x;
    for _ in 0..n {
        y = family.fiber_apply(&w, &y)?;
        w = w.base_step();
        out.push(y);
    }
    Ok(out)
}

/// The local maps φ_{θⁱω}, i < n.
pub fn local_maps(family: &FiberFamily, omega: &BaseState, n: usize) -> Result<Vec<LocalMap>> {
    let mut w = omega.clone();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(family.local(&w)?);
        w = w.base_step();
    }
    Ok(out)
}

/// D_xφ_ω⁽ⁿ⁾ by left-multiplying Jacobians along the orbit.
pub fn cocycle_product(
    family: &FiberFamily,
    omega: &BaseState,
    x: &ManifoldPoint,
    n: usize,
) -> Result<CocycleMatrix> {
    if n == 0 {
        return Err(Error::Contract("cocycle products need n ≥ 1".into()));
    }
    let m = family.manifold_dim();
    if x.dim() != m {
        return Err(Error::Contract(format!(
            "family `{}` acts on dimension {m}, point has dimension {}",
            family.id().name(),
            x.dim()
        )));
    }
    let mut w = omega.clone();
    let mut y = *x;
    let mut acc = DMatrix::<f64>::identity(m, m);
    for step in 0..n {
        let local = family.local(&w)?;
        acc = local.jacobian(&y) * acc;
        if acc.iter().any(|e| !e.is_finite() || e.abs() > PRODUCT_LIMIT) {
            return Err(Error::Range(format!(
                "cocycle product entries exceed {PRODUCT_LIMIT:e} after {} steps; use the log-space estimators",
                step + 1
            )));
        }
        y = local.apply(&y);
        w = w.base_step();
    }
    Ok(CocycleMatrix::new(acc, n))
}

/// One step of TF̂.
pub fn unit_tangent_step(family: &FiberFamily, p: &UnitTangentPoint) -> Result<UnitTangentPoint> {
    let mut walker = TangentWalker::new(family, p)?;
    walker.step()?;
    Ok(walker.point())
}

/// Φ(ω, x, v) = log|D_xφ_ω v|.
pub fn phi(family: &FiberFamily, p: &UnitTangentPoint) -> Result<f64> {
    TangentWalker::new(family, p)?.step()
}

/// Σ_{i<n} Φ((TF̂)ⁱ p), which equals log|D_xφ_ω⁽ⁿ⁾ v|.
pub fn birkhoff_sum_phi(family: &FiberFamily, p: &UnitTangentPoint, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Contract("Birkhoff sums need n ≥ 1".into()));
    }
    let mut walker = TangentWalker::new(family, p)?;
    let mut sum = 0.0;
    for _ in 0..n {
        sum += walker.step()?;
    }
    Ok(sum)
}

/// One recorded step of a TF̂ orbit.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentStep {
    pub k: usize,
    pub symbol: usize,
    /// (θᵏω, xₖ, vₖ).
    pub point: UnitTangentPoint,
    /// Φ at `point`.
    pub phi: f64,
}

/// The first `n` points of the TF̂ orbit of `p`, with symbols and Φ.
pub fn tangent_orbit(family: &FiberFamily, p: &UnitTangentPoint, n: usize) -> Result<Vec<TangentStep>> {
    let mut walker = TangentWalker::new(family, p)?;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let point = walker.point();
        let symbol = point.omega.symbol_at(0)?;
        let phi = walker.step()?;
        out.push(TangentStep { k, symbol, point, phi });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{BaseSystem, BaseSystemSpec};
    use crate::fiber::FiberFamilySpec;
    use approx::assert_relative_eq;

    fn dirac() -> BaseState {
        BaseState::new(&BaseSystem::new(&BaseSystemSpec::dirac()).unwrap(), 0)
    }

    fn family(spec: FiberFamilySpec) -> FiberFamily {
        FiberFamily::new(&spec).unwrap()
    }

    #[test]
    fn doubling_orbit() {
        let f = family(FiberFamilySpec::doubling());
        let orbit = iterate(&f, &dirac(), &ManifoldPoint::circle(0.1), 3).unwrap();
        let xs: Vec<f64> = orbit.iter().map(|p| p.x()).collect();
        for (a, b) in xs.iter().zip([0.1, 0.2, 0.4, 0.8]) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        assert_eq!(iterate(&f, &dirac(), &ManifoldPoint::circle(0.1), 0).unwrap().len(), 1);
    }

    #[test]
    fn doubling_product() {
        let f = family(FiberFamilySpec::doubling());
        let p = cocycle_product(&f, &dirac(), &ManifoldPoint::circle(0.3), 5).unwrap();
        assert_eq!(p.entries()[(0, 0)], 32.0);
        assert!(cocycle_product(&f, &dirac(), &ManifoldPoint::circle(0.3), 0).is_err());
    }

    #[test]
    fn cat_square() {
        let f = family(FiberFamilySpec::random_cat());
        let p = cocycle_product(&f, &dirac(), &ManifoldPoint::torus(0.1, 0.4), 2).unwrap();
        assert_eq!(p.entries().as_slice(), &[5.0, 3.0, 3.0, 2.0]);
    }

    #[test]
    fn overflow_is_a_range_error() {
        let f = family(FiberFamilySpec::doubling());
        let r = cocycle_product(&f, &dirac(), &ManifoldPoint::circle(0.1), 1100);
        assert!(matches!(r, Err(Error::Range(_))));
    }

    #[test]
    fn cat_tangent_step() {
        let f = family(FiberFamilySpec::random_cat());
        let p = UnitTangentPoint::along_first_axis(dirac(), ManifoldPoint::torus(0.0, 0.0));
        let q = unit_tangent_step(&f, &p).unwrap();
        assert_relative_eq!(q.v[0], 0.894427, epsilon = 1e-6);
        assert_relative_eq!(q.v[1], 0.447214, epsilon = 1e-6);
        assert_relative_eq!(q.v.norm(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(phi(&f, &p).unwrap(), 0.5 * 5f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(birkhoff_sum_phi(&f, &p, 2).unwrap(), 0.5 * 34f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn doubling_phi() {
        let f = family(FiberFamilySpec::doubling());
        let p = UnitTangentPoint::along_first_axis(dirac(), ManifoldPoint::circle(0.37));
        assert_eq!(phi(&f, &p).unwrap(), 2f64.ln());
        assert_eq!(unit_tangent_step(&f, &p).unwrap().v[0], 1.0);
        assert_relative_eq!(birkhoff_sum_phi(&f, &p, 10).unwrap(), 10.0 * 2f64.ln(), epsilon = 1e-13);
    }

    #[test]
    fn perturbed_product_matches_derivative_product() {
        let f = family(FiberFamilySpec::perturbed_doubling(0.1));
        let w = dirac();
        let deriv = |x: f64| 2.0 + 0.2 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * x).cos();
        let map = |x: f64| crate::manifold::wrap_unit(2.0 * x + 0.1 * (2.0 * std::f64::consts::PI * x).sin());
        let (mut x, mut expected) = (0.2, 1.0);
        for _ in 0..3 {
            expected *= deriv(x);
            x = map(x);
        }
        let p = cocycle_product(&f, &w, &ManifoldPoint::circle(0.2), 3).unwrap();
        assert_relative_eq!(p.entries()[(0, 0)], expected, max_relative = 1e-14);
    }

    #[test]
    fn rejects_zero_vector() {
        let r = UnitTangentPoint::new(dirac(), ManifoldPoint::circle(0.1), DVector::zeros(1));
        assert!(r.is_err());
    }
}

//! Fiber map families ω ↦ φ_ω on the circle and the 2-torus.
//!
//! A family reads its parameters from the symbol of ω at coordinate 0 (the
//! coded angle on rotation bases). [`FiberFamily::local`] resolves those
//! parameters once and returns a [`LocalMap`], which is what the iteration
//! loops use.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::base::{BaseState, BaseSystem};
use crate::cocycle::CocycleMatrix;
use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::ManifoldPoint;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyId {
    Doubling,
    PerturbedDoubling,
    BernoulliLinear,
    DiagonalCocycle,
    RandomCat,
}

impl FamilyId {
    pub fn name(self) -> &'static str {
        match self {
            FamilyId::Doubling => "doubling",
            FamilyId::PerturbedDoubling => "perturbed-doubling",
            FamilyId::BernoulliLinear => "bernoulli-linear",
            FamilyId::DiagonalCocycle => "diagonal-cocycle",
            FamilyId::RandomCat => "random-cat",
        }
    }
}

/// Parameter keys of the catalog. Each family accepts only its own keys:
///
/// | family               | keys                          |
/// |----------------------|-------------------------------|
/// | `doubling`           | none                          |
/// | `perturbed-doubling` | `epsilon_max`                 |
/// | `bernoulli-linear`   | `slopes` (integers ≥ 2)       |
/// | `diagonal-cocycle`   | `a`, `b` (nonzero reals)      |
/// | `random-cat`         | none                          |
///
/// List-valued parameters are indexed by symbol; a single entry is used for
/// every symbol.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slopes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberFamilySpec {
    pub family: FamilyId,
    #[serde(default)]
    pub params: FiberParams,
}

impl FiberFamilySpec {
    pub fn new(family: FamilyId) -> Self {
        Self {
            family,
            params: FiberParams::default(),
        }
    }

    pub fn doubling() -> Self {
        Self::new(FamilyId::Doubling)
    }

    pub fn perturbed_doubling(epsilon_max: f64) -> Self {
        let mut s = Self::new(FamilyId::PerturbedDoubling);
        s.params.epsilon_max = Some(epsilon_max);
        s
    }

    pub fn bernoulli_linear(slopes: Vec<f64>) -> Self {
        let mut s = Self::new(FamilyId::BernoulliLinear);
        s.params.slopes = Some(slopes);
        s
    }

    pub fn diagonal(a: Vec<f64>, b: Vec<f64>) -> Self {
        let mut s = Self::new(FamilyId::DiagonalCocycle);
        s.params.a = Some(a);
        s.params.b = Some(b);
        s
    }

    pub fn random_cat() -> Self {
        Self::new(FamilyId::RandomCat)
    }

    /// Every validation problem, with field paths under `prefix`.
    pub fn check(&self, prefix: &str) -> Vec<Error> {
        match FiberFamily::build(self, prefix) {
            Ok(_) => Vec::new(),
            Err(e) => e,
        }
    }
}

/// The two generators of the random cat family, selected by symbol.
pub fn cat_matrices() -> [Matrix2<f64>; 2] {
    [
        Matrix2::new(2.0, 1.0, 1.0, 1.0),
        Matrix2::new(3.0, 1.0, 2.0, 1.0),
    ]
}

/// Global derivative bounds of a family, analytic per catalog entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBounds {
    /// sup over ω, x of |D_xφ_ω|.
    pub sup_dphi: f64,
    /// sup over ω, x of |(D_xφ_ω)⁻¹|.
    pub sup_dphi_inv: f64,
    /// Lipschitz constant of x ↦ log|D_xφ_ω v|, uniform in ω and unit v.
    pub log_deriv_lipschitz: f64,
}

#[derive(Debug, Clone)]
enum Kind {
    /// φ(x) = slope·x + ε sin(2πx); slopes per symbol, ε = epsilon_max·s/(n-1).
    Circle { slopes: Vec<f64>, epsilon_max: f64 },
    Linear { matrices: Vec<Matrix2<f64>> },
}

/// A validated fiber family.
#[derive(Debug, Clone)]
pub struct FiberFamily {
    spec: FiberFamilySpec,
    kind: Kind,
    invertible: bool,
    torus_automorphism: bool,
    bounds: DerivativeBounds,
}

/// φ_ω with its parameters resolved for one ω.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalMap {
    /// Circle map x ↦ slope·x + eps·sin(2πx) mod 1.
    Circle { slope: f64, eps: f64 },
    /// Linear torus map x ↦ Mx mod 1.
    Linear(Matrix2<f64>),
}

impl LocalMap {
    pub fn dim(&self) -> usize {
        match self {
            LocalMap::Circle { .. } => 1,
            LocalMap::Linear(_) => 2,
        }
    }

    /// Lift to the universal cover (no reduction). Circle maps only.
    pub fn lift(&self, x: f64) -> f64 {
        match *self {
            LocalMap::Circle { slope, eps } => slope * x + eps * (TWO_PI * x).sin(),
            LocalMap::Linear(_) => panic!("lift is defined for circle maps"),
        }
    }

    /// D_xφ_ω for a circle map.
    pub fn circle_derivative(&self, x: f64) -> f64 {
        match *self {
            LocalMap::Circle { slope, eps } => slope + TWO_PI * eps * (TWO_PI * x).cos(),
            LocalMap::Linear(_) => panic!("circle_derivative is defined for circle maps"),
        }
    }

    pub fn apply(&self, x: &ManifoldPoint) -> ManifoldPoint {
        match self {
            LocalMap::Circle { .. } => ManifoldPoint::circle(self.lift(x.x())),
            LocalMap::Linear(m) => {
                let y = m * Vector2::new(x.x(), x.y());
                ManifoldPoint::torus(y[0], y[1])
            }
        }
    }

    pub fn jacobian(&self, x: &ManifoldPoint) -> DMatrix<f64> {
        match self {
            LocalMap::Circle { .. } => DMatrix::from_element(1, 1, self.circle_derivative(x.x())),
            LocalMap::Linear(m) => DMatrix::from_column_slice(2, 2, m.as_slice()),
        }
    }

    /// True when D_xφ_ω does not depend on x.
    pub fn x_independent(&self) -> bool {
        match *self {
            LocalMap::Circle { eps, .. } => eps == 0.0,
            LocalMap::Linear(_) => true,
        }
    }

    /// |Dφ_ω| = sup over x of the operator norm.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            LocalMap::Circle { slope, eps } => slope.abs() + TWO_PI * eps.abs(),
            LocalMap::Linear(m) => linalg::singular_values(&m).0,
        }
    }

    /// D₁(ω) = min over (x, v) of |D_xφ_ω v|.
    pub fn min_expansion(&self) -> f64 {
        match *self {
            LocalMap::Circle { slope, eps } => slope.abs() - TWO_PI * eps.abs(),
            LocalMap::Linear(m) => linalg::singular_values(&m).1,
        }
    }

    /// Lipschitz constant of x ↦ log|D_xφ_ω v| for this ω.
    pub fn log_deriv_lipschitz(&self) -> f64 {
        match *self {
            LocalMap::Circle { slope, eps } => {
                if eps == 0.0 {
                    0.0
                } else {
                    4.0 * PI * PI * eps.abs() / (slope.abs() - TWO_PI * eps.abs())
                }
            }
            LocalMap::Linear(_) => 0.0,
        }
    }
}

impl FiberFamily {
    pub fn new(spec: &FiberFamilySpec) -> Result<Self> {
        Self::build(spec, "fiber").map_err(|mut e| e.remove(0))
    }

    fn build(spec: &FiberFamilySpec, prefix: &str) -> std::result::Result<Self, Vec<Error>> {
        let mut errors = Vec::new();
        let field = |k: &str| format!("{prefix}.params.{k}");
        let p = &spec.params;
        let allowed: &[&str] = match spec.family {
            FamilyId::Doubling | FamilyId::RandomCat => &[],
            FamilyId::PerturbedDoubling => &["epsilon_max"],
            FamilyId::BernoulliLinear => &["slopes"],
            FamilyId::DiagonalCocycle => &["a", "b"],
        };
        for (key, present) in [
            ("epsilon_max", p.epsilon_max.is_some()),
            ("slopes", p.slopes.is_some()),
            ("a", p.a.is_some()),
            ("b", p.b.is_some()),
        ] {
            if present && !allowed.contains(&key) {
                errors.push(Error::config(
                    field(key),
                    format!("not a parameter of family `{}`", spec.family.name()),
                ));
            }
        }

        let kind = match spec.family {
            FamilyId::Doubling => Some(Kind::Circle {
                slopes: vec![2.0],
                epsilon_max: 0.0,
            }),
            FamilyId::PerturbedDoubling => {
                let eps = p.epsilon_max.unwrap_or(0.1);
                if !(0.0..1.0 / TWO_PI).contains(&eps) {
                    errors.push(Error::config(
                        field("epsilon_max"),
                        format!(
                            "must lie in [0, 1/(2π)) ≈ [0, {:.6}) for an expanding local diffeomorphism",
                            1.0 / TWO_PI
                        ),
                    ));
                    None
                } else {
                    Some(Kind::Circle {
                        slopes: vec![2.0],
                        epsilon_max: eps,
                    })
                }
            }
            FamilyId::BernoulliLinear => {
                let slopes = p.slopes.clone().unwrap_or_else(|| vec![2.0, 3.0]);
                if slopes.is_empty()
                    || slopes
                        .iter()
                        .any(|d| !d.is_finite() || d.fract() != 0.0 || *d < 2.0)
                {
                    errors.push(Error::config(
                        field("slopes"),
                        "must be a nonempty list of integers ≥ 2",
                    ));
                    None
                } else {
                    Some(Kind::Circle {
                        slopes,
                        epsilon_max: 0.0,
                    })
                }
            }
            FamilyId::DiagonalCocycle => {
                let a = p.a.clone().unwrap_or_else(|| vec![2.0]);
                let b = p.b.clone().unwrap_or_else(|| vec![3.0]);
                let mut ok = true;
                for (key, v) in [("a", &a), ("b", &b)] {
                    if v.is_empty() || v.iter().any(|x| !x.is_finite() || *x == 0.0) {
                        errors.push(Error::config(field(key), "must be a nonempty list of nonzero reals"));
                        ok = false;
                    }
                }
                if ok && a.len() != b.len() && a.len() != 1 && b.len() != 1 {
                    errors.push(Error::config(
                        field("b"),
                        format!("length {} is incompatible with a (length {})", b.len(), a.len()),
                    ));
                    ok = false;
                }
                ok.then(|| {
                    let n = a.len().max(b.len());
                    Kind::Linear {
                        matrices: (0..n)
                            .map(|i| {
                                let ai = if a.len() == 1 { a[0] } else { a[i] };
                                let bi = if b.len() == 1 { b[0] } else { b[i] };
                                Matrix2::new(ai, 0.0, 0.0, bi)
                            })
                            .collect(),
                    }
                })
            }
            FamilyId::RandomCat => Some(Kind::Linear {
                matrices: cat_matrices().to_vec(),
            }),
        };

        match kind {
            Some(kind) if errors.is_empty() => {
                let (invertible, torus_automorphism) = match &kind {
                    Kind::Circle { .. } => (false, false),
                    Kind::Linear { matrices } => {
                        let unimodular = matrices
                            .iter()
                            .all(|m| (m.determinant().abs() - 1.0).abs() < 1e-12);
                        let integer = matrices.iter().all(|m| m.iter().all(|e| e.fract() == 0.0));
                        (unimodular, unimodular && integer)
                    }
                };
                let bounds = bounds_of(&kind);
                Ok(Self {
                    spec: spec.clone(),
                    kind,
                    invertible,
                    torus_automorphism,
                    bounds,
                })
            }
            _ => Err(errors),
        }
    }

    /// Checks that the family can read its parameters from every symbol of
    /// `system`.
    pub fn check_compatible(&self, system: &BaseSystem, prefix: &str) -> Vec<Error> {
        let n = system.alphabet_size();
        let mut errors = Vec::new();
        let mut need = |key: &str, len: usize| {
            if len != 1 && len != n {
                errors.push(Error::config(
                    format!("{prefix}.params.{key}"),
                    format!("has {len} entries but the base alphabet has {n} symbols"),
                ));
            }
        };
        match (self.spec.family, &self.kind) {
            (FamilyId::BernoulliLinear, Kind::Circle { slopes, .. }) => need("slopes", slopes.len()),
            (FamilyId::DiagonalCocycle, _) => {
                need("a", self.spec.params.a.as_ref().map_or(1, Vec::len));
                need("b", self.spec.params.b.as_ref().map_or(1, Vec::len));
            }
            (FamilyId::RandomCat, _) if n > 2 => errors.push(Error::config(
                format!("{prefix}.family"),
                format!("random-cat selects between 2 matrices; base alphabet has {n} symbols"),
            )),
            _ => {}
        }
        errors
    }

    pub fn spec(&self) -> &FiberFamilySpec {
        &self.spec
    }

    pub fn id(&self) -> FamilyId {
        self.spec.family
    }

    pub fn manifold_dim(&self) -> usize {
        match self.kind {
            Kind::Circle { .. } => 1,
            Kind::Linear { .. } => 2,
        }
    }

    /// The derivative cocycle is invertible with |det| = 1 for every symbol.
    pub fn invertible(&self) -> bool {
        self.invertible
    }

    /// Every φ_ω is a linear map of the torus (x-independent derivative).
    pub fn is_linear(&self) -> bool {
        matches!(self.kind, Kind::Linear { .. })
    }

    /// Every D_xφ_ω is independent of x.
    pub fn x_independent(&self) -> bool {
        match &self.kind {
            Kind::Circle { epsilon_max, .. } => *epsilon_max == 0.0,
            Kind::Linear { .. } => true,
        }
    }

    /// The smallest singular value of every D_xφ_ω exceeds 1.
    pub fn is_expanding(&self) -> bool {
        match &self.kind {
            Kind::Circle {
                slopes,
                epsilon_max,
            } => slopes.iter().all(|s| s - TWO_PI * epsilon_max > 1.0),
            Kind::Linear { matrices } => matrices.iter().all(|m| linalg::singular_values(m).1 > 1.0),
        }
    }

    pub fn local(&self, omega: &BaseState) -> Result<LocalMap> {
        self.local_for_symbol(omega.symbol_at(0)?, omega.system().alphabet_size())
    }

    /// φ for the symbol `s` of an alphabet of `alphabet_size` symbols.
    pub fn local_for_symbol(&self, s: usize, alphabet_size: usize) -> Result<LocalMap> {
        let pick = |v: &[f64]| -> Result<f64> {
            if v.len() == 1 {
                Ok(v[0])
            } else {
                v.get(s).copied().ok_or_else(|| {
                    Error::Contract(format!(
                        "family `{}` has no parameters for symbol {s}",
                        self.id().name()
                    ))
                })
            }
        };
        match &self.kind {
            Kind::Circle {
                slopes,
                epsilon_max,
            } => {
                let n = alphabet_size;
                let eps = if n > 1 {
                    epsilon_max * s as f64 / (n - 1) as f64
                } else {
                    *epsilon_max
                };
                Ok(LocalMap::Circle {
                    slope: pick(slopes)?,
                    eps,
                })
            }
            Kind::Linear { matrices } => {
                if matrices.len() == 1 {
                    Ok(LocalMap::Linear(matrices[0]))
                } else {
                    matrices.get(s).copied().map(LocalMap::Linear).ok_or_else(|| {
                        Error::Contract(format!(
                            "family `{}` has no matrix for symbol {s}",
                            self.id().name()
                        ))
                    })
                }
            }
        }
    }

    fn check_dim(&self, x: &ManifoldPoint) -> Result<()> {
        if x.dim() != self.manifold_dim() {
            return Err(Error::Contract(format!(
                "family `{}` acts on dimension {}, point has dimension {}",
                self.id().name(),
                self.manifold_dim(),
                x.dim()
            )));
        }
        Ok(())
    }

    pub fn fiber_apply(&self, omega: &BaseState, x: &ManifoldPoint) -> Result<ManifoldPoint> {
        self.check_dim(x)?;
        Ok(self.local(omega)?.apply(x))
    }

    pub fn fiber_derivative(&self, omega: &BaseState, x: &ManifoldPoint) -> Result<CocycleMatrix> {
        self.check_dim(x)?;
        Ok(CocycleMatrix::new(self.local(omega)?.jacobian(x), 1))
    }

    /// φ_ω⁻¹(x). Supported for torus automorphisms (integer unimodular
    /// matrices); other families are not injective on the manifold.
    pub fn fiber_inverse(&self, omega: &BaseState, x: &ManifoldPoint) -> Result<ManifoldPoint> {
        if !self.torus_automorphism {
            return Err(Error::Unsupported(format!(
                "family `{}` is not a diffeomorphism of its manifold",
                self.id().name()
            )));
        }
        self.check_dim(x)?;
        match self.local(omega)? {
            LocalMap::Linear(m) => {
                let inv = linalg::inverse(&m);
                let y = inv * Vector2::new(x.x(), x.y());
                Ok(ManifoldPoint::torus(y[0], y[1]))
            }
            LocalMap::Circle { .. } => unreachable!("circle families are never automorphisms"),
        }
    }

    pub fn derivative_bounds(&self) -> DerivativeBounds {
        self.bounds
    }
}

fn bounds_of(kind: &Kind) -> DerivativeBounds {
    match kind {
        Kind::Circle {
            slopes,
            epsilon_max,
        } => {
            let max_slope = slopes.iter().cloned().fold(f64::MIN, f64::max);
            let min_slope = slopes.iter().cloned().fold(f64::MAX, f64::min);
            let wobble = TWO_PI * epsilon_max;
            let lipschitz = if *epsilon_max == 0.0 {
                0.0
            } else {
                // sup |d/dx log(s + 2πε cos 2πx)| ≤ 4π²ε / (s - 2πε)
                4.0 * PI * PI * epsilon_max / (min_slope - wobble)
            };
            DerivativeBounds {
                sup_dphi: max_slope + wobble,
                sup_dphi_inv: 1.0 / (min_slope - wobble),
                log_deriv_lipschitz: lipschitz,
            }
        }
        Kind::Linear { matrices } => {
            let (mut sup, mut sup_inv) = (0.0f64, 0.0f64);
            for m in matrices {
                let (hi, lo) = linalg::singular_values(m);
                sup = sup.max(hi);
                sup_inv = sup_inv.max(1.0 / lo);
            }
            DerivativeBounds {
                sup_dphi: sup,
                sup_dphi_inv: sup_inv,
                log_deriv_lipschitz: 0.0,
            }
        }
    }
}

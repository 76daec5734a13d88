//! Random skew products F(ω, x) = (θω, φ_ω(x)) and numerical evidence for
//! the passage from positive fibrewise Lyapunov exponents to random uniform
//! expansion and hyperbolicity.
//!
//! Modules, bottom-up:
//!
//! * [`base`]: ergodic bases (Bernoulli, Markov, rotation, one-point).
//! * [`fiber`]: the catalog of fiber map families with exact derivatives.
//! * [`cocycle`]: orbits, derivative cocycles, the unit tangent map and Φ.
//! * [`lyapunov`]: top exponent and full spectrum estimators.
//! * [`expansion`]: minimal expansion Aₙ(ω), supadditivity, the rate A,
//!   the constant C(ω) and its temperedness.
//! * [`ergodic`]: empirical measures and the minimal average Λ of Φ.
//! * [`splitting`]: finite-time stable/unstable bundles of invertible
//!   linear families and hyperbolicity certificates.

pub mod base;
pub mod cocycle;
pub mod ergodic;
pub mod error;
pub mod expansion;
pub mod fiber;
pub mod linalg;
pub mod lyapunov;
pub mod manifold;
pub mod seeding;
pub mod splitting;
pub mod stats;

pub use base::{sample_base, BaseKind, BaseState, BaseSystem, BaseSystemSpec};
pub use cocycle::{CocycleMatrix, UnitTangentPoint};
pub use error::{Error, Result};
pub use fiber::{DerivativeBounds, FamilyId, FiberFamily, FiberFamilySpec, FiberParams, LocalMap};
pub use manifold::ManifoldPoint;

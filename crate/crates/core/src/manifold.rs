use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values within this distance below 1 are identified with 0 after reduction.
pub const SEAM_SNAP: f64 = 1e-15;

/// Reduce a real number into [0, 1).
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 - SEAM_SNAP {
        0.0
    } else {
        r
    }
}

/// Signed distance on the circle, in [-1/2, 1/2).
pub fn circle_delta(a: f64, b: f64) -> f64 {
    let d = a - b;
    d - (d + 0.5).floor()
}

/// A point on the circle (`dim == 1`) or the 2-torus (`dim == 2`), each
/// coordinate in [0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldPoint {
    coords: [f64; 2],
    dim: usize,
}

impl ManifoldPoint {
    pub fn new(coords: &[f64]) -> Result<Self> {
        match coords.len() {
            1 => Ok(Self::circle(coords[0])),
            2 => Ok(Self::torus(coords[0], coords[1])),
            n => Err(Error::Contract(format!(
                "manifold points have 1 or 2 coordinates, got {n}"
            ))),
        }
    }

    pub fn circle(x: f64) -> Self {
        Self {
            coords: [wrap_unit(x), 0.0],
            dim: 1,
        }
    }

    pub fn torus(x: f64, y: f64) -> Self {
        Self {
            coords: [wrap_unit(x), wrap_unit(y)],
            dim: 2,
        }
    }

    pub fn origin(dim: usize) -> Self {
        Self {
            coords: [0.0, 0.0],
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    pub fn x(&self) -> f64 {
        self.coords[0]
    }

    pub fn y(&self) -> f64 {
        self.coords[1]
    }

    /// Flat-metric distance (per-coordinate shortest wrap).
    pub fn distance(&self, other: &ManifoldPoint) -> f64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| circle_delta(*a, *b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_snaps_seam() {
        assert_eq!(wrap_unit(1.0 - 1e-16), 0.0);
        assert_eq!(wrap_unit(-1e-17), 0.0);
        assert_eq!(wrap_unit(2.25), 0.25);
        assert_eq!(wrap_unit(-0.25), 0.75);
    }

    #[test]
    fn distance_wraps() {
        let a = ManifoldPoint::circle(0.05);
        let b = ManifoldPoint::circle(0.95);
        assert!((a.distance(&b) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_dimension() {
        assert!(ManifoldPoint::new(&[0.1, 0.2, 0.3]).is_err());
    }
}

//! Small dense helpers for 2×2 cocycles.

use nalgebra::{Matrix2, Vector2};

/// (σ_max, σ_min) of a 2×2 matrix. σ_min is taken as |det|/σ_max, which keeps
/// full relative accuracy for nearly singular products.
pub fn singular_values(m: &Matrix2<f64>) -> (f64, f64) {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let s = ((a + d).powi(2) + (c - b).powi(2)).sqrt();
    let t = ((a - d).powi(2) + (b + c).powi(2)).sqrt();
    let hi = 0.5 * (s + t);
    if hi == 0.0 {
        return (0.0, 0.0);
    }
    (hi, m.determinant().abs() / hi)
}

pub fn operator_norm(m: &Matrix2<f64>) -> f64 {
    singular_values(m).0
}

pub fn inverse(m: &Matrix2<f64>) -> Matrix2<f64> {
    let det = m.determinant();
    Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det
}

/// Unit eigenvector of the symmetric matrix `s` for its larger eigenvalue.
fn top_eigenvector_symmetric(s: &Matrix2<f64>) -> Vector2<f64> {
    let (p, q, r) = (s[(0, 0)], s[(0, 1)], s[(1, 1)]);
    let half_gap = 0.5 * (p - r);
    let mu = 0.5 * (p + r) + half_gap.hypot(q);
    // Rows of S − μI are orthogonal to the eigenvector; use the longer one.
    let u = Vector2::new(q, mu - p);
    let w = Vector2::new(mu - r, q);
    let v = if u.norm_squared() >= w.norm_squared() { u } else { w };
    if v.norm_squared() == 0.0 {
        return Vector2::new(1.0, 0.0);
    }
    v.normalize()
}

/// Direction of largest stretch in the image: top left-singular vector.
pub fn top_left_singular_vector(m: &Matrix2<f64>) -> Vector2<f64> {
    let scaled = m / m.amax();
    top_eigenvector_symmetric(&(scaled * scaled.transpose()))
}

/// Direction of largest stretch in the domain: top right-singular vector.
pub fn top_right_singular_vector(m: &Matrix2<f64>) -> Vector2<f64> {
    let scaled = m / m.amax();
    top_eigenvector_symmetric(&(scaled.transpose() * scaled))
}

/// Sine of the angle between the lines spanned by `u` and `v`.
pub fn line_sine(u: &Vector2<f64>, v: &Vector2<f64>) -> f64 {
    let cross = u[0] * v[1] - u[1] * v[0];
    (cross.abs() / (u.norm() * v.norm())).min(1.0)
}

/// Principal angle in [0, π/2] between the lines spanned by `u` and `v`.
pub fn line_angle(u: &Vector2<f64>, v: &Vector2<f64>) -> f64 {
    let cross = u[0] * v[1] - u[1] * v[0];
    cross.abs().atan2(u.dot(v).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cat_singular_values() {
        let m = Matrix2::new(2.0, 1.0, 1.0, 1.0);
        let (hi, lo) = singular_values(&m);
        let golden2 = (3.0 + 5f64.sqrt()) / 2.0;
        assert_relative_eq!(hi, golden2, epsilon = 1e-14);
        assert_relative_eq!(lo, 1.0 / golden2, epsilon = 1e-14);
    }

    #[test]
    fn matches_nalgebra_svd() {
        let m = Matrix2::new(3.0, -1.5, 0.25, 2.0);
        let svd = m.svd(true, true);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let (hi, lo) = singular_values(&m);
        assert_relative_eq!(hi, sv[0], epsilon = 1e-13);
        assert_relative_eq!(lo, sv[1], epsilon = 1e-13);
        let u = top_left_singular_vector(&m);
        assert_relative_eq!((m.transpose() * u).norm(), hi, epsilon = 1e-12);
        let v = top_right_singular_vector(&m);
        assert_relative_eq!((m * v).norm(), hi, epsilon = 1e-12);
    }

    #[test]
    fn angles() {
        let e1 = Vector2::new(1.0, 0.0);
        let diag = Vector2::new(1.0, 1.0);
        assert_relative_eq!(line_angle(&e1, &diag), std::f64::consts::FRAC_PI_4, epsilon = 1e-15);
        assert_relative_eq!(line_angle(&e1, &-diag), std::f64::consts::FRAC_PI_4, epsilon = 1e-15);
        assert_relative_eq!(line_sine(&e1, &Vector2::new(0.0, -2.0)), 1.0);
    }

    #[test]
    fn inverse_round_trip() {
        let m = Matrix2::new(3.0, 1.0, 2.0, 1.0);
        assert_relative_eq!(m * inverse(&m), Matrix2::identity(), epsilon = 1e-15);
    }
}

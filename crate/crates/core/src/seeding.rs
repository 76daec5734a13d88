//! Counter-based random streams.
//!
//! Every random quantity in the crate is addressed by `(seed, stream, index)`
//! and read through ChaCha8 word-position seeking, so values never depend on
//! the order in which they are requested or on thread scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Named streams. Distinct purposes never share a stream.
pub mod stream {
    pub const BASE_SAMPLE: u64 = 1;
    pub const FIBER_POINT: u64 = 2;
    pub const TANGENT_VECTOR: u64 = 3;
    pub const SYMBOLS_FORWARD: u64 = 4;
    pub const SYMBOLS_BACKWARD: u64 = 5;
    pub const ROTATION_ANGLE: u64 = 6;
    pub const LAMBDA_SAMPLE: u64 = 7;
    pub const BIRKHOFF_START: u64 = 8;
}

/// Generator positioned at the start of `stream` for `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The `index`-th 64-bit word of `(seed, stream)`.
pub fn word(seed: u64, stream: u64, index: u64) -> u64 {
    let mut rng = stream_rng(seed, stream);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}

/// Uniform draw in [0, 1) with 53 bits of precision.
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn uniform(seed: u64, stream: u64, index: u64) -> f64 {
    unit_f64(word(seed, stream, index))
}

/// Child seed for the `index`-th independent replica of an experiment.
pub fn child_seed(seed: u64, stream: u64, index: u64) -> u64 {
    word(seed, stream, index)
}

/// Uniformly distributed point of the circle or torus, indexed by `index`.
pub fn fiber_point(seed: u64, index: u64, dim: usize) -> crate::manifold::ManifoldPoint {
    let u = |k: u64| uniform(seed, stream::FIBER_POINT, index * 2 + k);
    match dim {
        1 => crate::manifold::ManifoldPoint::circle(u(0)),
        _ => crate::manifold::ManifoldPoint::torus(u(0), u(1)),
    }
}

/// Uniformly distributed unit vector in dimension 1 (a sign) or 2.
pub fn unit_vector(seed: u64, index: u64, dim: usize) -> nalgebra::DVector<f64> {
    let u = uniform(seed, stream::TANGENT_VECTOR, index);
    match dim {
        1 => nalgebra::DVector::from_element(1, if u < 0.5 { -1.0 } else { 1.0 }),
        _ => {
            let t = 2.0 * std::f64::consts::PI * u;
            nalgebra::DVector::from_vec(vec![t.cos(), t.sin()])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_are_position_addressed() {
        let forward: Vec<u64> = (0..16).map(|i| word(42, 3, i)).collect();
        let backward: Vec<u64> = (0..16).rev().map(|i| word(42, 3, i)).collect();
        let mut reversed = backward.clone();
        reversed.reverse();
        assert_eq!(forward, reversed);
    }

    #[test]
    fn streams_differ() {
        assert_ne!(word(1, 1, 0), word(1, 2, 0));
        assert_ne!(word(1, 1, 0), word(2, 1, 0));
    }

    #[test]
    fn unit_range() {
        assert_eq!(unit_f64(0), 0.0);
        assert!(unit_f64(u64::MAX) < 1.0);
    }
}

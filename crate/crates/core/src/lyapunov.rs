//! Fibrewise Lyapunov exponents.
//!
//! The top exponent λ(ω, x, v) is the Birkhoff average of Φ along TF̂ with
//! per-step renormalization. The full spectrum comes from a frame that is
//! Gram–Schmidt orthonormalized after every step; the logs of the diagonal
//! factors accumulate into λ₁ ≤ … ≤ λ_m.

use std::sync::Arc;

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{sample_states, BaseState, BaseSystem};
use crate::cocycle::{TangentWalker, UnitTangentPoint};
use crate::error::{Error, Result};
use crate::fiber::{FiberFamily, LocalMap};
use crate::manifold::ManifoldPoint;
use crate::seeding;
use crate::stats;

pub const DEFAULT_BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    /// Nats per step.
    pub value: f64,
    /// Steps used: `batches × (n / batches)`.
    pub n: usize,
    pub batch_std_err: f64,
    pub batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    /// Ascending.
    pub exponents: Vec<f64>,
    pub n: usize,
}

impl SpectrumEstimate {
    pub fn bottom(&self) -> f64 {
        self.exponents[0]
    }

    pub fn top(&self) -> f64 {
        *self.exponents.last().expect("nonempty spectrum")
    }

    pub fn sum(&self) -> f64 {
        self.exponents.iter().sum()
    }
}

/// (1/n) log|D_xφ_ω⁽ⁿ⁾ v| accumulated step by step, with batch-mean error bars.
pub fn top_exponent(
    family: &FiberFamily,
    p: &UnitTangentPoint,
    n: usize,
    batches: usize,
) -> Result<ExponentEstimate> {
    if batches == 0 || n < batches {
        return Err(Error::Contract(format!(
            "top_exponent needs n ≥ batches ≥ 1 (n = {n}, batches = {batches})"
        )));
    }
    let batch_len = n / batches;
    let mut walker = TangentWalker::new(family, p)?;
    let mut batch_means = Vec::with_capacity(batches);
    let mut total = 0.0;
    for _ in 0..batches {
        let mut sum = 0.0;
        for _ in 0..batch_len {
            sum += walker.step()?;
        }
        total += sum;
        batch_means.push(sum / batch_len as f64);
    }
    let used = batch_len * batches;
    Ok(ExponentEstimate {
        value: total / used as f64,
        n: used,
        batch_std_err: stats::batch_std_err(&batch_means),
        batches,
    })
}

/// Full spectrum at (ω, x) from `n` steps of re-orthonormalized products.
pub fn oseledets_spectrum(
    family: &FiberFamily,
    omega: &BaseState,
    x: &ManifoldPoint,
    n: usize,
) -> Result<SpectrumEstimate> {
    oseledets_spectrum_after(family, omega, x, n, 0)
}

/// Like [`oseledets_spectrum`], but the frame is first carried along
/// `burn_in` unrecorded steps from (ω, x); the recorded window starts at
/// θ^{burn_in}ω.
pub fn oseledets_spectrum_after(
    family: &FiberFamily,
    omega: &BaseState,
    x: &ManifoldPoint,
    n: usize,
    burn_in: usize,
) -> Result<SpectrumEstimate> {
    let m = family.manifold_dim();
    if x.dim() != m {
        return Err(Error::Contract(format!(
            "family `{}` acts on dimension {m}, point has dimension {}",
            family.id().name(),
            x.dim()
        )));
    }
    if n < m {
        return Err(Error::Contract(format!("spectrum needs n ≥ {m}, got {n}")));
    }
    let mut w = omega.clone();
    let mut y = *x;
    let exponents = if m == 1 {
        let mut sum = 0.0;
        for k in 0..burn_in + n {
            let local = family.local(&w)?;
            if k >= burn_in {
                sum += local.circle_derivative(y.x()).abs().ln();
            }
            y = local.apply(&y);
            w = w.base_step();
        }
        vec![sum / n as f64]
    } else {
        let mut q1 = Vector2::new(1.0, 0.0);
        let mut q2 = Vector2::new(0.0, 1.0);
        let (mut s1, mut s2) = (0.0, 0.0);
        for k in 0..burn_in + n {
            let local = family.local(&w)?;
            let d = match local {
                LocalMap::Linear(d) => d,
                LocalMap::Circle { .. } => unreachable!("two-dimensional families are linear"),
            };
            let a1 = d * q1;
            let a2 = d * q2;
            let r11 = a1.norm();
            q1 = a1 / r11;
            let r12 = q1.dot(&a2);
            let b2 = a2 - q1 * r12;
            let r22 = b2.norm();
            q2 = b2 / r22;
            if k >= burn_in {
                s1 += r11.ln();
                s2 += r22.ln();
            }
            y = local.apply(&y);
            w = w.base_step();
        }
        let mut e = vec![s1 / n as f64, s2 / n as f64];
        e.sort_by(|a, b| a.total_cmp(b));
        e
    };
    Ok(SpectrumEstimate { exponents, n })
}

/// (1/n) Σ_{i<n} log|det D_{xᵢ}φ_{θⁱω}|, the quantity the spectrum must sum to.
pub fn mean_log_det(
    family: &FiberFamily,
    omega: &BaseState,
    x: &ManifoldPoint,
    n: usize,
) -> Result<f64> {
    let mut w = omega.clone();
    let mut y = *x;
    let mut sum = 0.0;
    for _ in 0..n {
        let local = family.local(&w)?;
        sum += local.jacobian(&y).determinant().abs().ln();
        y = local.apply(&y);
        w = w.base_step();
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpectrum {
    pub index: usize,
    pub x: Vec<f64>,
    pub exponents: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub min_exponent: f64,
    /// Fraction of samples whose exponents are all positive.
    pub fraction_positive: f64,
    /// Fraction of samples whose top exponent is positive.
    pub fraction_top_positive: f64,
    pub argmin_sample: usize,
    pub n: usize,
    pub per_sample: Vec<SampleSpectrum>,
}

/// Spectra at `samples` random (ω, x): ω from ℙ, x uniform.
pub fn exponent_positivity_report(
    family: &FiberFamily,
    system: &Arc<BaseSystem>,
    seed: u64,
    samples: usize,
    n: usize,
) -> Result<PositivityReport> {
    let states = sample_states(system, seed, samples)?;
    let dim = family.manifold_dim();
    let per_sample: Vec<SampleSpectrum> = states
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let x = seeding::fiber_point(seed, i as u64, dim);
            oseledets_spectrum(family, w, &x, n).map(|s| SampleSpectrum {
                index: i,
                x: x.coords().to_vec(),
                exponents: s.exponents,
            })
        })
        .collect::<Result<_>>()?;
    let mut min_exponent = f64::INFINITY;
    let mut argmin_sample = 0;
    let (mut all_pos, mut top_pos) = (0usize, 0usize);
    for s in &per_sample {
        if s.exponents[0] < min_exponent {
            min_exponent = s.exponents[0];
            argmin_sample = s.index;
        }
        all_pos += usize::from(s.exponents[0] > 0.0);
        top_pos += usize::from(*s.exponents.last().unwrap() > 0.0);
    }
    Ok(PositivityReport {
        min_exponent,
        fraction_positive: all_pos as f64 / samples as f64,
        fraction_top_positive: top_pos as f64 / samples as f64,
        argmin_sample,
        n,
        per_sample,
    })
}

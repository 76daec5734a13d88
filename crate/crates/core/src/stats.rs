//! Sample means with batch-mean standard errors.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

/// Mean and standard error (sample standard deviation over √count) of
/// independent values, summed in index order.
pub fn mean_std_err(values: &[f64]) -> MeanEstimate {
    let count = values.len();
    if count == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            std_err: f64::NAN,
            count,
        };
    }
    let mean = values.iter().sum::<f64>() / count as f64;
    let std_err = if count < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
        (var / count as f64).sqrt()
    };
    MeanEstimate {
        mean,
        std_err,
        count,
    }
}

/// Standard error of the mean of a correlated series from the spread of
/// `batch_means`.
pub fn batch_std_err(batch_means: &[f64]) -> f64 {
    mean_std_err(batch_means).std_err
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_has_zero_error() {
        let m = mean_std_err(&[0.5; 10]);
        assert_eq!(m.mean, 0.5);
        assert_eq!(m.std_err, 0.0);
    }

    #[test]
    fn known_values() {
        let m = mean_std_err(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        // sample variance 5/3, se = sqrt(5/12)
        assert!((m.std_err - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }
}

//! Small numeric helpers shared across modules.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn norm_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// `ln Φ(x)`, accurate far into the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        norm_cdf(x).ln()
    } else {
        let x2 = x * x;
        norm_log_pdf(x) - (-x).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// `ln cosh(x)` without overflow.
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Neumaier compensated accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Mean, unbiased standard deviation and excess kurtosis of a slice.
pub fn moments(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(values.iter().copied()) / n;
    let m2 = compensated_sum(values.iter().map(|v| (v - mean).powi(2)));
    let m4 = compensated_sum(values.iter().map(|v| (v - mean).powi(4)));
    let sd = if values.len() > 1 {
        (m2 / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let pop_var = m2 / n;
    let kurt = if pop_var > 0.0 {
        (m4 / n) / (pop_var * pop_var) - 3.0
    } else {
        0.0
    };
    (mean, sd, kurt)
}

pub(crate) fn sqrt_2_over_pi() -> f64 {
    (2.0 / PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normal_reference_values() {
        assert_relative_eq!(norm_quantile(0.95), 1.644_853_626_951_472_2, epsilon = 1e-9);
        assert_relative_eq!(norm_quantile(0.8), 0.841_621_233_572_914_3, epsilon = 1e-9);
        assert_relative_eq!(norm_cdf(0.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn log_cdf_is_continuous_at_switch() {
        let a = log_norm_cdf(-29.999_999);
        let b = log_norm_cdf(-30.000_001);
        assert!((a - b).abs() < 1e-3);
        assert!(log_norm_cdf(-100.0).is_finite());
    }

    #[test]
    fn log_cosh_matches_naive() {
        for x in [-3.0f64, -0.2, 0.0, 1.5, 10.0] {
            assert_relative_eq!(log_cosh(x), x.cosh().ln(), epsilon = 1e-12);
        }
        assert!(log_cosh(1e4).is_finite());
    }

    #[test]
    fn kahan_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16];
        assert_eq!(compensated_sum(v), 1.0);
    }
}

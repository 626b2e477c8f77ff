//! Standard normal distribution helpers.

use statrs::distribution::{ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::standard()
}

/// `P(Z <= x)` for a standard normal `Z`.
pub fn cdf(x: f64) -> f64 {
    standard().cdf(x)
}

/// Quantile function of the standard normal; NaN outside `[0, 1]`.
pub fn inverse_cdf(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    standard().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_quantiles() {
        assert!((inverse_cdf(0.975) - 1.959963984540054).abs() < 1e-12);
        assert!((inverse_cdf(0.95) - 1.6448536269514722).abs() < 1e-12);
        assert!(inverse_cdf(0.5).abs() < 1e-15);
        assert!((inverse_cdf(1e-10) + 6.361340902404056).abs() < 1e-8);
        assert!(inverse_cdf(1.5).is_nan());
    }

    #[test]
    fn round_trip() {
        for k in 1..200 {
            let p = k as f64 / 200.0;
            assert!((cdf(inverse_cdf(p)) - p).abs() < 1e-10, "{p}");
        }
    }
}

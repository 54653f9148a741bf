//! Scalar special functions: the Gaussian upper tail and power-series tails
//! used to normalize coefficient sequences.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{invalid, Result};

/// Upper Gaussian tail `Ψ(u) = P(Z > u)` for a standard normal `Z`.
pub fn gaussian_tail(u: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(u / SQRT_2)
}

/// Standard normal density.
pub fn gaussian_density(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

/// Terms summed explicitly before switching to the Euler-Maclaurin remainder.
const EXPLICIT_TERMS: usize = 128;

/// `Σ_{k > m} k^{-s}` for `s > 1`.
///
/// Terms up to `max(m, 128)` are summed directly (smallest first), the rest
/// is the Euler-Maclaurin expansion of `∫ x^{-s}` with three Bernoulli
/// corrections, which is accurate to machine precision from `k = 129` on.
pub fn power_tail(s: f64, m: usize) -> Result<f64> {
    if !(s > 1.0) || !s.is_finite() {
        return Err(invalid("s", format!("power series needs s > 1, got {s}")));
    }
    let cutoff = m.max(EXPLICIT_TERMS);
    let n = (cutoff + 1) as f64;
    let em = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s) + s * n.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * n.powf(-s - 3.0) / 720.0
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * n.powf(-s - 5.0) / 30240.0;
    let explicit: f64 = ((m + 1)..=cutoff).rev().map(|k| (k as f64).powf(-s)).sum();
    Ok(explicit + em)
}

/// Riemann zeta function for real `s > 1`.
pub fn zeta(s: f64) -> Result<f64> {
    power_tail(s, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_symmetry_and_limits() {
        assert_eq!(gaussian_tail(0.0), 0.5);
        assert!(gaussian_tail(40.0) < 1e-300);
        assert!((gaussian_tail(-40.0) - 1.0).abs() < 1e-16);
        for u in [0.3, 1.0, 2.5, 6.0] {
            assert!((gaussian_tail(u) + gaussian_tail(-u) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zeta_known_values() {
        assert!((zeta(2.0).unwrap() - PI * PI / 6.0).abs() < 1e-14);
        assert!((zeta(4.0).unwrap() - PI.powi(4) / 90.0).abs() < 1e-14);
        assert!((zeta(8.0).unwrap() - PI.powi(8) / 9450.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_divergent_series() {
        assert!(zeta(1.0).is_err());
        assert!(power_tail(0.5, 3).is_err());
    }

    #[test]
    fn tail_is_zeta_minus_partial_sum() {
        let s = 3.5;
        let partial: f64 = (1..=10).map(|k| (k as f64).powf(-s)).sum();
        let direct = zeta(s).unwrap() - partial;
        assert!((power_tail(s, 10).unwrap() - direct).abs() < 1e-14);
    }
}

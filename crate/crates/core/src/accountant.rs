//! Privacy accounting for repeated Gaussian mechanisms.
//!
//! Each iteration releases a sensitivity-1 histogram with per-bin Gaussian
//! noise of standard deviation σ. `T` adaptive compositions of that mechanism
//! are equivalent to a single Gaussian mechanism with noise multiplier
//! `σ/√T`, and the exact (ε, δ) curve of a Gaussian mechanism with noise
//! multiplier `s` and sensitivity 1 is
//!
//! ```text
//! δ(ε) = Φ(1/(2s) − ε·s) − e^ε · Φ(−1/(2s) − ε·s)
//! ```

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{PeError, Result};

pub const EPSILON_BRACKET: (f64, f64) = (0.0, 500.0);
pub const SIGMA_BRACKET: (f64, f64) = (1e-6, 1e9);

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `ln Φ(x)`, accurate in the far left tail where `Φ(x)` underflows.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        return normal_cdf(x).ln();
    }
    // Mills-ratio asymptotic series for Φ(−a), a = −x ≥ 30.
    let a = -x;
    let a2 = a * a;
    let series = 1.0 - 1.0 / a2 + 3.0 / (a2 * a2) - 15.0 / (a2 * a2 * a2);
    -0.5 * a2 - a.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
}

fn check_sigma(sigma: f64, what: &str) -> Result<()> {
    if !(sigma > 0.0) || sigma.is_nan() {
        return Err(PeError::InvalidArgument(format!("{what} must be > 0, got {sigma}")));
    }
    Ok(())
}

/// Noise multiplier of the single mechanism equivalent to `t` compositions.
pub fn effective_sigma(sigma: f64, t: usize) -> Result<f64> {
    check_sigma(sigma, "sigma")?;
    if t == 0 {
        return Err(PeError::InvalidArgument("iteration count must be >= 1".into()));
    }
    Ok(sigma / (t as f64).sqrt())
}

pub fn delta_for_epsilon(sigma_eff: f64, epsilon: f64) -> Result<f64> {
    check_sigma(sigma_eff, "effective sigma")?;
    if !(epsilon >= 0.0) {
        return Err(PeError::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
    }
    if epsilon.is_infinite() {
        return Ok(0.0);
    }
    let a = 0.5 / sigma_eff;
    let b = epsilon * sigma_eff;
    let first = normal_cdf(a - b);
    // e^ε·Φ(−a−b) in log space so that neither factor overflows.
    let second = (epsilon + log_normal_cdf(-a - b)).exp();
    Ok((first - second).clamp(0.0, 1.0))
}

/// Smallest ε ≥ 0 whose δ(ε) does not exceed `delta`. Returns 0 when even
/// ε = 0 already meets `delta`.
pub fn epsilon_for_delta(sigma_eff: f64, delta: f64) -> Result<f64> {
    check_sigma(sigma_eff, "effective sigma")?;
    if !(delta > 0.0) {
        return Err(PeError::InvalidArgument(format!("delta must be > 0, got {delta}")));
    }
    if delta >= delta_for_epsilon(sigma_eff, 0.0)? {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = EPSILON_BRACKET;
    if delta_for_epsilon(sigma_eff, hi)? > delta {
        return Err(PeError::Bracket(format!(
            "no epsilon <= {hi} reaches delta {delta} at sigma_eff {sigma_eff}"
        )));
    }
    for _ in 0..200 {
        if hi - lo <= 1e-13 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if delta_for_epsilon(sigma_eff, mid)? > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Smallest per-iteration σ for which `iterations` compositions satisfy
/// (ε, δ)-DP.
pub fn sigma_for_budget(epsilon: f64, delta: f64, iterations: usize) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(PeError::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(PeError::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if iterations == 0 {
        return Err(PeError::InvalidArgument("iteration count must be >= 1".into()));
    }
    let (mut lo, mut hi) = SIGMA_BRACKET;
    if delta_for_epsilon(hi, epsilon)? > delta {
        return Err(PeError::Bracket(format!(
            "(epsilon={epsilon}, delta={delta}) infeasible for sigma_eff <= {hi}"
        )));
    }
    if delta_for_epsilon(lo, epsilon)? > delta {
        // Bisection on log σ; δ is decreasing in σ.
        for _ in 0..300 {
            if hi / lo - 1.0 <= 1e-14 {
                break;
            }
            let mid = (lo * hi).sqrt();
            if delta_for_epsilon(mid, epsilon)? > delta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    } else {
        hi = lo;
    }
    Ok(hi * (iterations as f64).sqrt())
}

/// Parameters of a full run: per-iteration noise, iteration count and δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpec {
    pub sigma: f64,
    pub iterations: usize,
    pub delta: f64,
}

impl PrivacySpec {
    pub fn new(sigma: f64, iterations: usize, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(PeError::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
        }
        if !(sigma >= 0.0) {
            return Err(PeError::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(Self {
            sigma,
            iterations,
            delta,
        })
    }

    pub fn effective_sigma(&self) -> Result<f64> {
        effective_sigma(self.sigma, self.iterations)
    }

    /// ε after all iterations: 0 for no iterations, ∞ without noise.
    pub fn epsilon(&self) -> Result<f64> {
        epsilon_after(self.sigma, self.iterations, self.delta)
    }
}

pub fn epsilon_after(sigma: f64, iterations: usize, delta: f64) -> Result<f64> {
    if iterations == 0 {
        return Ok(0.0);
    }
    if sigma == 0.0 {
        return Ok(f64::INFINITY);
    }
    epsilon_for_delta(effective_sigma(sigma, iterations)?, delta)
}

/// Running count of Gaussian-mechanism releases charged against a budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    sigma: f64,
    delta: f64,
    compositions: usize,
}

impl PrivacyLedger {
    pub fn new(sigma: f64, delta: f64) -> Result<Self> {
        PrivacySpec::new(sigma, 0, delta)?;
        Ok(Self {
            sigma,
            delta,
            compositions: 0,
        })
    }

    /// Charges one histogram release.
    pub fn record_release(&mut self) {
        self.compositions += 1;
    }

    pub fn compositions(&self) -> usize {
        self.compositions
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn epsilon(&self) -> Result<f64> {
        epsilon_after(self.sigma, self.compositions, self.delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_sigma_examples() {
        let s = effective_sigma(10.0 * 2f64.sqrt(), 5).unwrap();
        assert!((s - 6.324555).abs() < 1e-6);
        assert_eq!(effective_sigma(3.7, 1).unwrap(), 3.7);
        assert!((effective_sigma(2f64.sqrt(), 2).unwrap() - 1.0).abs() < 1e-15);
        assert!(effective_sigma(0.0, 1).is_err());
        assert!(effective_sigma(1.0, 0).is_err());
    }

    #[test]
    fn delta_at_zero_epsilon() {
        // δ(0) = Φ(1/2) − Φ(−1/2) = 2Φ(1/2) − 1.
        let d = delta_for_epsilon(1.0, 0.0).unwrap();
        assert!((d - 0.382_924_922_548_026).abs() < 1e-12, "{d}");
    }

    #[test]
    fn delta_vanishes_for_huge_sigma() {
        assert!(delta_for_epsilon(1e6, 1.0).unwrap() < 1e-9);
        assert!(delta_for_epsilon(-1.0, 1.0).is_err());
    }

    #[test]
    fn epsilon_boundary_and_errors() {
        let d0 = delta_for_epsilon(2.0, 0.0).unwrap();
        assert_eq!(epsilon_for_delta(2.0, d0).unwrap(), 0.0);
        assert_eq!(epsilon_for_delta(2.0, 0.9).unwrap(), 0.0);
        assert!(epsilon_for_delta(2.0, 0.0).is_err());
    }

    #[test]
    fn log_cdf_is_continuous_at_switch() {
        let left = log_normal_cdf(-30.0 - 1e-9);
        let right = log_normal_cdf(-30.0 + 1e-9);
        assert!((left - right).abs() / left.abs() < 1e-9);
        assert!(log_normal_cdf(-1e3).is_finite());
    }

    #[test]
    fn doubling_iterations_scales_sigma_by_sqrt2() {
        let s1 = sigma_for_budget(1.0, 1e-5, 3).unwrap();
        let s2 = sigma_for_budget(1.0, 1e-5, 6).unwrap();
        assert!((s2 / s1 - 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn sigma_for_budget_roundtrip() {
        for &(eps, t) in &[(0.5, 1usize), (1.0, 5), (4.0, 20)] {
            let s = sigma_for_budget(eps, 1e-5, t).unwrap();
            let back = epsilon_for_delta(effective_sigma(s, t).unwrap(), 1e-5).unwrap();
            assert!(back <= eps + 1e-6, "{back} > {eps}");
            assert!(back >= eps - 1e-6);
        }
    }

    #[test]
    fn ledger_counts_releases() {
        let mut l = PrivacyLedger::new(2.0, 1e-5).unwrap();
        assert_eq!(l.epsilon().unwrap(), 0.0);
        l.record_release();
        l.record_release();
        assert_eq!(l.compositions(), 2);
        assert_eq!(
            l.epsilon().unwrap(),
            epsilon_for_delta(effective_sigma(2.0, 2).unwrap(), 1e-5).unwrap()
        );
        assert!(PrivacyLedger::new(0.0, 1e-5).unwrap().epsilon().unwrap() == 0.0);
    }
}

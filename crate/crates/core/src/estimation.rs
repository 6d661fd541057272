//! The sender-side estimation step.
//!
//! The protocol and both games are parametric in an [`Estimator`]. The
//! estimator sees only what the sender holds at that point: the un-permuted
//! set of accepted pulse indices and its private intensity class of every
//! pulse. It never sees photon counts.
//!
//! [`TwoIntensityEstimator`] is the two-intensity test: with intensities
//! `nu < nu'` it forms
//!
//! ```text
//! T = (c' P - c P') / (b c' - b' c)
//! ```
//!
//! where `P`, `P'` count accepted low/high-intensity pulses and `b, c` (`b', c'`)
//! are the one- and two-photon Poisson probabilities, and accepts iff
//! `T >= t - delta0 * N/2` for the honest mean `t`. Two-photon acceptances
//! drawn proportionally to `(c, c')` contribute exactly zero to `T`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::numerics::{one_minus_exp_neg, poisson_tail};

/// Class label of the low intensity `nu`.
pub const LOW: usize = 0;
/// Class label of the high intensity `nu'`.
pub const HIGH: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Abort,
}

/// Poisson photon-number coefficients for the two intensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub nu: f64,
    pub nu_prime: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub a_prime: f64,
    pub b_prime: f64,
    pub c_prime: f64,
    /// `1 - a - b - c`, the three-or-more photon probability at `nu`.
    pub tail3: f64,
    pub tail3_prime: f64,
    /// `b c' - b' c`, computed from its closed form `(nu nu'/2) e^{-nu-nu'} (nu' - nu)`.
    pub discriminant: f64,
}

impl Coefficients {
    pub fn new(nu: f64, nu_prime: f64) -> Result<Self> {
        if !(nu.is_finite() && nu_prime.is_finite()) || nu <= 0.0 {
            return Err(param("nu", format!("intensities must be finite and > 0, got ({nu}, {nu_prime})")));
        }
        if nu >= nu_prime {
            return Err(param(
                "nu_prime",
                format!("need nu < nu_prime for a nonzero discriminant, got ({nu}, {nu_prime})"),
            ));
        }
        let a = (-nu).exp();
        let a_prime = (-nu_prime).exp();
        Ok(Self {
            nu,
            nu_prime,
            a,
            b: nu * a,
            c: nu * nu * a / 2.0,
            a_prime,
            b_prime: nu_prime * a_prime,
            c_prime: nu_prime * nu_prime * a_prime / 2.0,
            tail3: poisson_tail(3, nu),
            tail3_prime: poisson_tail(3, nu_prime),
            discriminant: 0.5 * nu * nu_prime * (-nu - nu_prime).exp() * (nu_prime - nu),
        })
    }

    /// `e^{-eta nu}`, the vacuum probability after loss.
    pub fn a_eta(&self, eta: f64) -> f64 {
        (-eta * self.nu).exp()
    }

    pub fn a_prime_eta(&self, eta: f64) -> f64 {
        (-eta * self.nu_prime).exp()
    }

    /// `1 - e^{-eta nu}`: probability that an honest low-intensity pulse arrives non-empty.
    pub fn detect(&self, eta: f64) -> f64 {
        one_minus_exp_neg(eta * self.nu)
    }

    pub fn detect_prime(&self, eta: f64) -> f64 {
        one_minus_exp_neg(eta * self.nu_prime)
    }

    /// `C = max(c, c')`.
    pub fn c_max(&self) -> f64 {
        self.c.max(self.c_prime)
    }

    /// `c'(1 - e^{-eta nu}) - c(1 - e^{-eta nu'})`, the numerator of the honest mean.
    pub fn honest_numerator(&self, eta: f64) -> f64 {
        self.c_prime * self.detect(eta) - self.c * self.detect_prime(eta)
    }
}

/// Accepted-pulse counts per intensity: `P` (low) and `P'` (high).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AcceptedCounts {
    #[serde(rename = "P")]
    pub low: u64,
    #[serde(rename = "P_prime")]
    pub high: u64,
}

/// `T = (c' P - c P') / (b c' - b' c)`.
pub fn statistic_t(counts: AcceptedCounts, coeffs: &Coefficients) -> f64 {
    (coeffs.c_prime * counts.low as f64 - coeffs.c * counts.high as f64) / coeffs.discriminant
}

/// Honest expectation of `T` at transmittance `eta` over `n_pulses` pulses
/// split evenly between the two intensities.
pub fn reference_t(coeffs: &Coefficients, eta: f64, n_pulses: u64) -> f64 {
    coeffs.honest_numerator(eta) / coeffs.discriminant * (n_pulses as f64 / 2.0)
}

/// Interface every estimation algorithm implements.
pub trait Estimator: Send + Sync {
    /// `accepted` holds original (un-permuted) pulse indices, `classes[i]` the
    /// intensity class of pulse `i`.
    fn estimate(&self, accepted: &[usize], classes: &[usize]) -> Result<Verdict>;
}

/// Tallies accepted indices per class, rejecting out-of-range or repeated indices.
pub fn count_by_class(accepted: &[usize], classes: &[usize], n_classes: usize) -> Result<Vec<u64>> {
    let mut seen = HashSet::with_capacity(accepted.len());
    let mut counts = vec![0u64; n_classes];
    for &i in accepted {
        let class = *classes
            .get(i)
            .ok_or_else(|| Error::ProtocolViolation(format!("accepted index {i} outside [0, {})", classes.len())))?;
        if !seen.insert(i) {
            return Err(Error::ProtocolViolation(format!("index {i} acknowledged twice")));
        }
        let slot = counts
            .get_mut(class)
            .ok_or_else(|| Error::ProtocolViolation(format!("pulse {i} has unknown class {class}")))?;
        *slot += 1;
    }
    Ok(counts)
}

/// The two-intensity estimation algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoIntensityEstimator {
    pub coeffs: Coefficients,
    pub eta: f64,
    pub n_pulses: u64,
    /// Acceptance margin `Delta_0 > 0`.
    pub delta0: f64,
}

impl TwoIntensityEstimator {
    pub fn new(coeffs: Coefficients, eta: f64, n_pulses: u64, delta0: f64) -> Result<Self> {
        if !(delta0 > 0.0 && delta0.is_finite()) {
            return Err(param("delta0", format!("acceptance margin must be > 0, got {delta0}")));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(param("eta", format!("transmittance must lie in (0, 1], got {eta}")));
        }
        Ok(Self { coeffs, eta, n_pulses, delta0 })
    }

    /// `t - Delta_0 N/2`.
    pub fn threshold(&self) -> f64 {
        reference_t(&self.coeffs, self.eta, self.n_pulses) - self.delta0 * (self.n_pulses as f64 / 2.0)
    }

    pub fn decide_counts(&self, counts: AcceptedCounts) -> Verdict {
        if statistic_t(counts, &self.coeffs) >= self.threshold() {
            Verdict::Accept
        } else {
            Verdict::Abort
        }
    }
}

impl Estimator for TwoIntensityEstimator {
    fn estimate(&self, accepted: &[usize], classes: &[usize]) -> Result<Verdict> {
        algorithm_b(accepted, classes, self)
    }
}

/// Counts `(P, P')` over `accepted` and applies the acceptance test.
pub fn algorithm_b(accepted: &[usize], classes: &[usize], estimator: &TwoIntensityEstimator) -> Result<Verdict> {
    let counts = count_by_class(accepted, classes, 2)?;
    Ok(estimator.decide_counts(AcceptedCounts { low: counts[LOW], high: counts[HIGH] }))
}

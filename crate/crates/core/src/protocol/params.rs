use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::estimation::{Coefficients, HIGH, LOW};

/// Public protocol constants.
///
/// Intensities are stored as a table of distinct levels plus the level class
/// of every pulse in its original (pre-permutation) position. The sender keeps
/// `classes` private; the receiver only ever learns `levels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n_pulses: usize,
    pub batch_size: usize,
    /// Transmittance `eta` of the honest channel.
    pub eta: f64,
    pub levels: Vec<f64>,
    pub classes: Vec<usize>,
}

impl ProtocolParams {
    pub fn new(batch_size: usize, eta: f64, levels: Vec<f64>, classes: Vec<usize>) -> Result<Self> {
        let n_pulses = classes.len();
        if n_pulses == 0 {
            return Err(param("n", "need at least one pulse"));
        }
        if batch_size > n_pulses {
            return Err(param("k", format!("batch size {batch_size} exceeds pulse count {n_pulses}")));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(param("eta", format!("transmittance must lie in [0, 1], got {eta}")));
        }
        if let Some(bad) = levels.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(param("intensities", format!("intensity {bad} is not a finite nonnegative number")));
        }
        if let Some(bad) = classes.iter().find(|&&c| c >= levels.len()) {
            return Err(param("intensities", format!("class {bad} has no intensity level")));
        }
        Ok(Self { n_pulses, batch_size, eta, levels, classes })
    }

    /// Two-intensity layout: pulses `0..N/2` at `nu`, `N/2..N` at `nu'`.
    pub fn two_intensity(nu: f64, nu_prime: f64, eta: f64, n_pulses: usize, batch_size: usize) -> Result<Self> {
        if n_pulses % 2 != 0 {
            return Err(param("n", format!("two-intensity layout needs an even pulse count, got {n_pulses}")));
        }
        Coefficients::new(nu, nu_prime)?;
        let classes = (0..n_pulses).map(|i| if i < n_pulses / 2 { LOW } else { HIGH }).collect();
        Self::new(batch_size, eta, vec![nu, nu_prime], classes)
    }

    /// Two-intensity layout with `K = floor(((2 - e^{-eta nu} - e^{-eta nu'})/2 - delta) N)`.
    pub fn from_delta(nu: f64, nu_prime: f64, eta: f64, n_pulses: usize, delta: f64) -> Result<Self> {
        let k = batch_size_for(&Coefficients::new(nu, nu_prime)?, eta, n_pulses as u64, delta)?;
        Self::two_intensity(nu, nu_prime, eta, n_pulses, k as usize)
    }

    pub fn intensity(&self, pulse: usize) -> f64 {
        self.levels[self.classes[pulse]]
    }

    /// Per-pulse intensities `mu_1..mu_N` in original order.
    pub fn intensities(&self) -> Vec<f64> {
        (0..self.n_pulses).map(|i| self.intensity(i)).collect()
    }

    pub fn is_two_intensity(&self) -> bool {
        self.levels.len() == 2
            && self.n_pulses % 2 == 0
            && self.classes.iter().filter(|&&c| c == LOW).count() == self.n_pulses / 2
    }

    pub fn coefficients(&self) -> Result<Coefficients> {
        if !self.is_two_intensity() {
            return Err(param("intensities", "not a two-intensity layout"));
        }
        Coefficients::new(self.levels[LOW], self.levels[HIGH])
    }

    /// The `delta` actually realised by the integer batch size:
    /// `(2 - e^{-eta nu} - e^{-eta nu'})/2 - K/N`.
    pub fn effective_delta(&self) -> Result<f64> {
        let k = self.coefficients()?;
        Ok(mean_detection(&k, self.eta) - self.batch_size as f64 / self.n_pulses as f64)
    }
}

/// `(2 - e^{-eta nu} - e^{-eta nu'})/2`, the honest mean fraction of non-empty pulses.
pub fn mean_detection(k: &Coefficients, eta: f64) -> f64 {
    0.5 * (k.detect(eta) + k.detect_prime(eta))
}

/// Integer batch size implied by `delta`; rounding down keeps the realised
/// `delta` at or above the requested one.
pub fn batch_size_for(k: &Coefficients, eta: f64, n_pulses: u64, delta: f64) -> Result<u64> {
    let frac = mean_detection(k, eta) - delta;
    if !(delta > 0.0) || frac <= 0.0 {
        return Err(param(
            "delta",
            format!("need 0 < delta < {:.6e} for a positive batch size, got {delta}", mean_detection(k, eta)),
        ));
    }
    Ok((frac * n_pulses as f64).floor() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let p = ProtocolParams::two_intensity(0.1, 0.2, 0.5, 10, 3).unwrap();
        assert_eq!(p.intensities(), vec![0.1, 0.1, 0.1, 0.1, 0.1, 0.2, 0.2, 0.2, 0.2, 0.2]);
        assert!(p.is_two_intensity());
        assert!(ProtocolParams::two_intensity(0.1, 0.2, 0.5, 11, 3).is_err());
        assert!(ProtocolParams::two_intensity(0.1, 0.2, 0.5, 10, 11).is_err());
        assert!(ProtocolParams::two_intensity(0.1, 0.2, 1.5, 10, 1).is_err());
        assert!(ProtocolParams::two_intensity(0.2, 0.1, 0.5, 10, 1).is_err());
    }

    #[test]
    fn k_consistency() {
        let p = ProtocolParams::from_delta(0.1, 0.2, 0.5, 2000, 0.01).unwrap();
        let k = p.coefficients().unwrap();
        let expected = ((mean_detection(&k, 0.5) - 0.01) * 2000.0).floor() as usize;
        assert_eq!(p.batch_size, expected);
        let eff = p.effective_delta().unwrap();
        assert!(eff >= 0.01 && eff < 0.01 + 1.0 / 2000.0);
    }
}

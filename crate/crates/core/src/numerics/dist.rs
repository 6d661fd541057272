//! Photon-number distributions and the discrete samplers built on them.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// A real number in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(param("probability", format!("{value} is outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = crate::Error;
    fn try_from(v: f64) -> Result<Self> {
        Probability::new(v)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// Inversion-by-search is used below this mean.
const INVERSION_LIMIT: f64 = 10.0;

/// Draws `n ~ Poisson(mean)`.
pub fn poisson_sample<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if !mean.is_finite() || mean < 0.0 {
        return Err(param("mean", format!("Poisson mean must be finite and >= 0, got {mean}")));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    if mean < INVERSION_LIMIT {
        let u: f64 = rng.random();
        let mut p = (-mean).exp();
        let mut cdf = p;
        let mut n = 0u64;
        while u >= cdf {
            n += 1;
            p *= mean / n as f64;
            if p == 0.0 {
                // cdf saturated below u by rounding; the remaining mass is < 1e-300.
                break;
            }
            cdf += p;
        }
        return Ok(n);
    }
    let dist = Poisson::new(mean).map_err(|e| param("mean", e.to_string()))?;
    Ok(dist.sample(rng) as u64)
}

/// `ln n!`, exact summation for small `n` and a Stirling series beyond.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    if n <= 32 {
        return (2..=n).map(|k| (k as f64).ln()).sum();
    }
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// `Pr[n]` for a Poisson law of the given mean, evaluated in log space.
pub fn poisson_pmf(n: u64, mean: f64) -> Result<Probability> {
    if !mean.is_finite() || mean < 0.0 {
        return Err(param("mean", format!("Poisson mean must be finite and >= 0, got {mean}")));
    }
    if mean == 0.0 {
        return Ok(if n == 0 { Probability::ONE } else { Probability::ZERO });
    }
    let ln = n as f64 * mean.ln() - mean - ln_factorial(n);
    Ok(Probability(ln.exp().min(1.0)))
}

/// `Pr[n >= k]` for a Poisson law. Uses the lower series when the mean is
/// small so the result keeps full relative precision (e.g. `1 - a - b - c`
/// for intensities of order 1e-3).
pub fn poisson_tail(k: u64, mean: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if mean <= 0.0 {
        return 0.0;
    }
    if mean < 1.0 {
        // sum_{j >= k} mean^j e^{-mean} / j!
        let mut term = (k as f64 * mean.ln() - mean - ln_factorial(k)).exp();
        let mut sum = 0.0;
        let mut j = k;
        while term > sum * 1e-18 {
            sum += term;
            j += 1;
            term *= mean / j as f64;
        }
        sum
    } else {
        let mut head = 0.0;
        let mut p = (-mean).exp();
        for j in 0..k {
            if j > 0 {
                p *= mean / j as f64;
            }
            head += p;
        }
        (1.0 - head).max(0.0)
    }
}

/// Draws `Binomial(trials, p)`.
pub fn binomial_sample<R: Rng + ?Sized>(trials: u64, p: Probability, rng: &mut R) -> u64 {
    let p = p.value();
    if trials == 0 || p == 0.0 {
        return 0;
    }
    if p == 1.0 {
        return trials;
    }
    Binomial::new(trials, p)
        .expect("p is validated by Probability")
        .sample(rng)
}

/// Number of marked items in a uniform draw of `draws` items from a
/// population of `total` with `marked` marked ones.
pub fn hypergeometric_sample<R: Rng + ?Sized>(total: u64, marked: u64, draws: u64, rng: &mut R) -> u64 {
    debug_assert!(marked <= total && draws <= total);
    if draws == 0 || marked == 0 {
        return 0;
    }
    if draws == total {
        return marked;
    }
    if marked == total {
        return draws;
    }
    Hypergeometric::new(total, marked, draws)
        .expect("arguments checked above")
        .sample(rng)
}

/// Splits `draws` uniformly chosen items among categories with the given
/// sizes (multivariate hypergeometric), by successive conditional draws.
pub fn multivariate_hypergeometric<R: Rng + ?Sized>(sizes: &[u64], draws: u64, rng: &mut R) -> Vec<u64> {
    let mut remaining_total: u64 = sizes.iter().sum();
    assert!(draws <= remaining_total, "cannot draw {draws} from {remaining_total}");
    let mut remaining_draws = draws;
    let mut out = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let x = hypergeometric_sample(remaining_total, size, remaining_draws, rng);
        out.push(x);
        remaining_total -= size;
        remaining_draws -= x;
    }
    out
}

/// Wilson score interval for `successes / trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Two-sided 99.9% normal quantile.
pub const Z_999: f64 = 3.290_526_731_491_926;

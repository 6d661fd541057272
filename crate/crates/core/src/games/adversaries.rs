//! Census-only adversaries for the security game.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::AdversaryDecision;
use crate::numerics::{binomial_sample, multivariate_hypergeometric, Probability, StreamRng};

/// Maps the photon-number census `(c_n)` and the public batch size to `(d_n)`.
pub trait AdversaryStrategy: Send + Sync {
    fn decide(&self, census: &[u64], batch_size: usize, rng: &mut StreamRng) -> AdversaryDecision;
}

/// The adversary library.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "adversary", rename_all = "snake_case")]
pub enum Adversary {
    /// Only multiphoton pulses, highest photon numbers first.
    PnsGreedy,
    /// A fraction `beta` of two-photon pulses, the rest from `n >= 3`.
    Beta { beta: Probability },
    /// Acknowledges as an honest lossy channel would, then trims or pads to `K`.
    HonestMimic { eta: f64 },
}

pub fn adversary_pns_greedy() -> Adversary {
    Adversary::PnsGreedy
}

pub fn adversary_beta(beta: Probability) -> Adversary {
    Adversary::Beta { beta }
}

pub fn adversary_honest_mimic(eta: f64) -> Adversary {
    Adversary::HonestMimic { eta }
}

impl fmt::Display for Adversary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Adversary::PnsGreedy => write!(f, "pns_greedy"),
            Adversary::Beta { beta } => write!(f, "beta({})", beta.value()),
            Adversary::HonestMimic { eta } => write!(f, "honest_mimic({eta})"),
        }
    }
}

/// Takes from `census[n]` for `n` in `levels`, in order, until `need` is met.
fn fill_from(census: &[u64], d: &mut [u64], mut need: u64, levels: impl Iterator<Item = usize>) -> u64 {
    for n in levels {
        if need == 0 {
            break;
        }
        let take = (census[n] - d[n]).min(need);
        d[n] += take;
        need -= take;
    }
    need
}

impl AdversaryStrategy for Adversary {
    fn decide(&self, census: &[u64], batch_size: usize, rng: &mut StreamRng) -> AdversaryDecision {
        let k = batch_size as u64;
        let mut d = vec![0u64; census.len()];
        match *self {
            Adversary::PnsGreedy => {
                fill_from(census, &mut d, k, (2..census.len()).rev());
            }
            Adversary::Beta { beta } => {
                if census.len() > 2 {
                    d[2] = ((beta.value() * census[2] as f64).round() as u64).min(k);
                }
                let need = k - d.iter().sum::<u64>();
                fill_from(census, &mut d, need, (3..census.len()).rev());
            }
            Adversary::HonestMimic { eta } => {
                let survive = |n: usize| Probability::new(1.0 - (1.0 - eta).powi(n as i32)).unwrap_or(Probability::ONE);
                for (n, &c) in census.iter().enumerate() {
                    d[n] = binomial_sample(c, survive(n), rng);
                }
                let total: u64 = d.iter().sum();
                if total > k {
                    d = multivariate_hypergeometric(&d, k, rng);
                } else if total < k {
                    let spare: Vec<u64> = census.iter().zip(&d).enumerate().map(|(n, (c, x))| if n == 0 { 0 } else { c - x }).collect();
                    let extra = multivariate_hypergeometric(&spare, (k - total).min(spare.iter().sum()), rng);
                    d.iter_mut().zip(extra).for_each(|(x, e)| *x += e);
                }
            }
        }
        AdversaryDecision { accept_by_n: d }
    }
}

/// A deterministic strategy given by a closure over `(census, K)`.
pub struct FixedDecision<F> {
    rule: F,
}

impl<F> FixedDecision<F>
where
    F: Fn(&[u64], usize) -> Vec<u64> + Send + Sync,
{
    pub fn new(rule: F) -> Self {
        Self { rule }
    }
}

impl<F> AdversaryStrategy for FixedDecision<F>
where
    F: Fn(&[u64], usize) -> Vec<u64> + Send + Sync,
{
    fn decide(&self, census: &[u64], batch_size: usize, _rng: &mut StreamRng) -> AdversaryDecision {
        AdversaryDecision { accept_by_n: (self.rule)(census, batch_size) }
    }
}

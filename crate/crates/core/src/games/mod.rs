//! The two classical games that protocol correctness and security reduce
//! to, and Monte Carlo drivers for them.
//!
//! The correctness game plays an honest lossy channel and reports whether
//! the protocol would abort. The security game removes the loss, shows an
//! adversary only the photon-number census `(c_n)` and asks it for the
//! acknowledgement profile `(d_n)`; the adversary wins (`Fail`) when the
//! estimator accepts a batch with no vacuum or single-photon pulse.

mod adversaries;
mod montecarlo;

use rand::seq::index;
use serde::{Deserialize, Serialize};

pub use adversaries::{
    adversary_beta, adversary_honest_mimic, adversary_pns_greedy, Adversary, AdversaryStrategy, FixedDecision,
};
pub use montecarlo::{run_trials, summarize, GameSummary, MonteCarlo};

use crate::error::{Error, Result};
use crate::estimation::{count_by_class, statistic_t, AcceptedCounts, Coefficients, Estimator, Verdict, HIGH, LOW};
use crate::numerics::{poisson_sample, RngStream, StreamRng};
use crate::protocol::ProtocolParams;

/// Photon-number census of one batch.
///
/// Only `counts_by_n` is shown to adversaries; the per-intensity split and
/// the member lists stay with the game.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhotonCensus {
    /// `c_n`, indexed by `n`.
    pub counts_by_n: Vec<u64>,
    /// `C_n`: low-intensity pulses with `n` photons.
    pub low_by_n: Vec<u64>,
    /// `C'_n`.
    pub high_by_n: Vec<u64>,
    /// `J_n`: original indices of the `n`-photon pulses.
    members: Vec<Vec<usize>>,
}

impl PhotonCensus {
    pub fn from_photons(photons: &[u64], classes: &[usize]) -> Self {
        let max_n = photons.iter().copied().max().unwrap_or(0) as usize;
        let mut census = PhotonCensus {
            counts_by_n: vec![0; max_n + 1],
            low_by_n: vec![0; max_n + 1],
            high_by_n: vec![0; max_n + 1],
            members: vec![Vec::new(); max_n + 1],
        };
        for (i, (&n, &class)) in photons.iter().zip(classes).enumerate() {
            let n = n as usize;
            census.counts_by_n[n] += 1;
            if class == LOW {
                census.low_by_n[n] += 1;
            } else {
                census.high_by_n[n] += 1;
            }
            census.members[n].push(i);
        }
        census
    }

    pub fn c(&self, n: usize) -> u64 {
        self.counts_by_n.get(n).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts_by_n.iter().sum()
    }

    pub fn members(&self, n: usize) -> &[usize] {
        self.members.get(n).map_or(&[], Vec::as_slice)
    }
}

/// `d_n`, the number of acknowledged `n`-photon pulses.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryDecision {
    pub accept_by_n: Vec<u64>,
}

impl AdversaryDecision {
    pub fn d(&self, n: usize) -> u64 {
        self.accept_by_n.get(n).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.accept_by_n.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameVerdict {
    /// Correctness game: the protocol completes.
    Accept,
    /// Correctness game: too few detections or the estimator aborts.
    Abort,
    /// Security game: the adversary passed with multiphoton pulses only.
    Fail,
    Success,
}

/// Realized quantities behind a verdict.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `|I~|`, pulses with at least one photon (correctness game).
    pub detected: u64,
    #[serde(rename = "P")]
    pub p: u64,
    #[serde(rename = "P_prime")]
    pub p_prime: u64,
    /// `T`, when the estimator ran.
    #[serde(rename = "T")]
    pub t_stat: Option<f64>,
    pub estimation: Option<Verdict>,
    /// `C_n` and `C'_n`.
    pub census_low: Vec<u64>,
    pub census_high: Vec<u64>,
    /// `D_n` and `D'_n`.
    pub accepted_low: Vec<u64>,
    pub accepted_high: Vec<u64>,
    /// The adversary's `(d_n)` did not sum to `K`.
    pub nonconforming: bool,
}

fn tail_sum(v: &[u64], from: usize) -> u64 {
    v.iter().skip(from).sum()
}

impl Diagnostics {
    /// `C_{>=n} + C'_{>=n}`.
    pub fn c_at_least(&self, n: usize) -> u64 {
        tail_sum(&self.census_low, n) + tail_sum(&self.census_high, n)
    }

    /// `D_{>=n}` and `D'_{>=n}`.
    pub fn d_at_least(&self, n: usize) -> (u64, u64) {
        (tail_sum(&self.accepted_low, n), tail_sum(&self.accepted_high, n))
    }

    fn low_photon_acks(&self) -> u64 {
        self.accepted_low.iter().take(2).sum::<u64>()
            + self.accepted_high.iter().take(2).sum::<u64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameOutcome {
    pub verdict: GameVerdict,
    pub diagnostics: Diagnostics,
}

impl GameOutcome {
    /// Recomputes the verdict from the diagnostics alone.
    pub fn recomputed_verdict(&self, coeffs: &Coefficients, threshold: f64) -> GameVerdict {
        let d = &self.diagnostics;
        let accepts = || statistic_t(AcceptedCounts { low: d.p, high: d.p_prime }, coeffs) >= threshold;
        match self.verdict {
            GameVerdict::Accept | GameVerdict::Abort => {
                if d.estimation.is_some() && accepts() {
                    GameVerdict::Accept
                } else {
                    GameVerdict::Abort
                }
            }
            GameVerdict::Fail | GameVerdict::Success => {
                if !d.nonconforming && d.low_photon_acks() == 0 && accepts() {
                    GameVerdict::Fail
                } else {
                    GameVerdict::Success
                }
            }
        }
    }
}

fn sample_photons(params: &ProtocolParams, eta: f64, rng: &mut StreamRng) -> Result<Vec<u64>> {
    (0..params.n_pulses).map(|i| poisson_sample(params.intensity(i) * eta, rng)).collect()
}

/// Tallies accepted pulses by photon number and class.
fn split_by_class(accepted: &[usize], photons: &[u64], classes: &[usize], width: usize) -> (Vec<u64>, Vec<u64>) {
    let mut low = vec![0; width];
    let mut high = vec![0; width];
    for &i in accepted {
        let n = photons[i] as usize;
        if classes[i] == HIGH {
            high[n] += 1;
        } else {
            low[n] += 1;
        }
    }
    (low, high)
}

fn run_estimator(
    estimator: &dyn Estimator,
    accepted: &[usize],
    params: &ProtocolParams,
    diag: &mut Diagnostics,
) -> Result<Verdict> {
    let verdict = estimator.estimate(accepted, &params.classes)?;
    if params.is_two_intensity() {
        let counts = count_by_class(accepted, &params.classes, 2)?;
        diag.p = counts[LOW];
        diag.p_prime = counts[HIGH];
        diag.t_stat = Some(statistic_t(AcceptedCounts { low: diag.p, high: diag.p_prime }, &params.coefficients()?));
    }
    diag.estimation = Some(verdict);
    Ok(verdict)
}

/// Correctness game: honest lossy channel, uniform `K`-subset of the
/// non-empty pulses, then the estimator.
pub fn game_cor(params: &ProtocolParams, estimator: &dyn Estimator, stream: RngStream) -> Result<GameOutcome> {
    let mut rng = stream.rng();
    let photons = sample_photons(params, params.eta, &mut rng)?;
    let census = PhotonCensus::from_photons(&photons, &params.classes);
    let nonempty: Vec<usize> = (0..params.n_pulses).filter(|&i| photons[i] > 0).collect();
    let mut diag = Diagnostics {
        detected: nonempty.len() as u64,
        census_low: census.low_by_n.clone(),
        census_high: census.high_by_n.clone(),
        ..Diagnostics::default()
    };
    if nonempty.len() < params.batch_size {
        return Ok(GameOutcome { verdict: GameVerdict::Abort, diagnostics: diag });
    }
    let accepted: Vec<usize> = index::sample(&mut rng, nonempty.len(), params.batch_size)
        .into_iter()
        .map(|j| nonempty[j])
        .collect();
    (diag.accepted_low, diag.accepted_high) =
        split_by_class(&accepted, &photons, &params.classes, census.counts_by_n.len());
    let verdict = match run_estimator(estimator, &accepted, params, &mut diag)? {
        Verdict::Accept => GameVerdict::Accept,
        Verdict::Abort => GameVerdict::Abort,
    };
    Ok(GameOutcome { verdict, diagnostics: diag })
}

/// Security game: loss removed, adversary sees `(c_n)` and answers `(d_n)`;
/// `d_n` uniformly chosen `n`-photon pulses are acknowledged.
pub fn game_sim(
    params: &ProtocolParams,
    estimator: &dyn Estimator,
    adversary: &dyn AdversaryStrategy,
    stream: RngStream,
) -> Result<GameOutcome> {
    let mut game_rng = stream.substream(0).rng();
    let mut adversary_rng = stream.substream(1).rng();
    let photons = sample_photons(params, 1.0, &mut game_rng)?;
    let census = PhotonCensus::from_photons(&photons, &params.classes);
    let decision = adversary.decide(&census.counts_by_n, params.batch_size, &mut adversary_rng);
    let mut diag = Diagnostics {
        detected: census.total() - census.c(0),
        census_low: census.low_by_n.clone(),
        census_high: census.high_by_n.clone(),
        ..Diagnostics::default()
    };
    for (n, &d) in decision.accept_by_n.iter().enumerate() {
        if d > census.c(n) {
            return Err(Error::AdversaryContract(format!("d_{n} = {d} exceeds c_{n} = {}", census.c(n))));
        }
    }
    if decision.total() != params.batch_size as u64 {
        diag.nonconforming = true;
        return Ok(GameOutcome { verdict: GameVerdict::Success, diagnostics: diag });
    }
    let mut accepted = Vec::with_capacity(params.batch_size);
    for (n, &d) in decision.accept_by_n.iter().enumerate() {
        let pool = census.members(n);
        accepted.extend(index::sample(&mut game_rng, pool.len(), d as usize).into_iter().map(|j| pool[j]));
    }
    (diag.accepted_low, diag.accepted_high) =
        split_by_class(&accepted, &photons, &params.classes, census.counts_by_n.len());
    let passed = run_estimator(estimator, &accepted, params, &mut diag)? == Verdict::Accept;
    let verdict = if passed && decision.d(0) == 0 && decision.d(1) == 0 { GameVerdict::Fail } else { GameVerdict::Success };
    Ok(GameOutcome { verdict, diagnostics: diag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::TwoIntensityEstimator;

    fn setup(nu: f64, nup: f64, eta: f64, n: usize, k: usize, delta0: f64) -> (ProtocolParams, TwoIntensityEstimator) {
        let p = ProtocolParams::two_intensity(nu, nup, eta, n, k).unwrap();
        let est = TwoIntensityEstimator::new(p.coefficients().unwrap(), eta, n as u64, delta0).unwrap();
        (p, est)
    }

    #[test]
    fn census_invariants() {
        let photons = [0, 2, 1, 2, 3, 0];
        let classes = [0, 0, 0, 1, 1, 1];
        let c = PhotonCensus::from_photons(&photons, &classes);
        assert_eq!(c.counts_by_n, vec![2, 1, 2, 1]);
        assert_eq!(c.low_by_n, vec![1, 1, 1, 0]);
        assert_eq!(c.high_by_n, vec![1, 0, 1, 1]);
        assert_eq!(c.total(), 6);
        assert_eq!(c.members(2), &[1, 3]);
        assert!(c.members(9).is_empty());
    }

    #[test]
    fn dark_pulses_abort() {
        let p = ProtocolParams::new(1, 0.5, vec![0.0, 0.0], vec![0, 0, 1, 1]).unwrap();
        let est = TwoIntensityEstimator::new(Coefficients::new(0.1, 0.2).unwrap(), 0.5, 4, 0.1).unwrap();
        for s in 0..50 {
            let out = game_cor(&p, &est, RngStream::new(s, 0)).unwrap();
            assert_eq!(out.verdict, GameVerdict::Abort);
            assert_eq!(out.diagnostics.estimation, None);
        }
    }

    #[test]
    fn empty_batch_compares_zero_with_threshold() {
        for delta0 in [0.1, 1.0] {
            let (p, est) = setup(0.5, 1.0, 0.5, 100, 0, delta0);
            let expect = if est.threshold() <= 0.0 { GameVerdict::Accept } else { GameVerdict::Abort };
            for s in 0..20 {
                let out = game_cor(&p, &est, RngStream::new(s, 0)).unwrap();
                assert_eq!(out.verdict, expect);
                assert_eq!(out.diagnostics.t_stat, Some(0.0));
            }
        }
    }

    #[test]
    fn cor_diagnostics_recompute() {
        let (p, est) = setup(0.5, 1.0, 0.7, 400, 100, 0.05);
        let k = p.coefficients().unwrap();
        for s in 0..200 {
            let out = game_cor(&p, &est, RngStream::new(s, 1)).unwrap();
            assert_eq!(out.recomputed_verdict(&k, est.threshold()), out.verdict);
            let d = &out.diagnostics;
            if d.estimation.is_some() {
                assert_eq!(d.p + d.p_prime, 100);
                assert_eq!(d.accepted_low[0] + d.accepted_high[0], 0);
                assert_eq!(d.accepted_low.iter().sum::<u64>(), d.p);
            }
            assert_eq!(d.census_low.iter().sum::<u64>(), 200);
        }
    }

    #[test]
    fn single_photon_adversary_never_wins() {
        let (p, est) = setup(0.5, 1.0, 1.0, 400, 50, 10.0);
        let adv = FixedDecision::new(|census: &[u64], k: usize| {
            let mut d = vec![0; census.len()];
            if census.len() > 1 {
                d[1] = (k as u64).min(census[1]);
            }
            d
        });
        for s in 0..100 {
            let out = game_sim(&p, &est, &adv, RngStream::new(s, 0)).unwrap();
            assert_eq!(out.verdict, GameVerdict::Success);
        }
    }

    #[test]
    fn empty_decision_is_nonconforming() {
        let (p, est) = setup(0.5, 1.0, 1.0, 100, 10, 10.0);
        let adv = FixedDecision::new(|census: &[u64], _| vec![0; census.len()]);
        let out = game_sim(&p, &est, &adv, RngStream::new(3, 0)).unwrap();
        assert_eq!(out.verdict, GameVerdict::Success);
        assert!(out.diagnostics.nonconforming);
    }

    #[test]
    fn overdrawn_decision_is_contract_error() {
        let (p, est) = setup(0.5, 1.0, 1.0, 100, 10, 10.0);
        let adv = FixedDecision::new(|census: &[u64], _| {
            let mut d = census.to_vec();
            d[0] += 1;
            d
        });
        let err = game_sim(&p, &est, &adv, RngStream::new(3, 0)).unwrap_err();
        assert!(matches!(err, Error::AdversaryContract(_)));
    }

    #[test]
    fn pns_wins_against_lax_estimator() {
        // Delta0 so large that any batch is accepted
        let (p, est) = setup(1.0, 2.0, 0.5, 400, 40, 100.0);
        let adv = adversary_pns_greedy();
        let k = p.coefficients().unwrap();
        for s in 0..50 {
            let out = game_sim(&p, &est, &adv, RngStream::new(s, 0)).unwrap();
            assert_eq!(out.verdict, GameVerdict::Fail);
            assert_eq!(out.recomputed_verdict(&k, est.threshold()), GameVerdict::Fail);
            let d = &out.diagnostics;
            assert_eq!(d.accepted_low[..2].iter().chain(&d.accepted_high[..2]).sum::<u64>(), 0);
            assert_eq!(d.p + d.p_prime, 40);
        }
    }

    #[test]
    fn game_is_seed_deterministic() {
        let (p, est) = setup(0.3, 0.9, 0.5, 200, 30, 0.05);
        let adv = adversary_beta(crate::numerics::Probability::new(0.5).unwrap());
        for s in 0..10 {
            let a = game_sim(&p, &est, &adv, RngStream::new(s, 7)).unwrap();
            let b = game_sim(&p, &est, &adv, RngStream::new(s, 7)).unwrap();
            assert_eq!(a, b);
        }
    }
}

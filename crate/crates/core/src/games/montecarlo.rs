//! Seeded parallel trial driver.
//!
//! Trial `i` always draws from `RngStream::new(seed, i)`, and results are
//! collected in trial order, so output is independent of the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GameOutcome, GameVerdict};
use crate::error::{param, Result};
use crate::estimation::Verdict;
use crate::numerics::{wilson_interval, RngStream, Z_999};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub trials: u64,
    pub seed: u64,
    /// Worker count; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl MonteCarlo {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self { trials, seed, threads: None }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }
}

/// Runs `trial` once per index and returns the results in index order.
pub fn run_trials<T, F>(mc: &MonteCarlo, trial: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(RngStream) -> Result<T> + Sync + Send,
{
    let work = || (0..mc.trials).into_par_iter().map(|i| trial(RngStream::new(mc.seed, i))).collect();
    match mc.threads {
        None => work(),
        Some(0) => Err(param("threads", "worker count must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| param("threads", e.to_string()))?
            .install(work),
    }
}

/// Frequency of one verdict with its 99.9% Wilson interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSummary {
    pub event: GameVerdict,
    pub trials: u64,
    pub events: u64,
    pub rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// Trials where the estimator ran and accepted.
    pub estimation_accepts: u64,
    pub nonconforming: u64,
}

impl GameSummary {
    /// Whether an analytic upper bound on the event probability survives
    /// the data at `z` standard deviations.
    pub fn consistent_with_upper_bound(&self, bound: f64, z: f64) -> bool {
        wilson_interval(self.events, self.trials, z).0 <= bound
    }
}

pub fn summarize(outcomes: &[GameOutcome], event: GameVerdict) -> GameSummary {
    let trials = outcomes.len() as u64;
    let events = outcomes.iter().filter(|o| o.verdict == event).count() as u64;
    let (wilson_low, wilson_high) = wilson_interval(events, trials, Z_999);
    GameSummary {
        event,
        trials,
        events,
        rate: if trials == 0 { 0.0 } else { events as f64 / trials as f64 },
        wilson_low,
        wilson_high,
        estimation_accepts: outcomes.iter().filter(|o| o.diagnostics.estimation == Some(Verdict::Accept)).count()
            as u64,
        nonconforming: outcomes.iter().filter(|o| o.diagnostics.nonconforming).count() as u64,
    }
}

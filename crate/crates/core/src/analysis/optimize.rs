//! Minimization of the error budget over intensities and slack parameters.
//!
//! The search runs in an unconstrained coordinate system in which every
//! point with a positive security budget is feasible:
//!
//! ```text
//! x0 = ln nu'
//! x1 = logit(delta / mean_detection)
//! x2 = logit(Delta0 / B)              B = Delta0 + Delta0' + c'/(bc'-b'c) Delta0''
//! x3 = logit(Delta0' / (B - Delta0))
//! x4..x6 = softmax logits splitting Delta0' (bc'-b'c) between its four terms
//! x7 = logit(alpha)                    (free intensities only)
//! ```
//!
//! `B` depends only on the intensities and `eta`, so `Delta0'' > 0` holds by
//! construction whenever `B > 0`. Seeds come from a fixed coarse grid; each of
//! the best seeds is refined by Nelder-Mead with restarts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::neldermead::{nelder_mead, NelderMeadOptions};
use crate::bounds::{epsilon_ac_with, BoundOptions, ErrorBudget, SlackParams};
use crate::error::{param, Result};
use crate::estimation::Coefficients;
use crate::protocol::mean_detection;

/// How the two intensities are searched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum IntensityChoice {
    /// `nu = alpha nu'` with `alpha` fixed.
    Ratio { alpha: f64 },
    /// `alpha` searched as well.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub eta: f64,
    pub n_pulses: u64,
    pub intensities: IntensityChoice,
    /// Number of grid seeds refined locally.
    pub starts: usize,
    /// Evaluation cap per Nelder-Mead run.
    pub max_evals: usize,
    /// Nelder-Mead restarts from the previous optimum.
    pub restarts: usize,
    pub bound: BoundOptions,
}

impl OptimizeConfig {
    pub fn new(eta: f64, n_pulses: u64, alpha: f64) -> Self {
        Self {
            eta,
            n_pulses,
            intensities: IntensityChoice::Ratio { alpha },
            starts: 12,
            max_evals: 4000,
            restarts: 2,
            bound: BoundOptions::default(),
        }
    }

    pub fn free(eta: f64, n_pulses: u64) -> Self {
        Self { intensities: IntensityChoice::Free, ..Self::new(eta, n_pulses, 0.5) }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(param("eta", format!("transmittance must lie in (0, 1], got {}", self.eta)));
        }
        if self.n_pulses < 2 {
            return Err(param("n", format!("need at least 2 pulses, got {}", self.n_pulses)));
        }
        if let IntensityChoice::Ratio { alpha } = self.intensities {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(param("alpha", format!("intensity ratio must lie in (0, 1), got {alpha}")));
            }
        }
        if self.starts == 0 {
            return Err(param("starts", "need at least one local search"));
        }
        Ok(())
    }

    fn dims(&self) -> usize {
        match self.intensities {
            IntensityChoice::Ratio { .. } => 7,
            IntensityChoice::Free => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_slack: SlackParams,
    /// `(nu, nu')`.
    pub best_intensities: (f64, f64),
    pub budget: ErrorBudget,
    pub evaluations: u64,
    /// Local search converged to a constraint-satisfying point with `eps_ac < 1`.
    pub converged: bool,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Decoded search point; `None` when the intensities leave no security budget.
struct Point {
    coeffs: Coefficients,
    slack: SlackParams,
}

/// `Delta0 + Delta0' + c'/(bc'-b'c) Delta0''` at `Delta0'' = 0`: the total
/// margin the estimator and the fluctuation slacks may consume.
pub fn security_budget(coeffs: &Coefficients, eta: f64) -> f64 {
    (coeffs.honest_numerator(eta) - coeffs.c_prime * coeffs.tail3) / coeffs.discriminant
}

fn decode(x: &[f64], cfg: &OptimizeConfig) -> Option<Point> {
    let alpha = match cfg.intensities {
        IntensityChoice::Ratio { alpha } => alpha,
        IntensityChoice::Free => sigmoid(x[7]).clamp(1e-6, 1.0 - 1e-6),
    };
    let nu_prime = x[0].exp();
    let coeffs = Coefficients::new(alpha * nu_prime, nu_prime).ok()?;
    let budget = security_budget(&coeffs, cfg.eta);
    let mean = mean_detection(&coeffs, cfg.eta);
    if !(budget > 0.0 && mean > 0.0 && budget.is_finite()) {
        return None;
    }
    let delta = mean * sigmoid(x[1]);
    let delta0 = budget * sigmoid(x[2]);
    let delta0p = (budget - delta0) * sigmoid(x[3]);
    let logits = [0.0, x[4], x[5], x[6]];
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let share = |i: usize| weights[i] / total * delta0p * coeffs.discriminant;
    let (c, cp) = (coeffs.c, coeffs.c_prime);
    let delta0_small = share(0) / (c * cp);
    let delta0_small_prime = share(1) / (c * cp);
    let gamma0 = share(2) / (cp * (1.0 + delta0_small));
    let gamma0_prime = share(3) / (c * (1.0 + delta0_small_prime));
    let slack = SlackParams { delta, delta0, delta0_small, delta0_small_prime, gamma0, gamma0_prime };
    Some(Point { coeffs, slack })
}

/// Objective in log space; infeasible intensities get a penalty above any
/// feasible value that grows with `nu'` so the simplex walks back.
fn objective(x: &[f64], cfg: &OptimizeConfig) -> f64 {
    match decode(x, cfg) {
        Some(p) => {
            let b = epsilon_ac_with(&p.coeffs, cfg.eta, cfg.n_pulses, &p.slack, cfg.bound);
            if b.eps_ac.ln.is_nan() {
                f64::MAX
            } else {
                b.eps_ac.ln
            }
        }
        None => 10.0 + x[0].exp(),
    }
}

fn seed_grid(cfg: &OptimizeConfig) -> Vec<Vec<f64>> {
    let nu_primes: Vec<f64> = (0..24).map(|i| 1e-3f64.ln() + i as f64 * (3e3f64.ln() / 23.0)).collect();
    let alphas: &[f64] = match cfg.intensities {
        IntensityChoice::Ratio { .. } => &[0.0],
        IntensityChoice::Free => &[-1.4, 0.0, 1.4],
    };
    let mut seeds = Vec::new();
    for &a in alphas {
        for &l in &nu_primes {
            for x1 in [-4.0, -1.5, 1.0, 3.5] {
                for x2 in [-3.0, -1.0, 1.0, 3.0] {
                    for x3 in [-3.0, 0.0, 3.0] {
                        for w in [[0.0, 0.0, 0.0], [0.0, 3.0, 3.0], [0.0, -3.0, -3.0]] {
                            let mut x = vec![l, x1, x2, x3, w[0], w[1], w[2]];
                            if cfg.dims() == 8 {
                                x.push(a);
                            }
                            seeds.push(x);
                        }
                    }
                }
            }
        }
    }
    seeds
}

/// Coarse grid seeding followed by Nelder-Mead refinement. Deterministic.
pub fn optimize(cfg: &OptimizeConfig) -> Result<OptimizationResult> {
    cfg.validate()?;
    let seeds = seed_grid(cfg);
    let scored: Vec<(f64, usize)> =
        seeds.par_iter().enumerate().map(|(i, x)| (objective(x, cfg), i)).collect();
    let mut evaluations = seeds.len() as u64;

    // best seed per nu' value, so starts spread over the intensity axis
    let mut per_level: Vec<(f64, usize)> = Vec::new();
    for &(f, i) in &scored {
        let level = seeds[i][0];
        match per_level.iter_mut().find(|(_, j)| seeds[*j][0] == level) {
            Some(slot) if f < slot.0 => *slot = (f, i),
            Some(_) => {}
            None => per_level.push((f, i)),
        }
    }
    per_level.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let chosen: Vec<usize> = per_level.iter().take(cfg.starts).map(|&(_, i)| i).collect();

    let opts = NelderMeadOptions { max_evals: cfg.max_evals, f_tol: 1e-10, x_tol: 1e-9, step: 0.5 };
    let runs: Vec<_> = chosen
        .par_iter()
        .map(|&i| {
            let mut r = nelder_mead(|x| objective(x, cfg), &seeds[i], &opts);
            let mut evals = r.evaluations;
            for _ in 0..cfg.restarts {
                let next = nelder_mead(|x| objective(x, cfg), &r.x, &opts);
                evals += next.evaluations;
                let improved = next.f < r.f;
                let converged = next.converged;
                if improved {
                    r = next;
                }
                r.converged |= converged;
            }
            (r, evals)
        })
        .collect();
    evaluations += runs.iter().map(|(_, e)| *e as u64).sum::<u64>();
    let (best, _) = runs
        .into_iter()
        .min_by(|a, b| a.0.f.total_cmp(&b.0.f))
        .expect("at least one start");

    match decode(&best.x, cfg) {
        Some(p) => {
            let budget = epsilon_ac_with(&p.coeffs, cfg.eta, cfg.n_pulses, &p.slack, cfg.bound);
            Ok(OptimizationResult {
                best_slack: p.slack,
                best_intensities: (p.coeffs.nu, p.coeffs.nu_prime),
                converged: best.converged && budget.constraints_satisfied && budget.eps_ac.ln < 0.0,
                budget,
                evaluations,
            })
        }
        None => Ok(infeasible_result(cfg, &best.x, evaluations)),
    }
}

/// Report for a search that never left the infeasible region: the budget at
/// the smallest `nu'` seed with all slacks at their seed values.
fn infeasible_result(cfg: &OptimizeConfig, x: &[f64], evaluations: u64) -> OptimizationResult {
    let alpha = match cfg.intensities {
        IntensityChoice::Ratio { alpha } => alpha,
        IntensityChoice::Free => 0.5,
    };
    let nu_prime = x[0].exp().max(1e-12);
    let coeffs = Coefficients::new(alpha * nu_prime, nu_prime).expect("alpha < 1");
    let mean = mean_detection(&coeffs, cfg.eta);
    let slack = SlackParams {
        delta: 0.5 * mean,
        delta0: 1e-3,
        delta0_small: 1e-3,
        delta0_small_prime: 1e-3,
        gamma0: 1e-3,
        gamma0_prime: 1e-3,
    };
    let budget = epsilon_ac_with(&coeffs, cfg.eta, cfg.n_pulses, &slack, cfg.bound);
    OptimizationResult {
        best_slack: slack,
        best_intensities: (coeffs.nu, coeffs.nu_prime),
        budget,
        evaluations,
        converged: false,
    }
}

//! Minimal batch length against transmittance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optimize::{optimize, OptimizeConfig};
use crate::error::{param, Error, Result};

/// Ratio between consecutive candidate batch lengths.
pub const GRID_RATIO: f64 = 1.2;
/// First candidate batch length.
pub const GRID_START: f64 = 100.0;
/// Candidates above this count as infeasible.
pub const GRID_MAX: f64 = 1e14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub eps_target: f64,
    pub alpha: f64,
    /// Local searches per optimizer call.
    pub starts: usize,
}

impl ScalingConfig {
    pub fn new(eps_target: f64, alpha: f64) -> Self {
        Self { eps_target, alpha, starts: 12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub eta: f64,
    pub n_min: u64,
    pub eps_ac: f64,
    pub nu_prime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub grid: Vec<ScalingPoint>,
    /// Slope of `ln N_min` against `ln eta`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Transmittances with no feasible batch length below [`GRID_MAX`].
    pub dropped: Vec<f64>,
}

/// The `k`-th candidate batch length.
pub fn grid_n(k: u32) -> u64 {
    (GRID_START * GRID_RATIO.powi(k as i32)).round() as u64
}

fn meets(eta: f64, k: u32, cfg: &ScalingConfig) -> Result<Option<ScalingPoint>> {
    let n = grid_n(k);
    let mut oc = OptimizeConfig::new(eta, n, cfg.alpha);
    oc.starts = cfg.starts;
    let r = optimize(&oc)?;
    let ok = r.budget.constraints_satisfied && r.budget.eps_ac.value <= cfg.eps_target;
    Ok(ok.then_some(ScalingPoint { eta, n_min: n, eps_ac: r.budget.eps_ac.value, nu_prime: r.best_intensities.1 }))
}

/// Least grid index meeting the target: doubling search on the index, then bisection.
pub fn minimal_n(eta: f64, cfg: &ScalingConfig) -> Result<Option<ScalingPoint>> {
    let k_max = ((GRID_MAX / GRID_START).ln() / GRID_RATIO.ln()).floor() as u32;
    let (mut lo, mut hi) = (0u32, 8u32);
    let mut found = loop {
        if let Some(p) = meets(eta, hi, cfg)? {
            break p;
        }
        if hi >= k_max {
            return Ok(None);
        }
        lo = hi + 1;
        hi = (hi * 2).min(k_max);
    };
    // invariant: index hi meets the target, every index below lo does not
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        match meets(eta, mid, cfg)? {
            Some(p) => {
                hi = mid;
                found = p;
            }
            None => lo = mid + 1,
        }
    }
    Ok(Some(found))
}

/// Ordinary least squares of `y` on `x`: `(slope, intercept, r^2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Infeasible(format!("a line needs at least 2 points, got {}", x.len().min(y.len()))));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Infeasible("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((slope, my - slope * mx, r2))
}

pub fn scaling_sweep(etas: &[f64], cfg: &ScalingConfig) -> Result<ScalingFit> {
    if let Some(&bad) = etas.iter().find(|&&e| !(e > 0.0 && e <= 0.2)) {
        return Err(param("eta", format!("sweep transmittances must lie in (0, 0.2], got {bad}")));
    }
    if !(cfg.eps_target > 0.0 && cfg.eps_target < 1.0) {
        return Err(param("eps_target", format!("must lie in (0, 1), got {}", cfg.eps_target)));
    }
    if etas.len() < 2 {
        return Err(Error::Infeasible(format!("a slope needs at least 2 transmittances, got {}", etas.len())));
    }
    let points: Vec<Option<ScalingPoint>> = etas.par_iter().map(|&e| minimal_n(e, cfg)).collect::<Result<_>>()?;
    let dropped = etas.iter().zip(&points).filter(|(_, p)| p.is_none()).map(|(&e, _)| e).collect();
    let grid: Vec<ScalingPoint> = points.into_iter().flatten().collect();
    let x: Vec<f64> = grid.iter().map(|p| p.eta.ln()).collect();
    let y: Vec<f64> = grid.iter().map(|p| (p.n_min as f64).ln()).collect();
    let (slope, intercept, r_squared) = linear_fit(&x, &y)?;
    Ok(ScalingFit { grid, slope, intercept, r_squared, dropped })
}

//! Maximal secure intensities in the converged-statistics regime.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::numerics::{lambert_w_minus1, one_minus_exp_neg};

const SCAN_LO: f64 = 1e-4;
const SCAN_HI: f64 = 1e3;
const SCAN_POINTS: usize = 1400;
const ROOT_TOL: f64 = 1e-9;

/// Largest single-intensity `nu` for which detections at transmittance
/// `eta0` still outnumber multiphoton pulses:
/// `W_{-1}((eta0 - 1) e^{eta0 - 1}) / (eta0 - 1) - 1`.
pub fn nu_star_dkl(eta0: f64) -> Result<f64> {
    if !(eta0 > 0.0 && eta0 < 1.0) {
        return Err(Error::Domain(format!("eta0 must lie in (0, 1), got {eta0}")));
    }
    let s = eta0 - 1.0;
    let w = lambert_w_minus1(s * s.exp())?;
    Ok(w / s - 1.0)
}

/// `c'(1 - e^{-eta0 nu}) - c(1 - e^{-eta0 nu'}) - c'(1 - a - b - c)` with `nu = alpha nu'`.
///
/// Positive while the honest statistic cannot be faked with three-or-more
/// photon pulses alone.
pub fn glmo_margin(nu_prime: f64, eta0: f64, alpha: f64) -> f64 {
    let nu = alpha * nu_prime;
    let c = nu * nu * (-nu).exp() / 2.0;
    let c_prime = nu_prime * nu_prime * (-nu_prime).exp() / 2.0;
    let tail3 = crate::numerics::poisson_tail(3, nu);
    c_prime * one_minus_exp_neg(eta0 * nu) - c * one_minus_exp_neg(eta0 * nu_prime) - c_prime * tail3
}

/// Root of [`glmo_margin`] in `nu'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlmoRoot {
    pub nu_prime: f64,
    /// Sign changes seen on the scan grid; more than one means the smallest was taken.
    pub sign_changes: usize,
}

pub fn nu_star_glmo(eta0: f64, alpha: f64) -> Result<f64> {
    nu_star_glmo_detailed(eta0, alpha).map(|r| r.nu_prime)
}

/// Smallest sign change of the margin on a log grid over `[1e-4, 1e3]`,
/// refined by bisection.
pub fn nu_star_glmo_detailed(eta0: f64, alpha: f64) -> Result<GlmoRoot> {
    if !(eta0 > 0.0 && eta0 < 1.0) {
        return Err(Error::Domain(format!("eta0 must lie in (0, 1), got {eta0}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(param("alpha", format!("intensity ratio must lie in (0, 1), got {alpha}")));
    }
    let step = (SCAN_HI / SCAN_LO).ln() / (SCAN_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..SCAN_POINTS).map(|i| SCAN_LO * (step * i as f64).exp()).collect();
    let signs: Vec<bool> = grid.iter().map(|&x| glmo_margin(x, eta0, alpha) > 0.0).collect();
    let changes: Vec<usize> = (1..SCAN_POINTS).filter(|&i| signs[i] != signs[i - 1]).collect();
    let Some(&first) = changes.first() else {
        return Err(Error::NoRoot(format!(
            "margin keeps one sign on nu' in [{SCAN_LO:e}, {SCAN_HI:e}] (eta0 = {eta0}, alpha = {alpha})"
        )));
    };
    let (mut lo, mut hi) = (grid[first - 1], grid[first]);
    let lo_positive = signs[first - 1];
    while hi - lo > ROOT_TOL * lo.max(1e-3) {
        let mid = 0.5 * (lo + hi);
        if (glmo_margin(mid, eta0, alpha) > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(GlmoRoot { nu_prime: 0.5 * (lo + hi), sign_changes: changes.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Winner {
    Glmo,
    Dkl,
}

impl std::fmt::Display for Winner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Winner::Glmo => "GLMO",
            Winner::Dkl => "DKL",
        })
    }
}

/// Both maximal intensities at one `(eta0, alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuStarPoint {
    pub eta0: f64,
    pub alpha: f64,
    pub nu_star_glmo: f64,
    pub nu_star_dkl: f64,
    pub winner: Winner,
    pub multiple_roots: bool,
}

impl NuStarPoint {
    pub fn compute(eta0: f64, alpha: f64) -> Result<Self> {
        let glmo = nu_star_glmo_detailed(eta0, alpha)?;
        let dkl = nu_star_dkl(eta0)?;
        Ok(Self {
            eta0,
            alpha,
            nu_star_glmo: glmo.nu_prime,
            nu_star_dkl: dkl,
            winner: if glmo.nu_prime > dkl { Winner::Glmo } else { Winner::Dkl },
            multiple_roots: glmo.sign_changes > 1,
        })
    }
}

/// Small-`nu'` expansion of the GLMO root, used as a consistency check:
/// the margin is `~ eta0 alpha (1 - alpha) nu'^3 / 2 - alpha^3 nu'^5 / 12`.
pub fn glmo_small_root(eta0: f64, alpha: f64) -> f64 {
    (6.0 * eta0 * (1.0 - alpha) / (alpha * alpha)).sqrt()
}

//! Tables of maximal intensities over transmittance and intensity ratio.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nustar::{nu_star_dkl, nu_star_glmo_detailed, Winner};

pub const FIG_POINTS: usize = 100;
/// Ratio held fixed in the transmittance cut.
pub const CUT_ALPHA: f64 = 0.5;
/// Transmittance held fixed in the ratio cut.
pub const CUT_ETA0: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Figure {
    FigEta,
    FigAlpha,
    Density,
}

impl std::str::FromStr for Figure {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fig_eta" => Ok(Figure::FigEta),
            "fig_alpha" => Ok(Figure::FigAlpha),
            "density" => Ok(Figure::Density),
            other => Err(format!("unknown figure `{other}` (expected fig_eta, fig_alpha or density)")),
        }
    }
}

/// One table cell. `None` fields mark cells where a root was not found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub eta0: f64,
    pub alpha: f64,
    pub nu_star_glmo: Option<f64>,
    pub nu_star_dkl: Option<f64>,
    pub winner: Option<Winner>,
    pub multiple_roots: bool,
}

/// Log-spaced transmittances from `1e-3`; index 77 is exactly 0.2.
pub fn eta0_grid() -> Vec<f64> {
    let step = (CUT_ETA0 / 1e-3).log10() / 77.0;
    (0..FIG_POINTS).map(|k| if k == 77 { CUT_ETA0 } else { 1e-3 * 10f64.powf(step * k as f64) }).collect()
}

/// Ratios `0.01 + 0.0098 k`; index 50 is exactly 0.5.
pub fn alpha_grid() -> Vec<f64> {
    (0..FIG_POINTS).map(|k| if k == 50 { CUT_ALPHA } else { 0.01 + 0.0098 * k as f64 }).collect()
}

pub fn cell(eta0: f64, alpha: f64) -> FigureRow {
    let glmo = nu_star_glmo_detailed(eta0, alpha).ok();
    let dkl = nu_star_dkl(eta0).ok();
    let winner = match (glmo, dkl) {
        (Some(g), Some(d)) => Some(if g.nu_prime > d { Winner::Glmo } else { Winner::Dkl }),
        _ => None,
    };
    FigureRow {
        eta0,
        alpha,
        nu_star_glmo: glmo.map(|g| g.nu_prime),
        nu_star_dkl: dkl,
        winner,
        multiple_roots: glmo.is_some_and(|g| g.sign_changes > 1),
    }
}

pub fn figure_data(which: Figure) -> Vec<FigureRow> {
    let cells: Vec<(f64, f64)> = match which {
        Figure::FigEta => eta0_grid().into_iter().map(|e| (e, CUT_ALPHA)).collect(),
        Figure::FigAlpha => alpha_grid().into_iter().map(|a| (CUT_ETA0, a)).collect(),
        Figure::Density => {
            let etas = eta0_grid();
            alpha_grid().into_iter().flat_map(|a| etas.iter().map(move |&e| (e, a))).collect()
        }
    };
    cells.par_iter().map(|&(e, a)| cell(e, a)).collect()
}

/// Number of winner changes along a table, ignoring unmarked cells.
pub fn winner_flips(rows: &[FigureRow]) -> usize {
    let winners: Vec<Winner> = rows.iter().filter_map(|r| r.winner).collect();
    winners.windows(2).filter(|w| w[0] != w[1]).count()
}

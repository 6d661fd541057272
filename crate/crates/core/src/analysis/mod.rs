//! Parameter optimization, batch-length scaling and maximal-intensity tables.

pub mod figures;
mod neldermead;
pub mod nustar;
pub mod optimize;
pub mod scaling;

pub use figures::{figure_data, Figure, FigureRow};
pub use neldermead::{nelder_mead, NelderMeadOptions, NelderMeadResult};
pub use nustar::{nu_star_dkl, nu_star_glmo, NuStarPoint, Winner};
pub use optimize::{optimize, IntensityChoice, OptimizationResult, OptimizeConfig};
pub use scaling::{scaling_sweep, ScalingConfig, ScalingFit, ScalingPoint};

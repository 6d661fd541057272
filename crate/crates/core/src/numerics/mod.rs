//! Photon-count distributions, special functions and the random-stream
//! contract shared by every stochastic module.

mod dist;
mod lambert;
mod logvalue;
mod rng;

pub use dist::{
    binomial_sample, hypergeometric_sample, ln_factorial, multivariate_hypergeometric,
    poisson_pmf, poisson_sample, poisson_tail, wilson_interval, Probability, Z_999,
};
pub use lambert::lambert_w_minus1;
pub use logvalue::{ln_add_exp, LogValue};
pub use rng::{RngStream, StreamRng};

/// `1 - e^{-x}` without cancellation for small `x`.
pub fn one_minus_exp_neg(x: f64) -> f64 {
    -(-x).exp_m1()
}

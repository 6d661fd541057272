//! Closed-form finite-size error budget for the two-intensity protocol.
//!
//! Every epsilon is a [`LogValue`], so budgets far below `1e-308` stay
//! comparable. Values are not clipped at 1; a value above 1 simply means
//! the bound is vacuous at that point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::Coefficients;
use crate::numerics::{poisson_tail, LogValue};
use crate::protocol::mean_detection;

/// Free slack parameters of the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlackParams {
    /// Shortfall of `K/N` below the honest mean detection rate.
    pub delta: f64,
    /// Acceptance margin of the estimator.
    #[serde(rename = "Delta0")]
    pub delta0: f64,
    #[serde(rename = "delta0")]
    pub delta0_small: f64,
    #[serde(rename = "delta0p")]
    pub delta0_small_prime: f64,
    pub gamma0: f64,
    #[serde(rename = "gamma0p")]
    pub gamma0_prime: f64,
}

impl SlackParams {
    /// Checks the sign and range constraints, naming the first one violated.
    pub fn validate(&self, coeffs: &Coefficients, eta: f64) -> Result<()> {
        let positive = [
            ("delta > 0", self.delta),
            ("Delta0 > 0", self.delta0),
            ("delta0 > 0", self.delta0_small),
            ("delta0p > 0", self.delta0_small_prime),
            ("gamma0 > 0", self.gamma0),
            ("gamma0p > 0", self.gamma0_prime),
        ];
        for (constraint, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Constraint { constraint, value });
            }
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Constraint { constraint: "0 < eta <= 1", value: eta });
        }
        if self.delta >= mean_detection(coeffs, eta) {
            return Err(Error::Constraint { constraint: "delta < (2 - a^eta - a'^eta)/2", value: self.delta });
        }
        Ok(())
    }
}

/// Which constant multiplies the domain term `M` in the security bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub domain_factor: f64,
}

impl BoundOptions {
    /// Union over the four deviation events counted explicitly.
    pub const UNION: BoundOptions = BoundOptions { domain_factor: 32.0 };
    /// The assembled formula read literally, without the union factor.
    pub const LITERAL: BoundOptions = BoundOptions { domain_factor: 1.0 };
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self::UNION
    }
}

/// `2 e^{-delta^2 N} + 2 e^{-Delta0^2 (bc'-b'c)^2 / (4 C^2) N}`.
pub fn correctness_bound(coeffs: &Coefficients, eta: f64, n_pulses: u64, slack: &SlackParams) -> Result<LogValue> {
    slack.validate(coeffs, eta)?;
    let n = n_pulses as f64;
    let ratio = slack.delta0 * coeffs.discriminant / (2.0 * coeffs.c_max());
    let hoeffding_k = LogValue::scaled_exp(2.0, -slack.delta * slack.delta * n);
    let hoeffding_t = LogValue::scaled_exp(2.0, -ratio * ratio * n);
    Ok(hoeffding_k.add(hoeffding_t))
}

/// `Delta0' = [c c'(delta0 + delta0') + c' gamma0 (1 + delta0) + c gamma0' (1 + delta0')] / (bc' - b'c)`.
pub fn delta_prime(coeffs: &Coefficients, slack: &SlackParams) -> f64 {
    let (c, cp) = (coeffs.c, coeffs.c_prime);
    (c * cp * (slack.delta0_small + slack.delta0_small_prime)
        + cp * slack.gamma0 * (1.0 + slack.delta0_small)
        + c * slack.gamma0_prime * (1.0 + slack.delta0_small_prime))
        / coeffs.discriminant
}

/// `Delta0'' = [c'(1 - a^eta) - c(1 - a'^eta) - (Delta0 + Delta0')(bc' - b'c)] / c' - (1 - a - b - c)`.
///
/// A nonpositive result means no valid security bound exists.
pub fn delta_double_prime(coeffs: &Coefficients, eta: f64, delta0: f64, delta_prime_val: f64) -> f64 {
    (coeffs.honest_numerator(eta) - (delta0 + delta_prime_val) * coeffs.discriminant) / coeffs.c_prime - coeffs.tail3
}

/// Half the expected excess of multiphoton pulses over `K`, minus `delta`.
pub fn gamma(coeffs: &Coefficients, eta: f64, delta: f64) -> f64 {
    // a + b - a^eta = (1 - a^eta) - (1 - a - b)
    let low = coeffs.detect(eta) - poisson_tail(2, coeffs.nu);
    let high = coeffs.detect_prime(eta) - poisson_tail(2, coeffs.nu_prime);
    (low + high) / 2.0 - delta
}

/// Intermediate terms of the security bound.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SecurityTerms {
    delta0p: f64,
    delta0pp: f64,
    gamma: f64,
    m: LogValue,
    p_ik: LogValue,
    value: LogValue,
}

fn security_terms(coeffs: &Coefficients, eta: f64, n_pulses: u64, slack: &SlackParams, opts: BoundOptions) -> SecurityTerms {
    let n = n_pulses as f64;
    let delta0p = delta_prime(coeffs, slack);
    let delta0pp = delta_double_prime(coeffs, eta, slack.delta0, delta0p);
    let gamma = gamma(coeffs, eta, slack.delta);
    let (g0, g0p) = (slack.gamma0, slack.gamma0_prime);
    let (d0, d0p) = (slack.delta0_small, slack.delta0_small_prime);
    let m = [
        -g0 * g0 * n,
        -d0 * d0 * (coeffs.c - g0) * n,
        -g0p * g0p * n,
        -d0p * d0p * (coeffs.c_prime - g0p) * n,
    ]
    .into_iter()
    .map(LogValue::from_ln)
    .fold(LogValue::from_value(0.0), LogValue::max);
    let p_ik = if gamma > 0.0 { LogValue::scaled_exp(2.0, -gamma * gamma * n) } else { LogValue::ONE };
    let value = if delta0pp > 0.0 && slack.validate(coeffs, eta).is_ok() {
        let domain = LogValue::scaled_exp(opts.domain_factor, m.ln);
        p_ik.mul(domain.add(LogValue::from_ln(-delta0pp * delta0pp * n)))
    } else {
        LogValue::ONE
    };
    SecurityTerms { delta0p, delta0pp, gamma, m, p_ik, value }
}

/// `P_{|I|,K} (32 M + e^{-Delta0''^2 N})`, or 1 when the constraints fail.
pub fn security_bound(coeffs: &Coefficients, eta: f64, n_pulses: u64, slack: &SlackParams) -> LogValue {
    security_bound_with(coeffs, eta, n_pulses, slack, BoundOptions::default())
}

pub fn security_bound_with(
    coeffs: &Coefficients,
    eta: f64,
    n_pulses: u64,
    slack: &SlackParams,
    opts: BoundOptions,
) -> LogValue {
    security_terms(coeffs, eta, n_pulses, slack, opts).value
}

/// The assembled budget with every intermediate quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub nu: f64,
    pub nu_prime: f64,
    pub eta: f64,
    #[serde(rename = "N")]
    pub n_pulses: u64,
    #[serde(rename = "K")]
    pub batch_size: i64,
    #[serde(flatten)]
    pub slack: SlackParams,
    pub eps_corr: LogValue,
    pub eps_sec: LogValue,
    pub eps_ac: LogValue,
    #[serde(rename = "Delta0p")]
    pub delta0p: f64,
    #[serde(rename = "Delta0pp")]
    pub delta0pp: f64,
    #[serde(rename = "Gamma")]
    pub gamma: f64,
    #[serde(rename = "C")]
    pub c_max: f64,
    #[serde(rename = "M")]
    pub m: LogValue,
    #[serde(rename = "P_IK")]
    pub p_ik: LogValue,
    pub domain_factor: f64,
    pub constraints_satisfied: bool,
    /// Whether `P_{|I|,K}` took its exponential branch.
    pub pik_branch: bool,
    /// First violated constraint, if any.
    pub violated: Option<String>,
}

pub fn epsilon_ac(coeffs: &Coefficients, eta: f64, n_pulses: u64, slack: &SlackParams) -> ErrorBudget {
    epsilon_ac_with(coeffs, eta, n_pulses, slack, BoundOptions::default())
}

pub fn epsilon_ac_with(
    coeffs: &Coefficients,
    eta: f64,
    n_pulses: u64,
    slack: &SlackParams,
    opts: BoundOptions,
) -> ErrorBudget {
    let terms = security_terms(coeffs, eta, n_pulses, slack, opts);
    let mut violated = slack.validate(coeffs, eta).err().map(|e| e.to_string());
    if violated.is_none() && terms.delta0pp <= 0.0 {
        violated = Some(Error::Constraint { constraint: "Delta0'' > 0", value: terms.delta0pp }.to_string());
    }
    let eps_corr = correctness_bound(coeffs, eta, n_pulses, slack).unwrap_or(LogValue::ONE);
    let eps_sec = terms.value;
    let k = ((mean_detection(coeffs, eta) - slack.delta) * n_pulses as f64).floor();
    ErrorBudget {
        nu: coeffs.nu,
        nu_prime: coeffs.nu_prime,
        eta,
        n_pulses,
        batch_size: k as i64,
        slack: *slack,
        eps_corr,
        eps_sec,
        eps_ac: eps_corr.add(eps_sec),
        delta0p: terms.delta0p,
        delta0pp: terms.delta0pp,
        gamma: terms.gamma,
        c_max: coeffs.c_max(),
        m: terms.m,
        p_ik: terms.p_ik,
        domain_factor: opts.domain_factor,
        constraints_satisfied: violated.is_none(),
        pik_branch: terms.gamma > 0.0,
        violated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn slack(delta: f64, delta0: f64, small: f64) -> SlackParams {
        SlackParams {
            delta,
            delta0,
            delta0_small: small,
            delta0_small_prime: small,
            gamma0: small,
            gamma0_prime: small,
        }
    }

    /// Second, independent evaluation of the whole budget straight from the
    /// textbook expressions (powers instead of expm1, explicit sums).
    fn oracle_eps(nu: f64, nup: f64, eta: f64, n: f64, s: &SlackParams) -> (f64, f64) {
        let (a, ap) = ((-nu).exp(), (-nup).exp());
        let (b, bp) = (nu * a, nup * ap);
        let (c, cp) = (nu * nu * a / 2.0, nup * nup * ap / 2.0);
        let (aeta, apeta) = (a.powf(eta), ap.powf(eta));
        let disc = b * cp - bp * c;
        let cmax = c.max(cp);
        let corr = 2.0 * (-s.delta * s.delta * n).exp()
            + 2.0 * (-(s.delta0 * s.delta0) * disc * disc / (4.0 * cmax * cmax) * n).exp();
        let dp = (c * cp * (s.delta0_small + s.delta0_small_prime)
            + cp * s.gamma0 * (1.0 + s.delta0_small)
            + c * s.gamma0_prime * (1.0 + s.delta0_small_prime))
            / disc;
        let dpp = (cp * (1.0 - aeta) - c * (1.0 - apeta) - (s.delta0 + dp) * disc) / cp - (1.0 - a - b - c);
        let big_gamma = (a + b + ap + bp - aeta - apeta) / 2.0 - s.delta;
        let p = if big_gamma > 0.0 { 2.0 * (-big_gamma * big_gamma * n).exp() } else { 1.0 };
        let m = [
            (-s.gamma0.powi(2) * n).exp(),
            (-s.delta0_small.powi(2) * (c - s.gamma0) * n).exp(),
            (-s.gamma0_prime.powi(2) * n).exp(),
            (-s.delta0_small_prime.powi(2) * (cp - s.gamma0_prime) * n).exp(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        let sec = if dpp > 0.0 { p * (32.0 * m + (-dpp * dpp * n).exp()) } else { 1.0 };
        (corr, sec)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn correctness_example() {
        let k = Coefficients::new(0.1, 0.2).unwrap();
        let s = slack(0.01, 0.05, 1e-3);
        let v = correctness_bound(&k, 1.0, 10_000, &s).unwrap();
        let first = 2.0 * (-1.0f64).exp();
        let ratio = 0.05 * k.discriminant / (2.0 * k.c_prime);
        let second = 2.0 * (-ratio * ratio * 1e4).exp();
        assert!(rel(v.value, first + second) < 1e-14);
        assert!((first - 0.735_758_882).abs() < 1e-9);
    }

    #[test]
    fn correctness_decreases_in_n() {
        let k = Coefficients::new(0.1, 0.2).unwrap();
        let s = slack(0.01, 0.05, 1e-3);
        let vals: Vec<f64> = [1e3, 1e4, 1e5, 1e6]
            .iter()
            .map(|&n| correctness_bound(&k, 1.0, n as u64, &s).unwrap().ln)
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn correctness_rejects_invalid_slack() {
        let k = Coefficients::new(0.1, 0.2).unwrap();
        let err = correctness_bound(&k, 0.5, 1000, &slack(0.0, 0.1, 1e-3)).unwrap_err();
        assert!(matches!(err, Error::Constraint { constraint: "delta > 0", .. }));
        let err = correctness_bound(&k, 0.5, 1000, &slack(0.5, 0.1, 1e-3)).unwrap_err();
        assert!(matches!(err, Error::Constraint { constraint: "delta < (2 - a^eta - a'^eta)/2", .. }));
        let err = correctness_bound(&k, 0.5, 1000, &slack(0.01, 0.1, -1.0)).unwrap_err();
        assert!(matches!(err, Error::Constraint { constraint: "delta0 > 0", .. }));
    }

    #[test]
    fn delta_prime_values() {
        let k = Coefficients::new(0.1, 0.2).unwrap();
        assert_eq!(delta_prime(&k, &slack(0.01, 0.01, 0.0)), 0.0);
        let s = slack(0.01, 0.01, 1e-3);
        let (c, cp) = (k.c, k.c_prime);
        let direct = (c * cp * 2e-3 + cp * 1e-3 * 1.001 + c * 1e-3 * 1.001) / k.discriminant;
        assert!(rel(delta_prime(&k, &s), direct) < 1e-14);
        assert!((delta_prime(&k, &s) - 0.028_438_6).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn delta_prime_monotone(base in 1e-5f64..0.1, bump in 1e-4f64..1.0, which in 0usize..4) {
            let k = Coefficients::new(0.3, 0.9).unwrap();
            let s = slack(0.01, 0.01, base);
            let mut t = s;
            let f = 1.0 + bump;
            match which {
                0 => t.delta0_small *= f,
                1 => t.delta0_small_prime *= f,
                2 => t.gamma0 *= f,
                _ => t.gamma0_prime *= f,
            }
            prop_assert!(delta_prime(&k, &t) > delta_prime(&k, &s));
        }

        #[test]
        fn budget_matches_oracle(
            nu in 0.05f64..1.5, ratio in 1.2f64..4.0, eta in 0.05f64..1.0, logn in 3.0f64..7.0,
            delta_frac in 0.01f64..0.9, delta0 in 1e-4f64..0.1, small in 1e-4f64..0.05,
        ) {
            let nup = nu * ratio;
            let k = Coefficients::new(nu, nup).unwrap();
            let n = 10f64.powf(logn).round();
            let s = slack(delta_frac * mean_detection(&k, eta), delta0, small);
            let budget = epsilon_ac(&k, eta, n as u64, &s);
            let (corr, sec) = oracle_eps(nu, nup, eta, n, &s);
            prop_assert!(rel(budget.eps_corr.value, corr) < 1e-9 || (budget.eps_corr.value - corr).abs() < 1e-300);
            prop_assert!(rel(budget.eps_sec.value, sec) < 1e-9 || (budget.eps_sec.value - sec).abs() < 1e-300);
            prop_assert_eq!(budget.eps_ac.value, budget.eps_corr.value + budget.eps_sec.value);
        }

        #[test]
        fn budget_nonincreasing_in_n(nu in 0.1f64..1.0, eta in 0.3f64..1.0, delta0 in 1e-3f64..0.05) {
            let k = Coefficients::new(nu, 2.0 * nu).unwrap();
            let s = slack(0.3 * mean_detection(&k, eta), delta0, 1e-3);
            let mut last = f64::INFINITY;
            for n in [1e3, 1e4, 1e5, 1e6, 1e7] {
                let b = epsilon_ac(&k, eta, n as u64, &s);
                prop_assert!(b.eps_ac.ln <= last + 1e-12);
                last = b.eps_ac.ln;
            }
        }
    }

    #[test]
    fn double_prime_expansion_at_low_transmittance() {
        let (eta, alpha, nup) = (1e-3, 0.5, 0.01);
        let k = Coefficients::new(alpha * nup, nup).unwrap();
        for (d0, d0p) in [(1e-4, 1e-4), (3e-4, 2e-5), (0.0, 0.0)] {
            let exact = delta_double_prime(&k, eta, d0, d0p);
            let approx = (eta - (d0 + d0p)) * nup * alpha * (1.0 - alpha);
            assert!(rel(exact, approx) < 0.05, "exact {exact} vs expansion {approx}");
        }
    }

    #[test]
    fn double_prime_sign() {
        let k = Coefficients::new(1e-3, 2e-3).unwrap();
        assert!(delta_double_prime(&k, 1.0, 1e-4, 1e-4) > 0.0);
        // margins larger than the honest slope leave no room
        let k = Coefficients::new(0.05, 0.1).unwrap();
        let eta = 0.01;
        assert!(delta_double_prime(&k, eta, eta, 0.0) < 0.0);
        assert!(delta_double_prime(&k, eta, 0.5 * eta, 0.6 * eta) < 0.0);
    }

    #[test]
    fn security_branches() {
        let k = Coefficients::new(0.1, 0.2).unwrap();
        // Delta0 far too large: no bound
        let s = slack(0.01, 10.0, 1e-3);
        assert_eq!(security_bound(&k, 0.5, 1000, &s), LogValue::ONE);
        let b = epsilon_ac(&k, 0.5, 1000, &s);
        assert!(!b.constraints_satisfied);
        assert_eq!(b.eps_sec, LogValue::ONE);
        // delta beyond the multiphoton margin: P_{|I|,K} = 1
        let k = Coefficients::new(0.5, 1.0).unwrap();
        let eta = 1.0;
        let g0 = gamma(&k, eta, 0.0);
        let s = slack(1.2 * g0, 1e-3, 1e-3);
        assert!(s.delta < mean_detection(&k, eta));
        let b = epsilon_ac(&k, eta, 5000, &s);
        assert!(!b.pik_branch);
        assert_eq!(b.p_ik, LogValue::ONE);
        if b.delta0pp > 0.0 {
            let expect = 32.0 * b.m.value + (-b.delta0pp * b.delta0pp * 5000.0).exp();
            assert!(rel(b.eps_sec.value, expect) < 1e-12);
        }
    }

    #[test]
    fn literal_form_drops_union_factor() {
        let k = Coefficients::new(0.3, 0.9).unwrap();
        let s = slack(0.05, 1e-3, 0.02);
        let lit = security_bound_with(&k, 1.0, 20_000, &s, BoundOptions::LITERAL);
        let union = security_bound(&k, 1.0, 20_000, &s);
        let b = epsilon_ac(&k, 1.0, 20_000, &s);
        assert!(b.constraints_satisfied);
        let expect = b.p_ik.value * (b.m.value + (-b.delta0pp.powi(2) * 20_000.0).exp());
        assert!(rel(lit.ln, b.p_ik.ln + (b.m.value + (-b.delta0pp.powi(2) * 20_000.0).exp()).ln()) < 1e-12);
        assert!(lit.value <= expect);
        assert!((union.ln - lit.ln - (32.0f64 * b.m.value + (-b.delta0pp.powi(2) * 20_000.0).exp()).ln() + (b.m.value + (-b.delta0pp.powi(2) * 20_000.0).exp()).ln()).abs() < 1e-9);
    }

    #[test]
    fn log_representation_survives_underflow() {
        let k = Coefficients::new(0.1, 0.2).unwrap();
        let s = slack(0.05, 0.05, 1e-3);
        let v = correctness_bound(&k, 1.0, 10_000_000_000, &s).unwrap();
        assert_eq!(v.value, 0.0);
        let ratio = 0.05 * k.discriminant / (2.0 * k.c_prime);
        let expect = 2f64.ln() - ratio * ratio * 1e10;
        assert!(rel(v.ln, expect) < 1e-9);
    }

    #[test]
    fn serializes_with_symbol_names() {
        let k = Coefficients::new(0.1, 0.2).unwrap();
        let b = epsilon_ac(&k, 0.5, 1000, &slack(0.01, 0.01, 1e-3));
        let v: serde_json::Value = serde_json::to_value(&b).unwrap();
        for key in ["delta", "Delta0", "delta0", "delta0p", "gamma0", "gamma0p", "Delta0p", "Delta0pp", "Gamma", "C", "M", "P_IK"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v["eps_ac"].get("exponent").is_some());
    }
}

//! One function per subcommand: parameters in, [`Report`] out.

use anyhow::{Context, Result};
use serde::Serialize;

use batchrsp::analysis::figures::{cell, figure_data, winner_flips, Figure, FigureRow};
use batchrsp::analysis::{self, IntensityChoice, OptimizeConfig, ScalingConfig};
use batchrsp::bounds::{correctness_bound, epsilon_ac_with, BoundOptions, ErrorBudget, SlackParams};
use batchrsp::estimation::{reference_t, Coefficients, TwoIntensityEstimator};
use batchrsp::games::{
    self, adversary_beta, adversary_honest_mimic, adversary_pns_greedy, run_trials, summarize, GameVerdict, MonteCarlo,
};
use batchrsp::numerics::{LogValue, Probability};
use batchrsp::protocol::{
    ideal_batch, mean_detection, run_detailed, write_jsonl, FirstNonEmptyReceiver, HonestReceiver, PnsReceiver,
    ProtocolParams, ReceiverStrategy, RunOutcome,
};
use batchrsp::qubits::GroupElement;

use crate::output::Report;
use crate::{
    AdversaryKind, Batch, BoundsArgs, Channel, CoeffsArgs, GameCorArgs, GameSimArgs, Intensities, NustarArgs,
    NustarMode, OptimizeArgs, ReceiverKind, ScalingArgs, SimulateArgs, Slack,
};

/// Sub-stream of a trial reserved for drawing target unitaries.
const TARGET_STREAM: u64 = 4;

fn opts(literal: bool) -> BoundOptions {
    if literal { BoundOptions::LITERAL } else { BoundOptions::UNION }
}

fn params(i: &Intensities, ch: &Channel, b: &Batch) -> Result<ProtocolParams> {
    let n = usize::try_from(ch.n).context("--n does not fit in memory")?;
    Ok(match b.k {
        Some(k) => ProtocolParams::two_intensity(i.nu, i.nu_prime, ch.eta, n, k)?,
        None => ProtocolParams::from_delta(i.nu, i.nu_prime, ch.eta, n, b.delta)?,
    })
}

fn slack(delta: f64, s: &Slack) -> SlackParams {
    SlackParams {
        delta,
        delta0: s.delta0,
        delta0_small: s.delta0_small,
        delta0_small_prime: s.delta0_small_prime,
        gamma0: s.gamma0,
        gamma0_prime: s.gamma0_prime,
    }
}

fn sci(v: LogValue) -> String {
    if v.value > 0.0 { format!("{:.4e}", v.value) } else { format!("10^{:.2}", v.log10()) }
}

#[derive(Serialize)]
struct CoeffRow {
    nu: f64,
    nu_prime: f64,
    a: f64,
    b: f64,
    c: f64,
    a_prime: f64,
    b_prime: f64,
    c_prime: f64,
    #[serde(rename = "C3")]
    tail3: f64,
    #[serde(rename = "C3_prime")]
    tail3_prime: f64,
    #[serde(rename = "D")]
    discriminant: f64,
    eta: f64,
    a_eta: f64,
    a_prime_eta: f64,
    mean_detection: f64,
    /// `t / N`.
    t_per_pulse: f64,
}

pub fn coeffs(args: &CoeffsArgs) -> Result<Report> {
    let k = Coefficients::new(args.intensities.nu, args.intensities.nu_prime)?;
    if !(args.eta > 0.0 && args.eta <= 1.0) {
        return Err(batchrsp::Error::Parameter { name: "eta", reason: format!("must lie in (0, 1], got {}", args.eta) }.into());
    }
    let row = CoeffRow {
        nu: k.nu,
        nu_prime: k.nu_prime,
        a: k.a,
        b: k.b,
        c: k.c,
        a_prime: k.a_prime,
        b_prime: k.b_prime,
        c_prime: k.c_prime,
        tail3: k.tail3,
        tail3_prime: k.tail3_prime,
        discriminant: k.discriminant,
        eta: args.eta,
        a_eta: k.a_eta(args.eta),
        a_prime_eta: k.a_prime_eta(args.eta),
        mean_detection: mean_detection(&k, args.eta),
        t_per_pulse: reference_t(&k, args.eta, 1),
    };
    let summary = format!(
        "nu = {}, nu' = {}: bc' - b'c = {:.6e}, honest t/N = {:.6e} at eta = {}",
        k.nu, k.nu_prime, k.discriminant, row.t_per_pulse, args.eta
    );
    Report::new(&[&row], &row, summary)
}

#[derive(Serialize)]
struct BudgetRow {
    nu: f64,
    nu_prime: f64,
    eta: f64,
    #[serde(rename = "N")]
    n: u64,
    #[serde(rename = "K")]
    k: i64,
    delta: f64,
    #[serde(rename = "Delta0")]
    big_delta0: f64,
    delta0: f64,
    delta0p: f64,
    gamma0: f64,
    gamma0p: f64,
    eps_corr: f64,
    eps_corr_exponent: f64,
    eps_sec: f64,
    eps_sec_exponent: f64,
    eps_ac: f64,
    eps_ac_exponent: f64,
    #[serde(rename = "Delta0p")]
    big_delta0p: f64,
    #[serde(rename = "Delta0pp")]
    big_delta0pp: f64,
    #[serde(rename = "Gamma")]
    gamma: f64,
    #[serde(rename = "C")]
    c_max: f64,
    #[serde(rename = "M")]
    m: f64,
    #[serde(rename = "M_exponent")]
    m_exponent: f64,
    #[serde(rename = "P_IK")]
    p_ik: f64,
    #[serde(rename = "P_IK_exponent")]
    p_ik_exponent: f64,
    domain_factor: f64,
    constraints_satisfied: bool,
    pik_branch: bool,
    violated: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    evaluations: Option<u64>,
}

impl From<&ErrorBudget> for BudgetRow {
    fn from(b: &ErrorBudget) -> Self {
        Self {
            nu: b.nu,
            nu_prime: b.nu_prime,
            eta: b.eta,
            n: b.n_pulses,
            k: b.batch_size,
            delta: b.slack.delta,
            big_delta0: b.slack.delta0,
            delta0: b.slack.delta0_small,
            delta0p: b.slack.delta0_small_prime,
            gamma0: b.slack.gamma0,
            gamma0p: b.slack.gamma0_prime,
            eps_corr: b.eps_corr.value,
            eps_corr_exponent: b.eps_corr.ln,
            eps_sec: b.eps_sec.value,
            eps_sec_exponent: b.eps_sec.ln,
            eps_ac: b.eps_ac.value,
            eps_ac_exponent: b.eps_ac.ln,
            big_delta0p: b.delta0p,
            big_delta0pp: b.delta0pp,
            gamma: b.gamma,
            c_max: b.c_max,
            m: b.m.value,
            m_exponent: b.m.ln,
            p_ik: b.p_ik.value,
            p_ik_exponent: b.p_ik.ln,
            domain_factor: b.domain_factor,
            constraints_satisfied: b.constraints_satisfied,
            pik_branch: b.pik_branch,
            violated: b.violated.clone(),
            converged: None,
            evaluations: None,
        }
    }
}

fn budget_summary(b: &ErrorBudget) -> String {
    let mut s = format!(
        "eps_corr = {}, eps_sec = {}, eps_AC = {} (N = {}, K = {})",
        sci(b.eps_corr),
        sci(b.eps_sec),
        sci(b.eps_ac),
        b.n_pulses,
        b.batch_size
    );
    if let Some(v) = &b.violated {
        s.push_str(&format!("\nconstraints not satisfied: {v}"));
    }
    s
}

pub fn bounds(args: &BoundsArgs) -> Result<Report> {
    let k = Coefficients::new(args.intensities.nu, args.intensities.nu_prime)?;
    let s = slack(args.delta, &args.slack);
    let b = epsilon_ac_with(&k, args.channel.eta, args.channel.n, &s, opts(args.slack.literal));
    let infeasible = !b.constraints_satisfied;
    let why = b.violated.clone().unwrap_or_default();
    Ok(Report::new(&[BudgetRow::from(&b)], &b, budget_summary(&b))?.infeasible_if(infeasible, why))
}

#[derive(Serialize)]
struct SimulateRow {
    receiver: String,
    nu: f64,
    nu_prime: f64,
    eta: f64,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "Delta0")]
    delta0: f64,
    trials: u64,
    completed: u64,
    receiver_aborts: u64,
    sender_aborts: u64,
    matches_ideal: u64,
    cheats: u64,
}

struct RunSummary {
    completed: bool,
    receiver_abort: bool,
    matches_ideal: bool,
    cheat: bool,
}

pub fn simulate(args: &SimulateArgs) -> Result<Report> {
    let p = params(&args.intensities, &args.channel, &args.batch)?;
    let est = TwoIntensityEstimator::new(p.coefficients()?, p.eta, p.n_pulses as u64, args.delta0)?;
    let receiver = || -> Box<dyn ReceiverStrategy> {
        match args.receiver {
            ReceiverKind::Honest => Box::new(HonestReceiver::default()),
            ReceiverKind::FirstNonempty => Box::new(FirstNonEmptyReceiver::default()),
            ReceiverKind::Pns => Box::new(PnsReceiver::default()),
        }
    };
    let one = |stream: batchrsp::numerics::RngStream| {
        let mut rng = stream.substream(TARGET_STREAM).rng();
        let targets: Vec<GroupElement> = (0..p.batch_size).map(|_| GroupElement::random(&mut rng)).collect();
        let mut r = receiver();
        run_detailed(&p, &est, &targets, r.as_mut(), stream)
    };
    let runs = run_trials(&MonteCarlo::new(args.trials, args.seed), |s| {
        let (t, sender) = one(s)?;
        let (completed, receiver_abort, matches_ideal) = match t.outcome() {
            RunOutcome::Completed(out) => (true, false, out == ideal_batch(&sender.targets).states.as_slice()),
            RunOutcome::ReceiverAbort => (false, true, false),
            RunOutcome::SenderAbort => (false, false, false),
        };
        Ok(RunSummary { completed, receiver_abort, matches_ideal, cheat: t.cheat_succeeded() })
    })?;
    if let Some(path) = &args.transcript {
        if args.trials > 0 {
            let (t, _) = one(batchrsp::numerics::RngStream::new(args.seed, 0))?;
            let file = std::fs::File::create(path).with_context(|| format!("--transcript: cannot write {}", path.display()))?;
            write_jsonl(&t, std::io::BufWriter::new(file))?;
        }
    }
    let count = |f: fn(&RunSummary) -> bool| runs.iter().filter(|r| f(r)).count() as u64;
    let row = SimulateRow {
        receiver: format!("{:?}", args.receiver).to_lowercase(),
        nu: args.intensities.nu,
        nu_prime: args.intensities.nu_prime,
        eta: p.eta,
        n: p.n_pulses,
        k: p.batch_size,
        delta0: args.delta0,
        trials: args.trials,
        completed: count(|r| r.completed),
        receiver_aborts: count(|r| r.receiver_abort),
        sender_aborts: count(|r| !r.completed && !r.receiver_abort),
        matches_ideal: count(|r| r.matches_ideal),
        cheats: count(|r| r.cheat),
    };
    let summary = format!(
        "{} runs: {} completed ({} equal to the ideal batch), {} receiver aborts, {} sender aborts, {} cheats",
        row.trials, row.completed, row.matches_ideal, row.receiver_aborts, row.sender_aborts, row.cheats
    );
    Report::new(&[&row], &row, summary)
}

#[derive(Serialize)]
struct GameRow {
    game: &'static str,
    adversary: String,
    nu: f64,
    nu_prime: f64,
    eta: f64,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    delta: f64,
    #[serde(rename = "Delta0")]
    delta0: f64,
    trials: u64,
    event: GameVerdict,
    events: u64,
    rate: f64,
    wilson_low: f64,
    wilson_high: f64,
    estimation_accepts: u64,
    nonconforming: u64,
    /// Analytic bound on the event; empty when the slack point is invalid.
    bound: Option<f64>,
    bound_exponent: Option<f64>,
    /// Wilson lower limit at 3 sigma does not exceed the bound.
    consistent: Option<bool>,
}

fn game_row(
    game: &'static str,
    adversary: String,
    p: &ProtocolParams,
    delta: f64,
    delta0: f64,
    summary: &games::GameSummary,
    bound: Option<LogValue>,
) -> GameRow {
    GameRow {
        game,
        adversary,
        nu: p.levels[0],
        nu_prime: p.levels[1],
        eta: p.eta,
        n: p.n_pulses,
        k: p.batch_size,
        delta,
        delta0,
        trials: summary.trials,
        event: summary.event,
        events: summary.events,
        rate: summary.rate,
        wilson_low: summary.wilson_low,
        wilson_high: summary.wilson_high,
        estimation_accepts: summary.estimation_accepts,
        nonconforming: summary.nonconforming,
        bound: bound.map(|b| b.value),
        bound_exponent: bound.map(|b| b.ln),
        consistent: bound.map(|b| summary.consistent_with_upper_bound(b.value, 3.0)),
    }
}

fn game_summary_line(row: &GameRow) -> String {
    let bound = match row.bound {
        Some(b) => format!("{b:.4e}"),
        None => "n/a (slack invalid)".into(),
    };
    format!(
        "{} [{}]: {} {:?} in {} trials, rate {:.4e} (99.9% Wilson [{:.4e}, {:.4e}]), analytic bound {}",
        row.game, row.adversary, row.events, row.event, row.trials, row.rate, row.wilson_low, row.wilson_high, bound
    )
}

pub fn game_cor(args: &GameCorArgs) -> Result<Report> {
    let p = params(&args.intensities, &args.channel, &args.batch)?;
    let coeffs = p.coefficients()?;
    let delta = p.effective_delta()?;
    let est = TwoIntensityEstimator::new(coeffs, p.eta, p.n_pulses as u64, args.slack.delta0)?;
    let mc = MonteCarlo::new(args.trials.trials, args.trials.seed);
    let outcomes = run_trials(&mc, |s| games::game_cor(&p, &est, s))?;
    let summary = summarize(&outcomes, GameVerdict::Abort);
    let bound = correctness_bound(&coeffs, p.eta, p.n_pulses as u64, &slack(delta, &args.slack)).ok();
    let row = game_row("game_cor", "honest".into(), &p, delta, args.slack.delta0, &summary, bound);
    let line = game_summary_line(&row);
    Report::new(&[&row], &row, line)
}

pub fn game_sim(args: &GameSimArgs) -> Result<Report> {
    let p = params(&args.intensities, &args.channel, &args.batch)?;
    let coeffs = p.coefficients()?;
    let delta = p.effective_delta()?;
    let est = TwoIntensityEstimator::new(coeffs, p.eta, p.n_pulses as u64, args.slack.delta0)?;
    let adversary = match args.adversary {
        AdversaryKind::Pns => adversary_pns_greedy(),
        AdversaryKind::Beta => adversary_beta(Probability::new(args.beta).map_err(|_| batchrsp::Error::Parameter {
            name: "beta",
            reason: format!("must lie in [0, 1], got {}", args.beta),
        })?),
        AdversaryKind::HonestMimic => adversary_honest_mimic(args.mimic_eta.unwrap_or(p.eta)),
    };
    let mc = MonteCarlo::new(args.trials.trials, args.trials.seed);
    let outcomes = run_trials(&mc, |s| games::game_sim(&p, &est, &adversary, s))?;
    let summary = summarize(&outcomes, GameVerdict::Fail);
    let budget =
        epsilon_ac_with(&coeffs, p.eta, p.n_pulses as u64, &slack(delta, &args.slack), opts(args.slack.literal));
    let bound = budget.constraints_satisfied.then_some(budget.eps_sec);
    let row = game_row("game_sim", adversary.to_string(), &p, delta, args.slack.delta0, &summary, bound);
    let line = game_summary_line(&row);
    Report::new(&[&row], &row, line)
}

pub fn optimize(args: &OptimizeArgs) -> Result<Report> {
    let mut cfg = if args.free_intensities {
        OptimizeConfig::free(args.channel.eta, args.channel.n)
    } else {
        OptimizeConfig::new(args.channel.eta, args.channel.n, args.alpha)
    };
    cfg.starts = args.starts;
    cfg.max_evals = args.max_evals;
    cfg.bound = opts(args.literal);
    let r = analysis::optimize(&cfg)?;
    let row = BudgetRow { converged: Some(r.converged), evaluations: Some(r.evaluations), ..BudgetRow::from(&r.budget) };
    let mode = match cfg.intensities {
        IntensityChoice::Ratio { alpha } => format!("alpha = {alpha}"),
        IntensityChoice::Free => "free intensities".into(),
    };
    let summary = format!(
        "optimum at eta = {}, N = {} ({mode}): nu = {:.6}, nu' = {:.6}, {}{}",
        args.channel.eta,
        args.channel.n,
        r.best_intensities.0,
        r.best_intensities.1,
        budget_summary(&r.budget),
        if r.converged { "" } else { "\nno admissible point: the bound stays vacuous" }
    );
    let converged = r.converged;
    Ok(Report::new(&[row], &r, summary)?.infeasible_if(!converged, "no point with eps_AC < 1 satisfies the constraints"))
}

#[derive(Serialize)]
struct ScalingRow {
    eta: f64,
    #[serde(rename = "N_min")]
    n_min: Option<u64>,
    eps_ac: Option<f64>,
    nu_prime: Option<f64>,
    slope: f64,
    intercept: f64,
    r_squared: f64,
}

pub fn scaling(args: &ScalingArgs) -> Result<Report> {
    let mut cfg = ScalingConfig::new(args.eps_target, args.alpha);
    cfg.starts = args.starts;
    let fit = analysis::scaling_sweep(&args.etas, &cfg)?;
    let rows: Vec<ScalingRow> = args
        .etas
        .iter()
        .map(|&eta| {
            let p = fit.grid.iter().find(|p| p.eta == eta);
            ScalingRow {
                eta,
                n_min: p.map(|p| p.n_min),
                eps_ac: p.map(|p| p.eps_ac),
                nu_prime: p.map(|p| p.nu_prime),
                slope: fit.slope,
                intercept: fit.intercept,
                r_squared: fit.r_squared,
            }
        })
        .collect();
    let mut summary = String::new();
    for r in &rows {
        match r.n_min {
            Some(n) => summary.push_str(&format!("eta = {:<8} N_min = {n:.3e}\n", r.eta, n = n as f64)),
            None => summary.push_str(&format!("eta = {:<8} no feasible N (dropped)\n", r.eta)),
        }
    }
    summary.push_str(&format!("log N_min vs log eta: slope {:.3}, r^2 {:.4}", fit.slope, fit.r_squared));
    Report::new(&rows, &fit, summary)
}

pub fn nustar(args: &NustarArgs) -> Result<Report> {
    let rows: Vec<FigureRow> = match args.mode {
        NustarMode::Point => {
            // surface domain errors and missing roots instead of marking the cell
            analysis::NuStarPoint::compute(args.eta0, args.alpha)?;
            vec![cell(args.eta0, args.alpha)]
        }
        NustarMode::FigEta => figure_data(Figure::FigEta),
        NustarMode::FigAlpha => figure_data(Figure::FigAlpha),
        NustarMode::Density => figure_data(Figure::Density),
    };
    let marked = rows.iter().filter(|r| r.winner.is_none()).count();
    let summary = match args.mode {
        NustarMode::Point => {
            let r = &rows[0];
            let show = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:.6}"));
            format!(
                "eta0 = {}, alpha = {}: nu*_GLMO = {}, nu*_DKL = {}, winner {}",
                r.eta0,
                r.alpha,
                show(r.nu_star_glmo),
                show(r.nu_star_dkl),
                r.winner.map_or("none".to_string(), |w| w.to_string())
            )
        }
        _ => format!("{} cells, {} winner changes along the table, {} cells without a root", rows.len(), winner_flips(&rows), marked),
    };
    Report::new(&rows, &rows, summary)
}

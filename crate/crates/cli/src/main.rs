//! `batchrsp`: command-line front end for the batch remote state preparation toolkit.
//!
//! Every subcommand accepts `--config FILE` (one `key = value` per line, `#`
//! comments); flags given on the command line override file entries. Outputs
//! carry the effective configuration so `batchrsp replay FILE` can reproduce
//! them byte for byte.
//!
//! Exit codes: 0 success, 2 parameter error, 3 infeasible, 1 anything else.

mod commands;
mod config;
mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use config::{config_to_args, effective_config, explicit_flags, read_config_file, read_provenance, RunConfig};
use output::{emit, render, Format, Report};

#[derive(Parser, Debug)]
#[command(name = "batchrsp", version, about = "Simulate and analyse multi-intensity batch remote state preparation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Photon-number coefficients for a pair of intensities.
    Coeffs(CoeffsArgs),
    /// Finite-size error budget at a fixed slack point.
    Bounds(BoundsArgs),
    /// Full protocol runs against a chosen receiver.
    Simulate(SimulateArgs),
    /// Monte Carlo of the correctness game.
    GameCor(GameCorArgs),
    /// Monte Carlo of the security game against a library adversary.
    GameSim(GameSimArgs),
    /// Minimise the error budget over slack and intensities.
    Optimize(OptimizeArgs),
    /// Minimal batch length per transmittance and the log-log slope.
    Scaling(ScalingArgs),
    /// Maximal secure intensities at one point or along a figure grid.
    Nustar(NustarArgs),
    /// Write all three maximal-intensity tables into a directory.
    Figures(FiguresArgs),
    /// Re-run the configuration embedded in a previous output file.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Io {
    /// Read settings from a `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the artifact here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Worker threads (default: available parallelism). Never changes results.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct Intensities {
    /// Low intensity.
    #[arg(long, default_value = "0.1")]
    pub nu: f64,
    /// High intensity.
    #[arg(long, default_value = "0.2")]
    pub nu_prime: f64,
}

#[derive(Args, Debug, Clone)]
pub struct Channel {
    /// Channel transmittance.
    #[arg(long, default_value = "0.5")]
    pub eta: f64,
    /// Number of pulses N.
    #[arg(long, default_value = "2000")]
    pub n: u64,
}

#[derive(Args, Debug, Clone)]
pub struct Batch {
    /// Detection slack; sets K = floor((mean detection - delta) N).
    #[arg(long, default_value = "0.01")]
    pub delta: f64,
    /// Batch size; takes precedence over --delta when given.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct Slack {
    /// Estimator margin Delta0.
    #[arg(long, default_value = "0.01")]
    pub delta0: f64,
    #[arg(long, default_value = "0.001")]
    pub delta0_small: f64,
    #[arg(long, default_value = "0.001")]
    pub delta0_small_prime: f64,
    #[arg(long, default_value = "0.001")]
    pub gamma0: f64,
    #[arg(long, default_value = "0.001")]
    pub gamma0_prime: f64,
    /// Drop the union-bound factor 32 from the security term.
    #[arg(long)]
    pub literal: bool,
}

#[derive(Args, Debug, Clone)]
pub struct Trials {
    #[arg(long, default_value = "20000")]
    pub trials: u64,
    #[arg(long, default_value = "0")]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct CoeffsArgs {
    #[command(flatten)]
    io: Io,
    #[command(flatten)]
    pub intensities: Intensities,
    /// Transmittance for the detection-dependent columns.
    #[arg(long, default_value = "1.0")]
    pub eta: f64,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[command(flatten)]
    io: Io,
    #[command(flatten)]
    pub intensities: Intensities,
    #[command(flatten)]
    pub channel: Channel,
    /// Detection slack delta.
    #[arg(long, default_value = "0.01")]
    pub delta: f64,
    #[command(flatten)]
    pub slack: Slack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReceiverKind {
    Honest,
    FirstNonempty,
    Pns,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    io: Io,
    #[command(flatten)]
    pub intensities: Intensities,
    #[command(flatten)]
    pub channel: Channel,
    #[command(flatten)]
    pub batch: Batch,
    /// Estimator margin Delta0.
    #[arg(long, default_value = "0.01")]
    pub delta0: f64,
    #[arg(long, value_enum, default_value = "honest")]
    pub receiver: ReceiverKind,
    #[arg(long, default_value = "1000")]
    pub trials: u64,
    #[arg(long, default_value = "0")]
    pub seed: u64,
    /// Also write the first run's transcript as JSON lines.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GameCorArgs {
    #[command(flatten)]
    io: Io,
    #[command(flatten)]
    pub intensities: Intensities,
    #[command(flatten)]
    pub channel: Channel,
    #[command(flatten)]
    pub batch: Batch,
    #[command(flatten)]
    pub slack: Slack,
    #[command(flatten)]
    pub trials: Trials,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdversaryKind {
    #[value(alias = "pns_greedy", alias = "pns-greedy")]
    Pns,
    Beta,
    #[value(alias = "honest_mimic")]
    HonestMimic,
}

#[derive(Args, Debug)]
pub struct GameSimArgs {
    #[command(flatten)]
    io: Io,
    #[command(flatten)]
    pub intensities: Intensities,
    #[command(flatten)]
    pub channel: Channel,
    #[command(flatten)]
    pub batch: Batch,
    #[command(flatten)]
    pub slack: Slack,
    #[command(flatten)]
    pub trials: Trials,
    #[arg(long, value_enum, default_value = "pns")]
    pub adversary: AdversaryKind,
    /// Two-photon fraction for the beta adversary.
    #[arg(long, default_value = "0.5")]
    pub beta: f64,
    /// Transmittance the honest-mimic adversary imitates (default: --eta).
    #[arg(long)]
    pub mimic_eta: Option<f64>,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    #[command(flatten)]
    io: Io,
    #[command(flatten)]
    pub channel: Channel,
    /// Intensity ratio nu / nu'.
    #[arg(long, default_value = "0.5")]
    pub alpha: f64,
    /// Search the ratio as well; --alpha is ignored.
    #[arg(long)]
    pub free_intensities: bool,
    /// Local searches started from the best grid seeds.
    #[arg(long, default_value = "12")]
    pub starts: usize,
    #[arg(long, default_value = "4000")]
    pub max_evals: usize,
    /// Drop the union-bound factor 32 from the security term.
    #[arg(long)]
    pub literal: bool,
}

#[derive(Args, Debug)]
pub struct ScalingArgs {
    #[command(flatten)]
    io: Io,
    /// Comma-separated transmittances in (0, 0.2].
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.02,0.01,0.005")]
    pub etas: Vec<f64>,
    #[arg(long, default_value = "1e-6")]
    pub eps_target: f64,
    #[arg(long, default_value = "0.5")]
    pub alpha: f64,
    #[arg(long, default_value = "12")]
    pub starts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NustarMode {
    Point,
    #[value(name = "fig_eta", alias = "fig-eta")]
    FigEta,
    #[value(name = "fig_alpha", alias = "fig-alpha")]
    FigAlpha,
    Density,
}

#[derive(Args, Debug)]
pub struct NustarArgs {
    #[command(flatten)]
    io: Io,
    #[arg(long, value_enum, default_value = "point")]
    pub mode: NustarMode,
    /// Transmittance for `--mode point`.
    #[arg(long, default_value = "0.2")]
    pub eta0: f64,
    /// Intensity ratio for `--mode point`.
    #[arg(long, default_value = "0.5")]
    pub alpha: f64,
}

#[derive(Args, Debug)]
pub struct FiguresArgs {
    #[command(flatten)]
    io: Io,
    /// Directory receiving fig_eta, fig_alpha and density tables.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// Output file (CSV or JSON) produced by an earlier run.
    pub file: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

impl Cmd {
    fn io(&self) -> Option<&Io> {
        match self {
            Cmd::Coeffs(a) => Some(&a.io),
            Cmd::Bounds(a) => Some(&a.io),
            Cmd::Simulate(a) => Some(&a.io),
            Cmd::GameCor(a) => Some(&a.io),
            Cmd::GameSim(a) => Some(&a.io),
            Cmd::Optimize(a) => Some(&a.io),
            Cmd::Scaling(a) => Some(&a.io),
            Cmd::Nustar(a) => Some(&a.io),
            Cmd::Figures(a) => Some(&a.io),
            Cmd::Replay(_) => None,
        }
    }
}

/// A problem with how the tool was invoked.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(e: anyhow::Error) -> anyhow::Error {
    anyhow!(Usage(format!("{e:#}")))
}

fn exit_code(e: &anyhow::Error) -> u8 {
    use batchrsp::Error as E;
    for cause in e.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<E>() {
            return match err {
                E::Parameter { .. } | E::Domain(_) | E::Constraint { .. } => 2,
                E::Infeasible(_) | E::NoRoot(_) => 3,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn parse(argv: &[OsString]) -> clap::ArgMatches {
    Cli::command().try_get_matches_from(argv).unwrap_or_else(|e| e.exit())
}

/// Folds `--config` or a replayed provenance into the argument list.
fn resolve_argv(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let root = Cli::command();
    let matches = parse(&argv);
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let bin = argv[0].clone();
    if name == "replay" {
        let replay = ReplayArgs::from_arg_matches(sub)?;
        let recorded = read_provenance(&replay.file).map_err(usage)?;
        let command = recorded.get("command").ok_or_else(|| usage(anyhow!("replay: no `command` entry")))?;
        let sub_cmd = root
            .find_subcommand(command)
            .ok_or_else(|| usage(anyhow!("replay: unknown command `{command}`")))?;
        let mut out = vec![bin, command.into()];
        out.extend(config_to_args(sub_cmd, &recorded, &[]).map_err(usage)?);
        if let Some(o) = replay.output {
            out.extend(["--output".into(), o.into_os_string()]);
        }
        if let Some(t) = replay.threads {
            out.extend(["--threads".into(), t.to_string().into()]);
        }
        return Ok(out);
    }
    let Some(path) = sub.get_one::<PathBuf>("config") else {
        return Ok(argv);
    };
    let sub_cmd = root.find_subcommand(name).expect("parsed subcommand exists");
    let file = read_config_file(path).map_err(usage)?;
    if let Some(recorded) = file.get("command") {
        if recorded != name {
            return Err(usage(anyhow!("--config: file is for `{recorded}`, not `{name}`")));
        }
    }
    let mut out = vec![bin, name.into()];
    out.extend(config_to_args(sub_cmd, &file, &explicit_flags(sub_cmd, sub)).map_err(usage)?);
    out.extend(argv.into_iter().skip(2));
    Ok(out)
}

/// Effective configuration recorded in outputs of the given invocation.
fn provenance(argv: &[OsString]) -> RunConfig {
    let root = Cli::command();
    let matches = parse(argv);
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    effective_config(root.find_subcommand(name).expect("parsed subcommand exists"), sub)
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(usage(anyhow!("--threads: must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("--threads: cannot start the worker pool")?;
    }
    Ok(())
}

fn write_report(report: &Report, config: &RunConfig, format: Format, path: Option<&Path>) -> Result<()> {
    let bytes = render(report, config, format)?;
    emit(&bytes, path).map_err(usage)?;
    if path.is_some() {
        println!("{}", report.summary);
    } else {
        eprintln!("{}", report.summary);
    }
    Ok(())
}

fn run(argv: Vec<OsString>) -> Result<ExitCode> {
    let argv = resolve_argv(argv)?;
    let cli = Cli::from_arg_matches(&parse(&argv))?;
    let io = cli.command.io().expect("replay was resolved").clone();
    init_threads(io.threads)?;

    if let Cmd::Figures(args) = &cli.command {
        std::fs::create_dir_all(&args.out_dir)
            .with_context(|| format!("--out-dir: cannot create {}", args.out_dir.display()))
            .map_err(usage)?;
        let ext = match io.format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        let format_name = io.format.to_possible_value().expect("not skipped").get_name().to_string();
        for mode in ["fig_eta", "fig_alpha", "density"] {
            // recorded as the equivalent nustar run so each file replays on its own
            let equivalent: Vec<OsString> =
                ["batchrsp", "nustar", "--mode", mode, "--format", &format_name].iter().map(Into::into).collect();
            let nustar = match Cli::from_arg_matches(&parse(&equivalent))?.command {
                Cmd::Nustar(n) => n,
                _ => unreachable!("parsed a nustar command"),
            };
            let report = commands::nustar(&nustar)?;
            let path = args.out_dir.join(format!("{mode}.{ext}"));
            write_report(&report, &provenance(&equivalent), io.format, Some(&path))?;
        }
        return Ok(ExitCode::SUCCESS);
    }

    let report = match &cli.command {
        Cmd::Coeffs(a) => commands::coeffs(a)?,
        Cmd::Bounds(a) => commands::bounds(a)?,
        Cmd::Simulate(a) => commands::simulate(a)?,
        Cmd::GameCor(a) => commands::game_cor(a)?,
        Cmd::GameSim(a) => commands::game_sim(a)?,
        Cmd::Optimize(a) => commands::optimize(a)?,
        Cmd::Scaling(a) => commands::scaling(a)?,
        Cmd::Nustar(a) => commands::nustar(a)?,
        Cmd::Figures(_) | Cmd::Replay(_) => bail!("handled above"),
    };
    write_report(&report, &provenance(&argv), io.format, io.output.as_deref())?;
    Ok(match &report.infeasible {
        Some(why) => {
            eprintln!("infeasible: {why}");
            ExitCode::from(3)
        }
        None => ExitCode::SUCCESS,
    })
}

mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctlcap::capacity::{
    asymptotic_capacity, cost_rate_dual, finite_horizon_capacity, kappa_min, kappa_min_stationary, CapacityPoint, DualConfig,
    OptConfig, SearchMode, StrategyParams, Tying,
};
use ctlcap::infostate::{brute_force_capacity, separated_capacity, DEFAULT_BELIEF_QUANTIZATION};
use ctlcap::io::{load_model, Model, ModelFile};
use ctlcap::sim::{check_consistency, simulate_closed_loop, Predictions};
use ctlcap::{Error, FiniteNposs, LqgSystem};
use serde_json::json;

use output::{fmt12, Emitter, Format};

const EXIT_VALIDATION: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_USAGE: u8 = 4;
const MONOTONE_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "ctlcap", version, about = "Control-coding capacity of LQG partially observable systems")]
struct Cli {
    /// Worker threads for parallel sweeps and searches.
    #[arg(long, global = true, env = "CTLCAP_JOBS")]
    jobs: Option<usize>,
    /// Write results to this file instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long)]
    model: PathBuf,
    /// Replace the horizon of a stationary model.
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TyingArg {
    Stationary,
    PerStage,
    Segmented,
}

#[derive(Args, Clone)]
struct OptArgs {
    #[arg(long, value_enum, default_value = "stationary")]
    tying: TyingArg,
    /// Free stages at each end for `--tying segmented`.
    #[arg(long, default_value_t = 5)]
    segment: usize,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 0x00c0_ffee)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Exhaustive grid over a scalar stationary gain with this resolution instead of BFGS.
    #[arg(long)]
    grid: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    grid_bound: f64,
}

impl OptArgs {
    fn config(&self) -> OptConfig {
        OptConfig {
            tying: match self.tying {
                TyingArg::Stationary => Tying::Stationary,
                TyingArg::PerStage => Tying::PerStage,
                TyingArg::Segmented => Tying::Segmented {
                    head: self.segment,
                    tail: self.segment,
                },
            },
            restarts: self.restarts,
            seed: self.seed,
            max_iter: self.max_iter,
            search: match self.grid {
                Some(resolution) => SearchMode::Grid {
                    resolution,
                    bound: self.grid_bound,
                },
                None => SearchMode::Gradient,
            },
            ..OptConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file and print the validation report.
    Validate {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Finite-horizon capacity at one budget.
    Capacity {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_negative_numbers = true)]
        kappa: f64,
        #[command(flatten)]
        opt: OptArgs,
    },
    /// Capacity over a grid of budgets.
    Curve {
        #[command(flatten)]
        model: ModelArgs,
        /// Smallest budget; defaults to the zero-rate minimum.
        #[arg(long, allow_negative_numbers = true)]
        kappa_from: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        kappa_to: f64,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long)]
        log_spacing: bool,
        #[command(flatten)]
        opt: OptArgs,
    },
    /// Infinite-horizon capacity of a stationary model.
    Asymptotic {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_negative_numbers = true)]
        kappa: f64,
        #[command(flatten)]
        opt: OptArgs,
    },
    /// Smallest budget that sustains a rate.
    Dual {
        #[command(flatten)]
        model: ModelArgs,
        /// Target rate in bits per stage.
        #[arg(long, allow_negative_numbers = true)]
        rate: f64,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[command(flatten)]
        opt: OptArgs,
    },
    /// Zero-rate minimum average cost.
    KappaMin {
        #[command(flatten)]
        model: ModelArgs,
        /// Report the long-run average instead of the finite-horizon value.
        #[arg(long)]
        asymptotic: bool,
    },
    /// Monte Carlo run of the optimal strategy at a budget, checked against predictions.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Budget for the strategy; omitted means zero signalling.
        #[arg(long, allow_negative_numbers = true)]
        kappa: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        sim_seed: u64,
        #[command(flatten)]
        opt: OptArgs,
    },
    /// Exhaustive full-history and belief-based capacities of a finite model.
    NpossCapacity {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_negative_numbers = true)]
        kappa: f64,
        #[arg(long, default_value_t = 0.05)]
        grid: f64,
        #[arg(long, default_value_t = DEFAULT_BELIEF_QUANTIZATION)]
        quantization: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Capacity { .. } => "capacity",
            Command::Curve { .. } => "curve",
            Command::Asymptotic { .. } => "asymptotic",
            Command::Dual { .. } => "dual",
            Command::KappaMin { .. } => "kappa-min",
            Command::Simulate { .. } => "simulate",
            Command::NpossCapacity { .. } => "nposs-capacity",
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Validation(_) | Error::Format(_) | Error::ImpossibleObservation { .. } => EXIT_VALIDATION,
            Error::Infeasible { .. } | Error::Unachievable { .. } => EXIT_INFEASIBLE,
            e if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn load(args: &ModelArgs) -> Result<ModelFile, Failure> {
    let file = load_model(&args.model)?;
    match args.horizon {
        Some(n) => Ok(file.with_horizon(n)?),
        None => Ok(file),
    }
}

fn load_lqg(args: &ModelArgs) -> Result<(bool, LqgSystem), Failure> {
    let file = load(args)?;
    match file.model {
        Model::Lqg(s) => {
            s.ensure_valid()?;
            Ok((file.stationary, s))
        }
        Model::Nposs(_) => Err(Failure::usage("this subcommand needs an lqg model")),
    }
}

fn load_nposs(args: &ModelArgs) -> Result<FiniteNposs, Failure> {
    match load(args)?.model {
        Model::Nposs(m) => {
            m.ensure_valid()?;
            Ok(m)
        }
        Model::Lqg(_) => Err(Failure::usage("this subcommand needs an nposs model")),
    }
}

fn check_kappa(kappa: f64) -> Outcome {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Failure::usage(format!("--kappa must be a finite nonnegative number, got {kappa}")));
    }
    Ok(())
}

fn curve_row(p: &CapacityPoint) -> Vec<String> {
    vec![
        fmt12(p.kappa),
        fmt12(p.value_bits),
        fmt12(p.cost_achieved),
        p.optimizer_info.converged.to_string(),
        p.optimizer_info.iterations.to_string(),
    ]
}

const CURVE_HEADER: [&str; 5] = ["kappa", "capacity_bits", "cost_achieved", "converged", "iterations"];

fn kappa_grid(from: f64, to: f64, points: usize, log: bool) -> Result<Vec<f64>, Failure> {
    if points < 2 {
        return Err(Failure::usage("--points must be at least 2"));
    }
    if !(to > from) {
        return Err(Failure::usage(format!("empty budget range [{from}, {to}]")));
    }
    let last = (points - 1) as f64;
    if log {
        if from <= 0.0 {
            return Err(Failure::usage("--log-spacing needs a positive lower budget"));
        }
        let (a, b) = (from.ln(), to.ln());
        Ok((0..points).map(|i| if i + 1 == points { to } else { (a + (b - a) * i as f64 / last).exp() }).collect())
    } else {
        Ok((0..points).map(|i| if i + 1 == points { to } else { from + (to - from) * i as f64 / last }).collect())
    }
}

/// Fails with the numerical exit code if the capacity drops between consecutive budgets.
fn check_monotone(points: &[(f64, f64)]) -> Outcome {
    match points.windows(2).find(|w| w[1].1 < w[0].1 - MONOTONE_TOL) {
        Some(w) => Err(Failure {
            code: EXIT_NUMERICAL,
            message: format!(
                "capacity decreases from {} at kappa {} to {} at kappa {}",
                fmt12(w[0].1),
                fmt12(w[0].0),
                fmt12(w[1].1),
                fmt12(w[1].0)
            ),
        }),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Outcome {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::usage("--jobs must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    let tabular = matches!(cli.command, Command::Capacity { .. } | Command::Curve { .. });
    if cli.format == Some(Format::Csv) && !tabular {
        return Err(Failure::usage("--format csv is only available for capacity and curve"));
    }
    let mut out = Emitter::new(cli.output.as_deref(), cli.format)?;
    match cli.command {
        Command::Validate { model } => {
            let file = load(&model)?;
            let report = match &file.model {
                Model::Lqg(s) => s.validate(),
                Model::Nposs(m) => m.validate(),
            };
            out.text(&format!("{report}"))?;
            if !report.is_empty() {
                return Err(Failure {
                    code: EXIT_VALIDATION,
                    message: format!("{} violation(s)", report.violations.len()),
                });
            }
        }
        Command::Capacity { model, kappa, opt } => {
            check_kappa(kappa)?;
            let (_, sys) = load_lqg(&model)?;
            let point = finite_horizon_capacity(&sys, kappa, &opt.config())?;
            match out.format_or(Format::Json) {
                Format::Json => out.json(&point)?,
                Format::Csv => out.csv(&CURVE_HEADER, &[curve_row(&point)])?,
            }
        }
        Command::Curve {
            model,
            kappa_from,
            kappa_to,
            points,
            log_spacing,
            opt,
        } => {
            let (_, sys) = load_lqg(&model)?;
            let from = match kappa_from {
                Some(k) => {
                    check_kappa(k)?;
                    k
                }
                None => kappa_min(&sys)?,
            };
            check_kappa(kappa_to)?;
            let grid = kappa_grid(from, kappa_to, points, log_spacing)?;
            let cfg = opt.config();
            let pts = {
                use rayon::prelude::*;
                grid.par_iter()
                    .map(|&k| finite_horizon_capacity(&sys, k, &cfg))
                    .collect::<Result<Vec<_>, _>>()?
            };
            match out.format_or(Format::Csv) {
                Format::Csv => out.csv(&CURVE_HEADER, &pts.iter().map(curve_row).collect::<Vec<_>>())?,
                Format::Json => out.json(&pts)?,
            }
            let pairs: Vec<(f64, f64)> = pts.iter().map(|p| (p.kappa, p.value_bits)).collect();
            check_monotone(&pairs)?;
        }
        Command::Asymptotic { model, kappa, opt } => {
            check_kappa(kappa)?;
            let (stationary, sys) = load_lqg(&model)?;
            if !stationary && !sys.is_time_invariant() {
                return Err(Failure::usage("asymptotic capacity needs a stationary model"));
            }
            out.json(&asymptotic_capacity(&sys.stages[0], kappa, &opt.config())?)?;
        }
        Command::Dual { model, rate, tol, opt } => {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(Failure::usage(format!("--rate must be a finite nonnegative number, got {rate}")));
            }
            let (_, sys) = load_lqg(&model)?;
            let cfg = DualConfig {
                tol,
                opt: opt.config(),
                ..DualConfig::default()
            };
            out.json(&cost_rate_dual(&sys, rate, &cfg)?)?;
        }
        Command::KappaMin { model, asymptotic } => {
            let (_, sys) = load_lqg(&model)?;
            let value = if asymptotic {
                if !sys.is_time_invariant() {
                    return Err(Failure::usage("--asymptotic needs a stationary model"));
                }
                kappa_min_stationary(&sys.stages[0])?
            } else {
                kappa_min(&sys)?
            };
            out.json(&json!({ "kappa_min": value, "horizon": sys.horizon(), "asymptotic": asymptotic }))?;
        }
        Command::Simulate {
            model,
            kappa,
            trials,
            sim_seed,
            opt,
        } => {
            let (_, sys) = load_lqg(&model)?;
            let strategy = match kappa {
                Some(k) => {
                    check_kappa(k)?;
                    finite_horizon_capacity(&sys, k, &opt.config())?.strategy
                }
                None => StrategyParams::zero_rate(&sys)?,
            };
            let stats = simulate_closed_loop(&sys, &strategy, trials, sim_seed)?;
            let pred = Predictions::for_strategy(&sys, &strategy)?;
            let report = check_consistency(&stats, &pred);
            out.json(&json!({ "stats": stats, "predictions": pred, "consistency": report }))?;
        }
        Command::NpossCapacity {
            model,
            kappa,
            grid,
            quantization,
        } => {
            check_kappa(kappa)?;
            let m = load_nposs(&model)?;
            let full = brute_force_capacity(&m, kappa, grid)?;
            let sep = separated_capacity(&m, kappa, grid, quantization)?;
            out.json(&json!({
                "kappa": kappa,
                "full_history_nats": full.value_nats,
                "separated_nats": sep.value_nats,
                "difference_nats": full.value_nats - sep.value_nats,
                "full_history": full,
                "separated": sep,
            }))?;
        }
    }
    out.finish()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("ctlcap {name}: error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

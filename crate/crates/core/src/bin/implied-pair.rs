use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use implied_pair::binomial::{binomial_price, implied_rho_eps, BinomialModel};
use implied_pair::calibrate::{implied_pair, term_structure_triple, OptionQuote, SolverConfig};
use implied_pair::mc::{averaging_check_with, McOptions, PathSpec};
use implied_pair::mixture::{quote_pair, MixtureModel, PRESET_NAMES};
use implied_pair::surface::{implied_surface, parse_range, smile_slice, SurfaceCell};
use implied_pair::{bs_price, BsInputs, Error, OptionKind};

const EXIT_INVALID: u8 = 2;
const EXIT_FAILURE: u8 = 3;
const EXIT_NO_ROOT: u8 = 4;
const EXIT_MULTIPLE_ROOTS: u8 = 5;
const EXIT_Z_EXCEEDED: u8 = 6;

#[derive(Parser)]
#[command(name = "implied-pair", version, about = "Jointly implied volatility and average forward rate")]
struct Cli {
    /// Worker threads for sweeps and Monte Carlo (default: all cores).
    #[arg(long, global = true, env = "IMPLIED_PAIR_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price one option under Black–Scholes or a mixture model.
    Price(PriceArgs),
    /// Solve for (sigma_imp, rho_imp) from two quotes, or a term structure from three.
    Calibrate(CalibrateArgs),
    /// sigma_imp and rho_imp along a range of k1 at fixed k2.
    Smile(SmileArgs),
    /// sigma_imp and rho_imp over a (k1, k2) grid.
    Surface(SurfaceArgs),
    /// Binomial lattice pricing and implied (rho, eps).
    #[command(subcommand)]
    Binomial(BinomialCommand),
    /// Compare Monte Carlo under a piecewise-constant curve with Black–Scholes at averaged parameters.
    #[command(name = "verify-averaging")]
    VerifyAveraging(AveragingArgs),
}

#[derive(Args)]
struct ModelSource {
    /// Built-in mixture (high-rate or low-rate).
    #[arg(long, conflicts_with = "model")]
    preset: Option<String>,
    /// Mixture model JSON: {"spot", "tau", "states": [{"p", "sigma", "r"}]}.
    #[arg(long)]
    model: Option<PathBuf>,
}

impl ModelSource {
    fn load(&self) -> Result<Option<MixtureModel>, Error> {
        match (&self.preset, &self.model) {
            (Some(name), _) => MixtureModel::preset(name).map(Some),
            (None, Some(path)) => MixtureModel::from_json_str(&read_file(path)?).map(Some),
            (None, None) => Ok(None),
        }
    }

    fn require(&self) -> Result<MixtureModel, Error> {
        self.load()?
            .ok_or_else(|| Error::InvalidInput(format!("need --model or --preset ({})", PRESET_NAMES.join(" | "))))
    }
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = SolverConfig::default().sigma_bracket.0)]
    sigma_min: f64,
    #[arg(long, default_value_t = SolverConfig::default().sigma_bracket.1)]
    sigma_max: f64,
    #[arg(long, default_value_t = SolverConfig::default().rho_bracket.0, allow_negative_numbers = true)]
    rho_min: f64,
    #[arg(long, default_value_t = SolverConfig::default().rho_bracket.1, allow_negative_numbers = true)]
    rho_max: f64,
    /// Absolute price tolerance.
    #[arg(long, default_value_t = SolverConfig::default().price_tol)]
    tol: f64,
    #[arg(long, default_value_t = SolverConfig::default().max_iter)]
    max_iter: usize,
    /// Uniform points in the rate scan.
    #[arg(long, default_value_t = SolverConfig::default().outer_scan_points)]
    scan_points: usize,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            sigma_bracket: (self.sigma_min, self.sigma_max),
            rho_bracket: (self.rho_min, self.rho_max),
            price_tol: self.tol,
            max_iter: self.max_iter,
            outer_scan_points: self.scan_points,
        }
    }
}

#[derive(Args)]
struct PriceArgs {
    #[arg(long, default_value = "call")]
    kind: OptionKind,
    #[arg(long)]
    strike: f64,
    #[command(flatten)]
    source: ModelSource,
    #[arg(long, required_unless_present_any = ["preset", "model"])]
    spot: Option<f64>,
    #[arg(long, required_unless_present_any = ["preset", "model"])]
    tau: Option<f64>,
    #[arg(long, required_unless_present_any = ["preset", "model"])]
    sigma: Option<f64>,
    /// Average forward rate over the option's life.
    #[arg(long, required_unless_present_any = ["preset", "model"], allow_negative_numbers = true)]
    rho: Option<f64>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// JSON file {"spot", "quotes": [{"kind", "strike", "tau", "price"}, ...]} with two quotes,
    /// or three for a term structure (short expiry first).
    #[arg(long, conflicts_with_all = ["preset", "model", "p1", "p2"])]
    quotes: Option<PathBuf>,
    #[command(flatten)]
    source: ModelSource,
    #[arg(long, default_value = "call")]
    kind: OptionKind,
    #[arg(long, required_unless_present = "quotes")]
    k1: Option<f64>,
    #[arg(long, required_unless_present = "quotes")]
    k2: Option<f64>,
    /// Market price at k1 (omit to generate quotes from a model).
    #[arg(long, requires = "p2")]
    p1: Option<f64>,
    #[arg(long, requires = "p1")]
    p2: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    spot: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct SmileArgs {
    #[command(flatten)]
    source: ModelSource,
    #[arg(long)]
    k2: f64,
    /// start:stop:step, inclusive.
    #[arg(long, default_value = "0.7:1.25:0.05")]
    k1_range: String,
    /// CSV destination; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct SurfaceArgs {
    #[command(flatten)]
    source: ModelSource,
    /// Common start:stop:step for both strike axes.
    #[arg(long, default_value = "0.7:1.5:0.05")]
    range: String,
    /// Overrides --range for the k1 axis.
    #[arg(long)]
    k1_range: Option<String>,
    /// Overrides --range for the k2 axis.
    #[arg(long)]
    k2_range: Option<String>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Subcommand)]
enum BinomialCommand {
    /// Lattice price of a European option.
    Price {
        /// Gross risk-free return per period.
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        periods: usize,
        #[arg(long)]
        strike: f64,
        #[arg(long, default_value_t = 1.0)]
        spot: f64,
        #[arg(long, default_value = "call")]
        kind: OptionKind,
    },
    /// Implied (rho, eps) from two call prices.
    Implied {
        #[arg(long)]
        k1: f64,
        #[arg(long)]
        p1: f64,
        #[arg(long)]
        k2: f64,
        #[arg(long)]
        p2: f64,
        #[arg(long)]
        periods: usize,
        #[arg(long, default_value_t = 1.0)]
        spot: f64,
        #[arg(long, default_value_t = SolverConfig::for_binomial().rho_bracket.0)]
        rho_min: f64,
        #[arg(long, default_value_t = SolverConfig::for_binomial().rho_bracket.1)]
        rho_max: f64,
        #[arg(long, default_value_t = SolverConfig::for_binomial().sigma_bracket.0)]
        eps_min: f64,
        #[arg(long, default_value_t = SolverConfig::for_binomial().sigma_bracket.1)]
        eps_max: f64,
        #[arg(long, default_value_t = SolverConfig::default().price_tol)]
        tol: f64,
        #[arg(long, default_value_t = SolverConfig::default().outer_scan_points)]
        scan_points: usize,
    },
}

#[derive(Args)]
struct AveragingArgs {
    /// PathSpec JSON: {"spot", "segments": [{"dt", "sigma", "r"}]}.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    strike: f64,
    #[arg(long, default_value = "call")]
    kind: OptionKind,
    #[arg(long, default_value_t = 1_000_000)]
    paths: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 4.0)]
    z_max: f64,
    #[arg(long)]
    antithetic: bool,
}

#[derive(Deserialize)]
struct QuotesFile {
    #[serde(default = "unit_spot")]
    spot: f64,
    quotes: Vec<OptionQuote>,
}

fn unit_spot() -> f64 {
    1.0
}

/// Failure carrying its exit code; `payload` goes to stdout as JSON.
struct Failure {
    code: u8,
    message: String,
    payload: Option<serde_json::Value>,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, payload) = match &e {
            Error::InvalidInput(_)
            | Error::IdenticalStrikes
            | Error::Parse(_)
            | Error::TooManyPeriods { .. }
            | Error::DegenerateInputs(_) => (EXIT_INVALID, None),
            Error::NoRoot { scanned, valid } => {
                (EXIT_NO_ROOT, Some(json!({"status": "no_root", "scanned": scanned, "valid": valid})))
            }
            Error::MultipleRoots { roots } => {
                (EXIT_MULTIPLE_ROOTS, Some(json!({"status": "multiple_roots", "roots": roots})))
            }
            _ => (EXIT_FAILURE, None),
        };
        Failure { code, message: e.to_string(), payload }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

type CmdResult = Result<(), Failure>;

fn read_file(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) -> CmdResult {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(Error::from)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_price(args: PriceArgs) -> CmdResult {
    let price = match args.source.load()? {
        Some(model) => model.price(args.kind, args.strike)?,
        None => {
            // clap guarantees these without a model
            let inputs = BsInputs::new(
                args.spot.unwrap_or_default(),
                args.strike,
                args.tau.unwrap_or_default(),
                args.sigma.unwrap_or_default(),
                args.rho.unwrap_or_default(),
            )?;
            bs_price(args.kind, &inputs)?
        }
    };
    print_json(&json!({"kind": args.kind, "strike": args.strike, "price": price}))
}

fn cmd_calibrate(args: CalibrateArgs) -> CmdResult {
    let cfg = args.solver.config();
    let (spot, quotes) = if let Some(path) = &args.quotes {
        let file: QuotesFile = serde_json::from_str(&read_file(path)?).map_err(Error::from)?;
        (file.spot, file.quotes)
    } else {
        let (k1, k2) = (args.k1.unwrap_or_default(), args.k2.unwrap_or_default());
        match (args.p1, args.p2) {
            (Some(p1), Some(p2)) => (
                args.spot,
                vec![OptionQuote::new(args.kind, k1, args.tau, p1)?, OptionQuote::new(args.kind, k2, args.tau, p2)?],
            ),
            _ => {
                let model = args.source.require()?;
                let (q1, q2) = quote_pair(&model, args.kind, k1, k2)?;
                (model.spot(), vec![q1, q2])
            }
        }
    };
    match quotes.as_slice() {
        [q1, q2] => {
            let pair = implied_pair(q1, q2, spot, &cfg)?;
            print_json(&pair)
        }
        [q1, q2, q3] => {
            let fit = term_structure_triple(q1, q2, q3, spot, &cfg)?;
            print_json(&fit)
        }
        other => Err(Error::InvalidInput(format!("expected 2 or 3 quotes, got {}", other.len())).into()),
    }
}

/// CSV goes to `-o` with the summary on stdout, or to stdout with the
/// summary on stderr.
fn emit_sweep(cells: &[SurfaceCell], output: Option<&Path>, mut summary: serde_json::Value) -> CmdResult {
    match output {
        Some(path) => {
            let file = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            implied_pair::surface::write_csv(cells, BufWriter::new(file))?;
            summary["output"] = json!(path.display().to_string());
            print_json(&summary)
        }
        None => {
            implied_pair::surface::write_csv(cells, io::stdout().lock())?;
            eprintln!("{summary}");
            Ok(())
        }
    }
}

fn cmd_smile(args: SmileArgs) -> CmdResult {
    let model = args.source.require()?;
    let axis = parse_range(&args.k1_range)?;
    let slice = smile_slice(&model, &axis, args.k2, &args.solver.config())?;
    let summary = json!({
        "cells": slice.points.len(),
        "converged": slice.converged_count(),
        "sigma_range": slice.sigma_range(),
    });
    emit_sweep(&slice.points, args.output.as_deref(), summary)
}

fn cmd_surface(args: SurfaceArgs) -> CmdResult {
    let model = args.source.require()?;
    let k1_axis = parse_range(args.k1_range.as_deref().unwrap_or(&args.range))?;
    let k2_axis = parse_range(args.k2_range.as_deref().unwrap_or(&args.range))?;
    let grid = implied_surface(&model, &k1_axis, &k2_axis, &args.solver.config())?;
    let summary = json!({
        "cells": grid.cells.len(),
        "computed": grid.computed_count(),
        "converged": grid.converged_count(),
    });
    emit_sweep(&grid.cells, args.output.as_deref(), summary)
}

fn cmd_binomial(cmd: BinomialCommand) -> CmdResult {
    match cmd {
        BinomialCommand::Price { rho, eps, periods, strike, spot, kind } => {
            let model = BinomialModel::new(rho, eps, periods, spot)?;
            let price = binomial_price(&model, kind, strike)?;
            print_json(&json!({"kind": kind, "strike": strike, "price": price}))
        }
        BinomialCommand::Implied {
            k1,
            p1,
            k2,
            p2,
            periods,
            spot,
            rho_min,
            rho_max,
            eps_min,
            eps_max,
            tol,
            scan_points,
        } => {
            let cfg = SolverConfig {
                sigma_bracket: (eps_min, eps_max),
                rho_bracket: (rho_min, rho_max),
                price_tol: tol,
                outer_scan_points: scan_points,
                ..SolverConfig::for_binomial()
            };
            let fit = implied_rho_eps(p1, p2, k1, k2, spot, periods, &cfg)?;
            print_json(&fit)
        }
    }
}

fn cmd_verify_averaging(args: AveragingArgs) -> CmdResult {
    let spec = PathSpec::from_json_str(&read_file(&args.spec)?)?;
    let options = McOptions { antithetic: args.antithetic };
    let report = averaging_check_with(&spec, args.kind, args.strike, args.paths, args.seed, options)?;
    print_json(&json!({
        "mc_mean": report.mc.mean,
        "std_error": report.mc.std_error,
        "analytic": report.analytic,
        "z_score": report.z_score,
        "n_paths": report.mc.n_paths,
        "seed": report.mc.seed,
        "z_max": args.z_max,
    }))?;
    if report.z_score.abs() > args.z_max {
        return Err(Failure {
            code: EXIT_Z_EXCEEDED,
            message: format!("|z| = {} exceeds {}", report.z_score.abs(), args.z_max),
            payload: None,
        });
    }
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Price(a) => cmd_price(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Smile(a) => cmd_smile(a),
        Command::Surface(a) => cmd_surface(a),
        Command::Binomial(c) => cmd_binomial(c),
        Command::VerifyAveraging(a) => cmd_verify_averaging(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if let Some(payload) = &f.payload {
                let _ = print_json(payload);
            }
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

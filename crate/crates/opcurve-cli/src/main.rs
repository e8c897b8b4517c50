//! `opcurve` binary: fit, track, cusum, simulate, calibrate.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use opcurve::cpm::{CpmConfig, Standard};
use opcurve::lccusum::run_lc_cusum;
use opcurve::model::WeibullRegParams;
use opcurve::sim::{
    calibrate_h, run_oc, simulate_stream, CalibrationOptions, Detector, Mode, ScenarioSpec,
};
use opcurve::slca::run_slca;
use opcurve::wee::{fit_wee, FitResult, SolverOptions};

use opcurve_cli::config::{
    pick, resolve_out_dir, DetectorChoice, FileConfig, MetricChoice, ModeChoice,
};
use opcurve_cli::ingest::{ingest_cases, write_cases};
use opcurve_cli::output::{
    calibration_report, cusum_rows, fit_report, oc_report, render_cusum_csv, render_track_csv,
    render_track_svg, to_json, FailureReport,
};
use opcurve_cli::UsageError;

/// Smoothing for standard-cohort fits: small enough that the weights are
/// uniform to machine precision, making the fit an ordinary MLE.
const STANDARD_FIT_LAMBDA: f64 = 1e-8;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

#[derive(Parser)]
#[command(
    name = "opcurve",
    version,
    about = "Weighted Weibull monitoring of operative-time performance",
    long_about = "Fits weighted Weibull regressions to operative-time streams, tracks a \
trainee's comparative probability metric against a standard, runs the competence CUSUM, \
and estimates detector operating characteristics by simulation.\n\nSettings resolve as: \
command-line flag, then config file (--config, flat TOML), then environment \
(OPCURVE_OUT_DIR), then built-in default."
)]
struct Cli {
    /// Config file (flat TOML); flags override file values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory for output files (default: $OPCURVE_OUT_DIR or ".")
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the weighted model to a case stream; write estimates as JSON
    Fit(FitArgs),
    /// Sequentially assess a stream against a standard; write the series as CSV
    Track(TrackArgs),
    /// Run the competence CUSUM against a standard; write the trace as CSV
    Cusum(CusumArgs),
    /// Estimate detector false-alarm and detection probabilities by simulation
    Simulate(SimulateArgs),
    /// Search the signal threshold achieving a target false-alarm range
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct StandardArgs {
    /// Standard-cohort scale parameter (with --standard-eta/--standard-beta)
    #[arg(long, value_name = "G")]
    standard_gamma: Option<f64>,

    /// Standard-cohort shape parameter
    #[arg(long, value_name = "E")]
    standard_eta: Option<f64>,

    /// Standard-cohort regression coefficients, comma-separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, value_name = "B1,..")]
    standard_beta: Option<Vec<f64>>,

    /// Standard-cohort case CSV, fit unweighted instead of literals
    #[arg(long, value_name = "FILE")]
    standard_csv: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Case CSV with header case,y,x1,...,xd
    cases: PathBuf,

    /// Smoothing parameter in (0, 1]
    #[arg(long)]
    lambda: Option<f64>,

    /// Interval miss probability (default 0.05)
    #[arg(long)]
    alpha: Option<f64>,

    /// Output file (default: <out-dir>/fit.json)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrackArgs {
    /// Case CSV with header case,y,x1,...,xd
    cases: PathBuf,

    /// Smoothing parameter in (0, 1]
    #[arg(long)]
    lambda: Option<f64>,

    /// Clinical margin ε > 0
    #[arg(long)]
    epsilon: Option<f64>,

    /// Comparison metric: "pa" (agreement) or "pn" (noninferiority; default)
    #[arg(long)]
    metric: Option<String>,

    /// Decision cutoff on the probability metric (default 0.95)
    #[arg(long)]
    cutoff: Option<f64>,

    /// Interval miss probability (default 0.05)
    #[arg(long)]
    alpha: Option<f64>,

    /// Covariate vector for evaluation, comma-separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, value_name = "X1,..")]
    x_eval: Option<Vec<f64>>,

    /// First case index with enough history to fit (default 10)
    #[arg(long)]
    n0: Option<usize>,

    #[command(flatten)]
    standard: StandardArgs,

    /// Also write an SVG plot of the three series
    #[arg(long)]
    svg: bool,

    /// Output file (default: <out-dir>/track.csv)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CusumArgs {
    /// Case CSV with header case,y,x1,...,xd
    cases: PathBuf,

    /// Clinical margin ε > 0
    #[arg(long)]
    epsilon: Option<f64>,

    /// Signal barrier h > 0
    #[arg(long)]
    h: Option<f64>,

    /// Covariate vector the residuals standardize against, comma-separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, value_name = "X1,..")]
    x_eval: Option<Vec<f64>>,

    #[command(flatten)]
    standard: StandardArgs,

    /// Output file (default: <out-dir>/cusum.csv)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Stream length per replication (default 100)
    #[arg(long)]
    t: Option<usize>,

    /// Smoothing parameter for the tracked fits (default 0.05)
    #[arg(long)]
    lambda: Option<f64>,

    /// Clinical margin (default 0.2)
    #[arg(long)]
    epsilon: Option<f64>,

    /// Evaluation covariates, comma-separated (default 27)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, value_name = "X1,..")]
    x_eval: Option<Vec<f64>>,

    /// Last case of the learning phase (default 30)
    #[arg(long)]
    change_index: Option<usize>,
}

impl ScenarioArgs {
    fn build(&self, cfg: &FileConfig) -> Result<ScenarioSpec> {
        let mut spec = ScenarioSpec::benchmark();
        if let Some(t) = pick(self.t, cfg.t) {
            spec.t = t;
        }
        if let Some(lambda) = pick(self.lambda, cfg.lambda) {
            spec.lambda = lambda;
        }
        if let Some(epsilon) = pick(self.epsilon, cfg.epsilon) {
            spec.epsilon = epsilon;
        }
        if let Some(x_eval) = pick(self.x_eval.clone(), cfg.x_eval.clone()) {
            spec.x_eval = x_eval;
        }
        if let Some(ci) = pick(self.change_index, cfg.change_index) {
            spec.change_index = ci;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Detector to evaluate: "slca" or "lccusum"
    #[arg(long)]
    detector: Option<String>,

    /// Signal threshold (CPM cutoff for slca, barrier for lccusum)
    #[arg(long)]
    h: Option<f64>,

    /// Replications (default 2000)
    #[arg(long)]
    reps: Option<usize>,

    /// Master seed; replication r uses seed XOR r (default 1729)
    #[arg(long)]
    seed: Option<u64>,

    /// Detection windows after the change, comma-separated (default 20,50,70)
    #[arg(long, value_delimiter = ',', value_name = "W1,..")]
    windows: Option<Vec<usize>>,

    #[command(flatten)]
    scenario: ScenarioArgs,

    /// Also write one simulated case stream to this CSV
    #[arg(long, value_name = "FILE")]
    dump_stream: Option<PathBuf>,

    /// Trajectory for --dump-stream: "learning" (default) or "inadequate"
    #[arg(long)]
    dump_mode: Option<String>,

    /// Output file (default: <out-dir>/simulate.json)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Detector to calibrate: "slca" or "lccusum"
    #[arg(long)]
    detector: Option<String>,

    /// Acceptable false-alarm range, e.g. 0.03,0.07 (default)
    #[arg(long, value_delimiter = ',', value_name = "LO,HI")]
    target: Option<Vec<f64>>,

    /// Replications per threshold evaluation (default 2000)
    #[arg(long)]
    reps: Option<usize>,

    /// Master seed, shared across evaluations (default 1729)
    #[arg(long)]
    seed: Option<u64>,

    /// Lower end of the threshold search range
    #[arg(long)]
    h_lo: Option<f64>,

    /// Upper end of the threshold search range
    #[arg(long)]
    h_hi: Option<f64>,

    #[command(flatten)]
    scenario: ScenarioArgs,

    /// Output file (default: <out-dir>/calibrate.json)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(opcurve_cli::exit_code_for(&err));
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    let out_dir = resolve_out_dir(cli.out_dir, cfg.out_dir.clone());
    match cli.command {
        Command::Fit(args) => cmd_fit(&cfg, args, &out_dir),
        Command::Track(args) => cmd_track(&cfg, args, &out_dir),
        Command::Cusum(args) => cmd_cusum(&cfg, args, &out_dir),
        Command::Simulate(args) => cmd_simulate(&cfg, args, &out_dir),
        Command::Calibrate(args) => cmd_calibrate(&cfg, args, &out_dir),
    }
}

/// Default output path unless --out overrides it.
fn out_path(out_dir: &Path, explicit: Option<PathBuf>, default_name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| out_dir.join(default_name))
}

fn write_output(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// The standard model: literal parameters, or a cohort file fit unweighted.
enum StandardModel {
    Literal(WeibullRegParams),
    Fitted(Box<FitResult>),
}

impl StandardModel {
    fn params(&self) -> &WeibullRegParams {
        match self {
            StandardModel::Literal(p) => p,
            StandardModel::Fitted(f) => &f.params,
        }
    }
}

fn resolve_standard(args: &StandardArgs, cfg: &FileConfig) -> Result<StandardModel> {
    let csv = pick(args.standard_csv.clone(), cfg.standard_csv.clone());
    if let Some(path) = csv {
        let cases = ingest_cases(&path)?;
        let fit = fit_wee(&cases, STANDARD_FIT_LAMBDA, None, &SolverOptions::default())
            .with_context(|| format!("fitting standard cohort {}", path.display()))?;
        if !fit.converged {
            return Err(anyhow!(opcurve::Error::Numerical(format!(
                "standard-cohort fit did not converge after {} iterations (score norm {:.3e})",
                fit.iterations, fit.score_norm
            ))));
        }
        return Ok(StandardModel::Fitted(Box::new(fit)));
    }
    let gamma = pick(args.standard_gamma, cfg.standard_gamma);
    let eta = pick(args.standard_eta, cfg.standard_eta);
    let beta = pick(args.standard_beta.clone(), cfg.standard_beta.clone());
    match (gamma, eta, beta) {
        (Some(g), Some(e), Some(b)) => Ok(StandardModel::Literal(WeibullRegParams::new(g, e, b)?)),
        _ => Err(usage(
            "standard model required: give --standard-gamma, --standard-eta and \
             --standard-beta (or the config keys), or --standard-csv",
        )),
    }
}

fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| usage(format!("{what} is required (flag --{what} or config key {what})")))
}

fn cmd_fit(cfg: &FileConfig, args: FitArgs, out_dir: &Path) -> Result<()> {
    let lambda = require(pick(args.lambda, cfg.lambda), "lambda")?;
    let alpha = pick(args.alpha, cfg.alpha).unwrap_or(0.05);
    let cases = ingest_cases(&args.cases)?;
    let path = out_path(out_dir, args.out, "fit.json");

    match fit_wee(&cases, lambda, None, &SolverOptions::default()) {
        Ok(fit) if fit.converged => {
            write_output(&path, &to_json(&fit_report(&fit, alpha)?))
        }
        Ok(fit) => {
            write_output(&path, &to_json(&fit_report(&fit, alpha)?))?;
            Err(anyhow!(opcurve::Error::Numerical(format!(
                "fit did not converge after {} iterations (score norm {:.3e})",
                fit.iterations, fit.score_norm
            ))))
        }
        Err(e @ opcurve::Error::Numerical(_)) => {
            let report = FailureReport { converged: false, error: e.to_string() };
            write_output(&path, &to_json(&report))?;
            Err(e.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_track(cfg: &FileConfig, args: TrackArgs, out_dir: &Path) -> Result<()> {
    let lambda = require(pick(args.lambda, cfg.lambda), "lambda")?;
    let epsilon = require(pick(args.epsilon, cfg.epsilon), "epsilon")?;
    let metric = MetricChoice::parse(
        pick(args.metric.clone(), cfg.metric.clone())
            .as_deref()
            .unwrap_or("pn"),
    )?;
    let cutoff = pick(args.cutoff, cfg.cutoff).unwrap_or(0.95);
    let alpha = pick(args.alpha, cfg.alpha).unwrap_or(0.05);
    let x_eval = require(pick(args.x_eval.clone(), cfg.x_eval.clone()), "x_eval")?;
    let n0 = pick(args.n0, cfg.n0).unwrap_or(10);

    let standard = resolve_standard(&args.standard, cfg)?;
    let cases = ingest_cases(&args.cases)?;
    let cpm_cfg = match metric {
        MetricChoice::Pa => CpmConfig::pa(epsilon),
        MetricChoice::Pn => CpmConfig::pn(epsilon),
    }?
    .with_cutoff(cutoff)?
    .with_alpha(alpha)?;

    let series = match &standard {
        StandardModel::Literal(p) => {
            run_slca(&cases, Standard::Known(p), lambda, &cpm_cfg, &x_eval, n0)?
        }
        StandardModel::Fitted(f) => {
            run_slca(&cases, Standard::Estimated(f), lambda, &cpm_cfg, &x_eval, n0)?
        }
    };

    let path = out_path(out_dir, args.out, "track.csv");
    write_output(&path, &render_track_csv(&series))?;

    if args.svg {
        let mu_s = standard.params().rmot(&x_eval)?;
        let svg_path = path.with_extension("svg");
        write_output(&svg_path, &render_track_svg(&series, mu_s))?;
    }

    match series.expertise_time {
        Some(i) => println!("expertise time: case {i}"),
        None => println!("expertise time: not reached"),
    }
    if series.last_fit_failed {
        eprintln!("warning: the fit at the final case failed; its row has empty cells");
    }
    Ok(())
}

fn cmd_cusum(cfg: &FileConfig, args: CusumArgs, out_dir: &Path) -> Result<()> {
    let epsilon = require(pick(args.epsilon, cfg.epsilon), "epsilon")?;
    let h = require(pick(args.h, cfg.h), "h")?;
    let x_eval = require(pick(args.x_eval.clone(), cfg.x_eval.clone()), "x_eval")?;
    let standard = resolve_standard(&args.standard, cfg)?;
    let cases = ingest_cases(&args.cases)?;

    let trace = run_lc_cusum(&cases, standard.params(), epsilon, h, &x_eval)?;
    let rows = cusum_rows(&cases, standard.params(), &trace)?;
    let path = out_path(out_dir, args.out, "cusum.csv");
    write_output(&path, &render_cusum_csv(&rows))?;

    match trace.signal_index {
        Some(i) => println!("signal at case {i}"),
        None => println!("no signal"),
    }
    Ok(())
}

fn to_detector(choice: DetectorChoice) -> Detector {
    match choice {
        DetectorChoice::Slca => Detector::Slca,
        DetectorChoice::LcCusum => Detector::LcCusum,
    }
}

fn cmd_simulate(cfg: &FileConfig, args: SimulateArgs, out_dir: &Path) -> Result<()> {
    let detector = to_detector(DetectorChoice::parse(&require(
        pick(args.detector.clone(), cfg.detector.clone()),
        "detector",
    )?)?);
    let h = require(pick(args.h, cfg.h), "h")?;
    let reps = pick(args.reps, cfg.reps).unwrap_or(2000);
    if reps == 0 {
        return Err(usage("reps must be at least 1"));
    }
    let seed = pick(args.seed, cfg.seed).unwrap_or(1729);
    let windows = pick(args.windows.clone(), cfg.windows.clone()).unwrap_or(vec![20, 50, 70]);
    let spec = args.scenario.build(cfg)?;

    if let Some(stream_path) = &args.dump_stream {
        let mode = match ModeChoice::parse(
            pick(args.dump_mode.clone(), cfg.mode.clone())
                .as_deref()
                .unwrap_or("learning"),
        )? {
            ModeChoice::Learning => Mode::Learning,
            ModeChoice::Inadequate => Mode::Inadequate,
        };
        let stream = simulate_stream(&spec, mode, seed)?;
        write_cases(stream_path, &stream)?;
        println!("wrote {}", stream_path.display());
    }

    let result = run_oc(detector, &spec, h, reps, &windows, seed)?;
    let report = oc_report(&result, &spec, seed);
    let path = out_path(out_dir, args.out, "simulate.json");
    write_output(&path, &to_json(&report))?;

    println!("pfa: {:.4} (se {:.4})", result.pfa.p, result.pfa.se);
    for (w, e) in &result.psd.windows {
        println!("psd_{w}: {:.4} (se {:.4})", e.p, e.se);
    }
    Ok(())
}

fn cmd_calibrate(cfg: &FileConfig, args: CalibrateArgs, out_dir: &Path) -> Result<()> {
    let detector = to_detector(DetectorChoice::parse(&require(
        pick(args.detector.clone(), cfg.detector.clone()),
        "detector",
    )?)?);
    let reps = pick(args.reps, cfg.reps).unwrap_or(2000);
    if reps == 0 {
        return Err(usage("reps must be at least 1"));
    }
    let seed = pick(args.seed, cfg.seed).unwrap_or(1729);
    let target = pick(args.target.clone(), cfg.target_pfa.clone()).unwrap_or(vec![0.03, 0.07]);
    if target.len() != 2 {
        return Err(usage(format!(
            "target must be two values lo,hi — found {} value(s)",
            target.len()
        )));
    }
    let target = (target[0], target[1]);
    let spec = args.scenario.build(cfg)?;

    let mut opts = CalibrationOptions::default_for(detector);
    if let Some(lo) = args.h_lo {
        opts.h_lo = lo;
    }
    if let Some(hi) = args.h_hi {
        opts.h_hi = hi;
    }

    let result = calibrate_h(detector, &spec, target, reps, &opts, seed)?;
    let report = calibration_report(&result, detector, target, reps, &spec, seed);
    let path = out_path(out_dir, args.out, "calibrate.json");
    write_output(&path, &to_json(&report))?;

    println!("h: {:.4} (pfa {:.4}, se {:.4})", result.h, result.pfa.p, result.pfa.se);
    Ok(())
}

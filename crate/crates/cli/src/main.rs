//! `graybox`: run the benchmark experiments, the check suites, and the
//! theoretical parameter formulas from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graybox_core::controller::{theoretical_params_static, theoretical_params_tv};
use graybox_core::harness::checks::{run_all, run_suite, SuiteReport};
use graybox_core::harness::output::summarize;
use graybox_core::harness::{run_experiment, write_results, ExperimentConfig, Scenario};
use graybox_core::Error;

const DEFAULT_OUT: &str = "results";

#[derive(Parser, Debug)]
#[command(name = "graybox", version, about = "Gray-box feedback optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Static benchmark: unconstrained plant, fixed objective.
    RunStatic(RunArgs),
    /// Time-varying benchmark: box-constrained, objective regenerated every epoch.
    RunTv(RunArgs),
    /// Run the property and oracle suites; exits 2 if any fails.
    Check {
        /// Run a single suite (1-4) instead of all.
        #[arg(long)]
        suite: Option<u8>,
        /// Print each individual check.
        #[arg(long, short)]
        verbose: bool,
    },
    /// Print step size and smoothing parameter prescribed by the theory.
    Params {
        #[command(subcommand)]
        which: ParamsCommand,
    },
}

#[derive(Subcommand, Debug)]
enum ParamsCommand {
    /// Static problem with smoothness `l` and gradient bound `m`.
    Static {
        #[arg(long)]
        l: f64,
        #[arg(long)]
        m: f64,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        t: usize,
    },
    /// Time-varying problem with inflation margin `tau`.
    Tv {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        tau: f64,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML experiment config; defaults to the built-in benchmark preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Output directory for `<scenario>.csv` and `<scenario>.summary.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated controller labels to keep.
    #[arg(long, value_delimiter = ',')]
    controllers: Option<Vec<String>>,
}

enum Failure {
    Config(String),
    Check,
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Check => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } => Failure::Io(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

fn load_config(scenario: Scenario, args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(scenario),
    };
    if cfg.scenario != scenario {
        return Err(Failure::Config(format!(
            "config describes the {} scenario but run-{} was requested",
            cfg.scenario.name(),
            match scenario {
                Scenario::Static => "static",
                Scenario::TimeVarying => "tv",
            }
        )));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    if let Some(out) = &args.out {
        cfg.output = Some(out.clone());
    }
    if let Some(labels) = &args.controllers {
        cfg.select_controllers(labels)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(scenario: Scenario, args: &RunArgs) -> Result<(), Failure> {
    let cfg = load_config(scenario, args)?;
    let result = run_experiment(&cfg)?;
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let (csv, summary_path) = write_results(&result, &cfg, &dir)?;
    let summary = summarize(&result, &cfg)?;
    println!(
        "{} scenario, seed {}, {} steps, {} replicates",
        scenario.name(),
        cfg.seed,
        cfg.horizon,
        cfg.replicates
    );
    for c in &summary.controllers {
        println!(
            "  {:<22} final {} mean {:.6e} (min {:.6e}, max {:.6e})",
            c.controller, c.measure, c.mean, c.min, c.max
        );
    }
    println!("wrote {}", csv.display());
    println!("wrote {}", summary_path.display());
    Ok(())
}

fn print_report(report: &SuiteReport, verbose: bool) {
    println!(
        "suite {} ({}): {} in {:.2}s",
        report.id,
        report.name,
        if report.passed { "PASS" } else { "FAIL" },
        report.seconds
    );
    for line in &report.details {
        if verbose || line.starts_with("[FAIL]") {
            println!("    {line}");
        }
    }
}

fn check(suite: Option<u8>, verbose: bool) -> Result<(), Failure> {
    let reports = match suite {
        Some(id) => vec![run_suite(id).ok_or_else(|| Failure::Config(format!("no suite with id {id}; expected 1-4")))?],
        None => run_all(),
    };
    for r in &reports {
        print_report(r, verbose);
    }
    if reports.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn params(which: &ParamsCommand) -> Result<(), Failure> {
    let (eta, delta) = match *which {
        ParamsCommand::Static { l, m, p, t } => theoretical_params_static(l, m, p, t)?,
        ParamsCommand::Tv { p, t, tau } => theoretical_params_tv(p, t, tau)?,
    };
    println!("eta = {eta:e}");
    println!("delta = {delta:e}");
    Ok(())
}

fn main() -> ExitCode {
    // Usage errors are config errors (1); clap's own code 2 means a failed check here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::RunStatic(args) => run(Scenario::Static, args),
        Command::RunTv(args) => run(Scenario::TimeVarying, args),
        Command::Check { suite, verbose } => check(*suite, *verbose),
        Command::Params { which } => params(which),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(msg) => eprintln!("error: {msg}"),
                Failure::Io(msg) => eprintln!("error: {msg}"),
                Failure::Check => eprintln!("error: one or more check suites failed"),
            }
            ExitCode::from(f.code())
        }
    }
}

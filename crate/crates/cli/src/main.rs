//! `resam`: audits of aggregation rules and simulator runs from JSON configs.
//!
//! Exit codes: 0 success, 1 audit violation or rejected divergence,
//! 2 invalid arguments or config, 3 I/O or runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use resam_core::audit::{randomized_audit_with, default_tolerance, Generator};
use resam_core::experiment::{execute, resolve_output_dir, write_audit_report, ExperimentConfig, OUTPUT_DIR_ENV};
use resam_core::{lambda_of, Error, RngStream, RuleId};

#[derive(Parser)]
#[command(name = "resam", version, about = "Byzantine-resilient SGD laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audit a rule for the resilient-averaging property on random instances.
    Audit(AuditArgs),
    /// Execute a single-cell config (replicas allowed, no sweep axes).
    Run(ConfigArgs),
    /// Execute every cell of a config's sweep.
    Sweep(ConfigArgs),
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    rule: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    f: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multi-Krum* selection size.
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    c_tau: Option<f64>,
    #[arg(long)]
    cc_iters: Option<usize>,
    /// Coefficient to audit against instead of the rule's own.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Comma-separated generator names; all of them by default.
    #[arg(long, value_delimiter = ',')]
    generators: Vec<String>,
    /// Report the measured coefficient and always exit 0.
    #[arg(long)]
    measure: bool,
    /// Report path; defaults to a file in the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
}

enum Failure {
    Violated(String),
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::GmNotConverged { .. } | Error::NonFinite => Failure::Runtime(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Audit(args) => audit(args),
        Command::Run(args) => run_config(&args.config, false),
        Command::Sweep(args) => run_config(&args.config, true),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violated(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn env_output_dir() -> Option<String> {
    std::env::var(OUTPUT_DIR_ENV).ok()
}

fn parse_rule(args: &AuditArgs) -> Result<RuleId, Failure> {
    let rule = match args.rule.parse::<RuleId>()? {
        RuleId::MultiKrumStar { .. } => RuleId::MultiKrumStar { q: args.q },
        RuleId::Cc { c_tau, iters } => RuleId::Cc {
            c_tau: args.c_tau.unwrap_or(c_tau),
            iters: args.cc_iters.unwrap_or(iters),
        },
        other => other,
    };
    rule.validate()?;
    Ok(rule)
}

fn audit(args: AuditArgs) -> Result<(), Failure> {
    let rule = parse_rule(&args)?;
    let generators = if args.generators.is_empty() {
        Generator::ALL.to_vec()
    } else {
        args.generators
            .iter()
            .map(|g| g.parse::<Generator>())
            .collect::<Result<Vec<_>, _>>()?
    };
    let lambda = match args.lambda {
        Some(l) if !(l >= 0.0) => return Err(Failure::Usage(format!("--lambda must be >= 0, got {l}"))),
        Some(l) => Some(l),
        None if rule.is_certified() => Some(lambda_of(&rule, args.n, args.f, args.d)?.lambda),
        None => None,
    };
    let tol = args.tol.unwrap_or_else(|| default_tolerance(&rule));
    let report = randomized_audit_with::<f64>(
        &rule,
        args.n,
        args.f,
        args.d,
        args.trials,
        &generators,
        &RngStream::new(args.seed, 0),
        lambda,
        tol,
    )?;
    let out = match args.out {
        Some(p) => p,
        None => {
            let dir = env_output_dir()
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("resam-out"));
            dir.join(format!("audit_{}_n{}_f{}_d{}.json", rule.name(), args.n, args.f, args.d))
        }
    };
    write_audit_report(&out, &report).map_err(|e| Failure::Runtime(e.to_string()))?;
    let claim = match report.lambda_claimed {
        Some(l) => format!("{l}"),
        None => "none".into(),
    };
    println!(
        "rule={} n={} f={} d={} trials={} lambda_claimed={} lambda_empirical={} violated={} report={}",
        rule,
        args.n,
        args.f,
        args.d,
        args.trials,
        claim,
        report.lambda_empirical,
        report.violated,
        out.display()
    );
    if report.violated && !args.measure {
        return Err(Failure::Violated(format!(
            "violation: instance `{}` with subset {:?}",
            report.worst_instance.label, report.worst_subset
        )));
    }
    Ok(())
}

fn run_config(path: &Path, allow_sweep: bool) -> Result<(), Failure> {
    let config = ExperimentConfig::load(path)?;
    if !allow_sweep && !config.sweep.is_empty() {
        return Err(Failure::Usage(
            "config error at `sweep`: `run` takes a single cell; use `resam sweep`".into(),
        ));
    }
    let output_dir = resolve_output_dir(&config, env_output_dir().as_deref());
    let outcome = execute(&config, &output_dir)?;
    println!(
        "runs={} diverged={} index={}",
        outcome.index.runs.len(),
        outcome.diverged.len(),
        outcome.index_path.display()
    );
    if config.fail_on_divergence && !outcome.diverged.is_empty() {
        return Err(Failure::Violated(format!(
            "diverged runs: {}",
            outcome.diverged.join(", ")
        )));
    }
    Ok(())
}

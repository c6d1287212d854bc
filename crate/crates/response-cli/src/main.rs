//! `response` — quasi-periodic response solver for strongly dissipative
//! oscillators.
//!
//! Exit codes: 0 success, 2 configuration error, 3 no bifurcation bracket,
//! 4 no convergence, 5 enumeration/precision budget exceeded, 1 other
//! failures.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use response_cli::commands::{
    cmd_admissible, cmd_classify, cmd_solve, cmd_trees, CliError, CommandOutput,
};
use response_cli::config::{AlphaConfig, ConfigError, ExperimentConfig, SolveSection};

#[derive(Parser)]
#[command(
    name = "response",
    version,
    about = "Quasi-periodic response solver for strongly dissipative oscillators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Continued-fraction growth and small-divisor diagnostics for α.
    Classify(CommonArgs),
    /// Admissible ε intervals, merged runs, and gaps.
    Admissible(CommonArgs),
    /// Response solution at fixed ε (optional time-domain cross-check).
    Solve(CommonArgs),
    /// Series coefficients by tree enumeration vs the fixed-point oracle.
    Trees(CommonArgs),
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Classify(a)
            | Command::Admissible(a)
            | Command::Solve(a)
            | Command::Trees(a) => a,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (JSON). Omitted: an empty config plus shorthands.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the CSV artifact here (overrides `output.csv`).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Frequency shorthand: `golden` or `sqrt2`.
    #[arg(long, conflicts_with = "quotients")]
    alpha: Option<String>,
    /// Frequency shorthand: comma-separated partial quotients `a0,a1,…`
    /// (the last one repeats).
    #[arg(long)]
    quotients: Option<String>,
    /// ε shorthand: sets `solve.epsilon`, creating the section if absent.
    #[arg(long)]
    eps: Option<f64>,
    /// Nonlinearity order shorthand: overrides `model.goth_n` and
    /// `budget.goth_n`.
    #[arg(long)]
    gothn: Option<u32>,
}

fn apply_shorthands(cfg: &mut ExperimentConfig, args: &CommonArgs) -> Result<(), CliError> {
    if let Some(name) = &args.alpha {
        cfg.alpha = Some(match name.as_str() {
            "golden" => AlphaConfig::Golden,
            "sqrt2" => AlphaConfig::Sqrt2,
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown --alpha name `{other}` (use `golden` or `sqrt2`, \
                     or --quotients for an explicit expansion)"
                ))
                .into())
            }
        });
    }
    if let Some(text) = &args.quotients {
        cfg.alpha = Some(AlphaConfig::from_quotients_flag(text)?);
    }
    if let Some(eps) = args.eps {
        match &mut cfg.solve {
            Some(section) => section.epsilon = eps,
            None => cfg.solve = Some(SolveSection::for_epsilon(eps)),
        }
    }
    if let Some(n) = args.gothn {
        cfg.budget.get_or_insert_with(Default::default).goth_n = Some(n);
        if let Some(model) = &mut cfg.model {
            model.goth_n = n;
        }
    }
    Ok(())
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let text = match &args.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| {
            ConfigError::Invalid(format!("cannot read config {}: {e}", path.display()))
        })?,
        None => "{}".to_string(),
    };
    let mut cfg = ExperimentConfig::from_json(&text)?;
    apply_shorthands(&mut cfg, args)?;
    Ok(cfg)
}

/// RESPONSE_SOLVER_THREADS: optional positive integer capping parallelism.
/// All engines in this build are sequential, so any cap ≥ 1 is honored; the
/// value is validated and echoed into reports for reproducibility.
fn threads_cap() -> Result<Option<usize>, String> {
    match std::env::var("RESPONSE_SOLVER_THREADS") {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(format!("RESPONSE_SOLVER_THREADS: {e}")),
        Ok(raw) => match raw.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(format!(
                "RESPONSE_SOLVER_THREADS must be a positive integer, got `{raw}`"
            )),
        },
    }
}

fn write_outputs(
    args: &CommonArgs,
    cfg: &ExperimentConfig,
    out: &CommandOutput,
) -> Result<(), CliError> {
    let json_path = args
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().and_then(|o| o.json.clone()));
    let csv_path = args
        .csv
        .clone()
        .or_else(|| cfg.output.as_ref().and_then(|o| o.csv.clone()));
    match &json_path {
        Some(path) => std::fs::write(path, &out.json)?,
        None => print!("{}", out.json),
    }
    match (&csv_path, &out.csv) {
        (Some(path), Some(csv)) => std::fs::write(path, csv)?,
        (Some(path), None) => {
            eprintln!(
                "note: this command produces no CSV artifact; {} not written",
                path.display()
            );
        }
        (None, _) => {}
    }
    Ok(())
}

fn run(cli: &Cli) -> i32 {
    let cap = match threads_cap() {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let args = cli.command.args();
    let cfg = match load_config(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Classify(_) => cmd_classify(&cfg, cap),
        Command::Admissible(_) => cmd_admissible(&cfg, cap),
        Command::Solve(_) => cmd_solve(&cfg, cap),
        Command::Trees(_) => cmd_trees(&cfg, cap),
    };
    match result {
        Ok(out) => {
            if let Err(e) = write_outputs(args, &cfg, &out) {
                eprintln!("error: {e}");
                return e.exit_code();
            }
            out.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(&cli));
}

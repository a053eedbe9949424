//! `seedbank`: config-driven batch runs of the seed bank toolkit.
//!
//! Exit status: 0 when the run completes and its checks pass, 1 on runtime
//! errors or failed checks, 2 on configuration errors.

mod config;
mod run;

use clap::{Args, Parser};
use config::Subcommand;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "seedbank", version, about = "Cannings models with seed banks: simulations, duality checks and scaling limits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand)]
enum Command {
    /// Generate a span of the random di-graph and export its edges.
    Graph(RunArgs),
    /// Ancestral and window process traces.
    Backward(RunArgs),
    /// Frequency process traces.
    Forward(RunArgs),
    /// Exact (and optionally Monte Carlo) duality reports.
    Duality(RunArgs),
    /// Site frequency spectra of a limit coalescent.
    Sfs(RunArgs),
    /// Scaling-limit experiments.
    Limits(RunArgs),
    /// Validate a config and print it with defaults filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Only check the tables this subcommand uses.
        #[arg(long, value_enum)]
        r#for: Option<Subcommand>,
        #[arg(long)]
        seed: Option<u64>,
        /// Print JSON instead of TOML.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Rational arithmetic where supported (duality).
    #[arg(long)]
    exact: bool,
}

fn load(path: &Path, sub: Option<Subcommand>, seed: Option<u64>) -> Result<config::Validated, Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
    let parsed = config::parse(&text, path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    config::validate(parsed, &text, &base, sub, seed)
}

fn config_errors(path: &Path, errs: &[String]) -> ExitCode {
    eprintln!("error: invalid config {}", path.display());
    for e in errs {
        eprintln!("  {e}");
    }
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (sub, args) = match cli.command {
        Command::Validate { config, r#for, seed, json } => {
            return match load(&config, r#for, seed) {
                Ok(v) => {
                    let text = if json {
                        serde_json::to_string_pretty(&v.config).expect("configs serialise") + "\n"
                    } else {
                        config::to_toml(&v.config)
                    };
                    let _ = std::io::stdout().write_all(text.as_bytes());
                    ExitCode::SUCCESS
                }
                Err(errs) => config_errors(&config, &errs),
            };
        }
        Command::Graph(a) => (Subcommand::Graph, a),
        Command::Backward(a) => (Subcommand::Backward, a),
        Command::Forward(a) => (Subcommand::Forward, a),
        Command::Duality(a) => (Subcommand::Duality, a),
        Command::Sfs(a) => (Subcommand::Sfs, a),
        Command::Limits(a) => (Subcommand::Limits, a),
    };
    let v = match load(&args.config, Some(sub), args.seed) {
        Ok(v) => v,
        Err(errs) => return config_errors(&args.config, &errs),
    };
    if args.workers == Some(0) {
        return config_errors(&args.config, &["--workers: must be positive".to_string()]);
    }
    let opts = run::Options { out: args.out, exact: args.exact };
    match seedbank::par::with_workers(args.workers, || run::run(sub, &v, &opts)) {
        Ok(o) => {
            let _ = writeln!(std::io::stdout(), "{}: {}\noutputs in {}", sub.name(), o.summary, opts.out.display());
            if o.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: {} checks failed", sub.name());
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

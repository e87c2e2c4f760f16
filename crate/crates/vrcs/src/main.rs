//! Command-line entry point.
//!
//! `vrcs run <config.toml>` executes an experiment grid and writes CSV
//! traces plus a summary table; `vrcs verify` runs the self-check
//! battery. Exit codes: 0 success, 1 invalid config or failed
//! verification, 2 at least one run diverged, 3 internal error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vrcs::cli::{run_experiment, verify_suite, ExperimentConfig, FaultHooks};
use vrcs::Error;

#[derive(Parser)]
#[command(
    name = "vrcs",
    version,
    about = "Distributed composite optimization experiments with per-group communication ledgers"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the algorithm × seed grid described by a TOML config.
    Run {
        /// Path to the experiment config (schema documented in the README
        /// and in the config module).
        config: PathBuf,
        /// Replace the config's seed list with this single seed.
        #[arg(long, value_name = "SEED")]
        seed_override: Option<u64>,
        /// Replace the config's per-run communication-round cap.
        #[arg(long, value_name = "N")]
        max_rounds: Option<u64>,
        /// Write outputs here instead of the config's out_dir.
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
        /// Maximum concurrent runs (0 or omitted = one per core).
        #[arg(long, value_name = "N")]
        jobs: Option<usize>,
    },
    /// Run the self-check battery (gradients vs finite differences,
    /// estimator unbiasedness, RNG moments, prox certificates,
    /// three-point identity).
    Verify {
        /// Seed for the Monte-Carlo draws; changes the samples, not the
        /// verdict.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Run {
            config,
            seed_override,
            max_rounds,
            out_dir,
            jobs,
        } => cmd_run(config, seed_override, max_rounds, out_dir, jobs),
        Cmd::Verify { seed } => cmd_verify(seed),
    };
    ExitCode::from(code)
}

fn cmd_run(
    config: PathBuf,
    seed_override: Option<u64>,
    max_rounds: Option<u64>,
    out_dir: Option<PathBuf>,
    jobs: Option<usize>,
) -> u8 {
    let result = (|| {
        let mut cfg = ExperimentConfig::load(&config)?.resolve()?;
        if let Some(seed) = seed_override {
            cfg.seeds = vec![seed];
        }
        if let Some(mr) = max_rounds {
            if mr == 0 {
                return Err(Error::Config("--max-rounds must be >= 1".into()));
            }
            cfg.max_rounds = mr;
        }
        if let Some(dir) = out_dir {
            cfg.out_dir = dir;
        }
        run_experiment(&cfg, jobs)
    })();
    match result {
        Ok(summary) => {
            for r in &summary.runs {
                let reached = r
                    .to_eps
                    .map(|t| format!("to_eps_total={} to_eps_f={}", t.rounds_total, t.rounds_f))
                    .unwrap_or_else(|| "eps not reached".into());
                println!(
                    "{} seed={} {}: rounds_f={} rounds_g={} {} ({})",
                    r.label,
                    r.seed,
                    r.status.label(),
                    r.rounds_f,
                    r.rounds_g,
                    reached,
                    r.csv_path.display()
                );
            }
            println!("summary: {}", summary.summary_path.display());
            if summary.any_diverged() {
                eprintln!("error: at least one run diverged");
                2
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn cmd_verify(seed: u64) -> u8 {
    match verify_suite(seed, &FaultHooks::default()) {
        Ok(report) => {
            let mut out = std::io::stdout();
            if report.render(&mut out).is_err() {
                return 3;
            }
            if report.all_passed() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            3
        }
    }
}

/// 1 for problems in the user's input or environment, 3 for failures of
/// the machinery itself.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::DimMismatch { .. }
        | Error::InvalidParam(_)
        | Error::Construction(_)
        | Error::Partition(_)
        | Error::Dataset(_)
        | Error::Mode(_)
        | Error::Config(_)
        | Error::Io(_) => 1,
        Error::NonFinite(_)
        | Error::NotSpd(_)
        | Error::NoConvergence { .. }
        | Error::Protocol(_)
        | Error::Uncertified { .. } => 3,
    }
}

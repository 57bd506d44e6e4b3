//! `spgd run | sweep | check`.
//!
//! Exit codes: 0 success, 1 config error, 2 runtime failure (including every
//! seed failing), 3 acceptance failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spgd_harness::acceptance::{run_all, run_criterion, CRITERIA};
use spgd_harness::config::{parse_config, RunConfig, SweepSpec};
use spgd_harness::experiment::{run_experiment, run_sweep, RunSummary};
use spgd_harness::HarnessError;

#[derive(Parser)]
#[command(name = "spgd", version, about = "Guided diffusion experiments on analytic priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Suppress progress and summary output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a config and write per-seed outputs and summary.json.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a parameter grid; axes given here replace the config's sweep block.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Momentum β values, comma separated.
        #[arg(long, value_delimiter = ',')]
        beta: Vec<f64>,
        /// Warm-up step counts N, comma separated.
        #[arg(long, value_delimiter = ',')]
        warmup: Vec<usize>,
        /// Outer step counts T, comma separated.
        #[arg(long, value_delimiter = ',')]
        steps: Vec<usize>,
    },
    /// Run the acceptance suite and print one line per criterion.
    Check {
        /// Run only these criteria (1-10), comma separated.
        #[arg(long, value_delimiter = ',')]
        criterion: Vec<u8>,
    },
}

#[derive(Args)]
struct Overrides {
    /// Output directory (replaces `output_dir`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Seeds as a list `0,1,5` or a half-open range `0..20`.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<Seeds>,
}

#[derive(Clone)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("range start: {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("range end: {e}"))?;
        return Ok(Seeds((a..b).collect()));
    }
    s.split(',')
        .map(|v| v.trim().parse().map_err(|e| format!("seed {v:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(Seeds)
}

fn load(path: &Path, overrides: Overrides) -> Result<RunConfig, HarnessError> {
    let mut cfg = parse_config(path)?;
    if let Some(dir) = overrides.out_dir {
        cfg.output_dir = dir;
    }
    if let Some(Seeds(seeds)) = overrides.seeds {
        cfg.seeds = seeds;
    }
    cfg.validate(&path.display().to_string())?;
    Ok(cfg)
}

fn exit_code(e: &HarnessError) -> ExitCode {
    if e.is_config() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn print_summary(s: &RunSummary) {
    println!(
        "{}: {} seeds ({} failed), {} prior evaluations per trajectory, {:.2}s",
        s.method,
        s.per_seed.len(),
        s.failed_seeds,
        s.nfe_per_trajectory.evaluations,
        s.wall_clock_seconds
    );
    for (name, a) in &s.aggregate {
        println!("  {name:<40} {:.6e} +/- {:.3e} (n={})", a.mean, a.std, a.count);
    }
    for seed in s.per_seed.iter().filter(|r| !r.ok) {
        println!("  seed {} failed: {}", seed.seed, seed.error.as_deref().unwrap_or(""));
    }
    println!(
        "  summary: {}",
        s.config
            .output_dir
            .join(spgd_harness::experiment::SUMMARY_FILE)
            .display()
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let quiet = cli.quiet;
    let result = match cli.command {
        Command::Run { config, overrides } => load(&config, overrides).and_then(|cfg| {
            let summary = run_experiment(&cfg)?;
            if !quiet {
                print_summary(&summary);
            }
            Ok(ExitCode::SUCCESS)
        }),
        Command::Sweep {
            config,
            overrides,
            beta,
            warmup,
            steps,
        } => load(&config, overrides).and_then(|mut cfg| {
            if !(beta.is_empty() && warmup.is_empty() && steps.is_empty()) {
                cfg.sweep = Some(SweepSpec {
                    momentum_beta: beta,
                    warmup_steps: warmup,
                    num_steps: steps,
                    allocations: Vec::new(),
                });
            }
            if cfg.sweep.is_none() {
                return Err(HarnessError::config(
                    config.display().to_string(),
                    "no sweep block in the config and no --beta/--warmup/--steps given",
                ));
            }
            cfg.validate(&config.display().to_string())?;
            let summary = run_sweep(&cfg)?;
            if !quiet {
                for p in &summary.points {
                    let residual = p.aggregate.get("residual_norm").map_or(f64::NAN, |a| a.mean);
                    let psnr = p.aggregate.get("psnr_db").map_or(f64::NAN, |a| a.mean);
                    println!(
                        "{:<40} nfe {:>6}  residual {:.4e}  psnr {:.2} dB  failed {}",
                        p.label, p.nfe_per_trajectory.evaluations, residual, psnr, p.failed_seeds
                    );
                }
                println!(
                    "sweep: {}",
                    cfg.output_dir.join(spgd_harness::experiment::SWEEP_FILE).display()
                );
            }
            Ok(ExitCode::SUCCESS)
        }),
        Command::Check { criterion } => {
            if let Some(bad) = criterion.iter().find(|id| !CRITERIA.iter().any(|c| c.0 == **id)) {
                eprintln!("error: no acceptance criterion {bad}");
                return ExitCode::from(1);
            }
            let outcomes = if criterion.is_empty() {
                run_all(|o| {
                    if !quiet {
                        println!("{o}");
                    }
                })
            } else {
                criterion
                    .iter()
                    .map(|&id| {
                        let o = run_criterion(id);
                        if !quiet {
                            println!("{o}");
                        }
                        o
                    })
                    .collect()
            };
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            if !quiet {
                println!("{}/{} criteria passed", outcomes.len() - failed, outcomes.len());
            }
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            })
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    })
}

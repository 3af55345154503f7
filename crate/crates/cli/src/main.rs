use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nsstat_cli::{
    cmd_average, cmd_estimate_constants, cmd_recurrence, cmd_report, cmd_simulate, cmd_verify,
    output_dir, CliError, RunConfig,
};

/// Fourier-Galerkin Navier-Stokes solver with a statistical-solutions
/// verification toolkit.
#[derive(Parser)]
#[command(name = "nsstat", version, about)]
struct Cli {
    /// Worker threads for data-parallel sections (or env NSSTAT_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured run and write the trajectory + audit CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build time-average measures over the configured window schedule.
    Average {
        #[arg(long)]
        config: PathBuf,
        /// Trajectory container (defaults to <out>/trajectory.nst).
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the bound suite on measures (and trajectory-mode checks).
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Measure files; defaults to measure_*.nsm in the output directory.
        #[arg(long)]
        measure: Vec<PathBuf>,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Constants JSON; omitted -> estimated and recorded first.
        #[arg(long)]
        constants: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Return-time statistics of a trajectory against a box predicate.
    Recurrence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Predicate spec TOML ([[component]] kind/lo/hi tables).
        #[arg(long)]
        set: PathBuf,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        min_gap: f64,
        #[arg(long, default_value_t = 40)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the shape constants (c1, c2) by sampling.
    EstimateConstants {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize the JSON artifacts of a run directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn init_threads(cli_threads: Option<usize>) {
    let threads = cli_threads.or_else(|| {
        std::env::var("NSSTAT_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let out = output_dir(&cfg, out.as_deref());
            let s = cmd_simulate(&cfg, &out)?;
            println!(
                "simulate: {} steps, {} samples, audit {}",
                s.steps,
                s.samples,
                if s.audit_pass { "PASS" } else { "FAIL" }
            );
            Ok(())
        }
        Command::Average {
            config,
            trajectory,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let out = output_dir(&cfg, out.as_deref());
            let s = cmd_average(&cfg, trajectory.as_deref(), &out)?;
            println!(
                "average: {} measures, diagnostics {}",
                s.measure_files.len(),
                if s.diagnostics.converged {
                    "converged"
                } else {
                    "NOT converged"
                }
            );
            Ok(())
        }
        Command::Verify {
            config,
            measure,
            trajectory,
            constants,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let out = output_dir(&cfg, out.as_deref());
            let s = cmd_verify(
                &cfg,
                &measure,
                trajectory.as_deref(),
                constants.as_deref(),
                &out,
            )?;
            for m in &s.measures {
                for b in &m.bounds.bounds {
                    println!(
                        "{:<24} {:>12.6e} <= {:>12.6e}  {:?}",
                        b.id, b.left, b.right, b.verdict
                    );
                }
            }
            println!("verify: PASS");
            Ok(())
        }
        Command::Recurrence {
            config,
            trajectory,
            set,
            horizon,
            min_gap,
            bins,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let out = output_dir(&cfg, out.as_deref());
            let default_traj = out.join("trajectory.nst");
            let traj = trajectory.unwrap_or(default_traj);
            let s = cmd_recurrence(&traj, &set, horizon, min_gap, bins, &out)?;
            if s.empty {
                eprintln!("warning: the set was never visited; empty report");
            }
            println!(
                "recurrence: visits={} returning={} fraction={:.3}",
                s.visits, s.returning, s.fraction_returning
            );
            Ok(())
        }
        Command::EstimateConstants {
            config,
            samples,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let out = output_dir(&cfg, out.as_deref());
            let c = cmd_estimate_constants(&cfg, samples, &out)?;
            println!(
                "constants: c1={:.6} c2={:.6} c3={:.6} c4={:.6} ({:?})",
                c.c1, c.c2, c.c3, c.c4, c.provenance
            );
            Ok(())
        }
        Command::Report { dir } => {
            let lines = cmd_report(&dir)?;
            for l in &lines {
                println!("{:<40} {:<14} {}", l.source, l.status, l.detail);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

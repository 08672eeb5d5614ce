use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hris_harness::acceptance::Suite;
use hris_harness::{compare_dirs, run, ExperimentSpec, RunOptions};

#[derive(Parser)]
#[command(name = "hris", version, about = "Hybrid RIS cognitive-radio simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed (and sweep point) of an experiment spec.
    Run {
        spec: PathBuf,
        /// Use seeds 0..N instead of the spec's list.
        #[arg(long)]
        seeds: Option<u64>,
        /// Override the number of environment steps per seed.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Paired comparison of finished runs; the first run is the baseline.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = "table.csv")]
        out: PathBuf,
    },
    /// Run the acceptance suite and print one line per criterion.
    Accept {
        /// Run only these criteria (repeatable).
        #[arg(long)]
        only: Vec<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> hris_harness::Result<ExitCode> {
    match cmd {
        Command::Run { spec, seeds, steps, out } => {
            let mut spec = ExperimentSpec::load(&spec)?;
            if let Some(n) = seeds {
                spec.seeds = (0..n).collect();
            }
            if let Some(n) = steps {
                spec.total_steps = n;
            }
            spec.validate()?;
            for s in run(
                &spec,
                &RunOptions {
                    out: Some(out.clone()),
                    workers: None,
                },
            )? {
                let a = &s.aggregate;
                println!(
                    "{} {} converged {:.4} +- {:.4}, active {:.3}, energy {:.4} J/step, violations {} ({:.1}s)",
                    s.name, s.label, a.converged_mean, a.converged_std, a.active_fraction, a.mean_energy, a.violations, s.wall_clock_s
                );
            }
            println!("artifacts in {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { dirs, out } => {
            let rows = compare_dirs(&dirs, &out)?;
            for r in &rows {
                println!(
                    "{:<40} {:.4} +- {:.4}  diff {:+.4} (t {:.2})",
                    r.run, r.converged_mean, r.converged_std, r.diff_mean, r.t_stat
                );
            }
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Accept { only } => {
            let suite = Suite::default();
            let results = if only.is_empty() {
                suite.run_all(|r| println!("{r}"))
            } else {
                let mut out = Vec::new();
                for id in &only {
                    let r = suite.run_one(id)?;
                    println!("{r}");
                    out.push(r);
                }
                out
            };
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} / {} criteria passed", results.len() - failed, results.len());
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

//! Command-line scenario runner.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use calibra::cli::{describe_path, exit_code, run_scenario, RunOptions, Scenario};

#[derive(Parser)]
#[command(name = "calibra", version, about = "Construct and verify calibration pairs from scenario files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct, verify and write report.json; exit 0 iff every criterion passed.
    Run {
        path: PathBuf,
        /// Output directory (default: <CALIBRA_OUT or calibra-out>/<scenario name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
        /// Overrides the competitor seed of the scenario.
        #[arg(long)]
        seed: Option<u64>,
        /// Multiplies every verification tolerance.
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
    },
    /// Print the resolved plan without running numerics.
    Describe { path: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::Describe { path } => match describe_path(&path) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Run { path, out, jobs, seed, tol_scale } => {
            if let Some(n) = jobs {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
                    eprintln!("error: cannot size the thread pool: {e}");
                    return ExitCode::from(2);
                }
            }
            if tol_scale.is_nan() || tol_scale <= 0.0 {
                eprintln!("error: --tol-scale must be positive");
                return ExitCode::from(2);
            }
            let scenario = match Scenario::load(&path) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let out = out.unwrap_or_else(|| {
                let root = std::env::var_os("CALIBRA_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("calibra-out"));
                root.join(&scenario.name)
            });
            let opts = RunOptions { out, seed, tol_scale };
            match run_scenario(&scenario, &opts) {
                Ok(summary) => {
                    println!("report: {}", summary.report_path.display());
                    if summary.passed {
                        println!("PASS {}", scenario.name);
                        ExitCode::SUCCESS
                    } else {
                        println!("FAIL {}: {}", scenario.name, summary.failures.join(", "));
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(exit_code(&e) as u8)
                }
            }
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use torus_drift_cli::run::{self, comparison_csv, summary};
use torus_drift_cli::{parse_scenarios, predict_all, write_outputs, GALLERY};

#[derive(Parser)]
#[command(name = "torus-drift", version, about = "Drift experiments for periodic flows on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every scenario and compare with the predicted drift.
    Run {
        file: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads (defaults to the number of CPUs).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print the analytic predictions as CSV.
    Predict { file: PathBuf },
    /// Write the bundled scenario gallery.
    Gallery {
        #[arg(default_value = "gallery.toml")]
        path: PathBuf,
        /// Overwrite an existing file.
        #[arg(long)]
        force: bool,
    },
}

fn main() -> ExitCode {
    match try_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn try_main() -> Result<ExitCode, torus_drift_cli::CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { file, out, jobs } => {
            let scenarios = parse_scenarios(&file)?;
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let results = run::run(&scenarios, jobs.max(1))?;
            let report = write_outputs(&out, &scenarios, &results)?;
            print!("{}", summary(&report));
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Predict { file } => {
            let scenarios = parse_scenarios(&file)?;
            let report = predict_all(&scenarios);
            print!("{}{}", run::header(), comparison_csv(&report));
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Gallery { path, force } => {
            if path.exists() && !force {
                return Err(torus_drift_cli::CliError::Io(format!(
                    "{} exists (use --force to overwrite)",
                    path.display()
                )));
            }
            std::fs::write(&path, GALLERY).map_err(|e| torus_drift_cli::CliError::Io(format!("{}: {e}", path.display())))?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

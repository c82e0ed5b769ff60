mod config;
mod model;
mod report;
mod run;
mod scenarios;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::{Scenario, SchemaError};
use model::Model;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_SCHEMA: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Runs invariance scenarios for linear and semilinear parabolic problems.
#[derive(Debug, Parser)]
#[command(name = "parainv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a scenario and write `<name>_trajectory.csv` and `<name>_summary.json`.
    Run {
        /// Scenario file, or the name of a shipped scenario.
        scenario: String,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Replaces the scenario's `seed`.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Multiplies every tolerance in `[tolerances]`.
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
    },
    /// Check a scenario against the schema without solving.
    Validate { scenario: String },
    /// Print the names of the shipped scenarios.
    List,
}

fn load(arg: &str) -> Result<Scenario, SchemaError> {
    let path = Path::new(arg);
    let text = if path.exists() {
        fs::read_to_string(path).map_err(|e| SchemaError::at("", format!("cannot read {arg}: {e}")))?
    } else if let Some(text) = scenarios::shipped(arg) {
        text.to_owned()
    } else {
        return Err(SchemaError::at("", format!("no scenario file or shipped scenario named {arg}")));
    };
    config::parse(&text)
}

fn schema_failure(arg: &str, e: &SchemaError) -> ExitCode {
    eprintln!("{arg}: schema error: {e}");
    ExitCode::from(EXIT_SCHEMA)
}

fn run(arg: &str, out_dir: &Path, seed_override: Option<u64>, tol_scale: f64) -> ExitCode {
    if !(tol_scale > 0.0 && tol_scale.is_finite()) {
        eprintln!("--tol-scale must be positive and finite");
        return ExitCode::from(EXIT_SCHEMA);
    }
    let mut scenario = match load(arg) {
        Ok(s) => s,
        Err(e) => return schema_failure(arg, &e),
    };
    if let Some(seed) = seed_override {
        scenario.seed = seed;
    }
    let model = match Model::build(&scenario) {
        Ok(m) => m,
        Err(e) => return schema_failure(arg, &e),
    };
    let clock = Instant::now();
    let outcome = match run::run(&scenario, &model, scenario.tolerances.scaled(tol_scale)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{}: {e}", scenario.name);
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let elapsed = clock.elapsed();

    let csv_path = out_dir.join(format!("{}_trajectory.csv", scenario.name));
    let json_path = out_dir.join(format!("{}_summary.json", scenario.name));
    // without checks there are no verdicts to summarise
    let with_summary = scenario.checks.any();
    let written = fs::create_dir_all(out_dir)
        .and_then(|()| fs::write(&csv_path, report::to_csv(&outcome.rows)))
        .and_then(|()| {
            if !with_summary {
                return Ok(());
            }
            let json = report::to_json(&outcome.summary).map_err(std::io::Error::other)?;
            fs::write(&json_path, json)
        });
    if let Err(e) = written {
        eprintln!("{}: cannot write output: {e}", scenario.name);
        return ExitCode::from(EXIT_RUNTIME);
    }
    let verdict = if outcome.summary.passed { "pass" } else { "FAIL" };
    eprintln!("{}: {verdict} in {:.3}s", scenario.name, elapsed.as_secs_f64());
    if outcome.summary.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            scenario,
            out_dir,
            seed_override,
            tol_scale,
        } => run(&scenario, &out_dir, seed_override, tol_scale),
        Command::Validate { scenario } => match load(&scenario) {
            Ok(s) => {
                println!("{}: ok", s.name);
                ExitCode::SUCCESS
            }
            Err(e) => schema_failure(&scenario, &e),
        },
        Command::List => {
            for (name, _) in scenarios::SHIPPED {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
    }
}

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use adaflow::selftest::run_selftest;
use adaflow_cli::{pool_info, run, CliError, Format, Policy, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adaflow", version, about = "Continuous-time boosting on CSV datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy on a dataset and print a summary.
    Run(RunArgs),
    /// Check the engine's invariants on seeded random instances.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the table as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Describe the stump pool built from a dataset.
    PoolInfo {
        dataset: PathBuf,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        weights_column: Option<String>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// CSV with a header row; the last column holds the labels.
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "adaboost")]
    policy: Policy,
    #[arg(long, default_value_t = 100)]
    max_rounds: usize,
    /// Time horizon for superboost.
    #[arg(long, default_value_t = 10.0)]
    horizon: f64,
    /// arc-gv weight cap.
    #[arg(long, default_value_t = adaflow::controls::DEFAULT_ARCGV_CAP)]
    cap: f64,
    /// Floor for one-sided leaves in confidence-rated prediction.
    #[arg(long, default_value_t = adaflow::controls::DEFAULT_CRP_EPSILON)]
    epsilon: f64,
    /// Trajectory file.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep at most this many thresholds per feature.
    #[arg(long)]
    resolution: Option<usize>,
    /// Column holding per-row starting weights.
    #[arg(long)]
    weights_column: Option<String>,
    /// Add interior trajectory samples every DT time units.
    #[arg(long, value_name = "DT")]
    sample_dt: Option<f64>,
    /// Report the error of the final classifier on this CSV.
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Also write the summary as JSON here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    println!("stop_reason: {}", e.kind());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(a) => {
            let config = RunConfig {
                dataset: a.dataset,
                policy: a.policy,
                max_rounds: a.max_rounds,
                horizon: a.horizon,
                cap: a.cap,
                epsilon: a.epsilon,
                output: a.output,
                format: a.format,
                seed: a.seed,
                resolution: a.resolution,
                weights_column: a.weights_column,
                sample_dt: a.sample_dt,
                eval: a.eval,
            };
            let outcome = match run(&config) {
                Ok(o) => o,
                Err(e) => return fail(&e),
            };
            print!("{}", outcome.summary.render());
            if let Some(path) = a.summary {
                let json = serde_json::to_string_pretty(&outcome.summary).expect("serializable");
                if let Err(e) = fs::write(&path, json + "\n") {
                    return fail(&CliError::Data(format!("{}: {e}", path.display())));
                }
            }
            if let Some(e) = &outcome.failure {
                eprintln!("error: {e}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Command::Selftest { seed, json } => {
            let results = run_selftest(seed);
            if json {
                println!("{}", serde_json::to_string_pretty(&results).expect("serializable"));
            } else {
                let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
                for r in &results {
                    let tag = if r.passed { "PASS" } else { "FAIL" };
                    println!("{tag}  {:width$}  {}", r.name, r.detail);
                }
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} of {} checks passed", results.len() - failed, results.len());
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Command::PoolInfo { dataset, resolution, weights_column } => {
            match pool_info(&dataset, resolution, weights_column) {
                Ok(info) => {
                    println!("points: {}", info.points);
                    println!("features: {}", info.features.join(", "));
                    println!("stumps: {}", info.stumps);
                    for (name, n) in info.features.iter().zip(&info.thresholds_per_feature) {
                        println!("  {name}: {n} thresholds");
                    }
                    if let Some(b) = info.best_stump {
                        println!(
                            "best stump: #{} {} > {} polarity {:+} weighted error {:.6}",
                            b.index, b.feature, b.threshold, b.polarity, b.weighted_error
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}

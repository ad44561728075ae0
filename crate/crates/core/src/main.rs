use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kinreact::config::{load_config, CheckLevel};
use kinreact::diagnostics::fit_after_transient;
use kinreact::driver::{open_sink, read_csv_column, run_simulation};
use kinreact::selfcheck::run_self_checks;

#[derive(Parser)]
#[command(name = "kinreact", version, about = "Two-species kinetic reaction solver with entropy diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write the diagnostics time series.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.path`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Overrides `diagnostics.check_level`.
        #[arg(long, value_enum)]
        check_level: Option<CheckLevel>,
    },
    /// Check discrete identities and estimates on the configured setup.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Random samples per property.
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Fit an exponential decay rate to one column of a diagnostics CSV.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        column: String,
        #[arg(long, default_value_t = 0.2)]
        skip_fraction: f64,
    },
}

const EXIT_CONFIG: u8 = 1;

fn seed_from_env() -> Result<u64, String> {
    match std::env::var("SEED") {
        Ok(s) => s.trim().parse().map_err(|_| format!("SEED must be an integer, got {s:?}")),
        Err(_) => Ok(0),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            output,
            check_level,
        } => {
            let mut cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            if let Some(level) = check_level {
                if let Err(e) = cfg.set_check_level(level) {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            }
            if let Some(path) = output {
                cfg.output_path = path;
            }
            let result = open_sink(cfg.output_format, &cfg.output_path)
                .and_then(|mut sink| run_simulation(&cfg, sink.as_mut(), &mut io::stderr()));
            match result {
                Ok(summary) => {
                    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
                    if let Some(e) = &summary.error {
                        eprintln!("error: {e}");
                    }
                    ExitCode::from(summary.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {}: {e}", cfg.output_path.display());
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        }
        Command::Verify { config, samples } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let seed = match seed_from_env() {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            println!("seed {seed}");
            let lines = run_self_checks(&cfg, seed, samples.max(1));
            for l in &lines {
                println!("{l}");
            }
            if lines.iter().all(|l| l.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Command::Fit {
            input,
            column,
            skip_fraction,
        } => {
            let (times, values) = match read_csv_column(&input, &column) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match fit_after_transient(&times, &values, skip_fraction) {
                Ok(fit) => {
                    println!("kappa {:.16e}", fit.kappa);
                    println!("prefactor {:.16e}", fit.prefactor);
                    println!("r_squared {:.16e}", fit.r_squared);
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mirrorflow_cli::{run_experiment, validate_config, RunError};

#[derive(Parser)]
#[command(
    name = "mirrorflow",
    about = "Mirror-flow experiments for exit-time stochastic control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `flow.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a config and print it with defaults filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print version information.
    Version,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Version => {
            println!(
                "mirrorflow-cli {} (mirrorflow {})",
                env!("CARGO_PKG_VERSION"),
                mirrorflow::VERSION
            );
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match validate_config(&config) {
            Ok(c) => {
                print!("{}", c.to_toml());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("invalid config {}:\n{e}", config.display());
                ExitCode::from(2)
            }
        },
        Command::Run { config, out, seed } => {
            let result = validate_config(&config)
                .map_err(RunError::from)
                .and_then(|mut c| {
                    if let Some(s) = seed {
                        c.flow.seed = s;
                    }
                    let dir = out.unwrap_or_else(|| c.output.dir.clone());
                    c.output.dir = dir.clone();
                    run_experiment(&c, &dir)
                });
            match result {
                Ok(summary) => {
                    let c = &summary.certificates;
                    println!("wrote {}", summary.out_dir.display());
                    println!("linear_rate: {}", verdict(c.linear_rate.pass));
                    if let Some(e) = &c.exponential_rate {
                        println!(
                            "exponential_rate: {} (slope {:?})",
                            verdict(e.pass),
                            e.fitted_slope
                        );
                    }
                    println!(
                        "monotonicity: {} ({} halvings)",
                        verdict(c.monotonicity.pass),
                        c.monotonicity.halvings
                    );
                    println!(
                        "convexity: {} (margin {:e})",
                        verdict(c.convexity.pass),
                        c.convexity.worst_margin
                    );
                    if let Some(g) = &c.gauge_invariance {
                        println!(
                            "gauge_invariance: {} ({:e})",
                            verdict(g.pass),
                            g.max_difference
                        );
                    }
                    println!(
                        "derivative_identity: {}",
                        verdict(c.derivative_identity.pass)
                    );
                    if c.pass {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("certificate failure");
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

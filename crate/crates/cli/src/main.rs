use std::path::PathBuf;
use std::process::ExitCode;

use cardiosig::commands::{self, PlotRequest};
use cardiosig::{Result, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(version, about = "Heart-rate signature pipeline")]
struct Cli {
    /// TOML run configuration (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the synthetic cohort into the data directory.
    Simulate,
    /// Eligibility filter, split assignment and resting heart rate.
    Preprocess,
    /// Train the model; writes a checkpoint and the epoch log.
    Train,
    /// Baselines, model errors, consistency and downstream tasks.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Signature-size or training-fraction sweep.
    Sweep {
        /// signature_size or train_fraction
        #[arg(long)]
        axis: String,
    },
    /// SVG reconstruction plot of one day.
    Plot {
        #[arg(long)]
        person: String,
        /// Window label; defaults to the person's last window.
        #[arg(long)]
        window: Option<String>,
        #[arg(long, default_value_t = 0)]
        day: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.unwrap_or(config.seed);
    config = config.with_seed(seed);
    if let Some(out) = cli.out {
        config.paths.output_dir = out;
    }
    match cli.command {
        Command::Simulate => commands::cmd_simulate(&config)?,
        Command::Preprocess => {
            let persons = commands::cmd_preprocess(&config)?;
            eprintln!("{} eligible persons", persons.len());
        }
        Command::Train => {
            let (_, history) = commands::cmd_train(&config)?;
            eprintln!(
                "best epoch {} (tune {:.5}), {}",
                history.best_epoch,
                history.best_tune_loss(),
                history.stop_reason.as_str()
            );
        }
        Command::Eval { checkpoint } => {
            let eval = commands::cmd_eval(&config, checkpoint.as_deref())?;
            let r = &eval.report;
            println!(
                "model {:.4}  mean {:.4}  individual gbt {:.4}  population gbt {:.4}  consistency ratio {:.3} (p = {:.2e})",
                r.model_mse,
                r.mean_baseline_mse,
                r.individual_gbt_mse,
                r.population_gbt_mse,
                r.consistency.median_ratio,
                r.consistency.p_value
            );
        }
        Command::Sweep { axis } => {
            let table = commands::cmd_sweep(&config, &axis)?;
            for row in &table.rows {
                println!("{:>8} {:.4} {:.4}", row.setting, row.window1_error, row.window2_error);
            }
        }
        Command::Plot {
            person,
            window,
            day,
            checkpoint,
        } => {
            let path = commands::cmd_plot(
                &config,
                &PlotRequest {
                    person_id: &person,
                    window: window.as_deref(),
                    day,
                    checkpoint: checkpoint.as_deref(),
                },
            )?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

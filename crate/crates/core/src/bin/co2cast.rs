use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use co2cast::config::PipelineConfig;
use co2cast::pipeline::{run, Command, PipelineError};

/// Daily sectoral CO2 emissions: cleaning, PCA, LSTM forecasting and
/// adsorption energetics.
#[derive(Parser)]
#[command(name = "co2cast", version)]
struct Cli {
    /// key = value configuration file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key; repeatable, wins over the file.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Data CSV; same as `--set data=PATH`.
    #[arg(short, long, global = true)]
    data: Option<PathBuf>,
    /// chrono format of the date column; same as `--set date_format=FMT`.
    #[arg(long, global = true)]
    date_format: Option<String>,
    /// Output directory.
    #[arg(short, long, default_value = "out", global = true)]
    out: PathBuf,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate the data and write it back in canonical form.
    Ingest,
    /// Replace outliers and smooth each selected series.
    Clean,
    /// Per-region PCA report and chart.
    Pca,
    /// Train one model per (region, sector) and write checkpoints.
    Train,
    /// Forecast `horizon` days from trained checkpoints.
    Forecast,
    /// Test-set metrics from trained checkpoints.
    Evaluate,
    /// Cohesive and binding energies from a JSON or CSV input.
    Energy {
        #[arg(short, long)]
        input: Option<PathBuf>,
    },
    /// Run everything and write a bundled report.json.
    Report,
}

fn config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(d) = &cli.data {
        cfg.data = Some(std::path::absolute(d).unwrap_or_else(|_| d.clone()));
    }
    if let Some(f) = &cli.date_format {
        cfg.date_format = f.clone();
    }
    if let Cmd::Energy { input: Some(p) } = &cli.command {
        cfg.energy_input = Some(std::path::absolute(p).unwrap_or_else(|_| p.clone()));
    }
    cfg.apply_flags(cli.set.iter().map(String::as_str))?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CO2CAST_LOG", "warn")).init();
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Ingest => Command::Ingest,
        Cmd::Clean => Command::Clean,
        Cmd::Pca => Command::Pca,
        Cmd::Train => Command::Train,
        Cmd::Forecast => Command::Forecast,
        Cmd::Evaluate => Command::Evaluate,
        Cmd::Energy { .. } => Command::Energy,
        Cmd::Report => Command::Report,
    };
    match config(&cli).and_then(|cfg| run(command, &cfg, &cli.out)) {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            // A closed stdout (e.g. piped into `head`) is not a failure.
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(1)
        }
    }
}

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hrv_glucose::experiment::{AblationConfig, SelectionMode};
use hrv_glucose::pipeline::{cmd_ablate, cmd_extract_features, cmd_run, RunConfig};
use log::info;

/// Sleep-stage HRV features and Bayesian ridge glucose prediction.
#[derive(Debug, Parser)]
#[command(name = "hrv-glucose", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Process every subject's signal and write features.csv and qc.csv.
    ExtractFeatures(Common),
    /// Full experiment: selection, cross-validation, ablation and reports.
    Run(Common),
    /// Ablation configurations only.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset, e.g. `Full,ClinicalOnly`. Defaults to the config's list.
        #[arg(long, value_delimiter = ',')]
        configs: Vec<AblationConfig>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Global,
    PerFold,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum)]
    selection_mode: Option<ModeArg>,
    /// Output directory, relative to the working directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(jobs) = self.jobs {
            cfg.jobs = Some(jobs);
        }
        if let Some(mode) = self.selection_mode {
            cfg.selection.mode = match mode {
                ModeArg::Global => SelectionMode::Global,
                ModeArg::PerFold => SelectionMode::PerFold,
            };
        }
        if let Some(out) = &self.output {
            cfg.output.dir = std::env::current_dir()
                .context("reading working directory")?
                .join(out);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::ExtractFeatures(common) => {
            let cfg = common.load()?;
            let ex = cmd_extract_features(&cfg)?;
            println!(
                "subjects {}  features {}  output {}",
                ex.matrix.n_rows(),
                ex.matrix.n_cols(),
                cfg.output_dir().display()
            );
        }
        Command::Run(common) => {
            let cfg = common.load()?;
            let summary = cmd_run(&cfg)?;
            info!("reports written to {}", cfg.output_dir().display());
            print!("{}", summary.render());
        }
        Command::Ablate { common, configs } => {
            let cfg = common.load()?;
            let configs = if configs.is_empty() {
                cfg.cv.ablations.clone()
            } else {
                configs
            };
            let report = cmd_ablate(&cfg, &configs)?;
            println!("configuration,features,r2_mean,mae_mean,delta_r2");
            for row in &report.rows {
                println!(
                    "{},{},{:.4},{:.4},{}",
                    row.config,
                    row.features,
                    row.r2,
                    row.mae,
                    row.delta_r2.map(|d| format!("{d:.4}")).unwrap_or_default()
                );
            }
        }
    }
    Ok(())
}

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use spectral_rates::harness::report::read_csv;
use spectral_rates::harness::{replay, run_and_write, ExperimentConfig};

#[derive(Parser)]
#[command(name = "spectral-rates", version, about = "Convergence studies for graph-Laplacian eigenpairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study and write `<study>.csv` and `<study>.json` to the output directory.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    study: Option<String>,
    #[arg(long)]
    manifold: Option<String>,
    #[arg(long)]
    density: Option<String>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    l: Option<String>,
    /// Comma-separated sample sizes.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long = "eps-const")]
    eps_const: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Re-run the row with this run id from the study's existing CSV and
    /// compare the regenerated values.
    #[arg(long)]
    replay: Option<String>,
}

fn config_from(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    let overrides = [
        ("study", &args.study),
        ("manifold", &args.manifold),
        ("density", &args.density),
        ("kernel", &args.kernel),
        ("l", &args.l),
        ("n_list", &args.n),
        ("trials", &args.trials),
        ("eps_const", &args.eps_const),
        ("seed", &args.seed),
        ("out_dir", &args.out),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let cfg = config_from(&args)?;
            match &args.replay {
                Some(id) => replay_row(&cfg, id),
                None => {
                    let report = run_and_write(&cfg)?;
                    info!(
                        "{}: {} rows, {} failed, written to {}",
                        report.study,
                        report.rows.len(),
                        report.failures,
                        cfg.out_dir.display()
                    );
                    for (metric, fit) in &report.fits {
                        println!(
                            "{metric}: slope {:.4}, intercept {:.4}, R² {:.4}",
                            fit.slope, fit.intercept, fit.r2
                        );
                    }
                    Ok(())
                }
            }
        }
    }
}

fn replay_row(cfg: &ExperimentConfig, id: &str) -> Result<()> {
    let path = cfg.out_dir.join(format!("{}.csv", cfg.study));
    let rows = read_csv(&path).with_context(|| format!("reading {}", path.display()))?;
    let Some(row) = rows.iter().find(|r| r.run_id == id) else {
        bail!("run id {id} not found in {}", path.display());
    };
    let again = replay(cfg, row)?;
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.serialize(&again)?;
    w.flush()?;
    if !again.same_result(row) {
        bail!("replayed row differs from the recorded one");
    }
    info!("run {id} reproduced");
    Ok(())
}

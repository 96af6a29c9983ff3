use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use memrx::experiment::{run_experiment, run_lcurve, run_leadfield, run_spectrum, run_sweep, ExperimentConfig};
use memrx::Error;

/// Multiple-excitation magnetorelaxometry imaging experiments.
#[derive(Parser)]
#[command(name = "memrx", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed (overrides `master_seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, reconstruct and evaluate one configuration.
    Run { config: PathBuf },
    /// Metrics over the sweep's m values, schemes and methods.
    Sweep { config: PathBuf },
    /// Assemble the lead field and store it in the cache.
    Leadfield { config: PathBuf },
    /// Singular values of the full lead field.
    Spectrum { config: PathBuf },
    /// Tikhonov L-curve on full data over the sweep's mu grid.
    Lcurve { config: PathBuf },
}

fn load(cli: &Cli, path: &Path) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<String, Error> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(cli, config)?;
            let out = run_experiment(&cfg)?;
            let m = &out.metrics;
            Ok(format!(
                "{} {} {} m={}: relative RMSE {:.4}, SNR {:.2} dB, Pearson {}, {} iterations -> {}",
                m.phantom,
                m.method,
                m.scheme,
                m.m,
                m.relative_rmse,
                m.snr_db,
                m.pearson.map_or("n/a".to_owned(), |p| format!("{p:.4}")),
                out.iterations,
                out.output_dir.display()
            ))
        }
        Command::Sweep { config } => {
            let cfg = load(cli, config)?;
            let rows = run_sweep(&cfg)?;
            let mut text = String::from("scheme,method,m,relative_rmse,pearson,status");
            for r in &rows {
                text.push_str(&format!(
                    "\n{},{},{},{},{},{}",
                    r.scheme,
                    r.method,
                    r.m,
                    r.relative_rmse.map_or(String::new(), |v| format!("{v:.4}")),
                    r.pearson.map_or(String::new(), |v| format!("{v:.4}")),
                    r.error.as_deref().unwrap_or("ok")
                ));
            }
            Ok(text)
        }
        Command::Leadfield { config } => {
            let cfg = load(cli, config)?;
            let s = run_leadfield(&cfg)?;
            Ok(format!(
                "lead field {}x{} ({} coils, {} sensors), scale {:e}, {}",
                s.rows,
                s.cols,
                s.n_coils,
                s.n_sensors,
                s.scale,
                if s.cache_hit { "from cache" } else { "assembled" }
            ))
        }
        Command::Spectrum { config } => {
            let cfg = load(cli, config)?;
            let sv = run_spectrum(&cfg)?;
            let (max, min) = (sv[0], sv[sv.len() - 1]);
            Ok(format!(
                "{} singular values, max {max:e}, min {min:e}, ratio {:e}",
                sv.len(),
                max / min
            ))
        }
        Command::Lcurve { config } => {
            let cfg = load(cli, config)?;
            let pts = run_lcurve(&cfg)?;
            let mut text = String::from("mu,log10_residual_sq,log10_solution_norm");
            for p in &pts {
                text.push_str(&format!("\n{:e},{:.6},{:.6}", p.mu, p.log_residual, p.log_solution_norm));
            }
            Ok(text)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(summary) => {
            if !cli.quiet {
                println!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let kind = e.kind();
            let record = serde_json::json!({
                "error": kind.as_str(),
                "exit_code": kind.exit_code(),
                "message": e.to_string(),
            });
            eprintln!("{record}");
            ExitCode::from(kind.exit_code() as u8)
        }
    }
}

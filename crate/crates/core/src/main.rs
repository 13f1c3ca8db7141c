use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::info;

use divels::policy::EpochSchedule;
use divels::runner::{emit_csv, emit_metadata, metadata_path, run_experiment, KernelFamily, PolicyKind, Settings};
use divels::Error;

/// Confounded contextual bandit experiments with dual IV regression.
///
/// Flags override values from `--config`. Defaults: K=4, T=1024, 20 repeats,
/// rho=0.95, eta=200 rho^2, eta1=eta2=1, delta=0.1, polynomial kernel of
/// degree 3 with offset 1, doubling epochs.
#[derive(Debug, Parser)]
#[command(name = "divels", version)]
struct Cli {
    /// Horizon.
    #[arg(long = "T")]
    horizon: Option<u64>,
    /// Number of arms.
    #[arg(long = "K")]
    n_arms: Option<usize>,
    /// Instrument strength in [0, 1].
    #[arg(long)]
    rho: Option<f64>,
    /// Confounder standard deviation.
    #[arg(long)]
    noise_scale: Option<f64>,
    /// Exploration scale (default 200 rho^2).
    #[arg(long)]
    eta: Option<f64>,
    /// Scale of the first regularization parameter.
    #[arg(long)]
    eta1: Option<f64>,
    /// Scale of the second regularization parameter.
    #[arg(long)]
    eta2: Option<f64>,
    /// Confidence parameter in (0, 1).
    #[arg(long)]
    delta: Option<f64>,
    /// Kernel family for both k and l.
    #[arg(long, value_parser = ["linear", "polynomial", "rbf"])]
    kernel: Option<String>,
    /// Polynomial kernel degree.
    #[arg(long)]
    degree: Option<u32>,
    /// Polynomial kernel offset.
    #[arg(long)]
    offset: Option<f64>,
    /// RBF kernel bandwidth.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Epoch schedule.
    #[arg(long, value_parser = ["doubling", "horizon"])]
    schedule: Option<String>,
    /// Policy to simulate.
    #[arg(long, value_parser = ["div-els", "div-els-infinite", "naive-krr", "uniform"])]
    policy: Option<String>,
    /// Smoothness of the infinite-rank variant (default: input dimension).
    #[arg(long)]
    nu: Option<f64>,
    /// Override the effective dimension.
    #[arg(long = "d-tilde")]
    d_tilde: Option<usize>,
    /// Independent runs to average.
    #[arg(long)]
    repeats: Option<usize>,
    /// Base seed; run i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path; metadata goes next to it as `<stem>.meta.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Size of the run pool.
    #[arg(long)]
    workers: Option<usize>,
    /// TOML settings file, or a metadata file from a previous run.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Cli {
    fn settings(&self) -> Settings {
        Settings {
            horizon: self.horizon,
            n_arms: self.n_arms,
            rho: self.rho,
            noise_scale: self.noise_scale,
            eta: self.eta,
            eta1: self.eta1,
            eta2: self.eta2,
            delta: self.delta,
            kernel: self.kernel.as_deref().map(|k| match k {
                "linear" => KernelFamily::Linear,
                "polynomial" => KernelFamily::Polynomial,
                _ => KernelFamily::Rbf,
            }),
            degree: self.degree,
            offset: self.offset,
            bandwidth: self.bandwidth,
            schedule: self.schedule.as_deref().map(|s| match s {
                "horizon" => EpochSchedule::Horizon,
                _ => EpochSchedule::Doubling,
            }),
            policy: self.policy.as_deref().map(|p| PolicyKind::parse(p).expect("restricted by clap")),
            nu: self.nu,
            d_tilde: self.d_tilde,
            repeats: self.repeats,
            seed: self.seed,
            out: self.out.clone(),
            workers: self.workers,
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let base = match &cli.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let config = base.overlay(cli.settings()).resolve()?;
    info!("config: {}", serde_json::to_string(&config).unwrap_or_default());
    let result = run_experiment(&config)?;
    emit_csv(&result, &config.output_path)?;
    let meta = metadata_path(&config.output_path);
    emit_metadata(&config, &result, &meta)?;
    eprintln!(
        "mean Reg({}) = {} over {} runs; wrote {} and {}",
        config.horizon,
        result.mean_final(),
        config.repeats,
        config.output_path.display(),
        meta.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

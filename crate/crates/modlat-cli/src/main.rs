//! `modlat` — run modulo-lattice channel-transformation experiments from a
//! TOML config, or sweep one numeric parameter across a value list.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use modlat_cli::config::ExperimentConfig;
use modlat_cli::{experiment, report};

#[derive(Parser)]
#[command(
    name = "modlat",
    about = "Modulo-lattice transformation experiments on multiple-access channels",
    after_help = "\
Reports: summary.txt (key-value summary with the effective config echoed in \
the header), estimators.csv (per-estimator MSE / entropy / rate), \
histogram.csv (folded-noise marginals), and, with output.raw_dump = true, \
trials.csv. Trial-dump columns, per trial: messages v<i>_c<j>, dithers \
u<i>_c<j>, transmitted x<i>_c<j> (user i, coordinate j), then y_c<j>, \
shat_c<j>, yprime_c<j>, neff_c<j>, nfold_c<j>."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the experiment config (TOML).
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's output.dir, or `runs/<name>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report entropies and rates in bits instead of nats.
    #[arg(long)]
    bits: bool,
    /// Worker threads for trial batches; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its reports.
    Run(CommonArgs),
    /// Run one experiment per value of a numeric config parameter.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Dotted config path, e.g. `channel.noise_power`.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. `0.1,0.3,1,3,10`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(common) => run(common),
        Command::Sweep {
            common,
            param,
            values,
        } => run_sweep(common, &param, &values),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn setup(common: &CommonArgs) -> Result<(String, ExperimentConfig, PathBuf, bool)> {
    if common.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(common.threads)
            .build_global()
            .context("thread pool already initialized")?;
    }
    let mut text = std::fs::read_to_string(&common.config)
        .with_context(|| format!("cannot read config {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        text = override_seed(&text, seed)?;
    }
    let config = ExperimentConfig::from_str(&text)
        .with_context(|| format!("config {}", common.config.display()))?;
    let out_dir = common
        .out
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs").join(&config.name));
    let bits = common.bits || config.bits();
    Ok((text, config, out_dir, bits))
}

fn override_seed(text: &str, seed: u64) -> Result<String> {
    let mut doc: toml::Value = toml::from_str(text).context("invalid TOML config")?;
    let run = doc
        .get_mut("run")
        .and_then(|v| v.as_table_mut())
        .context("config has no [run] block to set the seed in")?;
    run.insert("seed".to_string(), toml::Value::Integer(seed as i64));
    Ok(toml::to_string_pretty(&doc).expect("document serializes"))
}

fn run(common: CommonArgs) -> Result<()> {
    let (_, config, out_dir, bits) = setup(&common)?;
    let result = experiment::run_experiment(&config)?;
    let written = report::write_reports(&result, &out_dir, bits)?;
    println!("experiment: {}", config.name);
    for o in &result.outcomes {
        println!(
            "  {}: mse = {:.6}, rate = {:.6} {} / dim, identity pass rate = {:.4}",
            o.name,
            o.mse.mse,
            if bits {
                o.rate.nats_per_dim / std::f64::consts::LN_2
            } else {
                o.rate.nats_per_dim
            },
            if bits { "bits" } else { "nats" },
            o.identity_pass_rate,
        );
    }
    if let Some(ind) = &result.independence {
        println!(
            "  independence: {}/{} pairs accepted at {}",
            ind.accepted, ind.num_pairs, ind.significance
        );
    }
    println!("reports: {}", written.summary.display());
    Ok(())
}

fn run_sweep(common: CommonArgs, param: &str, values: &[f64]) -> Result<()> {
    let (text, config, out_dir, bits) = setup(&common)?;
    let points = experiment::sweep(&text, param, values)?;
    let table = report::write_sweep_reports(param, &points, &out_dir, bits)?;
    println!("sweep: {} over {param} = {values:?}", config.name);
    println!("table: {}", table.display());
    Ok(())
}

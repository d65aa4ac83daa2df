//! Simulation command line: point it at a network description, pick
//! algorithms and sweep axes, and it writes the Monte Carlo results as CSV.

use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;

use ncjt_core::harness::{render_csv, render_summary, run_experiment, ExperimentSpec};
use ncjt_core::{Algorithm, NetworkConfig};

/// Weighted sum rate simulations for cell-free MIMO downlinks with
/// non-coherent joint transmission.
#[derive(Parser, Debug)]
#[command(name = "ncjt-sim", version, about)]
struct Args {
    /// Network description as a key=value file (keys: num_aps, num_ues,
    /// tx_antennas, rx_antennas, cluster_size, power_budget, rate_weights,
    /// snr_db, seed, distance_range, noise_ref). Defaults to 4 access
    /// points with 64 antennas, 8 users with 4 antennas, clusters of 2.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Algorithm to run; repeat the flag to compare several
    /// (ezf, wmmse, rwmmse, rwmmse-lsa, rwmmse-lus).
    /// Defaults to ezf, wmmse and rwmmse.
    #[arg(long = "algo")]
    algos: Vec<String>,

    /// SNR axis in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Vec<f64>,

    /// Transmit antenna axis, comma separated; every access point gets the
    /// same count at each point.
    #[arg(long = "sweep-m", value_delimiter = ',')]
    sweep_m: Vec<usize>,

    /// User count axis, comma separated.
    #[arg(long = "sweep-k", value_delimiter = ',')]
    sweep_k: Vec<usize>,

    /// Monte Carlo trials per axis point.
    #[arg(long, default_value_t = 1)]
    trials: usize,

    /// Override the base seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,

    /// Sweep limit per solve.
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,

    /// Relative objective change that counts as converged.
    #[arg(long)]
    tol: Option<f64>,

    /// Streams per serving pair for the fixed-allocation algorithms.
    #[arg(long, default_value_t = 2)]
    streams: usize,

    /// Persist the first generated channel draw to this file.
    #[arg(long = "dump-channels")]
    dump_channels: Option<PathBuf>,

    /// Replay a persisted channel draw instead of generating one.
    #[arg(long = "load-channels")]
    load_channels: Option<PathBuf>,

    /// Results file; a .summary.csv sibling is written next to it. Without
    /// this flag the result rows go to stdout.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Also write per-sweep trace rows to a .trace.csv sibling.
    #[arg(long)]
    trace: bool,

    /// Record wall-clock time in the wall_ms column. Off by default so
    /// reruns produce byte-identical files.
    #[arg(long)]
    timing: bool,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();

    let config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading configuration {}", path.display()))?;
            NetworkConfig::parse_kv(&text)
                .with_context(|| format!("parsing configuration {}", path.display()))?
        }
        None => NetworkConfig::default(),
    };

    let mut spec = ExperimentSpec::new(config);
    if !args.algos.is_empty() {
        spec.algorithms = args
            .algos
            .iter()
            .map(|tag| tag.parse::<Algorithm>())
            .collect::<Result<_, _>>()?;
    }
    spec.snr_list = args.snr;
    spec.m_list = args.sweep_m;
    spec.k_list = args.sweep_k;
    spec.trials = args.trials;
    spec.streams_per_pair = args.streams;
    if let Some(seed) = args.seed {
        spec.config.seed = seed;
    }
    if let Some(iters) = args.max_iters {
        spec.opts.max_iters = iters;
    }
    if let Some(tol) = args.tol {
        spec.opts.rel_tol = tol;
    }
    spec.record_timing = args.timing;
    spec.trace_rows = args.trace;
    spec.dump_channels = args.dump_channels;
    spec.load_channels = args.load_channels;
    spec.out_csv = args.out.clone();

    let records = run_experiment(&spec).context("running the experiment")?;

    match &args.out {
        Some(path) => {
            print!("{}", render_summary(&records));
            eprintln!("wrote {} result rows to {}", records.len(), path.display());
        }
        None => print!("{}", render_csv(&records)),
    }
    let failed = records.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        eprintln!("{failed} of {} runs were flagged; see the status column", records.len());
    }
    Ok(())
}

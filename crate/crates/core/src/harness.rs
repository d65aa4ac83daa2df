//! Monte Carlo experiment driver: axis sweeps, per-trial seeding, CSV
//! emission, and timing fits.
//!
//! Reruns of the same spec produce byte-identical data files: every random
//! draw derives from `base_seed ^ trial`, rows follow the deterministic
//! iteration order (antenna count, user count, trial, SNR, algorithm; one
//! draw serves every SNR point), and wall-clock measurements only reach the
//! CSV when timing capture is explicitly enabled.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::metrics;
use crate::network::{draw_channels, place_network, ChannelSet, NetworkConfig};
use crate::types::{Algorithm, SolveTrace, SolverOptions, StreamCounts};
use crate::{chanfile, ezf, rwmmse, streams, wmmse};

/// One Monte Carlo campaign: a base network, sweep axes, the algorithms to
/// compare, and where the results go.
#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub config: NetworkConfig,
    pub algorithms: Vec<Algorithm>,
    /// SNR axis in dB; empty means "use the base config value".
    pub snr_list: Vec<f64>,
    /// Transmit antenna axis; empty means "keep the base counts".
    pub m_list: Vec<usize>,
    /// User count axis; empty means "keep the base count".
    pub k_list: Vec<usize>,
    pub trials: usize,
    /// Streams per serving pair for the fixed-allocation algorithms.
    pub streams_per_pair: usize,
    pub opts: SolverOptions,
    /// Copy measured wall time into the CSV. Off by default so data files
    /// stay a pure function of the spec.
    pub record_timing: bool,
    /// Also emit one row per sweep into a `.trace.csv` sibling file.
    pub trace_rows: bool,
    /// Main results file; `None` keeps everything in memory.
    pub out_csv: Option<PathBuf>,
    /// Reuse a persisted channel draw instead of generating one per trial.
    pub load_channels: Option<PathBuf>,
    /// Persist the first generated channel draw.
    pub dump_channels: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(config: NetworkConfig) -> Self {
        ExperimentSpec {
            config,
            algorithms: vec![Algorithm::LocalEzf, Algorithm::Wmmse, Algorithm::Rwmmse],
            snr_list: Vec::new(),
            m_list: Vec::new(),
            k_list: Vec::new(),
            trials: 1,
            streams_per_pair: 2,
            opts: SolverOptions::default(),
            record_timing: false,
            trace_rows: false,
            out_csv: None,
            load_channels: None,
            dump_channels: None,
        }
    }
}

/// One CSV row: a single algorithm on a single trial of one axis point.
#[derive(Clone, Debug)]
pub struct TrialRecord {
    pub trial: usize,
    pub algorithm: Algorithm,
    pub snr_db: f64,
    pub m: usize,
    pub k_users: usize,
    pub n_rx: usize,
    pub cluster_size: usize,
    pub iters: usize,
    pub wsr_bits: f64,
    pub sum_power_watts: f64,
    pub max_ap_power_ratio: f64,
    pub interaction_scalars: f64,
    pub wall_ms: f64,
    pub streams_total: usize,
    pub status: &'static str,
    /// Full per-sweep history; absent when the solver failed.
    pub trace: Option<SolveTrace>,
}

pub const CSV_HEADER: &str = "trial,algo,snr_db,M,K,N,L,iters,wsr_bits,sum_power_watts,max_ap_power_ratio,interaction_scalars,wall_ms,streams_total,status";

/// Place a network and draw its fading realizations from one seed. Noise is
/// left unassigned so one draw can serve several SNR points.
pub fn generate_channels(config: &NetworkConfig, seed: u64) -> Result<ChannelSet> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let topology = place_network(config, &mut rng)?;
    draw_channels(config, &topology, &mut rng)
}

fn error_label(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::Dimension(_) => "dimension",
        Error::State(_) => "state",
        Error::Numeric(_) => "numeric",
        Error::NonFinite { .. } => "nonfinite",
        Error::Precondition(_) => "precondition",
        Error::Format(_) => "format",
        Error::UnknownAlgorithm(_) => "unknown-algorithm",
        Error::Io(_) => "io",
    }
}

struct AlgoOutcome {
    wsr_bits: f64,
    ap_power: Vec<f64>,
    streams_total: usize,
    trace: SolveTrace,
}

fn run_algorithm(
    algorithm: Algorithm,
    channels: &ChannelSet,
    config: &NetworkConfig,
    streams_per_pair: usize,
    opts: &SolverOptions,
) -> Result<AlgoOutcome> {
    let weights = &config.rate_weights;
    let budgets = &config.power_budgets;
    let counts = StreamCounts::uniform(channels.topology(), streams_per_pair);
    match algorithm {
        Algorithm::LocalEzf => {
            let bf = ezf::beamformer(channels, &counts, budgets)?;
            let wsr = metrics::weighted_sum_rate(channels, &bf, weights)?;
            let ap_power: Vec<f64> = (0..channels.num_aps()).map(|i| bf.ap_power(i)).collect();
            let mut trace = SolveTrace::new(algorithm, "ezf");
            trace.wsr_bits.push(wsr);
            trace.ap_power.push(ap_power.clone());
            trace.interaction_per_ap = metrics::interaction_count(
                algorithm,
                channels.tx_antennas(),
                channels.rx_antennas(),
                &counts,
            );
            trace.converged = true;
            Ok(AlgoOutcome {
                wsr_bits: wsr,
                ap_power,
                streams_total: counts.total(),
                trace,
            })
        }
        Algorithm::Wmmse => {
            let init = ezf::beamformer(channels, &counts, budgets)?;
            let (bf, trace) = wmmse::solve(channels, weights, budgets, &counts, &init, opts)?;
            let ap_power: Vec<f64> = (0..channels.num_aps()).map(|i| bf.ap_power(i)).collect();
            Ok(AlgoOutcome {
                wsr_bits: trace.final_wsr_bits(),
                ap_power,
                streams_total: counts.total(),
                trace,
            })
        }
        Algorithm::Rwmmse => {
            let init = ezf::lowdim(channels, &counts, budgets)?;
            let (x, trace) = rwmmse::solve(channels, weights, budgets, &counts, &init, opts)?;
            let ap_power: Vec<f64> = (0..channels.num_aps())
                .map(|i| rwmmse::ap_power(channels, &x, i))
                .collect();
            Ok(AlgoOutcome {
                wsr_bits: trace.final_wsr_bits(),
                ap_power,
                streams_total: counts.total(),
                trace,
            })
        }
        Algorithm::RwmmseLsa => {
            let out = streams::solve_lsa_default(channels, weights, budgets, opts)?;
            let ap_power: Vec<f64> = (0..channels.num_aps())
                .map(|i| rwmmse::ap_power(channels, &out.beamformer, i))
                .collect();
            Ok(AlgoOutcome {
                wsr_bits: out.trace.final_wsr_bits(),
                ap_power,
                streams_total: out.allocation.total(),
                trace: out.trace,
            })
        }
        Algorithm::RwmmseLus => {
            let out = streams::solve_lus(channels, weights, budgets, opts)?;
            let ap_power: Vec<f64> = (0..channels.num_aps())
                .map(|i| rwmmse::ap_power(channels, &out.beamformer, i))
                .collect();
            Ok(AlgoOutcome {
                wsr_bits: out.trace.final_wsr_bits(),
                ap_power,
                streams_total: out.allocation.total(),
                trace: out.trace,
            })
        }
    }
}

/// The base config with one axis point applied. Sweeps assume uniform
/// antenna counts and weights and replicate the first entry.
fn config_at(base: &NetworkConfig, m: Option<usize>, k: Option<usize>) -> NetworkConfig {
    let mut cfg = base.clone();
    if let Some(k) = k {
        cfg.num_ues = k;
        cfg.rx_antennas = vec![base.rx_antennas[0]; k];
        cfg.rate_weights = vec![base.rate_weights[0]; k];
    }
    if let Some(m) = m {
        cfg.tx_antennas = vec![m; cfg.num_aps];
    }
    cfg
}

/// Run the whole campaign. Solver failures flag their row and the run
/// continues; infrastructure failures (I/O, invalid spec) abort.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<TrialRecord>> {
    spec.config.validate()?;
    if spec.trials == 0 {
        return Err(Error::Precondition("trial count must be at least 1".into()));
    }
    if spec.algorithms.is_empty() {
        return Err(Error::Precondition("need at least one algorithm".into()));
    }
    if spec.streams_per_pair == 0 {
        return Err(Error::Precondition("streams per pair must be at least 1".into()));
    }
    let loaded = match &spec.load_channels {
        Some(path) => {
            if !spec.m_list.is_empty() || !spec.k_list.is_empty() {
                return Err(Error::Precondition(
                    "antenna or user sweeps cannot be combined with a loaded channel file".into(),
                ));
            }
            Some(chanfile::load_channels(path)?)
        }
        None => None,
    };

    let m_axis: Vec<Option<usize>> = if spec.m_list.is_empty() {
        vec![None]
    } else {
        spec.m_list.iter().copied().map(Some).collect()
    };
    let k_axis: Vec<Option<usize>> = if spec.k_list.is_empty() {
        vec![None]
    } else {
        spec.k_list.iter().copied().map(Some).collect()
    };
    let snr_axis: Vec<f64> = if spec.snr_list.is_empty() {
        vec![spec.config.snr_db]
    } else {
        spec.snr_list.clone()
    };

    let mut records = Vec::new();
    let mut dumped = false;
    for &m in &m_axis {
        for &k in &k_axis {
            let cfg = config_at(&spec.config, m, k);
            cfg.validate()?;
            let m_col = *cfg.tx_antennas.iter().max().unwrap();
            let k_col = cfg.num_ues;
            let n_col = *cfg.rx_antennas.iter().max().unwrap();
            for trial in 0..spec.trials {
                let drawn = match &loaded {
                    Some(ch) => ch.clone(),
                    None => generate_channels(&cfg, cfg.seed ^ trial as u64)?,
                };
                if let (Some(path), false) = (&spec.dump_channels, dumped) {
                    chanfile::dump_channels(&drawn, path)?;
                    dumped = true;
                }
                for &snr in &snr_axis {
                    let mut channels = drawn.clone();
                    channels.assign_noise_power(snr, cfg.noise_ref)?;
                    for &algorithm in &spec.algorithms {
                        let record = match run_algorithm(
                            algorithm,
                            &channels,
                            &cfg,
                            spec.streams_per_pair,
                            &spec.opts,
                        ) {
                            Ok(out) => {
                                let max_ratio = out
                                    .ap_power
                                    .iter()
                                    .zip(&cfg.power_budgets)
                                    .map(|(p, b)| p / b)
                                    .fold(0.0f64, f64::max);
                                let wall_ms = if spec.record_timing {
                                    out.trace.sweep_seconds.iter().sum::<f64>() * 1e3
                                } else {
                                    0.0
                                };
                                TrialRecord {
                                    trial,
                                    algorithm,
                                    snr_db: snr,
                                    m: m_col,
                                    k_users: k_col,
                                    n_rx: n_col,
                                    cluster_size: cfg.cluster_size,
                                    iters: out.trace.iterations(),
                                    wsr_bits: out.wsr_bits,
                                    sum_power_watts: out.ap_power.iter().sum(),
                                    max_ap_power_ratio: max_ratio,
                                    interaction_scalars: out.trace.interaction_per_ap.iter().sum(),
                                    wall_ms,
                                    streams_total: out.streams_total,
                                    status: "ok",
                                    trace: Some(out.trace),
                                }
                            }
                            Err(e) => TrialRecord {
                                trial,
                                algorithm,
                                snr_db: snr,
                                m: m_col,
                                k_users: k_col,
                                n_rx: n_col,
                                cluster_size: cfg.cluster_size,
                                iters: 0,
                                wsr_bits: f64::NAN,
                                sum_power_watts: f64::NAN,
                                max_ap_power_ratio: f64::NAN,
                                interaction_scalars: f64::NAN,
                                wall_ms: 0.0,
                                streams_total: 0,
                                status: error_label(&e),
                                trace: None,
                            },
                        };
                        records.push(record);
                    }
                }
            }
        }
    }

    if let Some(path) = &spec.out_csv {
        std::fs::write(path, render_csv(&records))?;
        std::fs::write(summary_path(path), render_summary(&records))?;
        if spec.trace_rows {
            std::fs::write(trace_path(path), render_trace(&records))?;
        }
    }
    Ok(records)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

pub fn summary_path(out_csv: &Path) -> PathBuf {
    with_suffix(out_csv, "summary")
}

pub fn trace_path(out_csv: &Path) -> PathBuf {
    with_suffix(out_csv, "trace")
}

/// Main results table, one row per (axis point, trial, algorithm).
pub fn render_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.trial,
            r.algorithm.tag(),
            r.snr_db,
            r.m,
            r.k_users,
            r.n_rx,
            r.cluster_size,
            r.iters,
            r.wsr_bits,
            r.sum_power_watts,
            r.max_ap_power_ratio,
            r.interaction_scalars,
            r.wall_ms,
            r.streams_total,
            r.status
        );
    }
    out
}

/// Per-sweep history rows for the runs that kept a trace.
pub fn render_trace(records: &[TrialRecord]) -> String {
    let mut out = String::from("trial,algo,snr_db,M,K,sweep,wsr_bits,streams_total\n");
    for r in records {
        let Some(trace) = &r.trace else { continue };
        for (sweep, &wsr) in trace.wsr_bits.iter().enumerate() {
            let streams = trace
                .stream_totals
                .get(sweep)
                .copied()
                .unwrap_or(r.streams_total);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.trial,
                r.algorithm.tag(),
                r.snr_db,
                r.m,
                r.k_users,
                sweep,
                wsr,
                streams
            );
        }
    }
    out
}

/// Mean and standard error of the objective per (algorithm, axis point),
/// over the trials that completed.
pub fn render_summary(records: &[TrialRecord]) -> String {
    #[allow(clippy::type_complexity)]
    let mut groups: BTreeMap<(String, u64, usize, usize), Vec<f64>> = BTreeMap::new();
    for r in records {
        if r.status != "ok" {
            continue;
        }
        let key = (r.algorithm.tag().to_string(), r.snr_db.to_bits(), r.m, r.k_users);
        groups.entry(key).or_default().push(r.wsr_bits);
    }
    let mut out = String::from("algo,snr_db,M,K,trials_ok,wsr_mean_bits,wsr_se_bits\n");
    for ((algo, snr_bits, m, k), vals) in groups {
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let se = if vals.len() > 1 {
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            algo,
            f64::from_bits(snr_bits),
            m,
            k,
            vals.len(),
            mean,
            se
        );
    }
    out
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Slope of log(median sweep time) against log(antenna count) by least
/// squares. Callers pass per-group sweep times with warm-up sweeps already
/// dropped; at least three distinct antenna counts are required.
pub fn scaling_fit(groups: &[(usize, Vec<f64>)]) -> Result<f64> {
    let distinct: std::collections::BTreeSet<usize> = groups.iter().map(|(m, _)| *m).collect();
    if distinct.len() < 3 {
        return Err(Error::Precondition(format!(
            "scaling fit needs at least 3 distinct antenna counts, got {}",
            distinct.len()
        )));
    }
    let mut pts = Vec::with_capacity(groups.len());
    for (m, times) in groups {
        if times.is_empty() {
            return Err(Error::Precondition(format!("no timing samples for M = {m}")));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numeric("non-finite timing sample".into()));
        }
        let med = median(times);
        if !(med > 0.0) {
            return Err(Error::Numeric(format!("non-positive median sweep time for M = {m}")));
        }
        pts.push(((*m as f64).ln(), med.ln()));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return Err(Error::Numeric("degenerate antenna axis for scaling fit".into()));
    }
    Ok((n * sxy - sx * sy) / denom)
}

/// Warm-up-excluded sweep times of one record, for [`scaling_fit`] groups.
pub fn settled_sweep_times(record: &TrialRecord) -> Vec<f64> {
    record
        .trace
        .as_ref()
        .map(|t| t.sweep_seconds.iter().skip(1).copied().collect())
        .unwrap_or_default()
}

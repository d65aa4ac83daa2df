//! Shared data types: beamformers, solver options, solve traces.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{frob2, CMat};
use crate::network::Topology;

/// The downlink design algorithms exposed by this crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Per-access-point eigen zero-forcing, no iteration.
    LocalEzf,
    /// Block-coordinate weighted-MMSE on the full-size beamformers.
    Wmmse,
    /// Same fixed point computed on reduced-dimension substitutions.
    Rwmmse,
    /// Reduced solver with iterative per-stream on/off selection.
    RwmmseLsa,
    /// Stream selection over every access point; serving sets fall out.
    RwmmseLus,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::LocalEzf,
        Algorithm::Wmmse,
        Algorithm::Rwmmse,
        Algorithm::RwmmseLsa,
        Algorithm::RwmmseLus,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::LocalEzf => "ezf",
            Algorithm::Wmmse => "wmmse",
            Algorithm::Rwmmse => "rwmmse",
            Algorithm::RwmmseLsa => "rwmmse-lsa",
            Algorithm::RwmmseLus => "rwmmse-lus",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ezf" => Ok(Algorithm::LocalEzf),
            "wmmse" => Ok(Algorithm::Wmmse),
            "rwmmse" => Ok(Algorithm::Rwmmse),
            "rwmmse-lsa" => Ok(Algorithm::RwmmseLsa),
            "rwmmse-lus" => Ok(Algorithm::RwmmseLus),
            other => Err(Error::UnknownAlgorithm(other.to_string())),
        }
    }
}

/// Iteration controls shared by the block-coordinate solvers.
#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Hard cap on block-coordinate sweeps.
    pub max_iters: usize,
    /// Stop once the relative change of the objective falls below this.
    pub rel_tol: f64,
    /// Relative tolerance on the power constraint met by the multiplier search.
    pub bisect_tol: f64,
    /// Scale of the diagonal ridge added to ill-conditioned systems,
    /// as a fraction of the mean diagonal.
    pub ridge_eps: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 500,
            rel_tol: 1e-6,
            bisect_tol: 1e-8,
            ridge_eps: 1e-12,
        }
    }
}

/// Number of streams each access point sends to each user.
///
/// Stored as a dense grid indexed `[ap][ue]`; non-serving pairs hold zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamCounts {
    counts: Vec<Vec<usize>>,
}

impl StreamCounts {
    /// The same count `d` on every serving pair.
    pub fn uniform(topology: &Topology, d: usize) -> Self {
        let num_ues = topology.num_ues();
        let mut counts = vec![vec![0usize; num_ues]; topology.num_aps()];
        for (i, ues) in topology.served.iter().enumerate() {
            for &k in ues {
                counts[i][k] = d;
            }
        }
        StreamCounts { counts }
    }

    pub fn from_grid(counts: Vec<Vec<usize>>) -> Self {
        StreamCounts { counts }
    }

    pub fn num_aps(&self) -> usize {
        self.counts.len()
    }

    pub fn num_ues(&self) -> usize {
        self.counts.first().map_or(0, |r| r.len())
    }

    /// Streams on the pair `(i, k)`.
    pub fn d(&self, i: usize, k: usize) -> usize {
        self.counts[i][k]
    }

    /// Total streams arriving at user `k`.
    pub fn ue_total(&self, k: usize) -> usize {
        self.counts.iter().map(|row| row[k]).sum()
    }

    /// Total streams leaving access point `i`.
    pub fn ap_total(&self, i: usize) -> usize {
        self.counts[i].iter().sum()
    }

    pub fn total(&self) -> usize {
        (0..self.num_aps()).map(|i| self.ap_total(i)).sum()
    }

    /// Column offset of access point `i`'s block inside user `k`'s stacked
    /// stream vector. The stack follows the serving-set order of `topology`.
    pub fn ue_offset(&self, topology: &Topology, i: usize, k: usize) -> usize {
        let mut off = 0;
        for &j in &topology.serving[k] {
            if j == i {
                return off;
            }
            off += self.counts[j][k];
        }
        panic!("access point {i} does not serve user {k}");
    }
}

/// Grid of per-pair matrices indexed `[ap][ue]`; `None` on non-serving pairs.
#[derive(Clone, Debug, PartialEq)]
struct BlockGrid {
    blocks: Vec<Vec<Option<CMat>>>,
}

impl BlockGrid {
    fn zeros(topology: &Topology, rows_for_ap: impl Fn(usize) -> usize, streams: &StreamCounts) -> Self {
        let blocks = (0..topology.num_aps())
            .map(|i| {
                (0..topology.num_ues())
                    .map(|k| {
                        topology
                            .is_serving(i, k)
                            .then(|| CMat::zeros(rows_for_ap(i), streams.d(i, k)))
                    })
                    .collect()
            })
            .collect();
        BlockGrid { blocks }
    }

    fn block(&self, i: usize, k: usize) -> Option<&CMat> {
        self.blocks[i][k].as_ref()
    }

    fn set(&mut self, i: usize, k: usize, m: CMat) {
        self.blocks[i][k] = Some(m);
    }

    fn ap_power(&self, i: usize) -> f64 {
        self.blocks[i].iter().flatten().map(frob2).sum()
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize, &CMat)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().filter_map(move |(k, b)| b.as_ref().map(|m| (i, k, m))))
    }
}

/// Transmit beamformers: one `M_i x D_{i,k}` block per serving pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Beamformer {
    grid: BlockGrid,
}

impl Beamformer {
    /// All-zero beamformer with the block layout induced by `streams`.
    pub fn zeros(topology: &Topology, tx_antennas: &[usize], streams: &StreamCounts) -> Self {
        Beamformer {
            grid: BlockGrid::zeros(topology, |i| tx_antennas[i], streams),
        }
    }

    pub fn num_aps(&self) -> usize {
        self.grid.blocks.len()
    }

    pub fn num_ues(&self) -> usize {
        self.grid.blocks.first().map_or(0, |r| r.len())
    }

    pub fn block(&self, i: usize, k: usize) -> Option<&CMat> {
        self.grid.block(i, k)
    }

    pub fn set_block(&mut self, i: usize, k: usize, m: CMat) {
        self.grid.set(i, k, m);
    }

    /// Iterate over `(ap, ue, block)` for every serving pair, in `(i, k)` order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, &CMat)> {
        self.grid.pairs()
    }

    /// Transmit power spent by access point `i`.
    pub fn ap_power(&self, i: usize) -> f64 {
        self.grid.ap_power(i)
    }

    pub fn total_power(&self) -> f64 {
        (0..self.num_aps()).map(|i| self.ap_power(i)).sum()
    }

    /// Columns of the block on `(i, k)`; zero when the pair is not served.
    pub fn stream_count(&self, i: usize, k: usize) -> usize {
        self.block(i, k).map_or(0, |m| m.ncols())
    }

    /// Total streams arriving at user `k`.
    pub fn ue_stream_total(&self, k: usize) -> usize {
        (0..self.num_aps()).map(|i| self.stream_count(i, k)).sum()
    }

    pub fn total_streams(&self) -> usize {
        self.pairs().map(|(_, _, m)| m.ncols()).sum()
    }
}

/// Reduced-dimension beamformer: one `sum(N) x D_{i,k}` block per serving pair.
/// The full-size block is recovered as `H_bar_i^H X_{i,k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowDimBeamformer {
    grid: BlockGrid,
    sum_rx: usize,
}

impl LowDimBeamformer {
    pub fn zeros(topology: &Topology, sum_rx: usize, streams: &StreamCounts) -> Self {
        LowDimBeamformer {
            grid: BlockGrid::zeros(topology, |_| sum_rx, streams),
            sum_rx,
        }
    }

    pub fn sum_rx(&self) -> usize {
        self.sum_rx
    }

    pub fn num_aps(&self) -> usize {
        self.grid.blocks.len()
    }

    pub fn num_ues(&self) -> usize {
        self.grid.blocks.first().map_or(0, |r| r.len())
    }

    pub fn block(&self, i: usize, k: usize) -> Option<&CMat> {
        self.grid.block(i, k)
    }

    pub fn set_block(&mut self, i: usize, k: usize, m: CMat) {
        debug_assert_eq!(m.nrows(), self.sum_rx);
        self.grid.set(i, k, m);
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, &CMat)> {
        self.grid.pairs()
    }

    pub fn stream_count(&self, i: usize, k: usize) -> usize {
        self.block(i, k).map_or(0, |m| m.ncols())
    }

    pub fn ue_stream_total(&self, k: usize) -> usize {
        (0..self.num_aps()).map(|i| self.stream_count(i, k)).sum()
    }

    pub fn total_streams(&self) -> usize {
        self.pairs().map(|(_, _, m)| m.ncols()).sum()
    }
}

/// Per-user receive-side auxiliaries of the weighted-MMSE surrogate:
/// MMSE receive filters `u[k]` and MSE weight matrices `w[k]`.
#[derive(Clone, Debug)]
pub struct MmseAux {
    pub u: Vec<CMat>,
    pub w: Vec<CMat>,
}

/// Per-sweep history of one solver run.
#[derive(Clone, Debug)]
pub struct SolveTrace {
    pub algorithm: Algorithm,
    /// How the iterate was initialized, e.g. `"ezf"` or `"custom"`.
    pub init_tag: String,
    /// Objective in bits/s/Hz; entry 0 is the value at the initial point,
    /// then one entry per completed sweep.
    pub wsr_bits: Vec<f64>,
    /// Per-sweep transmit power of every access point.
    pub ap_power: Vec<Vec<f64>>,
    /// Per-sweep power multipliers of every access point.
    pub multipliers: Vec<Vec<f64>>,
    /// Per-sweep total allocated streams (stream-selecting solvers only).
    pub stream_totals: Vec<usize>,
    /// Wall time of each sweep in seconds.
    pub sweep_seconds: Vec<f64>,
    /// Fronthaul traffic of one solve, in complex scalars per access point.
    pub interaction_per_ap: Vec<f64>,
    /// Factorizations of systems larger than the total receive dimension.
    pub large_factorizations: usize,
    pub converged: bool,
}

impl SolveTrace {
    pub fn new(algorithm: Algorithm, init_tag: &str) -> Self {
        SolveTrace {
            algorithm,
            init_tag: init_tag.to_string(),
            wsr_bits: Vec::new(),
            ap_power: Vec::new(),
            multipliers: Vec::new(),
            stream_totals: Vec::new(),
            sweep_seconds: Vec::new(),
            interaction_per_ap: Vec::new(),
            large_factorizations: 0,
            converged: false,
        }
    }

    /// Completed sweeps (the initial objective entry does not count).
    pub fn iterations(&self) -> usize {
        self.wsr_bits.len().saturating_sub(1)
    }

    pub fn final_wsr_bits(&self) -> f64 {
        self.wsr_bits.last().copied().unwrap_or(f64::NAN)
    }
}

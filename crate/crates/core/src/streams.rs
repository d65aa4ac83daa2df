//! Joint beamforming and stream allocation on top of the reduced solver.
//!
//! Every serving pair `(i, k)` nominally carries one candidate stream per
//! receive antenna of user `k`. A binary allocation decides which candidates
//! are active; inactive columns of the compressed beamformer are held at
//! exactly zero. Because the surrogate objective is column-separable, the
//! marginal cost of each candidate is a single real number, and the optimal
//! allocation under the per-user stream limit is just "keep the most
//! negative costs". Dropping a column never raises transmit power, so the
//! allocation step needs no re-projection to stay feasible.
//!
//! The same machinery doubles as a user scheduler: run it with every access
//! point as a candidate server and read the surviving serving sets off the
//! final allocation.

use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{dimlog_start, dimlog_take, CMat};
use crate::metrics::interaction_count;
use crate::network::{ChannelSet, Topology};
use crate::rwmmse;
use crate::types::{Algorithm, LowDimBeamformer, MmseAux, SolveTrace, SolverOptions, StreamCounts};
use crate::ezf;

/// Numerical floor under which a cost entry counts as zero rather than as a
/// strictly negative (beneficial) stream.
const COST_FLOOR: f64 = -1e-12;

/// Binary stream selection per user. Candidates are indexed flat: block
/// `pos` of length `N_k` for the `pos`-th serving access point, in topology
/// order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamAllocation {
    bits: Vec<Vec<bool>>,
    rx: Vec<usize>,
}

impl StreamAllocation {
    /// All `N_k` streams per user, split as evenly as possible across its
    /// serving access points with the remainder at the nearer ones (lower
    /// index on ties or when no distances are known). Within each pair the
    /// leading candidate positions are used.
    pub fn even(topology: &Topology, rx: &[usize]) -> Self {
        let bits = (0..rx.len())
            .map(|k| {
                let serving = &topology.serving[k];
                let n_k = rx[k];
                let count = serving.len();
                let base = if count == 0 { 0 } else { n_k / count };
                let rem = if count == 0 { 0 } else { n_k % count };
                // rank serving positions by distance, then index
                let mut order: Vec<usize> = (0..count).collect();
                order.sort_by(|&a, &b| {
                    let key = |pos: usize| {
                        let i = serving[pos];
                        let d = topology
                            .distances_km
                            .as_ref()
                            .map_or(0.0, |m| m[(i, k)]);
                        (d, i)
                    };
                    key(a).partial_cmp(&key(b)).unwrap()
                });
                let mut per_pos = vec![base; count];
                for &pos in order.iter().take(rem) {
                    per_pos[pos] += 1;
                }
                let mut flat = vec![false; count * n_k];
                for (pos, &d) in per_pos.iter().enumerate() {
                    for n in 0..d {
                        flat[pos * n_k + n] = true;
                    }
                }
                flat
            })
            .collect();
        StreamAllocation { bits, rx: rx.to_vec() }
    }

    /// Every candidate active: `N_k` streams at each of the user's serving
    /// access points. This exceeds the per-user stream limit on purpose — the
    /// selection update only ever clears bits, so a solver started here can
    /// reach any allocation, while one started from a subset can never win
    /// back a cleared stream. The first selection sweep prunes back to the
    /// limit.
    pub fn full(topology: &Topology, rx: &[usize]) -> Self {
        let bits = (0..rx.len())
            .map(|k| vec![true; topology.serving[k].len() * rx[k]])
            .collect();
        StreamAllocation { bits, rx: rx.to_vec() }
    }

    /// Exactly `N_k` active candidates per user, drawn uniformly from the
    /// `|I_k| * N_k` available positions.
    pub fn random(topology: &Topology, rx: &[usize], rng: &mut impl Rng) -> Self {
        let bits = (0..rx.len())
            .map(|k| {
                let cand = topology.serving[k].len() * rx[k];
                let mut flat = vec![false; cand];
                let picks = rand::seq::index::sample(rng, cand, rx[k].min(cand));
                for j in picks {
                    flat[j] = true;
                }
                flat
            })
            .collect();
        StreamAllocation { bits, rx: rx.to_vec() }
    }

    pub(crate) fn from_flat(bits: Vec<Vec<bool>>, rx: &[usize]) -> Self {
        StreamAllocation { bits, rx: rx.to_vec() }
    }

    pub fn num_ues(&self) -> usize {
        self.bits.len()
    }

    /// Flat candidate bits of user `k`.
    pub fn flat(&self, k: usize) -> &[bool] {
        &self.bits[k]
    }

    pub fn is_set(&self, k: usize, pos: usize, n: usize) -> bool {
        self.bits[k][pos * self.rx[k] + n]
    }

    /// Active streams of user `k` at its `pos`-th serving access point.
    pub fn d_at(&self, k: usize, pos: usize) -> usize {
        let n_k = self.rx[k];
        self.bits[k][pos * n_k..(pos + 1) * n_k]
            .iter()
            .filter(|&&b| b)
            .count()
    }

    pub fn ue_total(&self, k: usize) -> usize {
        self.bits[k].iter().filter(|&&b| b).count()
    }

    pub fn total(&self) -> usize {
        (0..self.num_ues()).map(|k| self.ue_total(k)).sum()
    }

    /// Stream counts on the access point grid, for rate and interaction
    /// accounting.
    pub fn to_stream_counts(&self, topology: &Topology) -> StreamCounts {
        let num_aps = topology.served.len();
        let mut grid = vec![vec![0usize; self.num_ues()]; num_aps];
        for k in 0..self.num_ues() {
            for (pos, &i) in topology.serving[k].iter().enumerate() {
                grid[i][k] = self.d_at(k, pos);
            }
        }
        StreamCounts::from_grid(grid)
    }

    /// True when every active candidate of `self` is active in `other`.
    pub fn is_subset_of(&self, other: &StreamAllocation) -> bool {
        self.bits
            .iter()
            .zip(&other.bits)
            .all(|(a, b)| a.iter().zip(b).all(|(x, y)| !*x || *y))
    }
}

/// Stream counts of the virtual system: one candidate per receive antenna at
/// every serving pair.
pub fn virtual_counts(topology: &Topology, rx: &[usize]) -> StreamCounts {
    let num_aps = topology.served.len();
    let mut grid = vec![vec![0usize; rx.len()]; num_aps];
    for k in 0..rx.len() {
        for &i in &topology.serving[k] {
            grid[i][k] = rx[k];
        }
    }
    StreamCounts::from_grid(grid)
}

/// Zero the columns of `x` whose candidate bits are clear.
fn apply_mask(channels: &ChannelSet, x: &mut LowDimBeamformer, alloc: &StreamAllocation) {
    let topology = channels.topology();
    for k in 0..channels.num_ues() {
        let n_k = channels.rx_antennas()[k];
        for (pos, &i) in topology.serving[k].iter().enumerate() {
            let Some(block) = x.block(i, k) else { continue };
            let mut block = block.clone();
            let mut touched = false;
            for n in 0..n_k {
                if !alloc.is_set(k, pos, n) && block.column(n).iter().any(|z| *z != Complex64::new(0.0, 0.0)) {
                    block.column_mut(n).fill(Complex64::new(0.0, 0.0));
                    touched = true;
                }
            }
            if touched {
                x.set_block(i, k, block);
            }
        }
    }
}

/// Marginal surrogate cost of every candidate stream, flat per user. The
/// entry for candidate `(pos, n)` of user `k` is exactly the change in the
/// weighted-MSE objective from activating that column of the current
/// beamformer; inactive (all-zero) columns therefore cost exactly 0.
pub fn stream_costs(
    channels: &ChannelSet,
    x: &LowDimBeamformer,
    aux: &MmseAux,
    weights: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let num_ues = channels.num_ues();
    if aux.u.len() != num_ues || aux.w.len() != num_ues || weights.len() != num_ues {
        return Err(Error::Dimension("auxiliaries and weights must match num_ues".into()));
    }
    let topology = channels.topology();
    let a_mats: Vec<CMat> = (0..num_ues)
        .map(|l| {
            let mut a = (&aux.u[l] * &aux.w[l]) * aux.u[l].adjoint();
            crate::linalg::hermitianize(&mut a);
            a
        })
        .collect();

    let mut all = Vec::with_capacity(num_ues);
    for k in 0..num_ues {
        let n_k = channels.rx_antennas()[k];
        let serving = &topology.serving[k];
        let mut flat = vec![0.0f64; serving.len() * n_k];
        let wu = &aux.w[k] * aux.u[k].adjoint();
        for (pos, &i) in serving.iter().enumerate() {
            let Some(xb) = x.block(i, k) else { continue };
            // quadratic part: alpha_l |A_l^(1/2) T_{i,l} x_n|^2 summed over l
            for l in 0..num_ues {
                let y = channels.gram_row(i, l) * xb;
                let ay = &a_mats[l] * &y;
                for n in 0..n_k {
                    let q: f64 = y
                        .column(n)
                        .iter()
                        .zip(ay.column(n).iter())
                        .map(|(p, q)| (p.conj() * q).re)
                        .sum();
                    flat[pos * n_k + n] += weights[l] * q;
                }
            }
            // linear part: -2 alpha_k Re[(W_k U_k^H T_{i,k} x)_(t, n)] at this
            // pair's rows of the stacked stream index
            let z = &wu * (channels.gram_row(i, k) * xb);
            for n in 0..n_k {
                flat[pos * n_k + n] -= 2.0 * weights[k] * z[(pos * n_k + n, n)].re;
            }
        }
        all.push(flat);
    }
    Ok(all)
}

/// Keep the up-to-`limit` most negative cost entries; ties prefer the lower
/// flat index, and entries above the numerical floor never activate.
pub fn select_streams(costs: &[f64], limit: usize) -> Vec<bool> {
    let mut eligible: Vec<usize> = (0..costs.len()).filter(|&j| costs[j] < COST_FLOOR).collect();
    eligible.sort_by(|&a, &b| {
        costs[a]
            .partial_cmp(&costs[b])
            .expect("stream costs must be finite")
            .then(a.cmp(&b))
    });
    let mut bits = vec![false; costs.len()];
    for &j in eligible.iter().take(limit) {
        bits[j] = true;
    }
    bits
}

/// Outcome of a joint beamforming and stream-allocation run.
pub struct LsaOutcome {
    /// Compressed beamformer with only the active columns.
    pub beamformer: LowDimBeamformer,
    pub allocation: StreamAllocation,
    pub trace: SolveTrace,
}

/// Outcome of the scheduling variant, which additionally reports which
/// access points ended up serving each user.
pub struct LusOutcome {
    pub beamformer: LowDimBeamformer,
    pub allocation: StreamAllocation,
    /// Per user: access points that carry at least one of its streams.
    pub serving: Vec<Vec<usize>>,
    pub trace: SolveTrace,
}

/// Compressed EZF start aligned with an allocation: EZF columns for the
/// active candidates, zeros elsewhere, at full virtual width.
pub fn ezf_virtual_init(
    channels: &ChannelSet,
    alloc: &StreamAllocation,
    budgets: &[f64],
) -> Result<LowDimBeamformer> {
    let topology = channels.topology();
    let counts = alloc.to_stream_counts(topology);
    let narrow = ezf::lowdim(channels, &counts, budgets)?;
    let vc = virtual_counts(topology, channels.rx_antennas());
    let mut out = LowDimBeamformer::zeros(topology, channels.sum_rx(), &vc);
    for k in 0..channels.num_ues() {
        let n_k = channels.rx_antennas()[k];
        for (pos, &i) in topology.serving[k].iter().enumerate() {
            let mut wide = CMat::zeros(channels.sum_rx(), n_k);
            if let Some(src) = narrow.block(i, k) {
                let mut c = 0;
                for n in 0..n_k {
                    if alloc.is_set(k, pos, n) {
                        wide.column_mut(n).copy_from(&src.column(c));
                        c += 1;
                    }
                }
            }
            out.set_block(i, k, wide);
        }
    }
    Ok(out)
}

fn run(
    channels: &ChannelSet,
    weights: &[f64],
    budgets: &[f64],
    init_alloc: StreamAllocation,
    init_x: &LowDimBeamformer,
    opts: &SolverOptions,
    algorithm: Algorithm,
    init_tag: &str,
) -> Result<(LowDimBeamformer, StreamAllocation, SolveTrace)> {
    if weights.len() != channels.num_ues() || budgets.len() != channels.num_aps() {
        return Err(Error::Dimension("weights must match num_ues, budgets num_aps".into()));
    }
    let topology = channels.topology();
    let vc = virtual_counts(topology, channels.rx_antennas());
    for i in 0..channels.num_aps() {
        for &k in &topology.served[i] {
            let n_k = channels.rx_antennas()[k];
            let ok = init_x
                .block(i, k)
                .is_some_and(|b| b.nrows() == channels.sum_rx() && b.ncols() == n_k);
            if !ok {
                return Err(Error::Dimension(format!(
                    "virtual init block ({i}, {k}) must be {}x{n_k}",
                    channels.sum_rx()
                )));
            }
        }
        let p = rwmmse::ap_power(channels, init_x, i);
        if p > budgets[i] * (1.0 + 1e-8) {
            return Err(Error::Precondition(format!(
                "initial beamformer infeasible at access point {i}: power {p} > budget {}",
                budgets[i]
            )));
        }
    }
    if init_alloc.num_ues() != channels.num_ues() {
        return Err(Error::Dimension(
            "allocation covers a different number of users than the network".into(),
        ));
    }
    let mut over_limit = false;
    for k in 0..channels.num_ues() {
        let n_k = channels.rx_antennas()[k];
        if init_alloc.flat(k).len() != topology.serving[k].len() * n_k {
            return Err(Error::Dimension(format!(
                "allocation for user {k} does not match its serving set"
            )));
        }
        // The init may exceed the per-user stream limit (the full allocation
        // does); every selection sweep restores it, so one must run.
        over_limit |= init_alloc.ue_total(k) > n_k;
    }
    if over_limit && opts.max_iters == 0 {
        return Err(Error::Precondition(
            "initial allocation exceeds the stream limit and no sweep will run to prune it".into(),
        ));
    }

    dimlog_start();
    let mut trace = SolveTrace::new(algorithm, init_tag);
    let mut alloc = init_alloc;
    let mut x = init_x.clone();
    apply_mask(channels, &mut x, &alloc);
    trace.wsr_bits.push(rwmmse::weighted_sum_rate(channels, &x, weights)?);
    trace.stream_totals.push(alloc.total());

    for sweep in 1..=opts.max_iters {
        let t0 = Instant::now();
        let u = rwmmse::update_u(channels, &x)?;
        let w = rwmmse::update_w(channels, &x, &u)?;
        let aux = MmseAux { u, w };
        let keep = |i: usize, k: usize, n: usize| {
            let pos = topology.serving[k].iter().position(|&j| j == i).unwrap();
            alloc.is_set(k, pos, n)
        };
        let (next, mus) = rwmmse::update_x_masked(channels, &aux, weights, budgets, &vc, opts, Some(&keep))?;
        x = next;

        let costs = stream_costs(channels, &x, &aux, weights)?;
        let new_bits: Vec<Vec<bool>> = costs
            .iter()
            .enumerate()
            .map(|(k, c)| select_streams(c, channels.rx_antennas()[k]))
            .collect();
        let new_alloc = StreamAllocation::from_flat(new_bits, channels.rx_antennas());
        debug_assert!(
            new_alloc.is_subset_of(&alloc),
            "cleared streams must stay cleared"
        );
        alloc = new_alloc;
        apply_mask(channels, &mut x, &alloc);

        for i in 0..channels.num_aps() {
            let p = rwmmse::ap_power(channels, &x, i);
            if p > budgets[i] * (1.0 + 1e-8) {
                return Err(Error::Numeric(format!(
                    "power at access point {i} grew past its budget after stream removal: {p}"
                )));
            }
        }

        let wsr = rwmmse::weighted_sum_rate(channels, &x, weights)?;
        trace.sweep_seconds.push(t0.elapsed().as_secs_f64());
        trace
            .ap_power
            .push((0..channels.num_aps()).map(|i| rwmmse::ap_power(channels, &x, i)).collect());
        trace.multipliers.push(mus);
        trace.stream_totals.push(alloc.total());
        trace.wsr_bits.push(wsr);
        if !wsr.is_finite() {
            trace.large_factorizations = count_large(channels);
            return Err(Error::NonFinite {
                iter: sweep,
                trace: Box::new(trace),
            });
        }
        let prev = trace.wsr_bits[trace.wsr_bits.len() - 2];
        if (wsr - prev).abs() <= opts.rel_tol * prev.abs().max(1e-12) {
            trace.converged = true;
            break;
        }
    }

    let final_counts = alloc.to_stream_counts(topology);
    trace.interaction_per_ap = interaction_count(
        algorithm,
        channels.tx_antennas(),
        channels.rx_antennas(),
        &final_counts,
    );
    trace.large_factorizations = count_large(channels);

    // compress: keep only active columns per pair
    let mut compressed = LowDimBeamformer::zeros(topology, channels.sum_rx(), &final_counts);
    for k in 0..channels.num_ues() {
        let n_k = channels.rx_antennas()[k];
        for (pos, &i) in topology.serving[k].iter().enumerate() {
            let Some(wide) = x.block(i, k) else { continue };
            let d = alloc.d_at(k, pos);
            let mut slim = CMat::zeros(channels.sum_rx(), d);
            let mut c = 0;
            for n in 0..n_k {
                if alloc.is_set(k, pos, n) {
                    slim.column_mut(c).copy_from(&wide.column(n));
                    c += 1;
                }
            }
            compressed.set_block(i, k, slim);
        }
    }
    Ok((compressed, alloc, trace))
}

fn count_large(channels: &ChannelSet) -> usize {
    let threshold = channels.sum_rx();
    dimlog_take().into_iter().filter(|&d| d > threshold).count()
}

/// Joint beamforming and stream allocation from a caller-supplied start.
pub fn solve_lsa(
    channels: &ChannelSet,
    weights: &[f64],
    budgets: &[f64],
    init_alloc: StreamAllocation,
    init_x: &LowDimBeamformer,
    opts: &SolverOptions,
) -> Result<LsaOutcome> {
    let (beamformer, allocation, trace) = run(
        channels,
        weights,
        budgets,
        init_alloc,
        init_x,
        opts,
        Algorithm::RwmmseLsa,
        "custom",
    )?;
    Ok(LsaOutcome { beamformer, allocation, trace })
}

/// Joint beamforming and stream allocation from the deterministic start:
/// the full allocation (every candidate stream active, zero-forcing
/// beamformer at full width). The first selection sweep prunes the streams
/// down to the per-user limit; starting from any smaller allocation would
/// permanently foreclose the pruned candidates.
pub fn solve_lsa_default(
    channels: &ChannelSet,
    weights: &[f64],
    budgets: &[f64],
    opts: &SolverOptions,
) -> Result<LsaOutcome> {
    let alloc = StreamAllocation::full(channels.topology(), channels.rx_antennas());
    let init = ezf_virtual_init(channels, &alloc, budgets)?;
    let (beamformer, allocation, trace) = run(
        channels,
        weights,
        budgets,
        alloc,
        &init,
        opts,
        Algorithm::RwmmseLsa,
        "ezf",
    )?;
    Ok(LsaOutcome { beamformer, allocation, trace })
}

/// Stream allocation with every access point as a candidate server. The
/// allocation decides who actually serves whom; the induced serving sets are
/// the access points left with at least one stream per user.
pub fn solve_lus(
    channels: &ChannelSet,
    weights: &[f64],
    budgets: &[f64],
    opts: &SolverOptions,
) -> Result<LusOutcome> {
    let full = channels.with_full_serving();
    let alloc = StreamAllocation::full(full.topology(), full.rx_antennas());
    let init = ezf_virtual_init(&full, &alloc, budgets)?;
    let (beamformer, allocation, mut trace) = run(
        &full,
        weights,
        budgets,
        alloc,
        &init,
        opts,
        Algorithm::RwmmseLus,
        "ezf",
    )?;
    trace.algorithm = Algorithm::RwmmseLus;
    let serving: Vec<Vec<usize>> = (0..full.num_ues())
        .map(|k| {
            full.topology().serving[k]
                .iter()
                .enumerate()
                .filter(|&(pos, _)| allocation.d_at(k, pos) > 0)
                .map(|(_, &i)| i)
                .collect()
        })
        .collect();
    Ok(LusOutcome { beamformer, allocation, serving, trace })
}

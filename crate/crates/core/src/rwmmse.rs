//! Reduced weighted-MMSE solver.
//!
//! The optimal beamformers live in the row space of the local channels, so
//! each block can be written `P_{i,k} = ap_stack(i)^H X_{i,k}` with `X` of
//! height `sum N` instead of `M_i`. Every quantity the sweeps need, rates,
//! powers, and the beamformer update itself, can then be expressed through
//! the cached channel Gram matrices. No factorization ever touches an
//! `M_i`-sized matrix, which is the whole point when antennas outnumber
//! receive streams.

use std::time::Instant;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    dimlog_start, dimlog_take, frob2, hermitianize, hstack, logdet_hpd, solve_general,
    try_cholesky, CMat,
};
use crate::metrics::interaction_count;
use crate::network::ChannelSet;
use crate::types::{
    Algorithm, Beamformer, LowDimBeamformer, MmseAux, SolveTrace, SolverOptions, StreamCounts,
};
use crate::wmmse::bisect_multiplier;

/// Lift a compressed iterate to full-size beamformers: `P_{i,k} =
/// ap_stack(i)^H X_{i,k}`.
pub fn expand(channels: &ChannelSet, x: &LowDimBeamformer) -> Beamformer {
    let topology = channels.topology();
    let counts: Vec<Vec<usize>> = (0..channels.num_aps())
        .map(|i| (0..channels.num_ues()).map(|k| x.stream_count(i, k)).collect())
        .collect();
    let streams = StreamCounts::from_grid(counts);
    let mut bf = Beamformer::zeros(topology, channels.tx_antennas(), &streams);
    for (i, k, block) in x.pairs() {
        bf.set_block(i, k, channels.ap_stack(i).adjoint() * block);
    }
    bf
}

/// Stacked received signal of user `k` in Gram coordinates, `N_k x D^k`.
fn received_signal(channels: &ChannelSet, x: &LowDimBeamformer, k: usize) -> CMat {
    let blocks: Vec<CMat> = channels.topology().serving[k]
        .iter()
        .filter_map(|&i| x.block(i, k).map(|b| channels.gram_row(i, k) * b))
        .collect();
    if blocks.is_empty() {
        CMat::zeros(channels.rx_antennas()[k], 0)
    } else {
        let refs: Vec<&CMat> = blocks.iter().collect();
        hstack(&refs)
    }
}

/// Interference-plus-noise covariance seen by user `k`, computed entirely
/// from Gram rows.
pub fn interference_covariance(k: usize, channels: &ChannelSet, x: &LowDimBeamformer) -> Result<CMat> {
    let n_k = channels.rx_antennas()[k];
    let mut blocks: Vec<CMat> = Vec::new();
    for l in 0..channels.num_ues() {
        if l == k {
            continue;
        }
        for &j in &channels.topology().serving[l] {
            if let Some(b) = x.block(j, l) {
                blocks.push(channels.gram_row(j, k) * b);
            }
        }
    }
    let stacked = if blocks.is_empty() {
        CMat::zeros(n_k, 0)
    } else {
        let refs: Vec<&CMat> = blocks.iter().collect();
        hstack(&refs)
    };
    let mut cov = &stacked * stacked.adjoint();
    let sigma2 = channels.noise(k)?;
    for j in 0..n_k {
        cov[(j, j)] += Complex64::new(sigma2, 0.0);
    }
    hermitianize(&mut cov);
    Ok(cov)
}

/// Achievable rate of user `k` in bits, Gram-coordinate path.
pub fn ue_rate(k: usize, channels: &ChannelSet, x: &LowDimBeamformer) -> Result<f64> {
    let noise_cov = interference_covariance(k, channels, x)?;
    let s = received_signal(channels, x, k);
    let mut total = &noise_cov + &s * s.adjoint();
    hermitianize(&mut total);
    Ok((logdet_hpd(&total)? - logdet_hpd(&noise_cov)?) / std::f64::consts::LN_2)
}

/// Weighted sum rate of a compressed iterate in bits.
pub fn weighted_sum_rate(channels: &ChannelSet, x: &LowDimBeamformer, weights: &[f64]) -> Result<f64> {
    if weights.len() != channels.num_ues() {
        return Err(Error::Dimension("need one rate weight per user".into()));
    }
    let mut total = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        total += w * ue_rate(k, channels, x)?;
    }
    Ok(total)
}

/// Physical transmit power of access point `i`: `tr(X_i^H G_i X_i)`.
pub fn ap_power(channels: &ChannelSet, x: &LowDimBeamformer, i: usize) -> f64 {
    let g = channels.gram(i);
    let mut total = 0.0;
    for k in 0..channels.num_ues() {
        if let Some(b) = x.block(i, k) {
            let gb = g * b;
            total += b.iter().zip(gb.iter()).map(|(p, q)| (p.conj() * q).re).sum::<f64>();
        }
    }
    total
}

/// MMSE receive filters from Gram coordinates.
pub fn update_u(channels: &ChannelSet, x: &LowDimBeamformer) -> Result<Vec<CMat>> {
    (0..channels.num_ues())
        .map(|k| {
            let noise_cov = interference_covariance(k, channels, x)?;
            let s = received_signal(channels, x, k);
            let mut total = &noise_cov + &s * s.adjoint();
            hermitianize(&mut total);
            crate::linalg::solve_hpd(&total, &s)
        })
        .collect()
}

/// MSE weights from Gram coordinates.
pub fn update_w(channels: &ChannelSet, x: &LowDimBeamformer, u: &[CMat]) -> Result<Vec<CMat>> {
    if u.len() != channels.num_ues() {
        return Err(Error::Dimension("need one receive filter per user".into()));
    }
    (0..channels.num_ues())
        .map(|k| {
            let s = received_signal(channels, x, k);
            let d = s.ncols();
            let arg = CMat::identity(d, d) - u[k].adjoint() * &s;
            crate::linalg::inv_general(&arg)
        })
        .collect()
}

/// Solve `(S + lambda G) X = B` by Cholesky. A singular system is reported
/// as `None`; with `allow_ridge` a trace-scaled ridge is tried once first.
fn solve_regularized(
    s: &CMat,
    g: &CMat,
    lambda: f64,
    b: &CMat,
    ridge_eps: f64,
    allow_ridge: bool,
) -> Option<CMat> {
    let mut m = s + g * Complex64::new(lambda, 0.0);
    hermitianize(&mut m);
    if let Some(chol) = try_cholesky(&m) {
        return Some(chol.solve(b));
    }
    if !allow_ridge {
        return None;
    }
    let dim = m.nrows();
    let ridge = ridge_eps * (0..dim).map(|j| m[(j, j)].re).sum::<f64>().max(0.0) / dim.max(1) as f64;
    for j in 0..dim {
        m[(j, j)] += Complex64::new(ridge, 0.0);
    }
    try_cholesky(&m).map(|chol| chol.solve(b))
}

/// Beamformer update in Gram coordinates: per access point solve
/// `(sum_l a_l C_l A_l C_l^H + lambda G) X = B` with `C_l = gram_row(i,l)^H`
/// and the multiplier chosen so `tr(X^H G X)` meets the budget.
pub fn update_x(
    channels: &ChannelSet,
    aux: &MmseAux,
    weights: &[f64],
    budgets: &[f64],
    streams: &StreamCounts,
    opts: &SolverOptions,
) -> Result<(LowDimBeamformer, Vec<f64>)> {
    update_x_masked(channels, aux, weights, budgets, streams, opts, None)
}

/// Same update with an optional column mask: `mask(i, k, col)` false zeroes
/// column `col` of the right-hand side for pair `(i, k)`, so the solved
/// column is exactly zero. Used by the stream-allocation solver.
pub(crate) fn update_x_masked(
    channels: &ChannelSet,
    aux: &MmseAux,
    weights: &[f64],
    budgets: &[f64],
    streams: &StreamCounts,
    opts: &SolverOptions,
    mask: Option<&dyn Fn(usize, usize, usize) -> bool>,
) -> Result<(LowDimBeamformer, Vec<f64>)> {
    let num_aps = channels.num_aps();
    let num_ues = channels.num_ues();
    if aux.u.len() != num_ues || aux.w.len() != num_ues {
        return Err(Error::Dimension("need one receive filter and weight per user".into()));
    }
    if weights.len() != num_ues || budgets.len() != num_aps {
        return Err(Error::Dimension("weights must match num_ues, budgets num_aps".into()));
    }
    let topology = channels.topology();
    let sum_rx = channels.sum_rx();

    let a_mats: Vec<CMat> = (0..num_ues)
        .map(|l| {
            let mut a = (&aux.u[l] * &aux.w[l]) * aux.u[l].adjoint() * Complex64::new(weights[l], 0.0);
            hermitianize(&mut a);
            a
        })
        .collect();

    let mut out = LowDimBeamformer::zeros(topology, sum_rx, streams);
    let mut multipliers = vec![0.0; num_aps];

    for i in 0..num_aps {
        let mut s = CMat::zeros(sum_rx, sum_rx);
        for l in 0..num_ues {
            let c = channels.gram_row(i, l).adjoint();
            s += &c * (&a_mats[l] * c.adjoint());
        }
        hermitianize(&mut s);

        let served = &topology.served[i];
        let rhs_blocks: Vec<CMat> = served
            .iter()
            .map(|&k| {
                let uw = &aux.u[k] * &aux.w[k];
                let off = streams.ue_offset(topology, i, k);
                let d = streams.d(i, k);
                let mut block =
                    channels.gram_row(i, k).adjoint() * uw.columns(off, d) * Complex64::new(weights[k], 0.0);
                if let Some(keep) = mask {
                    for c in 0..d {
                        if !keep(i, k, c) {
                            block.column_mut(c).fill(Complex64::new(0.0, 0.0));
                        }
                    }
                }
                block
            })
            .collect();
        let b = if rhs_blocks.is_empty() {
            CMat::zeros(sum_rx, 0)
        } else {
            let refs: Vec<&CMat> = rhs_blocks.iter().collect();
            hstack(&refs)
        };

        if frob2(&b) == 0.0 {
            for &k in served {
                let d = streams.d(i, k);
                out.set_block(i, k, CMat::zeros(sum_rx, d));
            }
            continue;
        }

        let g = channels.gram(i);
        // A singular system inside the bracket means unbounded power; mapping
        // it to infinity keeps the power curve monotone for the bisection.
        let power = |lambda: f64| -> f64 {
            match solve_regularized(&s, g, lambda, &b, opts.ridge_eps, false) {
                Some(x) => {
                    let gx = g * &x;
                    x.iter().zip(gx.iter()).map(|(p, q)| (p.conj() * q).re).sum()
                }
                None => f64::INFINITY,
            }
        };
        let mu = bisect_multiplier(power, budgets[i], opts)?;
        multipliers[i] = mu;
        let x_all = solve_regularized(&s, g, mu, &b, opts.ridge_eps, true).ok_or_else(|| {
            Error::Numeric(format!("beamformer system at access point {i} is singular"))
        })?;

        let mut col = 0;
        for &k in served {
            let d = streams.d(i, k);
            out.set_block(i, k, x_all.columns(col, d).into_owned());
            col += d;
        }
        let spent = ap_power(channels, &out, i);
        if spent > budgets[i] * (1.0 + 1e-6) {
            return Err(Error::Numeric(format!(
                "access point {i} exceeds its budget after the multiplier search: {spent} > {}",
                budgets[i]
            )));
        }
    }
    Ok((out, multipliers))
}

fn check_init(
    channels: &ChannelSet,
    init: &LowDimBeamformer,
    budgets: &[f64],
    streams: &StreamCounts,
) -> Result<()> {
    let sum_rx = channels.sum_rx();
    for i in 0..channels.num_aps() {
        for &k in &channels.topology().served[i] {
            let d = streams.d(i, k);
            let ok = init
                .block(i, k)
                .is_some_and(|b| b.nrows() == sum_rx && b.ncols() == d);
            if !ok {
                return Err(Error::Dimension(format!(
                    "initial compressed block ({i}, {k}) must be {sum_rx}x{d}"
                )));
            }
        }
        let p = ap_power(channels, init, i);
        if p > budgets[i] * (1.0 + 1e-8) {
            return Err(Error::Precondition(format!(
                "initial beamformer infeasible at access point {i}: power {p} > budget {}",
                budgets[i]
            )));
        }
    }
    Ok(())
}

/// Run compressed block-coordinate sweeps from `init` until the objective's
/// relative change falls below `rel_tol` or `max_iters` sweeps have run.
pub fn solve(
    channels: &ChannelSet,
    weights: &[f64],
    budgets: &[f64],
    streams: &StreamCounts,
    init: &LowDimBeamformer,
    opts: &SolverOptions,
) -> Result<(LowDimBeamformer, SolveTrace)> {
    if weights.len() != channels.num_ues() || budgets.len() != channels.num_aps() {
        return Err(Error::Dimension("weights must match num_ues, budgets num_aps".into()));
    }
    check_init(channels, init, budgets, streams)?;
    dimlog_start();
    let mut trace = SolveTrace::new(Algorithm::Rwmmse, "custom");
    let mut x = init.clone();
    trace.wsr_bits.push(weighted_sum_rate(channels, &x, weights)?);

    for sweep in 1..=opts.max_iters {
        let t0 = Instant::now();
        let u = update_u(channels, &x)?;
        let w = update_w(channels, &x, &u)?;
        let aux = MmseAux { u, w };
        let (next, mus) = update_x(channels, &aux, weights, budgets, streams, opts)?;
        x = next;
        let wsr = weighted_sum_rate(channels, &x, weights)?;
        trace.sweep_seconds.push(t0.elapsed().as_secs_f64());
        trace.ap_power.push((0..channels.num_aps()).map(|i| ap_power(channels, &x, i)).collect());
        trace.multipliers.push(mus);
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
    trace.interaction_per_ap = interaction_count(
        Algorithm::Rwmmse,
        channels.tx_antennas(),
        channels.rx_antennas(),
        streams,
    );
    trace.large_factorizations = count_large(channels);
    Ok((x, trace))
}

fn count_large(channels: &ChannelSet) -> usize {
    let threshold = channels.sum_rx();
    dimlog_take().into_iter().filter(|&d| d > threshold).count()
}

fn blkdiag(blocks: &[&CMat]) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Residual of the closed-form equivalence between the full-size beamformer
/// update and its Gram-coordinate form. Runs the full-size update, rebuilds
/// each beamformer from stacked receive-side auxiliaries and the same
/// multiplier, and returns the worst relative Frobenius difference.
pub fn full_size_equivalence_residual(
    channels: &ChannelSet,
    aux: &MmseAux,
    weights: &[f64],
    budgets: &[f64],
    streams: &StreamCounts,
    opts: &SolverOptions,
) -> Result<f64> {
    let (direct, mus) = crate::wmmse::update_p(channels, aux, weights, budgets, streams, opts)?;
    let num_ues = channels.num_ues();
    let topology = channels.topology();

    let u_refs: Vec<&CMat> = aux.u.iter().collect();
    let u_bar = blkdiag(&u_refs);
    let w_refs: Vec<&CMat> = aux.w.iter().collect();
    let w_bar = blkdiag(&w_refs);
    let w_bar_inv = crate::linalg::inv_general(&w_bar)?;
    let d_tot = u_bar.ncols();
    let mut omega = CMat::zeros(d_tot, d_tot);
    let mut stream_base = vec![0usize; num_ues + 1];
    {
        let mut acc = 0;
        for k in 0..num_ues {
            stream_base[k] = acc;
            for j in 0..aux.u[k].ncols() {
                omega[(acc + j, acc + j)] = Complex64::new(weights[k], 0.0);
            }
            acc += aux.u[k].ncols();
        }
        stream_base[num_ues] = acc;
    }

    let mut worst = 0.0f64;
    for i in 0..channels.num_aps() {
        let served = &topology.served[i];
        let d_i: usize = served.iter().map(|&k| streams.d(i, k)).sum();
        if d_i == 0 {
            continue;
        }
        // column selector: which global streams this access point carries
        let mut xi = CMat::zeros(d_tot, d_i);
        let mut col = 0;
        for &k in served {
            let off = streams.ue_offset(topology, i, k);
            for j in 0..streams.d(i, k) {
                xi[(stream_base[k] + off + j, col + j)] = Complex64::new(1.0, 0.0);
            }
            col += streams.d(i, k);
        }
        let inner = &omega * (u_bar.adjoint() * channels.gram(i) * &u_bar)
            + &w_bar_inv * Complex64::new(mus[i], 0.0);
        let x = &u_bar * solve_general(&inner, &(&omega * &xi))?;
        let rebuilt = channels.ap_stack(i).adjoint() * x;

        let direct_blocks: Vec<&CMat> = served.iter().map(|&k| direct.block(i, k).unwrap()).collect();
        let direct_i = hstack(&direct_blocks);
        worst = worst.max(crate::linalg::frob_rel_diff(&rebuilt, &direct_i));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frob_rel_diff;
    use crate::network::{NetworkConfig, Topology};
    use crate::testutil;
    use crate::{ezf, metrics, wmmse};

    /// Channels whose per-access-point stack is the identity, so Gram
    /// coordinates and physical coordinates coincide.
    fn identity_stack_channels() -> ChannelSet {
        let m = 4;
        let eye = CMat::identity(m, m);
        let h0 = eye.rows(0, 2).into_owned();
        let h1 = eye.rows(2, 2).into_owned();
        let topo = Topology::from_serving_sets(vec![vec![0], vec![0]], 1);
        let mut ch = ChannelSet::new(vec![vec![h0, h1]], topo, None).unwrap();
        ch.set_noise_powers(vec![0.3, 0.3]).unwrap();
        ch
    }

    #[test]
    fn identity_gram_reduces_to_the_full_size_update() {
        let ch = identity_stack_channels();
        let streams = StreamCounts::uniform(ch.topology(), 2);
        let full_bf = testutil::random_beamformer(&ch, &streams, 1.0, 31);
        let u = wmmse::update_u(&ch, &full_bf).unwrap();
        let w = wmmse::update_w(&ch, &full_bf, &u).unwrap();
        let aux = MmseAux { u, w };
        let opts = SolverOptions::default();
        let (p, mu_p) = wmmse::update_p(&ch, &aux, &[1.0, 1.5], &[2.0], &streams, &opts).unwrap();
        let (x, mu_x) = update_x(&ch, &aux, &[1.0, 1.5], &[2.0], &streams, &opts).unwrap();
        assert!((mu_p[0] - mu_x[0]).abs() <= 1e-6 * mu_p[0].max(1e-12));
        for (i, k, xb) in x.pairs() {
            // ap_stack = I here, so X and P live in the same coordinates
            let pb = p.block(i, k).unwrap();
            assert!(frob_rel_diff(xb, pb) < 1e-8, "pair ({i}, {k}): {}", frob_rel_diff(xb, pb));
        }
    }

    #[test]
    fn gram_path_matches_physical_path() {
        let cfg = NetworkConfig::uniform(3, 4, 8, 2, 2);
        let ch = testutil::channels(&cfg, 91, 0.0);
        let streams = StreamCounts::uniform(ch.topology(), 2);
        let x = testutil::random_lowdim(&ch, &streams, 1.0, 17);
        let bf = expand(&ch, &x);
        let weights = vec![1.0, 2.0, 0.5, 1.0];
        let direct = metrics::weighted_sum_rate(&ch, &bf, &weights).unwrap();
        let gram = weighted_sum_rate(&ch, &x, &weights).unwrap();
        assert!(
            (direct - gram).abs() <= 1e-9 * direct.abs().max(1.0),
            "{direct} vs {gram}"
        );
        for k in 0..4 {
            let a = metrics::interference_covariance(k, &ch, &bf).unwrap();
            let b = interference_covariance(k, &ch, &x).unwrap();
            assert!(frob_rel_diff(&a, &b) < 1e-10);
        }
        for i in 0..3 {
            let pa = bf.ap_power(i);
            let pb = ap_power(&ch, &x, i);
            assert!((pa - pb).abs() <= 1e-10 * pa.max(1e-12), "{pa} vs {pb}");
        }
    }

    #[test]
    fn stacked_auxiliary_form_rebuilds_the_full_size_update() {
        let cfg = NetworkConfig::uniform(2, 3, 6, 2, 2);
        let ch = testutil::channels(&cfg, 47, 0.0);
        let streams = StreamCounts::uniform(ch.topology(), 2);
        let bf = testutil::random_beamformer(&ch, &streams, 1.0, 3);
        let u = wmmse::update_u(&ch, &bf).unwrap();
        let w = wmmse::update_w(&ch, &bf, &u).unwrap();
        let aux = MmseAux { u, w };
        let worst = full_size_equivalence_residual(
            &ch,
            &aux,
            &[1.0, 0.7, 1.3],
            &[1.0, 2.0],
            &streams,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(worst <= 1e-8, "worst relative residual {worst}");
    }

    #[test]
    fn update_x_satisfies_stationarity_and_budget() {
        let cfg = NetworkConfig::uniform(2, 3, 5, 2, 2);
        let ch = testutil::channels(&cfg, 59, 0.0);
        let streams = StreamCounts::uniform(ch.topology(), 1);
        let x0 = testutil::random_lowdim(&ch, &streams, 1.0, 7);
        let u = update_u(&ch, &x0).unwrap();
        let w = update_w(&ch, &x0, &u).unwrap();
        let aux = MmseAux { u, w };
        let weights = vec![1.0, 2.0, 0.5];
        let budgets = vec![1.0, 0.5];
        let opts = SolverOptions::default();
        let (x, mus) = update_x(&ch, &aux, &weights, &budgets, &streams, &opts).unwrap();
        let topology = ch.topology();
        for i in 0..2 {
            let sum_rx = ch.sum_rx();
            let mut s = CMat::zeros(sum_rx, sum_rx);
            for l in 0..3 {
                let c = ch.gram_row(i, l).adjoint();
                let a = &aux.u[l] * &aux.w[l] * aux.u[l].adjoint() * Complex64::new(weights[l], 0.0);
                s += &c * a * c.adjoint();
            }
            for &k in &topology.served[i] {
                let off = streams.ue_offset(topology, i, k);
                let d = streams.d(i, k);
                let uw = &aux.u[k] * &aux.w[k];
                let b = ch.gram_row(i, k).adjoint() * uw.columns(off, d) * Complex64::new(weights[k], 0.0);
                let xb = x.block(i, k).unwrap();
                let resid = &s * xb + ch.gram(i) * xb * Complex64::new(mus[i], 0.0) - &b;
                assert!(frob2(&resid) <= 1e-16 * frob2(&b).max(1e-30));
            }
            let p = ap_power(&ch, &x, i);
            assert!(p <= budgets[i] * (1.0 + 1e-8));
            if mus[i] > 0.0 {
                assert!((p - budgets[i]).abs() <= 1e-7 * budgets[i]);
            }
        }
    }

    #[test]
    fn solve_ascends_without_large_factorizations() {
        let cfg = NetworkConfig::uniform(2, 3, 16, 4, 2);
        let ch = testutil::channels(&cfg, 101, 5.0);
        let streams = StreamCounts::uniform(ch.topology(), 2);
        let budgets = vec![1.0; 2];
        let init = ezf::lowdim(&ch, &streams, &budgets).unwrap();
        let weights = vec![1.0; 3];
        let opts = SolverOptions {
            max_iters: 300,
            ..SolverOptions::default()
        };
        let (x, trace) = solve(&ch, &weights, &budgets, &streams, &init, &opts).unwrap();
        assert!(trace.converged);
        for pair in trace.wsr_bits.windows(2) {
            let ascent_nats = (pair[1] - pair[0]) * std::f64::consts::LN_2;
            assert!(ascent_nats >= -1e-9, "descent step: {} -> {}", pair[0], pair[1]);
        }
        assert_eq!(trace.large_factorizations, 0, "no factorization may exceed sum N");
        for i in 0..2 {
            assert!((ap_power(&ch, &x, i) - 1.0).abs() < 1e-4);
        }
        // sum N = 12, three served users at 2 streams each: (144 + 2*6*12)/2
        assert_eq!(trace.interaction_per_ap, vec![144.0; 2]);
    }

    #[test]
    fn reduced_and_full_size_solvers_agree() {
        let cfg = NetworkConfig::uniform(2, 4, 16, 2, 2);
        let ch = testutil::channels(&cfg, 131, 0.0);
        let streams = StreamCounts::uniform(ch.topology(), 1);
        let budgets = vec![1.0; 2];
        let weights = vec![1.0; 4];
        let opts = SolverOptions {
            max_iters: 600,
            rel_tol: 1e-9,
            ..SolverOptions::default()
        };
        let full_init = ezf::beamformer(&ch, &streams, &budgets).unwrap();
        let low_init = ezf::lowdim(&ch, &streams, &budgets).unwrap();
        let (_, trace_full) = wmmse::solve(&ch, &weights, &budgets, &streams, &full_init, &opts).unwrap();
        let (_, trace_low) = solve(&ch, &weights, &budgets, &streams, &low_init, &opts).unwrap();
        let a = trace_full.final_wsr_bits();
        let b = trace_low.final_wsr_bits();
        assert!((a - b).abs() <= 1e-3 * a.abs(), "{a} vs {b}");
    }

    #[test]
    fn expanded_solution_reports_identical_rates() {
        let cfg = NetworkConfig::uniform(2, 3, 8, 2, 2);
        let ch = testutil::channels(&cfg, 149, 0.0);
        let streams = StreamCounts::uniform(ch.topology(), 1);
        let budgets = vec![1.0; 2];
        let init = ezf::lowdim(&ch, &streams, &budgets).unwrap();
        let weights = vec![1.0; 3];
        let (x, trace) = solve(&ch, &weights, &budgets, &streams, &init, &SolverOptions::default()).unwrap();
        let bf = expand(&ch, &x);
        let direct = metrics::weighted_sum_rate(&ch, &bf, &weights).unwrap();
        assert!((direct - trace.final_wsr_bits()).abs() <= 1e-9 * direct.max(1.0));
    }

    #[test]
    fn rank_deficient_surrogate_still_meets_budget() {
        // only one user has nonzero auxiliaries: S is rank deficient at
        // lambda = 0 and the solver must still return a feasible update
        let cfg = NetworkConfig::uniform(1, 2, 6, 2, 1);
        let ch = testutil::channels(&cfg, 61, 0.0);
        let streams = StreamCounts::uniform(ch.topology(), 1);
        let x0 = testutil::random_lowdim(&ch, &streams, 1.0, 11);
        let mut u = update_u(&ch, &x0).unwrap();
        let mut w = update_w(&ch, &x0, &u).unwrap();
        u[1] = CMat::zeros(u[1].nrows(), u[1].ncols());
        w[1] = CMat::zeros(w[1].nrows(), w[1].ncols());
        let aux = MmseAux { u, w };
        let (x, _) = update_x(&ch, &aux, &[1.0, 1.0], &[1.0], &streams, &SolverOptions::default()).unwrap();
        let p = ap_power(&ch, &x, 0);
        assert!(p <= 1.0 * (1.0 + 1e-8));
        assert!(frob2(x.block(0, 1).unwrap()) > 0.0 || frob2(x.block(0, 0).unwrap()) > 0.0);
    }
}

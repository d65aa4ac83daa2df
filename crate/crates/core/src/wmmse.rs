//! Block-coordinate weighted-MMSE solver on the full-size beamformers.
//!
//! One sweep updates, in closed form and in this order: the per-user MMSE
//! receive filters, the MSE weight matrices, and the per-access-point
//! beamformers under the transmit power budgets. Each beamformer update
//! solves an `M_i x M_i` regularized system; the power multiplier is found by
//! bisection on the eigenbasis of that system, so every candidate multiplier
//! costs only `O(M_i)` once the eigendecomposition is done.

use std::time::Instant;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{dimlog_start, dimlog_take, herm_eig, hermitianize, hstack, solve_hpd, CMat};
use crate::metrics::{interaction_count, interference_covariance, weighted_sum_rate};
use crate::network::ChannelSet;
use crate::types::{Algorithm, Beamformer, MmseAux, SolveTrace, SolverOptions, StreamCounts};

/// Stacked received signal of user `k`: `H_k P_k` with blocks in serving-set
/// order. Width is the user's total stream count.
fn received_signal(channels: &ChannelSet, bf: &Beamformer, k: usize) -> CMat {
    let blocks: Vec<CMat> = channels.topology().serving[k]
        .iter()
        .filter_map(|&i| bf.block(i, k).map(|p| channels.channel(i, k) * p))
        .collect();
    if blocks.is_empty() {
        CMat::zeros(channels.rx_antennas()[k], 0)
    } else {
        let refs: Vec<&CMat> = blocks.iter().collect();
        hstack(&refs)
    }
}

/// MMSE receive filters: `U_k = (N_k + H_k P_k P_k^H H_k^H)^{-1} H_k P_k`.
pub fn update_u(channels: &ChannelSet, bf: &Beamformer) -> Result<Vec<CMat>> {
    (0..channels.num_ues())
        .map(|k| {
            let noise_cov = interference_covariance(k, channels, bf)?;
            let hp = received_signal(channels, bf, k);
            let mut total = &noise_cov + &hp * hp.adjoint();
            hermitianize(&mut total);
            solve_hpd(&total, &hp)
        })
        .collect()
}

/// MSE weights: `W_k = (I - U_k^H H_k P_k)^{-1}`.
pub fn update_w(channels: &ChannelSet, bf: &Beamformer, u: &[CMat]) -> Result<Vec<CMat>> {
    if u.len() != channels.num_ues() {
        return Err(Error::Dimension("need one receive filter per user".into()));
    }
    (0..channels.num_ues())
        .map(|k| {
            let hp = received_signal(channels, bf, k);
            let d = hp.ncols();
            let arg = CMat::identity(d, d) - u[k].adjoint() * &hp;
            crate::linalg::inv_general(&arg)
        })
        .collect()
}

/// Find the power multiplier by bisection. Returns 0 when the unconstrained
/// solution already fits the budget; otherwise a `mu > 0` with
/// `|power(mu) - p_max| <= bisect_tol * p_max`. `power` must be continuous
/// and non-increasing; violations are reported as numeric errors.
pub fn bisect_multiplier(power: impl Fn(f64) -> f64, p_max: f64, opts: &SolverOptions) -> Result<f64> {
    if !(p_max > 0.0) {
        return Err(Error::Domain(format!("power budget must be positive, got {p_max}")));
    }
    let eval = |mu: f64| -> Result<f64> {
        let p = power(mu);
        if p.is_nan() {
            return Err(Error::Numeric(format!("power evaluation returned NaN at multiplier {mu}")));
        }
        Ok(p)
    };
    let p0 = eval(0.0)?;
    if p0 <= p_max {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut p_lo = p0;
    let mut hi = 1.0;
    let mut p_hi = eval(hi)?;
    let mut doublings = 0;
    while p_hi > p_max {
        if p_hi > p_lo * (1.0 + 1e-6) {
            return Err(Error::Numeric("power is not non-increasing in the multiplier".into()));
        }
        lo = hi;
        p_lo = p_hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 128 {
            return Err(Error::Numeric("no bisection bracket after 128 doublings".into()));
        }
        p_hi = eval(hi)?;
    }
    // The root is now bracketed with power(lo) >= p_max >= power(hi). Bisect
    // until the power tolerance holds and the interval is tight, so that
    // consecutive sweeps meet the budget with far more accuracy than the
    // stopping tolerance alone would give. If the tolerance never triggers,
    // for instance because the curve is numerically rough near a rank
    // deficiency, fall back to the feasible end of the exhausted interval.
    loop {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            return Ok(hi);
        }
        let pm = eval(mid)?;
        if (pm - p_max).abs() <= opts.bisect_tol * p_max && (hi - lo) <= 1e-12 * hi.max(1e-300) {
            return Ok(mid);
        }
        if pm > p_max {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Beamformer update given the receive-side auxiliaries: per access point
/// solve `(sum_l a_l H_{i,l}^H A_l H_{i,l} + mu_i I) P_{i,k} = a_k H_{i,k}^H
/// (U_k W_k)` restricted to the columns this access point owns, with `mu_i`
/// chosen to meet the power budget.
pub fn update_p(
    channels: &ChannelSet,
    aux: &MmseAux,
    weights: &[f64],
    budgets: &[f64],
    streams: &StreamCounts,
    opts: &SolverOptions,
) -> Result<(Beamformer, Vec<f64>)> {
    let num_aps = channels.num_aps();
    let num_ues = channels.num_ues();
    if aux.u.len() != num_ues || aux.w.len() != num_ues {
        return Err(Error::Dimension("need one receive filter and weight per user".into()));
    }
    if weights.len() != num_ues || budgets.len() != num_aps {
        return Err(Error::Dimension("weights must match num_ues, budgets num_aps".into()));
    }
    let topology = channels.topology();

    // alpha-weighted receive-side matrices A_l = a_l U_l W_l U_l^H
    let a_mats: Vec<CMat> = (0..num_ues)
        .map(|l| {
            let mut a = (&aux.u[l] * &aux.w[l]) * aux.u[l].adjoint() * Complex64::new(weights[l], 0.0);
            hermitianize(&mut a);
            a
        })
        .collect();

    let mut bf = Beamformer::zeros(topology, channels.tx_antennas(), streams);
    let mut multipliers = vec![0.0; num_aps];

    for i in 0..num_aps {
        let m_i = channels.tx_antennas()[i];
        let mut f = CMat::zeros(m_i, m_i);
        for l in 0..num_ues {
            let h = channels.channel(i, l);
            f += h.adjoint() * (&a_mats[l] * h);
        }
        hermitianize(&mut f);

        let served = &topology.served[i];
        let rhs_blocks: Vec<CMat> = served
            .iter()
            .map(|&k| {
                let uw = &aux.u[k] * &aux.w[k];
                let off = streams.ue_offset(topology, i, k);
                let d = streams.d(i, k);
                channels.channel(i, k).adjoint() * uw.columns(off, d) * Complex64::new(weights[k], 0.0)
            })
            .collect();
        let b = if rhs_blocks.is_empty() {
            CMat::zeros(m_i, 0)
        } else {
            let refs: Vec<&CMat> = rhs_blocks.iter().collect();
            hstack(&refs)
        };

        let eig = herm_eig(&f);
        let mut vals: Vec<f64> = eig.vals.iter().map(|&v| v.max(0.0)).collect();
        let vmax = vals.iter().cloned().fold(0.0f64, f64::max);
        let vmin = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        if vmax > 0.0 && (vmin <= 0.0 || vmax / vmin > 1e12) {
            let ridge = opts.ridge_eps * vals.iter().sum::<f64>() / m_i as f64;
            for v in &mut vals {
                *v += ridge;
            }
        }

        let btilde = eig.vecs.adjoint() * &b;
        let row_power: Vec<f64> = (0..m_i)
            .map(|r| btilde.row(r).iter().map(|z| z.norm_sqr()).sum())
            .collect();
        let power = |mu: f64| -> f64 {
            let mut total = 0.0;
            for (r, &rp) in row_power.iter().enumerate() {
                if rp > 0.0 {
                    let denom = vals[r] + mu;
                    total += rp / (denom * denom);
                }
            }
            total
        };
        let mu = bisect_multiplier(power, budgets[i], opts)?;
        multipliers[i] = mu;

        let mut scaled = btilde;
        for r in 0..m_i {
            let denom = vals[r] + mu;
            let s = if denom > 0.0 { 1.0 / denom } else { 0.0 };
            scaled.row_mut(r).scale_mut(s);
        }
        let p_all = &eig.vecs * scaled;

        let mut col = 0;
        for &k in served {
            let d = streams.d(i, k);
            bf.set_block(i, k, p_all.columns(col, d).into_owned());
            col += d;
        }

        let spent = bf.ap_power(i);
        if spent > budgets[i] * (1.0 + 1e-6) {
            return Err(Error::Numeric(format!(
                "access point {i} exceeds its budget after the multiplier search: {spent} > {}",
                budgets[i]
            )));
        }
    }
    Ok((bf, multipliers))
}

fn check_init(channels: &ChannelSet, init: &Beamformer, budgets: &[f64], streams: &StreamCounts) -> Result<()> {
    for i in 0..channels.num_aps() {
        for &k in &channels.topology().served[i] {
            let d = streams.d(i, k);
            let ok = init
                .block(i, k)
                .is_some_and(|b| b.nrows() == channels.tx_antennas()[i] && b.ncols() == d);
            if !ok {
                return Err(Error::Dimension(format!(
                    "initial beamformer block ({i}, {k}) must be {}x{d}",
                    channels.tx_antennas()[i]
                )));
            }
        }
        let p = init.ap_power(i);
        if p > budgets[i] * (1.0 + 1e-8) {
            return Err(Error::Precondition(format!(
                "initial beamformer infeasible at access point {i}: power {p} > budget {}",
                budgets[i]
            )));
        }
    }
    Ok(())
}

/// Run block-coordinate sweeps from `init` until the objective's relative
/// change falls below `rel_tol` or `max_iters` sweeps have run.
pub fn solve(
    channels: &ChannelSet,
    weights: &[f64],
    budgets: &[f64],
    streams: &StreamCounts,
    init: &Beamformer,
    opts: &SolverOptions,
) -> Result<(Beamformer, SolveTrace)> {
    if weights.len() != channels.num_ues() || budgets.len() != channels.num_aps() {
        return Err(Error::Dimension("weights must match num_ues, budgets num_aps".into()));
    }
    check_init(channels, init, budgets, streams)?;
    dimlog_start();
    let mut trace = SolveTrace::new(Algorithm::Wmmse, "custom");
    let mut bf = init.clone();
    trace.wsr_bits.push(weighted_sum_rate(channels, &bf, weights)?);

    for sweep in 1..=opts.max_iters {
        let t0 = Instant::now();
        let u = update_u(channels, &bf)?;
        let w = update_w(channels, &bf, &u)?;
        let aux = MmseAux { u, w };
        let (next, mus) = update_p(channels, &aux, weights, budgets, streams, opts)?;
        bf = next;
        let wsr = weighted_sum_rate(channels, &bf, weights)?;
        trace.sweep_seconds.push(t0.elapsed().as_secs_f64());
        trace.ap_power.push((0..channels.num_aps()).map(|i| bf.ap_power(i)).collect());
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
        Algorithm::Wmmse,
        channels.tx_antennas(),
        channels.rx_antennas(),
        streams,
    );
    trace.large_factorizations = count_large(channels);
    Ok((bf, trace))
}

fn count_large(channels: &ChannelSet) -> usize {
    let threshold = channels.sum_rx();
    dimlog_take().into_iter().filter(|&d| d > threshold).count()
}

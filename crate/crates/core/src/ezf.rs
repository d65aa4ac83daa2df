//! Local eigen zero-forcing beamformer.
//!
//! Each access point works from local channels only: it keeps the top right
//! singular vectors of every served user's channel, stacks them, and inverts
//! that stack so users are separated in each other's dominant eigenspaces.
//! The result spends the full power budget and needs no iteration, which
//! makes it both a baseline and the standard warm start for the iterative
//! solvers.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hermitianize, hstack, solve_hpd, thin_svd, CMat};
use crate::network::ChannelSet;
use crate::types::{Beamformer, LowDimBeamformer, StreamCounts};

/// Truncated SVD of one link with a deterministic phase: each kept right
/// singular vector is rotated so its first nonzero entry is real positive,
/// and the matching left vector is rotated the same way so the product is
/// unchanged.
pub(crate) struct ApSvd {
    /// left singular vectors, `N_k x d`
    pub u: CMat,
    /// leading singular values, length `d`
    pub sigma: Vec<f64>,
    /// right singular vectors, `M_i x d`
    pub v: CMat,
}

pub(crate) fn ap_svd(h: &CMat, d: usize) -> Result<ApSvd> {
    let max_rank = h.nrows().min(h.ncols());
    if d > max_rank {
        return Err(Error::Dimension(format!(
            "cannot keep {d} singular vectors of a {}x{} channel",
            h.nrows(),
            h.ncols()
        )));
    }
    let svd = thin_svd(h)?;
    let mut u = svd.u.columns(0, d).into_owned();
    let mut v = svd.v_h.adjoint().columns(0, d).into_owned();
    for c in 0..d {
        let phase = v.column(c).iter().find(|z| z.norm_sqr() > 0.0).map(|z| z / z.norm());
        if let Some(p) = phase {
            let rot = p.conj();
            for z in v.column_mut(c).iter_mut() {
                *z *= rot;
            }
            for z in u.column_mut(c).iter_mut() {
                *z *= rot;
            }
        }
    }
    Ok(ApSvd {
        u,
        sigma: svd.singular[..d].to_vec(),
        v,
    })
}

/// Per-access-point ingredients shared by the full-size and compressed
/// constructions: the stacked right vectors and the inverted Gram factor.
struct ApPlan {
    svds: Vec<(usize, ApSvd)>,
    /// `(V^H V)^{-1}` scaled to meet the power budget, `d_i x d_i`
    gamma: CMat,
    /// stacked right singular vectors, `M_i x d_i`
    v_stack: CMat,
}

fn plan_ap(channels: &ChannelSet, streams: &StreamCounts, budget: f64, i: usize) -> Result<Option<ApPlan>> {
    if !(budget > 0.0) {
        return Err(Error::Domain(format!("power budget must be positive, got {budget}")));
    }
    let served = &channels.topology().served[i];
    let d_i: usize = served.iter().map(|&k| streams.d(i, k)).sum();
    if d_i == 0 {
        return Ok(None);
    }
    let m_i = channels.tx_antennas()[i];
    if d_i > m_i {
        return Err(Error::Dimension(format!(
            "access point {i} cannot zero-force {d_i} streams with {m_i} antennas"
        )));
    }
    let mut svds = Vec::new();
    let mut v_blocks = Vec::new();
    for &k in served {
        let d = streams.d(i, k);
        let svd = ap_svd(channels.channel(i, k), d)?;
        if svd.sigma.iter().any(|&s| s <= 0.0) {
            return Err(Error::Numeric(format!(
                "rank-deficient channel ({i}, {k}) cannot carry {d} streams"
            )));
        }
        v_blocks.push(svd.v.clone());
        svds.push((k, svd));
    }
    let refs: Vec<&CMat> = v_blocks.iter().collect();
    let v_stack = hstack(&refs);
    let mut gram = v_stack.adjoint() * &v_stack;
    hermitianize(&mut gram);
    let inv = solve_hpd(&gram, &CMat::identity(d_i, d_i)).map_err(|_| {
        Error::Numeric(format!(
            "eigen directions at access point {i} are linearly dependent; cannot zero-force"
        ))
    })?;
    // || V (V^H V)^{-1} ||_F^2 = tr((V^H V)^{-1})
    let pinv_norm2: f64 = (0..d_i).map(|c| inv[(c, c)].re).sum();
    let scale = (budget / pinv_norm2).sqrt();
    Ok(Some(ApPlan {
        svds,
        gamma: inv * Complex64::new(scale, 0.0),
        v_stack,
    }))
}

/// Full-size beamformer: per access point `P_i = V (V^H V)^{-1}` scaled to
/// spend the budget exactly, columns split per served user.
pub fn beamformer(channels: &ChannelSet, streams: &StreamCounts, budgets: &[f64]) -> Result<Beamformer> {
    if budgets.len() != channels.num_aps() {
        return Err(Error::Dimension("need one power budget per access point".into()));
    }
    let topology = channels.topology();
    let mut bf = Beamformer::zeros(topology, channels.tx_antennas(), streams);
    for i in 0..channels.num_aps() {
        let Some(plan) = plan_ap(channels, streams, budgets[i], i)? else {
            continue;
        };
        let p_all = &plan.v_stack * &plan.gamma;
        let mut col = 0;
        for &k in &topology.served[i] {
            let d = streams.d(i, k);
            bf.set_block(i, k, p_all.columns(col, d).into_owned());
            col += d;
        }
    }
    Ok(bf)
}

/// Compressed beamformer with the same physical effect: blocks `X_{i,k}` such
/// that `ap_stack(i)^H X_{i,k}` reproduces the full-size columns. Rows live in
/// the all-user receive stack; only the served users' rows are nonzero.
pub fn lowdim(channels: &ChannelSet, streams: &StreamCounts, budgets: &[f64]) -> Result<LowDimBeamformer> {
    if budgets.len() != channels.num_aps() {
        return Err(Error::Dimension("need one power budget per access point".into()));
    }
    let topology = channels.topology();
    let sum_rx = channels.sum_rx();
    let mut bf = LowDimBeamformer::zeros(topology, sum_rx, streams);
    for i in 0..channels.num_aps() {
        let Some(plan) = plan_ap(channels, streams, budgets[i], i)? else {
            continue;
        };
        let d_i = plan.gamma.nrows();
        // rows: all-user stack; cols: this access point's stream order
        let mut lift = CMat::zeros(sum_rx, d_i);
        let mut col = 0;
        for (k, svd) in &plan.svds {
            let d = svd.sigma.len();
            // U diag(1/sigma): right-inverts H restricted to the kept pairs
            let mut block = svd.u.clone();
            for c in 0..d {
                block.column_mut(c).scale_mut(1.0 / svd.sigma[c]);
            }
            lift.view_mut((channels.rx_offset(*k), col), (block.nrows(), d))
                .copy_from(&block);
            col += d;
        }
        let x_all = lift * &plan.gamma;
        let mut col = 0;
        for &k in &topology.served[i] {
            let d = streams.d(i, k);
            bf.set_block(i, k, x_all.columns(col, d).into_owned());
            col += d;
        }
    }
    Ok(bf)
}

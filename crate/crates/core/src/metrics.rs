//! Achievable rates, transmit powers and fronthaul interaction accounting.
//!
//! With non-coherent joint transmission every serving access point sends its
//! own stream block, so the useful covariance at user `k` is the sum of
//! per-access-point terms and never contains cross products between access
//! points.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hermitianize, hstack, logdet_hpd, CMat};
use crate::network::ChannelSet;
use crate::types::{Algorithm, Beamformer, StreamCounts};

fn check_dims(channels: &ChannelSet, bf: &Beamformer) -> Result<()> {
    if bf.num_aps() != channels.num_aps() || bf.num_ues() != channels.num_ues() {
        return Err(Error::Dimension("beamformer grid does not match the channel set".into()));
    }
    for (i, k, block) in bf.pairs() {
        if block.nrows() != channels.tx_antennas()[i] {
            return Err(Error::Dimension(format!(
                "beamformer block ({i}, {k}) has {} rows, access point has {} antennas",
                block.nrows(),
                channels.tx_antennas()[i]
            )));
        }
    }
    Ok(())
}

/// Covariance of everything user `k` receives that is not meant for it:
/// all other users' streams from their serving sets, plus thermal noise.
pub fn interference_covariance(k: usize, channels: &ChannelSet, bf: &Beamformer) -> Result<CMat> {
    check_dims(channels, bf)?;
    let sigma2 = channels.noise(k)?;
    let n_k = channels.rx_antennas()[k];
    let received: Vec<CMat> = bf
        .pairs()
        .filter(|&(_, l, _)| l != k)
        .map(|(j, _, p)| channels.channel(j, k) * p)
        .collect();
    let mut cov = if received.is_empty() {
        CMat::zeros(n_k, n_k)
    } else {
        let refs: Vec<&CMat> = received.iter().collect();
        let stacked = hstack(&refs);
        &stacked * stacked.adjoint()
    };
    for d in 0..n_k {
        cov[(d, d)] += Complex64::new(sigma2, 0.0);
    }
    hermitianize(&mut cov);
    Ok(cov)
}

/// Achievable rate of user `k` in bits/s/Hz, treating interference as noise
/// and decoding the non-coherent superposition from the serving set jointly.
pub fn ue_rate(k: usize, channels: &ChannelSet, bf: &Beamformer) -> Result<f64> {
    let noise_cov = interference_covariance(k, channels, bf)?;
    let n_k = channels.rx_antennas()[k];
    let signal: Vec<CMat> = channels.topology().serving[k]
        .iter()
        .filter_map(|&i| bf.block(i, k).map(|p| channels.channel(i, k) * p))
        .collect();
    let mut total = noise_cov.clone();
    if !signal.is_empty() {
        let refs: Vec<&CMat> = signal.iter().collect();
        let stacked = hstack(&refs);
        total += &stacked * stacked.adjoint();
        hermitianize(&mut total);
    }
    debug_assert_eq!(total.nrows(), n_k);
    let nats = logdet_hpd(&total)? - logdet_hpd(&noise_cov)?;
    Ok(nats / std::f64::consts::LN_2)
}

/// Weighted sum rate in bits/s/Hz.
pub fn weighted_sum_rate(channels: &ChannelSet, bf: &Beamformer, weights: &[f64]) -> Result<f64> {
    if weights.len() != channels.num_ues() {
        return Err(Error::Dimension("weight vector length must be num_ues".into()));
    }
    let mut wsr = 0.0;
    for (k, &alpha) in weights.iter().enumerate() {
        wsr += alpha * ue_rate(k, channels, bf)?;
    }
    Ok(wsr)
}

/// Transmit power spent by access point `i`.
pub fn ap_power(i: usize, bf: &Beamformer) -> f64 {
    bf.ap_power(i)
}

/// Fronthaul traffic per access point for one solve, in complex scalars.
///
/// The zero-forcing baseline needs nothing beyond its own channels. The
/// full-size solver ships every user's receive-stacked matrix up and the
/// designed beamformer columns down, both in the transmit-antenna basis. The
/// reduced solver ships the Gram matrix up (Hermitian, so half of it) and the
/// reduced coefficients down, both in the stacked receive basis, once per
/// solve regardless of sweep count. Counts are exact integers or
/// half-integers.
pub fn interaction_count(
    algo: Algorithm,
    tx_antennas: &[usize],
    rx_antennas: &[usize],
    streams: &StreamCounts,
) -> Vec<f64> {
    let sum_rx: usize = rx_antennas.iter().sum();
    (0..tx_antennas.len())
        .map(|i| {
            let d_i = streams.ap_total(i);
            match algo {
                Algorithm::LocalEzf => 0.0,
                Algorithm::Wmmse => ((sum_rx + d_i) * tx_antennas[i]) as f64,
                Algorithm::Rwmmse | Algorithm::RwmmseLsa | Algorithm::RwmmseLus => {
                    (sum_rx * sum_rx + 2 * d_i * sum_rx) as f64 / 2.0
                }
            }
        })
        .collect()
}

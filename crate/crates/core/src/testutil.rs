//! Helpers shared by the unit tests: seeded random instances at desk scale.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::linalg::CMat;
use crate::network::{draw_channels, place_network, ChannelSet, NetworkConfig};
use crate::types::{Beamformer, LowDimBeamformer, StreamCounts};

/// Place, draw and calibrate a channel set in one call.
pub(crate) fn channels(config: &NetworkConfig, seed: u64, snr_db: f64) -> ChannelSet {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let topo = place_network(config, &mut rng).unwrap();
    let mut ch = draw_channels(config, &topo, &mut rng).unwrap();
    ch.assign_noise_power(snr_db, config.noise_ref).unwrap();
    ch
}

pub(crate) fn random_cmat(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Random beamformer scaled so every access point spends
/// `power_fraction * 1 W` exactly.
pub(crate) fn random_beamformer(
    channels: &ChannelSet,
    streams: &StreamCounts,
    power_fraction: f64,
    seed: u64,
) -> Beamformer {
    let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(1));
    let mut bf = Beamformer::zeros(channels.topology(), channels.tx_antennas(), streams);
    for i in 0..channels.num_aps() {
        for &k in &channels.topology().served[i] {
            let d = streams.d(i, k);
            bf.set_block(i, k, random_cmat(&mut rng, channels.tx_antennas()[i], d));
        }
        let p = bf.ap_power(i);
        if p > 0.0 {
            let c = Complex64::new((power_fraction / p).sqrt(), 0.0);
            for &k in &channels.topology().served[i].clone() {
                let scaled = bf.block(i, k).unwrap() * c;
                bf.set_block(i, k, scaled);
            }
        }
    }
    bf
}

/// Random reduced-dimension beamformer with per-AP expanded power
/// `power_fraction * 1 W` exactly (power measured through the Gram matrix).
pub(crate) fn random_lowdim(
    channels: &ChannelSet,
    streams: &StreamCounts,
    power_fraction: f64,
    seed: u64,
) -> LowDimBeamformer {
    let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_mul(0x51f1_57c5).wrapping_add(3));
    let sum_rx = channels.sum_rx();
    let mut x = LowDimBeamformer::zeros(channels.topology(), sum_rx, streams);
    for i in 0..channels.num_aps() {
        for &k in &channels.topology().served[i] {
            let d = streams.d(i, k);
            x.set_block(i, k, random_cmat(&mut rng, sum_rx, d));
        }
        let g = channels.gram(i);
        let p: f64 = channels.topology().served[i]
            .iter()
            .map(|&k| {
                let b = x.block(i, k).unwrap();
                (b.adjoint() * g * b).diagonal().iter().map(|z| z.re).sum::<f64>()
            })
            .sum();
        if p > 0.0 {
            let c = Complex64::new((power_fraction / p).sqrt(), 0.0);
            for &k in &channels.topology().served[i].clone() {
                let scaled = x.block(i, k).unwrap() * c;
                x.set_block(i, k, scaled);
            }
        }
    }
    x
}

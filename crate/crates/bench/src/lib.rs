//! Shared setup for the solver benchmarks: a seeded mid-size network so
//! every bench run measures the same instance.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use ncjt_core::network::draw_channels;
use ncjt_core::{place_network, ChannelSet, NetworkConfig, StreamCounts};

/// Calibrated channel set for `num_aps` access points with `tx` antennas
/// each, eight 4-antenna users, clusters of two.
pub fn bench_channels(num_aps: usize, tx: usize) -> ChannelSet {
    let config = NetworkConfig::uniform(num_aps, 8, tx, 4, 2);
    let mut rng = ChaCha12Rng::seed_from_u64(0xBEC);
    let topology = place_network(&config, &mut rng).unwrap();
    let mut channels = draw_channels(&config, &topology, &mut rng).unwrap();
    channels.assign_noise_power(0.0, config.noise_ref).unwrap();
    channels
}

/// Two streams per serving pair, the fixed-allocation default.
pub fn bench_streams(channels: &ChannelSet) -> StreamCounts {
    StreamCounts::uniform(channels.topology(), 2)
}

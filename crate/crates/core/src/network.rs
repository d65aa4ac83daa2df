//! Network model: geometry, user-centric clustering, channel generation and
//! noise calibration.
//!
//! Reproducibility contract: all randomness flows through the caller-supplied
//! [`rand_chacha::ChaCha12Rng`]. [`place_network`] draws distances in access
//! point major order (`i` outer, `k` inner); [`draw_channels`] then draws each
//! pair's fading matrix in the same pair order, entries row-major, real part
//! before imaginary part. The same seed therefore reproduces the same network
//! bit for bit.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{frob2, hermitianize, hstack, vstack, CMat};

/// Which antenna count normalizes the average channel gain when converting a
/// target SNR into a noise power.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NoiseReference {
    /// Normalize by the user's whole serving array: `N_k · sum_{i in I_k} M_i`.
    #[default]
    ServingArray,
    /// Normalize by a single access point's array: `N_k · mean_{i in I_k} M_i`.
    SingleAp,
}

/// Static description of a simulated network.
#[derive(Clone, Debug)]
pub struct NetworkConfig {
    pub num_aps: usize,
    pub num_ues: usize,
    /// Transmit antennas per access point (`M_i`).
    pub tx_antennas: Vec<usize>,
    /// Receive antennas per user (`N_k`).
    pub rx_antennas: Vec<usize>,
    /// Serving cluster size `L`: each user is served by its `L` closest
    /// access points.
    pub cluster_size: usize,
    /// Transmit power budget per access point, watts.
    pub power_budgets: Vec<f64>,
    /// Rate weight per user.
    pub rate_weights: Vec<f64>,
    pub snr_db: f64,
    pub seed: u64,
    /// Uniform distance range in kilometers, inclusive on both ends.
    pub distance_range_km: (f64, f64),
    pub noise_ref: NoiseReference,
}

impl NetworkConfig {
    /// Uniform antenna counts, unit budgets and unit weights.
    pub fn uniform(num_aps: usize, num_ues: usize, tx: usize, rx: usize, cluster_size: usize) -> Self {
        NetworkConfig {
            num_aps,
            num_ues,
            tx_antennas: vec![tx; num_aps],
            rx_antennas: vec![rx; num_ues],
            cluster_size,
            power_budgets: vec![1.0; num_aps],
            rate_weights: vec![1.0; num_ues],
            snr_db: 0.0,
            seed: 1,
            distance_range_km: (0.1, 0.3),
            noise_ref: NoiseReference::default(),
        }
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.snr_db = snr_db;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_tx(mut self, tx: usize) -> Self {
        self.tx_antennas = vec![tx; self.num_aps];
        self
    }

    pub fn sum_rx(&self) -> usize {
        self.rx_antennas.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_aps == 0 || self.num_ues == 0 {
            return Err(Error::Domain("need at least one access point and one user".into()));
        }
        if self.tx_antennas.len() != self.num_aps || self.rx_antennas.len() != self.num_ues {
            return Err(Error::Dimension("antenna count lists must match num_aps / num_ues".into()));
        }
        if self.power_budgets.len() != self.num_aps || self.rate_weights.len() != self.num_ues {
            return Err(Error::Dimension("budget / weight lists must match num_aps / num_ues".into()));
        }
        if self.tx_antennas.iter().any(|&m| m == 0) || self.rx_antennas.iter().any(|&n| n == 0) {
            return Err(Error::Domain("antenna counts must be positive".into()));
        }
        if self.cluster_size == 0 || self.cluster_size > self.num_aps {
            return Err(Error::Domain(format!(
                "cluster size {} outside 1..={}",
                self.cluster_size, self.num_aps
            )));
        }
        if self.power_budgets.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Domain("power budgets must be positive".into()));
        }
        if self.rate_weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Domain("rate weights must be positive".into()));
        }
        let (lo, hi) = self.distance_range_km;
        if !(lo > 0.0) || !(hi >= lo) {
            return Err(Error::Domain(format!("bad distance range [{lo}, {hi}]")));
        }
        Ok(())
    }

    /// Parse a `key=value` configuration file body. Empty lines and lines
    /// starting with `#` are skipped; unknown keys are rejected.
    pub fn parse_kv(text: &str) -> Result<Self> {
        let mut kv = std::collections::HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("line {}: expected key=value, got {line:?}", lineno + 1)))?;
            kv.insert(key.trim().to_string(), value.trim().to_string());
        }

        fn parse<T: std::str::FromStr>(s: &str, key: &str) -> Result<T> {
            s.parse::<T>()
                .map_err(|_| Error::Format(format!("bad value {s:?} for key {key}")))
        }
        fn parse_list<T: std::str::FromStr + Clone>(s: &str, key: &str, len: usize) -> Result<Vec<T>> {
            let items: Vec<T> = s
                .split(',')
                .map(|p| parse::<T>(p.trim(), key))
                .collect::<Result<_>>()?;
            if items.len() == 1 {
                Ok(vec![items[0].clone(); len])
            } else if items.len() == len {
                Ok(items)
            } else {
                Err(Error::Format(format!("key {key}: expected 1 or {len} values, got {}", items.len())))
            }
        }

        let mut take = |names: &[&str]| -> Option<String> {
            for n in names {
                if let Some(v) = kv.remove(*n) {
                    return Some(v);
                }
            }
            None
        };

        let num_aps: usize = take(&["num_aps", "aps"]).map(|v| parse(&v, "num_aps")).transpose()?.unwrap_or(4);
        let num_ues: usize = take(&["num_ues", "ues"]).map(|v| parse(&v, "num_ues")).transpose()?.unwrap_or(8);
        let tx = match take(&["tx_antennas", "m"]) {
            Some(v) => parse_list(&v, "tx_antennas", num_aps)?,
            None => vec![64; num_aps],
        };
        let rx = match take(&["rx_antennas", "n"]) {
            Some(v) => parse_list(&v, "rx_antennas", num_ues)?,
            None => vec![4; num_ues],
        };
        let cluster: usize = take(&["cluster_size", "l"]).map(|v| parse(&v, "cluster_size")).transpose()?.unwrap_or(2);
        let budgets = match take(&["power_budget", "p_max"]) {
            Some(v) => parse_list(&v, "power_budget", num_aps)?,
            None => vec![1.0; num_aps],
        };
        let weights = match take(&["rate_weights", "alpha"]) {
            Some(v) => parse_list(&v, "rate_weights", num_ues)?,
            None => vec![1.0; num_ues],
        };
        let snr_db: f64 = take(&["snr_db", "snr"]).map(|v| parse(&v, "snr_db")).transpose()?.unwrap_or(0.0);
        let seed: u64 = take(&["seed"]).map(|v| parse(&v, "seed")).transpose()?.unwrap_or(1);
        let distance_range_km = match take(&["distance_range", "d_range"]) {
            Some(v) => {
                let parts = parse_list::<f64>(&v, "distance_range", 2)?;
                (parts[0], parts[1])
            }
            None => (0.1, 0.3),
        };
        let noise_ref = match take(&["noise_ref"]).as_deref() {
            None | Some("serving-array") => NoiseReference::ServingArray,
            Some("single-ap") => NoiseReference::SingleAp,
            Some(other) => return Err(Error::Format(format!("bad noise_ref {other:?}"))),
        };

        if let Some(key) = kv.keys().next() {
            return Err(Error::Format(format!("unknown configuration key {key:?}")));
        }

        let cfg = NetworkConfig {
            num_aps,
            num_ues,
            tx_antennas: tx,
            rx_antennas: rx,
            cluster_size: cluster,
            power_budgets: budgets,
            rate_weights: weights,
            snr_db,
            seed,
            distance_range_km,
            noise_ref,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig::uniform(4, 8, 64, 4, 2)
    }
}

/// Large-scale pathloss in dB at distance `d_km` kilometers.
pub fn pathloss_db(d_km: f64) -> Result<f64> {
    if !(d_km > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {d_km}")));
    }
    Ok(128.1 + 37.6 * d_km.log10())
}

/// Amplitude gain `10^(-pathloss/20)` applied to unit-variance fading.
pub fn amplitude_gain(d_km: f64) -> Result<f64> {
    Ok(10f64.powf(-pathloss_db(d_km)? / 20.0))
}

/// Who serves whom: distances, per-user serving sets and per-access-point
/// served sets.
#[derive(Clone, Debug)]
pub struct Topology {
    /// Access-point-to-user distances in kilometers, indexed `(i, k)`.
    /// Absent when the topology was reconstructed from a channel file.
    pub distances_km: Option<DMatrix<f64>>,
    /// Serving set of each user, ascending access point indices.
    pub serving: Vec<Vec<usize>>,
    /// Users served by each access point, ascending user indices.
    pub served: Vec<Vec<usize>>,
}

impl Topology {
    /// Serving sets from a distance matrix: each user takes its `cluster_size`
    /// closest access points, ties broken toward the lower index.
    pub fn from_distances(distances_km: DMatrix<f64>, cluster_size: usize) -> Result<Self> {
        let (num_aps, num_ues) = distances_km.shape();
        if cluster_size == 0 || cluster_size > num_aps {
            return Err(Error::Domain(format!("cluster size {cluster_size} outside 1..={num_aps}")));
        }
        if distances_km.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Domain("distances must be positive".into()));
        }
        let mut serving = Vec::with_capacity(num_ues);
        for k in 0..num_ues {
            let mut order: Vec<usize> = (0..num_aps).collect();
            order.sort_by(|&a, &b| {
                distances_km[(a, k)]
                    .partial_cmp(&distances_km[(b, k)])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let mut cluster: Vec<usize> = order[..cluster_size].to_vec();
            cluster.sort_unstable();
            serving.push(cluster);
        }
        Ok(Self::assemble(Some(distances_km), serving, num_aps))
    }

    /// Topology from explicit serving sets (used when loading channel files).
    pub fn from_serving_sets(serving: Vec<Vec<usize>>, num_aps: usize) -> Self {
        let serving = serving
            .into_iter()
            .map(|mut s| {
                s.sort_unstable();
                s
            })
            .collect();
        Self::assemble(None, serving, num_aps)
    }

    /// Every access point serves every user.
    pub fn full(num_aps: usize, num_ues: usize) -> Self {
        let serving = vec![(0..num_aps).collect::<Vec<_>>(); num_ues];
        Self::assemble(None, serving, num_aps)
    }

    fn assemble(distances_km: Option<DMatrix<f64>>, serving: Vec<Vec<usize>>, num_aps: usize) -> Self {
        let mut served = vec![Vec::new(); num_aps];
        for (k, cluster) in serving.iter().enumerate() {
            for &i in cluster {
                served[i].push(k);
            }
        }
        Topology {
            distances_km,
            serving,
            served,
        }
    }

    pub fn num_aps(&self) -> usize {
        self.served.len()
    }

    pub fn num_ues(&self) -> usize {
        self.serving.len()
    }

    pub fn is_serving(&self, i: usize, k: usize) -> bool {
        self.serving[k].binary_search(&i).is_ok()
    }
}

/// Draw access-point-to-user distances i.i.d. uniform over the configured
/// range and derive the serving sets.
pub fn place_network(config: &NetworkConfig, rng: &mut ChaCha12Rng) -> Result<Topology> {
    config.validate()?;
    let (lo, hi) = config.distance_range_km;
    let mut d = DMatrix::zeros(config.num_aps, config.num_ues);
    for i in 0..config.num_aps {
        for k in 0..config.num_ues {
            d[(i, k)] = rng.random_range(lo..=hi);
        }
    }
    Topology::from_distances(d, config.cluster_size)
}

/// Channel realizations for every access-point/user pair plus the caches the
/// solvers work from.
#[derive(Clone, Debug)]
pub struct ChannelSet {
    tx_antennas: Vec<usize>,
    rx_antennas: Vec<usize>,
    topology: Topology,
    /// `channels[i][k]` is the `N_k x M_i` matrix from access point `i` to
    /// user `k`; present for every pair, serving or not.
    channels: Vec<Vec<CMat>>,
    /// Per-user noise power; `None` until [`ChannelSet::assign_noise_power`].
    noise: Option<Vec<f64>>,
    /// Concatenation over the serving set: `N_k x sum_{i in I_k} M_i`.
    serving_concat: Vec<CMat>,
    /// All users stacked per access point: `sum(N) x M_i`.
    ap_stack: Vec<CMat>,
    /// Gram matrix of each stack: `sum(N) x sum(N)`.
    gram: Vec<CMat>,
    rx_offsets: Vec<usize>,
}

impl ChannelSet {
    pub fn new(channels: Vec<Vec<CMat>>, topology: Topology, noise: Option<Vec<f64>>) -> Result<Self> {
        let num_aps = topology.num_aps();
        let num_ues = topology.num_ues();
        if channels.len() != num_aps || channels.iter().any(|row| row.len() != num_ues) {
            return Err(Error::Dimension("channel grid must be num_aps x num_ues".into()));
        }
        let rx_antennas: Vec<usize> = (0..num_ues).map(|k| channels[0][k].nrows()).collect();
        let tx_antennas: Vec<usize> = (0..num_aps).map(|i| channels[i][0].ncols()).collect();
        for (i, row) in channels.iter().enumerate() {
            for (k, h) in row.iter().enumerate() {
                if h.nrows() != rx_antennas[k] || h.ncols() != tx_antennas[i] {
                    return Err(Error::Dimension(format!(
                        "channel ({i}, {k}) is {}x{}, expected {}x{}",
                        h.nrows(),
                        h.ncols(),
                        rx_antennas[k],
                        tx_antennas[i]
                    )));
                }
            }
        }
        if let Some(n) = &noise {
            if n.len() != num_ues {
                return Err(Error::Dimension("noise vector length must be num_ues".into()));
            }
        }

        let mut rx_offsets = Vec::with_capacity(num_ues);
        let mut acc = 0;
        for &n in &rx_antennas {
            rx_offsets.push(acc);
            acc += n;
        }

        let serving_concat = (0..num_ues)
            .map(|k| {
                let blocks: Vec<&CMat> = topology.serving[k].iter().map(|&i| &channels[i][k]).collect();
                hstack(&blocks)
            })
            .collect();
        let ap_stack: Vec<CMat> = (0..num_aps)
            .map(|i| {
                let blocks: Vec<&CMat> = (0..num_ues).map(|k| &channels[i][k]).collect();
                vstack(&blocks)
            })
            .collect();
        let gram = ap_stack
            .iter()
            .map(|s| {
                let mut g = s * s.adjoint();
                hermitianize(&mut g);
                g
            })
            .collect();

        Ok(ChannelSet {
            tx_antennas,
            rx_antennas,
            topology,
            channels,
            noise,
            serving_concat,
            ap_stack,
            gram,
            rx_offsets,
        })
    }

    pub fn num_aps(&self) -> usize {
        self.tx_antennas.len()
    }

    pub fn num_ues(&self) -> usize {
        self.rx_antennas.len()
    }

    pub fn tx_antennas(&self) -> &[usize] {
        &self.tx_antennas
    }

    pub fn rx_antennas(&self) -> &[usize] {
        &self.rx_antennas
    }

    pub fn sum_rx(&self) -> usize {
        self.rx_antennas.iter().sum()
    }

    /// Row offset of user `k` inside the stacked receive dimension.
    pub fn rx_offset(&self, k: usize) -> usize {
        self.rx_offsets[k]
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn channel(&self, i: usize, k: usize) -> &CMat {
        &self.channels[i][k]
    }

    /// `H_k`: user `k`'s channels from its serving set, concatenated in
    /// serving-set order.
    pub fn serving_concat(&self, k: usize) -> &CMat {
        &self.serving_concat[k]
    }

    /// Transmit antennas across user `k`'s serving set.
    pub fn serving_antennas(&self, k: usize) -> usize {
        self.topology.serving[k].iter().map(|&i| self.tx_antennas[i]).sum()
    }

    /// `H_bar_i`: every user's channel from access point `i`, stacked.
    pub fn ap_stack(&self, i: usize) -> &CMat {
        &self.ap_stack[i]
    }

    /// `G_i = H_bar_i H_bar_i^H`.
    pub fn gram(&self, i: usize) -> &CMat {
        &self.gram[i]
    }

    /// Block row `k` of `G_i`, which equals `H_{i,k} H_bar_i^H`.
    pub fn gram_row(&self, i: usize, k: usize) -> nalgebra::DMatrixView<'_, Complex64> {
        self.gram[i].rows(self.rx_offsets[k], self.rx_antennas[k])
    }

    pub fn noise(&self, k: usize) -> Result<f64> {
        self.noise
            .as_ref()
            .map(|n| n[k])
            .ok_or_else(|| Error::State("noise power has not been assigned".into()))
    }

    pub fn noise_assigned(&self) -> bool {
        self.noise.is_some()
    }

    pub fn noise_powers(&self) -> Option<&[f64]> {
        self.noise.as_deref()
    }

    pub fn set_noise_powers(&mut self, noise: Vec<f64>) -> Result<()> {
        if noise.len() != self.num_ues() {
            return Err(Error::Dimension("noise vector length must be num_ues".into()));
        }
        if noise.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Domain("noise powers must be positive".into()));
        }
        self.noise = Some(noise);
        Ok(())
    }

    /// Calibrate the common noise power from the realized channels so that
    /// `snr_db` is the average received SNR before beamforming:
    /// `sigma^2 = 10^(mean_k log10(||H_k||_F^2 / denom_k)) * 10^(-snr_db/10)`,
    /// where `denom_k` follows `reference`. Every user gets the same value.
    pub fn assign_noise_power(&mut self, snr_db: f64, reference: NoiseReference) -> Result<Vec<f64>> {
        let num_ues = self.num_ues();
        let mut mean_log = 0.0;
        for k in 0..num_ues {
            let power = frob2(&self.serving_concat[k]);
            if !(power > 0.0) {
                return Err(Error::Domain(format!("user {k} has a zero-norm serving channel")));
            }
            let denom = match reference {
                NoiseReference::ServingArray => self.rx_antennas[k] as f64 * self.serving_antennas(k) as f64,
                NoiseReference::SingleAp => {
                    let cluster = &self.topology.serving[k];
                    let mean_m =
                        cluster.iter().map(|&i| self.tx_antennas[i] as f64).sum::<f64>() / cluster.len() as f64;
                    self.rx_antennas[k] as f64 * mean_m
                }
            };
            mean_log += (power / denom).log10();
        }
        mean_log /= num_ues as f64;
        let sigma2 = 10f64.powf(mean_log) * 10f64.powf(-snr_db / 10.0);
        let noise = vec![sigma2; num_ues];
        self.noise = Some(noise.clone());
        Ok(noise)
    }

    /// The same physical channels with every access point serving every user.
    /// Noise powers are kept: they are a property of the realization, not of
    /// the serving structure.
    pub fn with_full_serving(&self) -> ChannelSet {
        let mut topology = Topology::full(self.num_aps(), self.num_ues());
        topology.distances_km = self.topology.distances_km.clone();
        ChannelSet::new(self.channels.clone(), topology, self.noise.clone())
            .expect("dimensions already validated")
    }
}

/// Draw Rayleigh-faded channels `H_{i,k} = g_{i,k} W` with `W` having
/// i.i.d. unit-variance circularly symmetric complex Gaussian entries.
pub fn draw_channels(config: &NetworkConfig, topology: &Topology, rng: &mut ChaCha12Rng) -> Result<ChannelSet> {
    config.validate()?;
    if topology.num_aps() != config.num_aps || topology.num_ues() != config.num_ues {
        return Err(Error::Dimension("topology does not match configuration".into()));
    }
    let distances = topology
        .distances_km
        .as_ref()
        .ok_or_else(|| Error::State("topology has no distances to derive gains from".into()))?;
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut channels = Vec::with_capacity(config.num_aps);
    for i in 0..config.num_aps {
        let mut row = Vec::with_capacity(config.num_ues);
        for k in 0..config.num_ues {
            let g = amplitude_gain(distances[(i, k)])?;
            let mut h = CMat::zeros(config.rx_antennas[k], config.tx_antennas[i]);
            for r in 0..config.rx_antennas[k] {
                for c in 0..config.tx_antennas[i] {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    h[(r, c)] = Complex64::new(g * re * inv_sqrt2, g * im * inv_sqrt2);
                }
            }
            row.push(h);
        }
        channels.push(row);
    }
    ChannelSet::new(channels, topology.clone(), None)
}

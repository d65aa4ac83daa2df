//! End-to-end acceptance suite. Each test checks one shipped guarantee and
//! prints its own pass/fail line through the standard harness; assertion
//! messages carry the measured numbers. Expensive solver runs are shared
//! between tests through lazily-built caches, so the suite costs the same
//! whether tests run individually or together (the harness runs them
//! sequentially on one thread per process).

use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DMatrix;
use ncjt_core::harness::{generate_channels, scaling_fit};
use ncjt_core::network::{draw_channels, NoiseReference, Topology};
use ncjt_core::streams::{select_streams, solve_lsa_default, solve_lus};
use ncjt_core::{
    ezf, metrics, rwmmse, wmmse, Algorithm, Beamformer, ChannelSet, CMat, NetworkConfig,
    SolveTrace, SolverOptions, StreamCounts,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

type C64 = nalgebra::Complex<f64>;

// Reference configuration: 4 access points with 64 antennas, 8 users with 4
// receive antennas, clusters of the 2 nearest APs, 1 W per AP.
fn reference_config() -> NetworkConfig {
    NetworkConfig::uniform(4, 8, 64, 4, 2)
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Largest per-sweep decrease of the trace in nats (positive = descent).
fn worst_descent_nats(trace: &SolveTrace) -> f64 {
    trace
        .wsr_bits
        .windows(2)
        .map(|p| (p[0] - p[1]) * std::f64::consts::LN_2)
        .fold(f64::NEG_INFINITY, f64::max)
}

// ---------------------------------------------------------------------------
// Cache 1: reference-size instances solved by both full-size and reduced
// solvers from one shared zero-forcing start (SNR 0 dB, 2 streams per pair).
// ---------------------------------------------------------------------------

struct PairedRun {
    channels: ChannelSet,
    bf_w: Beamformer,
    trace_w: SolveTrace,
    trace_r: SolveTrace,
    power_w: Vec<f64>,
    power_r: Vec<f64>,
    wall_w: f64,
    wall_r: f64,
}

static PAIRED: OnceLock<Vec<PairedRun>> = OnceLock::new();

fn paired_runs() -> &'static [PairedRun] {
    PAIRED.get_or_init(|| {
        let cfg = reference_config();
        let budgets = vec![1.0; 4];
        let weights = vec![1.0; 8];
        let opts = SolverOptions::default();
        (0..50)
            .map(|t| {
                let mut ch = generate_channels(&cfg, 10_000 + t).unwrap();
                ch.assign_noise_power(0.0, cfg.noise_ref).unwrap();
                let counts = StreamCounts::uniform(ch.topology(), 2);

                let t0 = Instant::now();
                let init_w = ezf::beamformer(&ch, &counts, &budgets).unwrap();
                let (bf_w, trace_w) =
                    wmmse::solve(&ch, &weights, &budgets, &counts, &init_w, &opts).unwrap();
                let wall_w = t0.elapsed().as_secs_f64();

                let t0 = Instant::now();
                let init_r = ezf::lowdim(&ch, &counts, &budgets).unwrap();
                let (bf_r, trace_r) =
                    rwmmse::solve(&ch, &weights, &budgets, &counts, &init_r, &opts).unwrap();
                let wall_r = t0.elapsed().as_secs_f64();

                let power_w = (0..4).map(|i| metrics::ap_power(i, &bf_w)).collect();
                let power_r = (0..4).map(|i| rwmmse::ap_power(&ch, &bf_r, i)).collect();
                PairedRun {
                    channels: ch,
                    bf_w,
                    trace_w,
                    trace_r,
                    power_w,
                    power_r,
                    wall_w,
                    wall_r,
                }
            })
            .collect()
    })
}

// ---------------------------------------------------------------------------
// Cache 2: 16-user runs at SNR 6 dB — zero-forcing baseline and the
// full-size solver started from it.
// ---------------------------------------------------------------------------

struct GainRun {
    wsr_ezf: f64,
    trace_w: SolveTrace,
}

static GAIN: OnceLock<Vec<GainRun>> = OnceLock::new();

fn gain_runs() -> &'static [GainRun] {
    GAIN.get_or_init(|| {
        let cfg = NetworkConfig::uniform(4, 16, 64, 4, 2);
        let budgets = vec![1.0; 4];
        let weights = vec![1.0; 16];
        // Means are asserted at percent scale; a 1e-5 relative stopping rule
        // leaves the mean unchanged at that scale and halves the runtime.
        let opts = SolverOptions {
            rel_tol: 1e-5,
            ..SolverOptions::default()
        };
        (0..100)
            .map(|t| {
                let mut ch = generate_channels(&cfg, 20_000 + t).unwrap();
                // The reference anchors for this operating point were measured
                // with the per-array noise normalization (`noise_ref =
                // single-ap`): with it, both means land within 2% of the
                // anchors; with the serving-array default they sit far above.
                ch.assign_noise_power(6.0, NoiseReference::SingleAp).unwrap();
                let counts = StreamCounts::uniform(ch.topology(), 2);
                let init = ezf::beamformer(&ch, &counts, &budgets).unwrap();
                let wsr_ezf = metrics::weighted_sum_rate(&ch, &init, &weights).unwrap();
                let (_, trace_w) =
                    wmmse::solve(&ch, &weights, &budgets, &counts, &init, &opts).unwrap();
                GainRun { wsr_ezf, trace_w }
            })
            .collect()
    })
}

// ---------------------------------------------------------------------------
// Cache 3: stream-allocation ordering runs — fixed-allocation reduced solver,
// joint stream allocation, and allocation-driven user selection on shared
// channel draws at SNR 0 and 6 dB.
// ---------------------------------------------------------------------------

struct OrderingPoint {
    snr_db: f64,
    wsr_rw: Vec<f64>,
    wsr_lsa: Vec<f64>,
    wsr_lus: Vec<f64>,
    /// true iff every final allocation obeys the per-user stream limit and
    /// every AP power stays within budget without any re-projection step
    feasible: bool,
}

static ORDERING: OnceLock<Vec<OrderingPoint>> = OnceLock::new();

fn ordering_runs() -> &'static [OrderingPoint] {
    ORDERING.get_or_init(|| {
        let cfg = reference_config();
        let budgets = vec![1.0; 4];
        let weights = vec![1.0; 8];
        let opts = SolverOptions {
            rel_tol: 1e-5,
            max_iters: 1000,
            ..SolverOptions::default()
        };
        let trials = 100;
        [0.0, 6.0]
            .into_iter()
            .map(|snr_db| {
                let mut point = OrderingPoint {
                    snr_db,
                    wsr_rw: Vec::new(),
                    wsr_lsa: Vec::new(),
                    wsr_lus: Vec::new(),
                    feasible: true,
                };
                for t in 0..trials {
                    let mut ch = generate_channels(&cfg, 30_000 + t).unwrap();
                    ch.assign_noise_power(snr_db, cfg.noise_ref).unwrap();

                    let counts = StreamCounts::uniform(ch.topology(), 2);
                    let init = ezf::lowdim(&ch, &counts, &budgets).unwrap();
                    let (_, tr) =
                        rwmmse::solve(&ch, &weights, &budgets, &counts, &init, &opts).unwrap();
                    point.wsr_rw.push(tr.final_wsr_bits());

                    let lsa = solve_lsa_default(&ch, &weights, &budgets, &opts).unwrap();
                    point.wsr_lsa.push(lsa.trace.final_wsr_bits());
                    for k in 0..8 {
                        point.feasible &= lsa.allocation.ue_total(k) <= 4;
                    }
                    for i in 0..4 {
                        point.feasible &=
                            rwmmse::ap_power(&ch, &lsa.beamformer, i) <= budgets[i] * (1.0 + 1e-8);
                    }

                    let lus = solve_lus(&ch, &weights, &budgets, &opts).unwrap();
                    point.wsr_lus.push(lus.trace.final_wsr_bits());
                    let full = ch.with_full_serving();
                    for k in 0..8 {
                        point.feasible &= lus.allocation.ue_total(k) <= 4;
                    }
                    for i in 0..4 {
                        point.feasible &=
                            rwmmse::ap_power(&full, &lus.beamformer, i) <= budgets[i] * (1.0 + 1e-8);
                    }
                }
                point
            })
            .collect()
    })
}

// ---------------------------------------------------------------------------
// Criterion 1: the full-size and reduced solvers converge to the same rates
// from the same zero-forcing start, within 1e-3 relative per trial, and the
// 20-trial comparison finishes inside five minutes.
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_full_and_reduced_solvers_agree() {
    let runs = &paired_runs()[..20];
    let mut worst = 0.0f64;
    for (t, run) in runs.iter().enumerate() {
        let a = run.trace_w.final_wsr_bits();
        let b = run.trace_r.final_wsr_bits();
        let rel = (a - b).abs() / a.abs().max(b.abs());
        worst = worst.max(rel);
        assert!(
            rel <= 1e-3,
            "trial {t}: full-size {a} vs reduced {b} differ by {rel:.2e} relative (> 1e-3)"
        );
    }
    let total: f64 = runs.iter().map(|r| r.wall_w + r.wall_r).sum();
    assert!(
        total <= 300.0,
        "20 paired solves took {total:.1} s (> 300 s)"
    );
    eprintln!("  worst relative gap {worst:.2e}, total {total:.1} s");
}

// ---------------------------------------------------------------------------
// Criterion 2: with 16 users at SNR 6 dB the solver's mean rate improves on
// the zero-forcing baseline by 30-65%, and both means sit within 15% of the
// reference anchors (108.9 and 73.8). The anchors are natural-log rates, so
// the base-2 means are converted before comparison; the ratio is unit-free.
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_mean_gain_over_zero_forcing() {
    let runs = gain_runs();
    let wsr_w: Vec<f64> = runs.iter().map(|r| r.trace_w.final_wsr_bits()).collect();
    let wsr_e: Vec<f64> = runs.iter().map(|r| r.wsr_ezf).collect();
    let (mean_w, se_w) = mean_se(&wsr_w);
    let (mean_e, se_e) = mean_se(&wsr_e);
    let ln2 = std::f64::consts::LN_2;
    let (nat_w, nat_e) = (mean_w * ln2, mean_e * ln2);
    let ratio = mean_w / mean_e;
    eprintln!(
        "  solver {nat_w:.2} nat ({mean_w:.2}±{se_w:.2} bit), zero-forcing {nat_e:.2} nat \
         ({mean_e:.2}±{se_e:.2} bit), ratio {ratio:.3}"
    );
    assert!(
        (1.30..=1.65).contains(&ratio),
        "mean ratio {ratio:.3} outside [1.30, 1.65] (solver {mean_w:.2}, zero-forcing {mean_e:.2})"
    );
    assert!(
        (nat_w - 108.9).abs() <= 0.15 * 108.9,
        "solver mean {nat_w:.2} nat outside 108.9 ± 15%"
    );
    assert!(
        (nat_e - 73.8).abs() <= 0.15 * 73.8,
        "zero-forcing mean {nat_e:.2} nat outside 73.8 ± 15%"
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: every iterative run behind criteria 1 and 2 ascends
// monotonically — no sweep loses more than 1e-9 nats.
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_monotone_ascent() {
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0usize;
    let mut runs = 0usize;
    for run in paired_runs() {
        for trace in [&run.trace_w, &run.trace_r] {
            let d = worst_descent_nats(trace);
            worst = worst.max(d);
            violations += usize::from(d > 1e-9);
            runs += 1;
        }
    }
    for run in gain_runs() {
        let d = worst_descent_nats(&run.trace_w);
        worst = worst.max(d);
        violations += usize::from(d > 1e-9);
        runs += 1;
    }
    assert_eq!(
        violations, 0,
        "{violations} of {runs} traces descend; worst drop {worst:.3e} nats"
    );
    eprintln!("  {runs} traces, worst per-sweep change {worst:.3e} nats");
}

// ---------------------------------------------------------------------------
// Criterion 4: at convergence every access point that serves at least one
// user transmits at exactly its power budget (within 1e-4 relative), for both
// solvers on all 50 instances. An access point left out of every user's
// nearest-2 cluster (probability (1/2)^8 per draw) has no beamforming
// variables, so the full-power property is vacuous there; its power must be
// identically zero instead.
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_full_power_at_convergence() {
    let mut worst = 0.0f64;
    let mut idle = 0usize;
    for (t, run) in paired_runs().iter().enumerate() {
        let served = &run.channels.topology().served;
        for (label, powers) in [("full-size", &run.power_w), ("reduced", &run.power_r)] {
            for (i, &p) in powers.iter().enumerate() {
                if served[i].is_empty() {
                    idle += 1;
                    assert_eq!(p, 0.0, "trial {t}, {label} solver: idle access point {i} radiates");
                    continue;
                }
                let rel = (p - 1.0).abs();
                worst = worst.max(rel);
                assert!(
                    rel <= 1e-4,
                    "trial {t}, {label} solver, access point {i}: power {p} not at budget"
                );
            }
        }
    }
    eprintln!(
        "  worst relative budget gap {worst:.2e} over 50 instances x 2 solvers ({idle} idle-AP cases)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: converged full-size beamformers already lie in the row space
// of their AP's stacked channel matrix — projecting onto it moves the rate
// by less than 1e-9.
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_beamformers_lie_in_channel_row_space() {
    let weights = vec![1.0; 8];
    let mut worst = 0.0f64;
    for (t, run) in paired_runs().iter().enumerate() {
        let ch = &run.channels;
        // Per-AP projector onto colspace(H̄_i^H), built independently of the
        // solver: P' = H̄^H (H̄ H̄^H)^{-1} H̄ P via a Cholesky solve.
        let mut projected = run.bf_w.clone();
        for i in 0..ch.num_aps() {
            let stack = ch.ap_stack(i);
            let gram = stack * stack.adjoint();
            let chol = gram.cholesky().expect("channel gram must be positive definite");
            for k in 0..ch.num_ues() {
                if let Some(p) = run.bf_w.block(i, k) {
                    let y = chol.solve(&(stack * p));
                    projected.set_block(i, k, stack.adjoint() * y);
                }
            }
        }
        let before = metrics::weighted_sum_rate(ch, &run.bf_w, &weights).unwrap();
        let after = metrics::weighted_sum_rate(ch, &projected, &weights).unwrap();
        let delta = (before - after).abs();
        worst = worst.max(delta);
        assert!(
            delta < 1e-9,
            "trial {t}: projection moved the rate by {delta:.3e} bits"
        );
    }
    eprintln!("  worst projection-induced change {worst:.3e} bits over 50 instances");
}

// ---------------------------------------------------------------------------
// Criterion 6: tiny instances reach the known optimum. One AP and one
// single-antenna user has the matched-filter closed form; one AP and two
// users is checked against an exhaustive refined grid search.
// ---------------------------------------------------------------------------

/// Best weighted sum rate for one 2-antenna AP serving two single-antenna
/// users, by nested grid refinement over both beam directions and the power
/// split. Uses only the channel entries — no solver code.
fn two_user_grid_oracle(h: [&CMat; 2], noise: [f64; 2], p_max: f64) -> f64 {
    let eval = |t: f64, th1: f64, ph1: f64, th2: f64, ph2: f64| -> f64 {
        let beams = [
            (t.sqrt(), th1, ph1),
            ((1.0 - t).sqrt(), th2, ph2),
        ];
        // received amplitude of beam j at user k
        let amp = |k: usize, j: usize| -> f64 {
            let (scale, th, ph) = beams[j];
            let p0 = C64::new(th.cos(), 0.0);
            let p1 = C64::new(0.0, ph).exp() * th.sin();
            ((h[k][(0, 0)] * p0 + h[k][(0, 1)] * p1) * C64::new(scale * p_max.sqrt(), 0.0)).norm()
        };
        (0..2)
            .map(|k| {
                let s = amp(k, k).powi(2);
                let i = amp(k, 1 - k).powi(2);
                (1.0 + s / (noise[k] + i)).log2()
            })
            .sum()
    };

    // (center, half-width, points) per dimension: split, θ1, φ1, θ2, φ2
    let mut dims = [
        (0.5, 0.5, 13usize),
        (std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4, 9),
        (std::f64::consts::PI, std::f64::consts::PI, 13),
        (std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4, 9),
        (std::f64::consts::PI, std::f64::consts::PI, 13),
    ];
    let mut best = f64::NEG_INFINITY;
    for _pass in 0..4 {
        let grid: Vec<Vec<f64>> = dims
            .iter()
            .map(|&(c, w, n)| (0..n).map(|j| c - w + 2.0 * w * j as f64 / (n - 1) as f64).collect())
            .collect();
        let mut arg = [0.0f64; 5];
        for &t in &grid[0] {
            let t = t.clamp(0.0, 1.0);
            for &th1 in &grid[1] {
                for &ph1 in &grid[2] {
                    for &th2 in &grid[3] {
                        for &ph2 in &grid[4] {
                            let v = eval(t, th1, ph1, th2, ph2);
                            if v > best {
                                best = v;
                                arg = [t, th1, ph1, th2, ph2];
                            }
                        }
                    }
                }
            }
        }
        for (d, (c, w, _)) in arg.iter().zip(dims.iter_mut()) {
            *c = *d;
            *w *= 0.3;
        }
    }
    best
}

#[test]
fn criterion_06_tiny_instances_reach_the_optimum() {
    let budgets = vec![1.0];
    let opts = SolverOptions::default();

    // one user: matched filter closed form
    let cfg1 = NetworkConfig::uniform(1, 1, 2, 1, 1);
    let mut worst1 = 0.0f64;
    for t in 0..20 {
        let mut ch = generate_channels(&cfg1, 60_000 + t).unwrap();
        ch.assign_noise_power(0.0, cfg1.noise_ref).unwrap();
        let h = ch.channel(0, 0).clone();
        let optimum = (1.0 + h.norm_squared() / ch.noise(0).unwrap()).log2();

        let counts = StreamCounts::uniform(ch.topology(), 1);
        let init = ezf::beamformer(&ch, &counts, &budgets).unwrap();
        let (_, trace) = wmmse::solve(&ch, &[1.0], &budgets, &counts, &init, &opts).unwrap();
        let gap = (trace.final_wsr_bits() - optimum).abs();
        worst1 = worst1.max(gap);
        assert!(
            gap <= 1e-6,
            "single-user trial {t}: solver {} vs matched filter {optimum} (gap {gap:.2e})",
            trace.final_wsr_bits()
        );
    }

    // two users: refined grid oracle; the solver must not sit below it
    let cfg2 = NetworkConfig::uniform(1, 2, 2, 1, 1);
    let mut worst2 = f64::INFINITY;
    for t in 0..20 {
        let mut ch = generate_channels(&cfg2, 61_000 + t).unwrap();
        ch.assign_noise_power(0.0, cfg2.noise_ref).unwrap();
        let oracle = two_user_grid_oracle(
            [ch.channel(0, 0), ch.channel(0, 1)],
            [ch.noise(0).unwrap(), ch.noise(1).unwrap()],
            1.0,
        );
        let counts = StreamCounts::uniform(ch.topology(), 1);
        let init = ezf::beamformer(&ch, &counts, &budgets).unwrap();
        let (_, trace) =
            wmmse::solve(&ch, &[1.0, 1.0], &budgets, &counts, &init, &opts).unwrap();
        let margin = trace.final_wsr_bits() - oracle;
        worst2 = worst2.min(margin);
        assert!(
            margin >= -1e-3,
            "two-user trial {t}: solver {} below grid oracle {oracle} by {:.2e}",
            trace.final_wsr_bits(),
            -margin
        );
    }
    eprintln!("  matched-filter worst gap {worst1:.2e}; worst margin over grid oracle {worst2:+.2e}");
}

// ---------------------------------------------------------------------------
// Criterion 7: per-sweep cost scales at least one polynomial order faster in
// the antenna count for the full-size solver than for the reduced one, the
// reduced solver is already faster at M = 128, and it never factorizes an
// antenna-sized matrix.
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_antenna_scaling() {
    let sizes = [64usize, 128, 256, 512];
    let budgets = vec![1.0; 4];
    let weights = vec![1.0; 8];
    // fixed sweep count: timing runs, not convergence runs
    let opts = SolverOptions {
        max_iters: 5,
        rel_tol: 0.0,
        ..SolverOptions::default()
    };
    let mut groups_w: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut groups_r: Vec<(usize, Vec<f64>)> = Vec::new();
    for &m in &sizes {
        let cfg = NetworkConfig::uniform(4, 8, m, 4, 2);
        let mut times_w = Vec::new();
        let mut times_r = Vec::new();
        for t in 0..2 {
            let mut ch = generate_channels(&cfg, 40_000 + t).unwrap();
            ch.assign_noise_power(0.0, cfg.noise_ref).unwrap();
            let counts = StreamCounts::uniform(ch.topology(), 2);

            let init = ezf::beamformer(&ch, &counts, &budgets).unwrap();
            let (_, tr) = wmmse::solve(&ch, &weights, &budgets, &counts, &init, &opts).unwrap();
            times_w.extend(tr.sweep_seconds.iter().skip(1).copied());

            let init = ezf::lowdim(&ch, &counts, &budgets).unwrap();
            let (_, tr) = rwmmse::solve(&ch, &weights, &budgets, &counts, &init, &opts).unwrap();
            assert_eq!(
                tr.large_factorizations, 0,
                "reduced solver factorized an antenna-sized matrix at M={m}"
            );
            times_r.extend(tr.sweep_seconds.iter().skip(1).copied());
        }
        groups_w.push((m, times_w));
        groups_r.push((m, times_r));
    }
    let exp_w = scaling_fit(&groups_w).unwrap();
    let exp_r = scaling_fit(&groups_r).unwrap();
    let median = |xs: &[f64]| {
        let mut v = xs.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let w128 = median(&groups_w[1].1);
    let r128 = median(&groups_r[1].1);
    eprintln!(
        "  fitted exponents: full-size {exp_w:.2}, reduced {exp_r:.2}; at M=128 {:.1} ms vs {:.1} ms",
        w128 * 1e3,
        r128 * 1e3
    );
    assert!(
        exp_w - exp_r >= 1.0,
        "exponent gap {:.2} < 1.0 (full-size {exp_w:.2}, reduced {exp_r:.2})",
        exp_w - exp_r
    );
    assert!(
        r128 < w128,
        "reduced solver not faster at M=128: {r128:.4}s vs {w128:.4}s"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: fronthaul interaction accounting. On a balanced network where
// every AP carries 8 streams, the full-size solver reports (32+8)*64 = 2560
// exchanged complex scalars per AP, the reduced solver (32^2 + 2*8*32)/2 =
// 768, and local zero-forcing none.
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_interaction_accounting() {
    // distances chosen so user k's two nearest APs are k%4 and (k+1)%4:
    // every AP then serves exactly 4 users at 2 streams each.
    let mut d = DMatrix::from_element(4, 8, 0.3);
    for k in 0..8 {
        d[(k % 4, k)] = 0.10;
        d[((k + 1) % 4, k)] = 0.11;
    }
    let topo = Topology::from_distances(d, 2).unwrap();
    let cfg = reference_config();
    let mut rng = ChaCha12Rng::seed_from_u64(50_000);
    let mut ch = draw_channels(&cfg, &topo, &mut rng).unwrap();
    ch.assign_noise_power(0.0, cfg.noise_ref).unwrap();
    let counts = StreamCounts::uniform(ch.topology(), 2);
    for i in 0..4 {
        assert_eq!(counts.ap_total(i), 8, "serving sets not balanced");
    }
    let budgets = vec![1.0; 4];
    let weights = vec![1.0; 8];
    let opts = SolverOptions {
        max_iters: 2,
        ..SolverOptions::default()
    };

    let init = ezf::beamformer(&ch, &counts, &budgets).unwrap();
    let (_, tr_w) = wmmse::solve(&ch, &weights, &budgets, &counts, &init, &opts).unwrap();
    assert_eq!(tr_w.interaction_per_ap, vec![2560.0; 4], "full-size solver count");

    let init = ezf::lowdim(&ch, &counts, &budgets).unwrap();
    let (_, tr_r) = rwmmse::solve(&ch, &weights, &budgets, &counts, &init, &opts).unwrap();
    assert_eq!(tr_r.interaction_per_ap, vec![768.0; 4], "reduced solver count");

    let ezf_counts =
        metrics::interaction_count(Algorithm::LocalEzf, ch.tx_antennas(), ch.rx_antennas(), &counts);
    assert_eq!(ezf_counts, vec![0.0; 4], "zero-forcing exchanges nothing");
}

// ---------------------------------------------------------------------------
// Criterion 9: mean rates order as user selection ≥ joint stream allocation
// ≥ fixed allocation, at SNR 0 and 6 dB over 100 shared channel draws; each
// gap may dip no further than one standard error of its paired estimate.
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_stream_allocation_ordering() {
    for point in ordering_runs() {
        let snr = point.snr_db;
        let (m_rw, _) = mean_se(&point.wsr_rw);
        let (m_lsa, _) = mean_se(&point.wsr_lsa);
        let (m_lus, _) = mean_se(&point.wsr_lus);
        let d_alloc: Vec<f64> =
            point.wsr_lsa.iter().zip(&point.wsr_rw).map(|(a, b)| a - b).collect();
        let d_select: Vec<f64> =
            point.wsr_lus.iter().zip(&point.wsr_lsa).map(|(a, b)| a - b).collect();
        let (gap_alloc, se_alloc) = mean_se(&d_alloc);
        let (gap_select, se_select) = mean_se(&d_select);
        eprintln!(
            "  snr {snr}: fixed {m_rw:.2}, allocated {m_lsa:.2}, selected {m_lus:.2}; \
             gaps {gap_alloc:+.3}±{se_alloc:.3} and {gap_select:+.3}±{se_select:.3}"
        );
        assert!(
            gap_alloc >= -se_alloc,
            "snr {snr}: stream allocation behind fixed allocation by {:.3} (±{:.3} SE)",
            -gap_alloc,
            se_alloc
        );
        assert!(
            gap_select >= -se_select,
            "snr {snr}: user selection behind stream allocation by {:.3} (±{:.3} SE)",
            -gap_select,
            se_select
        );
    }
}

// ---------------------------------------------------------------------------
// Criterion 10: the per-user stream selection step is exactly optimal — it
// matches exhaustive enumeration over all feasible bit patterns on 1000
// random cost vectors — and every final allocation from the ordering runs is
// feasible without re-projection.
// ---------------------------------------------------------------------------

/// Exhaustive minimizer of the summed cost under the cardinality limit,
/// treating costs above the -1e-12 floor as zero; prefers smaller value,
/// then fewer streams, then lexicographically-first bits.
fn enumerate_selection(costs: &[f64], limit: usize) -> Vec<bool> {
    let n = costs.len();
    let floored: Vec<f64> = costs.iter().map(|&c| if c < -1e-12 { c } else { 0.0 }).collect();
    let mut best: Option<(f64, usize, Vec<bool>)> = None;
    for pattern in 0u32..1 << n {
        let bits: Vec<bool> = (0..n).map(|j| pattern >> j & 1 == 1).collect();
        let count = bits.iter().filter(|&&b| b).count();
        if count > limit {
            continue;
        }
        // skip patterns using non-beneficial entries: they tie in value with
        // a subset, and the tie rules prefer the subset anyway
        if (0..n).any(|j| bits[j] && floored[j] == 0.0) {
            continue;
        }
        let value: f64 = (0..n).filter(|&j| bits[j]).map(|j| floored[j]).sum();
        let better = match &best {
            None => true,
            Some((v, c, b)) => {
                // on value ties prefer fewer streams, then lower indices
                // (set bits as early as possible = lexicographically larger)
                value < v - 1e-15
                    || ((value - v).abs() <= 1e-15 && (count < *c || (count == *c && bits > *b)))
            }
        };
        if better {
            best = Some((value, count, bits));
        }
    }
    best.map(|(_, _, b)| b).unwrap_or_else(|| vec![false; n])
}

#[test]
fn criterion_10_selection_step_is_exactly_optimal() {
    let mut rng = ChaCha12Rng::seed_from_u64(70_000);
    let mut mismatches = 0usize;
    for case in 0..1000 {
        let n_k = rng.random_range(1..=4usize);
        let aps = rng.random_range(1..=(12 / n_k));
        let n = aps * n_k;
        let costs: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..10) {
                0 => 0.0,
                1 => -1e-13, // inside the floor: counts as zero
                2 => -1.0,   // repeated value to exercise tie-breaking
                _ => rng.random_range(-2.0..2.0),
            })
            .collect();
        let got = select_streams(&costs, n_k);
        let want = enumerate_selection(&costs, n_k);
        if got != want {
            mismatches += 1;
            eprintln!("  case {case}: costs {costs:?} limit {n_k}: got {got:?}, want {want:?}");
        }
    }
    assert_eq!(mismatches, 0, "{mismatches} of 1000 selections differ from enumeration");

    for point in ordering_runs() {
        assert!(
            point.feasible,
            "snr {}: a final allocation broke the stream limit or power budget",
            point.snr_db
        );
    }
}

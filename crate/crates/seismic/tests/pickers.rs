use fbpick_seismic::stalta::{first_trigger, LTA_FLOOR};
use fbpick_seismic::{sta_lta_pick, sta_lta_result, sta_lta_series, synth_gather, JumpSpec, StaLtaConfig, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct double loop over the definition.
fn reference_series(x: &[f64], short: usize, long: usize) -> Vec<f64> {
    let peak = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v / peak) * (v / peak)).collect();
    let mean_e = e.iter().sum::<f64>() / e.len() as f64;
    let mut out = vec![0.0; x.len()];
    for t in long..x.len() {
        let mut s = 0.0;
        for i in 0..short {
            s += e[t - i];
        }
        let mut l = 0.0;
        for i in 0..long {
            l += e[t - i];
        }
        out[t] = (s / short as f64) / (l / long as f64).max(LTA_FLOOR * mean_e);
    }
    out
}

fn seeded_trace(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let a = if i > n / 2 { 5.0 } else { 0.3 };
            // values that came from single precision, as on disk
            f64::from(rng.random_range(-a..a) as f32)
        })
        .collect()
}

#[test]
fn series_matches_direct_loop() {
    for (seed, short, long) in [(1, 3, 30), (2, 1, 2), (3, 7, 50), (4, 10, 11)] {
        let x = seeded_trace(400, seed);
        let cfg = StaLtaConfig {
            short_window: short,
            long_window: long,
            ..Default::default()
        };
        let got = sta_lta_series(&x, &cfg).unwrap();
        for (a, b) in got.iter().zip(reference_series(&x, short, long)) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn scale_invariance_is_exact() {
    let x = seeded_trace(300, 9);
    let cfg = StaLtaConfig::default();
    let base = sta_lta_series(&x, &cfg).unwrap();
    for c in [0.5, 3.0, -2.0] {
        let y: Vec<f64> = x.iter().map(|v| c * v).collect();
        assert_eq!(sta_lta_series(&y, &cfg).unwrap(), base, "c = {c}");
    }
}

#[test]
fn step_onset_is_found() {
    let mut x = vec![0.0; 400];
    x[200..].fill(1.0);
    let p = sta_lta_pick(&x, &StaLtaConfig::default()).unwrap();
    assert!((198..=202).contains(&p), "{p}");
}

#[test]
fn noiseless_synthetic_onsets_within_two_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let cfg = StaLtaConfig::default();
    let mut checked = 0;
    for seed in 0..50 {
        let spec = SynthSpec {
            n_traces: 8,
            velocity: rng.random_range(3500.0..7000.0),
            t0: rng.random_range(0.035..0.06),
            jumps: JumpSpec {
                count: 1,
                max_samples: 5,
            },
            seed,
            ..Default::default()
        };
        let g = synth_gather(&spec).unwrap();
        for (i, tr) in g.traces().enumerate() {
            let x: Vec<f64> = tr.iter().map(|&v| f64::from(v)).collect();
            let p = sta_lta_pick(&x, &cfg).unwrap();
            assert!((p - g.picks[i]).abs() <= 2, "seed {seed} trace {i}: {p} vs {}", g.picks[i]);
            checked += 1;
        }
    }
    assert_eq!(checked, 400);
}

#[test]
fn unreachable_trigger_never_picks() {
    let x = seeded_trace(300, 4);
    let cfg = StaLtaConfig::default();
    let r = sta_lta_series(&x, &cfg).unwrap();
    let max = r.iter().copied().fold(0.0, f64::max);
    assert!(max <= 10.0 + 1e-12);
    assert_eq!(first_trigger(&r, max * 1.0001), -1);
    assert_eq!(sta_lta_pick(&vec![0.0; 100], &cfg).unwrap(), -1);
}

#[test]
fn trigger_is_monotone_in_threshold() {
    let x = seeded_trace(400, 12);
    let r = sta_lta_series(&x, &StaLtaConfig::default()).unwrap();
    let mut last = 0;
    for k in 1..=100 {
        let p = first_trigger(&r, 0.1 * f64::from(k));
        if p == -1 {
            last = i32::MAX;
            continue;
        }
        assert!(p >= last, "threshold {}", 0.1 * f64::from(k));
        last = p;
    }
}

#[test]
fn gather_result_agrees_with_single_trace_picks() {
    let g = synth_gather(&SynthSpec {
        n_traces: 40,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let noisy = fbpick_seismic::inject_noise(&g, 3.0, 6);
    let cfg = StaLtaConfig::default();
    let res = sta_lta_result(&noisy, &cfg).unwrap();
    assert!((res.threshold - 0.4).abs() < 1e-15);
    for (i, tr) in noisy.traces().enumerate() {
        let x: Vec<f64> = tr.iter().map(|&v| f64::from(v)).collect();
        assert_eq!(res.picks[i], sta_lta_pick(&x, &cfg).unwrap(), "trace {i}");
        assert!((0.0..=1.0).contains(&res.confidence[i]));
    }
}

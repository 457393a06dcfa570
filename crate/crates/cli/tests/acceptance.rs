//! Acceptance report: one PASS / FAIL / SKIP line per criterion.
//!
//! The desk-scale training and robustness criteria train full-size models
//! for hours; they run only with `FBPICK_FULL_ACCEPTANCE=1`. Their working
//! directory is `FBPICK_ACCEPTANCE_DIR` (default `target/acceptance-desk`);
//! a corpus or checkpoint already present there is reused.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use fbpick_cli::config::RunConfig;
use fbpick_cli::corpus::{self, Split};
use fbpick_cli::eval::{self, Scored};
use fbpick_cli::infer::{picks_text, AnyModel};
use fbpick_cli::train::{checkpoint_path, train_all};
use fbpick_core::dsconv::SnakeConvSpec;
use fbpick_core::gradcheck::{check_gradients, random_tensor, relative_error, GradCheckOptions};
use fbpick_core::{
    Direction, DsuNet, ModelConfig, ParamKind, ParamStore, Result as CoreResult, Session, SnakeConv, Tape, Tensor,
    Var,
};
use fbpick_seismic::metrics::HR_DELTAS;
use fbpick_seismic::noise::measured_snr;
use fbpick_seismic::pipeline::{apr_at, CROP_HEIGHT};
use fbpick_seismic::{
    compute_metrics, extract_picks, inject_noise, lmo_crop, make_label_map, sta_lta_pick, sta_lta_series,
    synth_gather, JumpSpec, LmoParams, StaLtaConfig, SynthSpec, UNPICKED,
};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn verdict(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        detail: detail.into(),
    }
}

fn full_runs_enabled() -> bool {
    std::env::var("FBPICK_FULL_ACCEPTANCE").is_ok_and(|v| !v.is_empty() && v != "0")
}

fn skip(why: &str) -> Outcome {
    Outcome {
        status: Status::Skip,
        detail: why.into(),
    }
}

// ---- gradients ----------------------------------------------------------

fn probe(t: &mut Tape<f64>, y: Var, seed: u64) -> CoreResult<Var> {
    let w = random_tensor(t.shape(y), 1.0, seed);
    t.weighted_sum(y, &w)
}

fn op_check(inputs: &[Tensor<f64>], f: impl Fn(&mut Tape<f64>, &[Var]) -> CoreResult<Var>) -> f64 {
    let opts = GradCheckOptions {
        max_points: Some(40),
        ..Default::default()
    };
    check_gradients(inputs, opts, f).unwrap().max_rel_error()
}

/// Coordinates strictly inside an `h x w` image and off the lattice.
fn interior_coords(n: usize, k: usize, ho: usize, wo: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
    let u = random_tensor(&[n, 2, k, ho, wo], 0.5, seed);
    let plane = k * ho * wo;
    Tensor::from_fn(u.shape(), |i| {
        let extent = if (i / plane).is_multiple_of(2) { w } else { h } as f64 - 1.0;
        (u.data()[i] + 0.5) * (extent - 0.2) + 0.1
    })
    .unwrap()
}

fn per_op_errors() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    let mut worst = |name: &'static str, e: f64| match out.iter_mut().find(|(n, _)| *n == name) {
        Some((_, w)) => *w = f64::max(*w, e),
        None => out.push((name, e)),
    };
    for (i, (xs, ks, pad)) in [
        ([1, 1, 5, 5], [1, 1, 3, 3], (1, 1)),
        ([2, 3, 6, 7], [4, 3, 3, 5], (1, 2)),
        ([1, 2, 4, 9], [3, 2, 1, 9], (0, 4)),
    ]
    .into_iter()
    .enumerate()
    {
        let s = 10 * i as u64;
        let inputs = [random_tensor(&xs, 1.0, s), random_tensor(&ks, 0.5, s + 1), random_tensor(&[ks[0]], 0.5, s + 2)];
        worst("conv2d", op_check(&inputs, |t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), pad)?;
            probe(t, y, s + 3)
        }));
    }
    for (i, (xs, c_out)) in [([1, 1, 2, 2], 1), ([2, 3, 3, 4], 2), ([1, 4, 5, 3], 3)].into_iter().enumerate() {
        let s = 100 + 10 * i as u64;
        let inputs = [
            random_tensor(&xs, 1.0, s),
            random_tensor(&[xs[1], c_out, 2, 2], 0.5, s + 1),
            random_tensor(&[c_out], 0.5, s + 2),
        ];
        worst("transpose-conv", op_check(&inputs, |t, v| {
            let y = t.conv_transpose2x2(v[0], v[1], Some(v[2]))?;
            probe(t, y, s + 3)
        }));
    }
    for (i, xs) in [[2, 3, 4, 5], [3, 1, 2, 2], [1, 4, 3, 6]].into_iter().enumerate() {
        let s = 200 + 10 * i as u64;
        let inputs = [random_tensor(&xs, 2.0, s), random_tensor(&[xs[1]], 1.0, s + 1), random_tensor(&[xs[1]], 1.0, s + 2)];
        worst("batch-norm", op_check(&inputs, |t, v| {
            let (y, _) = t.batch_norm_train(v[0], v[1], v[2], 1e-7)?;
            probe(t, y, s + 3)
        }));
    }
    for (i, xs) in [vec![7], vec![2, 3, 4], vec![1, 2, 3, 5]].into_iter().enumerate() {
        let s = 300 + 10 * i as u64;
        let inputs = [random_tensor(&xs, 3.0, s)];
        worst("elu", op_check(&inputs, |t, v| {
            let y = t.elu(v[0]);
            probe(t, y, s + 1)
        }));
        worst("sigmoid", op_check(&inputs, |t, v| {
            let y = t.sigmoid(v[0]);
            probe(t, y, s + 2)
        }));
    }
    for (i, (n, c, h, w, k, ho, wo)) in [(1, 1, 4, 5, 3, 2, 2), (2, 2, 6, 6, 5, 3, 4), (1, 3, 5, 8, 9, 2, 3)]
        .into_iter()
        .enumerate()
    {
        let s = 500 + 10 * i as u64;
        let inputs = [random_tensor(&[n, c, h, w], 1.0, s), interior_coords(n, k, ho, wo, h, w, s + 1)];
        worst("bilinear-sampling", op_check(&inputs, |t, v| {
            let y = t.bilinear_sample(v[0], v[1])?;
            probe(t, y, s + 2)
        }));
    }
    for (i, (n, c, h, w, dir, k)) in [
        (1, 2, 12, 12, Direction::X, 9),
        (2, 1, 7, 9, Direction::Y, 9),
        (1, 3, 8, 6, Direction::X, 5),
    ]
    .into_iter()
    .enumerate()
    {
        let s = 800 + 10 * i as u64;
        let o = 2;
        let spec = SnakeConvSpec {
            kernel_length: k,
            ..SnakeConvSpec::new(dir, c, o)
        };
        let inputs = [
            random_tensor(&[n, c, h, w], 1.0, s),
            random_tensor(&[k, c, 3, 3], 0.3, s + 1),
            random_tensor(&[k], 0.3, s + 2),
            random_tensor(&[o, c, k], 0.5, s + 3),
            random_tensor(&[o], 0.5, s + 4),
        ];
        worst("snake-conv", op_check(&inputs, |t, v| {
            let raw = t.conv2d(v[0], v[1], Some(v[2]), (1, 1))?;
            let off = t.tanh(raw);
            let coords = t.snake_coordinates(off, &spec)?;
            let y = t.snake_conv(v[0], coords, v[3], Some(v[4]))?;
            probe(t, y, s + 5)
        }));
    }
    out
}

/// Worst relative error over a few probed coordinates of every trainable
/// tensor of a reduced network, with snake steps held off the lattice.
fn reduced_model_error(blocks: [usize; 4], n: usize, seed: u64) -> f64 {
    let config = ModelConfig {
        height: 16,
        width: 32,
        decoder_blocks: blocks,
        ..Default::default()
    };
    let net = DsuNet::new(config).unwrap();
    let mut store: ParamStore<f64> = net.init_parameters(seed).unwrap();
    let offsets: Vec<String> = store.names().filter(|n| n.contains(".offset.")).map(str::to_owned).collect();
    for name in offsets {
        let v = if name.ends_with(".bias") { (0.3f64 / 4.0).atanh() } else { 0.0 };
        store.tensor_mut(&name).unwrap().data_mut().iter_mut().for_each(|x| *x = v);
    }
    let x = random_tensor(&[n, 1, 16, 32], 1.0, seed + 100);
    let target = random_tensor(&[n, 1, 16, 32], 1.0, seed + 200).map(|v| if v > 0.8 { 1.0 } else { 0.0 });
    let loss = |s: &ParamStore<f64>, backward: bool| {
        let mut sess = Session::training(s);
        let xv = sess.tape.constant(x.clone());
        let y = net.forward(&mut sess, xv).unwrap();
        let l = sess.tape.bce_loss(y, &target).unwrap();
        let v = sess.tape.value(l).item().unwrap();
        if backward {
            sess.tape.backward(l).unwrap();
            (v, Some(sess.gradients()))
        } else {
            (v, None)
        }
    };
    let grads = loss(&store, true).1.unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = store.clone();
    let mut worst = 0.0f64;
    let h = 1e-5;
    let names: Vec<String> = store
        .iter()
        .filter(|(_, p)| p.kind == ParamKind::Trainable)
        .map(|(n, _)| n.to_owned())
        .collect();
    for name in names {
        let g = &grads[&name];
        for _ in 0..3 {
            let j = rng.random_range(0..g.len());
            let orig = store.tensor(&name).unwrap().data()[j];
            work.tensor_mut(&name).unwrap().data_mut()[j] = orig + h;
            let plus = loss(&work, false).0;
            work.tensor_mut(&name).unwrap().data_mut()[j] = orig - h;
            let minus = loss(&work, false).0;
            work.tensor_mut(&name).unwrap().data_mut()[j] = orig;
            worst = worst.max(relative_error(g[j], (plus - minus) / (2.0 * h), 1e-3));
        }
    }
    worst
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let ops = per_op_errors();
    let model = [([8, 4, 2, 2], 2, 11), ([4, 4, 2, 2], 1, 12), ([8, 4, 4, 2], 2, 13)]
        .into_iter()
        .map(|(b, n, s)| reduced_model_error(b, n, s))
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let op_worst = ops.iter().map(|o| o.1).fold(0.0, f64::max);
    let per_op: Vec<String> = ops.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    verdict(
        op_worst < 1e-5 && model < 1e-3 && secs < 120.0,
        format!(
            "per-op max {op_worst:.2e} (< 1e-5) [{}]; reduced DSU-Net {model:.2e} (< 1e-3); {secs:.1} s (< 120 s)",
            per_op.join(", ")
        ),
    )
}

// ---- snake convolution and sampling ------------------------------------

fn zero_offset_reduction() -> Outcome {
    let mut worst = 0.0f64;
    for (dir, seed) in [(Direction::X, 1), (Direction::Y, 2), (Direction::X, 3), (Direction::Y, 4)] {
        let (c_in, c_out, k) = (2, 3, 9);
        let spec = SnakeConvSpec {
            kernel_length: k,
            ..SnakeConvSpec::new(dir, c_in, c_out)
        };
        let layer = SnakeConv::new("s", spec).unwrap();
        let mut store = ParamStore::new();
        layer.register(&mut store, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let (h, w) = (11, 13);
        let x = random_tensor(&[2, c_in, h, w], 1.0, seed + 10);
        let mut sess = Session::inference(&store);
        let xv = sess.tape.constant(x.clone());
        let y = layer.forward(&mut sess, xv).unwrap();
        let snake = sess.tape.value(y).clone();

        // straight 1x9 / 9x1 kernel over the edge-replicated input, by hand
        let wt = store.tensor("s.weight").unwrap();
        let b = store.tensor("s.bias").unwrap();
        let half = (k / 2) as isize;
        for n in 0..2 {
            for o in 0..c_out {
                for r in 0..h {
                    for c in 0..w {
                        let mut acc = b.data()[o];
                        for ci in 0..c_in {
                            for j in 0..k {
                                let d = j as isize - half;
                                let (rr, cc) = match dir {
                                    Direction::X => (r as isize, (c as isize + d).clamp(0, w as isize - 1)),
                                    Direction::Y => ((r as isize + d).clamp(0, h as isize - 1), c as isize),
                                };
                                acc += wt.at(&[o, ci, j]) * x.at(&[n, ci, rr as usize, cc as usize]);
                            }
                        }
                        worst = worst.max((acc - snake.at(&[n, o, r, c])).abs());
                    }
                }
            }
        }
    }
    verdict(worst < 1e-10, format!("max |snake - straight conv| {worst:.2e} (< 1e-10), x and y, 4 seeds"))
}

fn bilinear_exactness() -> Outcome {
    let img = random_tensor(&[1, 2, 7, 9], 5.0, 11);
    let pts = [(3.0, 5.0), (0.0, 0.0), (8.0, 6.0), (3.5, 5.0), (0.25, 2.0), (8.0, 1.5), (2.5, 4.5)];
    let k = pts.len();
    let mut coords = Tensor::zeros(&[1, 2, k, 1, 1]).unwrap();
    for (j, &(x, y)) in pts.iter().enumerate() {
        let (ox, oy) = (coords.offset(&[0, 0, j, 0, 0]), coords.offset(&[0, 1, j, 0, 0]));
        coords.data_mut()[ox] = x;
        coords.data_mut()[oy] = y;
    }
    let mut tape = Tape::new();
    let xv = tape.constant(img.clone());
    let cv = tape.constant(coords);
    let s = tape.bilinear_sample(xv, cv).unwrap();
    let out = tape.value(s);
    let mut exact = true;
    let mut blend = 0.0f64;
    for ch in 0..2 {
        let at = |r: usize, c: usize| img.at(&[0, ch, r, c]);
        let got = |j: usize| out.at(&[0, ch, j, 0, 0]);
        exact &= got(0) == at(5, 3) && got(1) == at(0, 0) && got(2) == at(6, 8);
        let want = [
            (at(5, 3) + at(5, 4)) / 2.0,
            0.75 * at(2, 0) + 0.25 * at(2, 1),
            (at(1, 8) + at(2, 8)) / 2.0,
            (at(4, 2) + at(4, 3) + at(5, 2) + at(5, 3)) / 4.0,
        ];
        for (j, w) in want.iter().enumerate() {
            blend = blend.max((got(3 + j) - w).abs());
        }
    }
    verdict(
        exact && blend < 1e-12,
        format!("lattice samples exact: {exact}; midpoint blends max error {blend:.2e} (< 1e-12)"),
    )
}

// ---- metrics ------------------------------------------------------------

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut count_ok = true;
    for _ in 0..1000 {
        let n = rng.random_range(1..200);
        let manual: Vec<i32> = (0..n)
            .map(|_| if rng.random_bool(0.1) { UNPICKED } else { rng.random_range(0..400) })
            .collect();
        let auto: Vec<i32> = manual
            .iter()
            .map(|&m| {
                if rng.random_bool(0.15) {
                    UNPICKED
                } else if m == UNPICKED {
                    rng.random_range(0..400)
                } else {
                    (m + rng.random_range(-12..=12)).max(0)
                }
            })
            .collect();
        let r = compute_metrics(&auto, &manual).unwrap();
        let picked = auto.iter().filter(|&&a| a >= 0).count();
        let errs: Vec<i64> = auto
            .iter()
            .zip(&manual)
            .filter(|(a, m)| **a >= 0 && **m >= 0)
            .map(|(a, m)| i64::from(a - m))
            .collect();
        count_ok &= r.apr == picked as f64 / n as f64 && r.n_intersection == errs.len();
        if errs.is_empty() {
            count_ok &= !r.is_defined();
            continue;
        }
        let b = errs.len() as f64;
        let mae = errs.iter().map(|e| e.abs()).sum::<i64>() as f64 / b;
        let mbe = errs.iter().sum::<i64>() as f64 / b;
        let rmse = (errs.iter().map(|e| e * e).sum::<i64>() as f64 / b).sqrt();
        worst = worst.max((r.mae - mae).abs()).max((r.mbe - mbe).abs()).max((r.rmse - rmse).abs());
        for (k, &d) in HR_DELTAS.iter().enumerate() {
            let hr = errs.iter().filter(|e| e.abs() < i64::from(d)).count() as f64 / b;
            worst = worst.max((r.hr[k] - hr).abs());
        }
    }

    let mut runner = TestRunner::new(PropConfig {
        cases: 512,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let pairs = (1usize..80).prop_flat_map(|n| {
        let p = || prop::collection::vec(prop_oneof![1 => Just(UNPICKED), 4 => 0..300i32], n);
        (p(), p())
    });
    let hr_mono = runner
        .run(&pairs, |(a, m)| {
            let r = compute_metrics(&a, &m).unwrap();
            prop_assert!(!r.is_defined() || r.hr.windows(2).all(|w| w[0] <= w[1]));
            Ok(())
        })
        .is_ok();
    let confs = (prop::collection::vec(0.0f64..=1.0, 1..100), 0.0f64..=1.0, 0.0f64..=1.0);
    let apr_mono = runner
        .run(&confs, |(c, a, b)| {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(apr_at(&c, hi) <= apr_at(&c, lo));
            Ok(())
        })
        .is_ok();
    verdict(
        worst <= 1e-12 && count_ok && hr_mono && apr_mono,
        format!(
            "1000 sets: max deviation {worst:.2e} (<= 1e-12), counts exact: {count_ok}; \
             HR monotone in delta: {hr_mono}; APR monotone in threshold: {apr_mono} (512 property cases each)"
        ),
    )
}

fn preprocessing_round_trip() -> Outcome {
    let mut mismatches = 0;
    let mut checked = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = SynthSpec {
            n_traces: rng.random_range(1..300),
            n_samples: 600,
            velocity: rng.random_range(3000.0..7000.0),
            t0: rng.random_range(0.0..0.05),
            jumps: JumpSpec {
                count: 2,
                max_samples: 8,
            },
            seed,
            ..Default::default()
        };
        let g = synth_gather(&spec).unwrap();
        let lmo = LmoParams::new(spec.velocity * rng.random_range(0.97..1.03), spec.t0);
        let crop = lmo_crop(&g, &lmo).unwrap();
        let map = make_label_map(&crop.picks, CROP_HEIGHT).unwrap();
        let res = extract_picks(&map, &crop.window, 0.5).unwrap();
        for (i, (&got, &want)) in res.picks.iter().zip(&g.picks).enumerate() {
            let expect = if crop.picks[i] == UNPICKED { UNPICKED } else { want };
            checked += usize::from(crop.picks[i] != UNPICKED);
            mismatches += usize::from(got != expect);
        }
    }
    verdict(
        mismatches == 0,
        format!("100 gathers, {checked} in-window picks recovered, {mismatches} mismatches"),
    )
}

fn sta_lta() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let cfg = StaLtaConfig::default();
    let mut worst = 0;
    let mut traces = 0;
    for seed in 0..50 {
        let spec = SynthSpec {
            n_traces: 1,
            velocity: rng.random_range(3500.0..7000.0),
            t0: rng.random_range(0.035..0.06),
            first_offset: rng.random_range(20.0..600.0),
            seed,
            ..Default::default()
        };
        let g = synth_gather(&spec).unwrap();
        let x: Vec<f64> = g.trace(0).iter().map(|&v| f64::from(v)).collect();
        let p = sta_lta_pick(&x, &cfg).unwrap();
        worst = worst.max((p - g.picks[0]).abs());
        traces += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x: Vec<f64> = (0..300)
        .map(|i| f64::from(rng.random_range(if i > 150 { -5.0f32..5.0 } else { -0.3..0.3 })))
        .collect();
    let base = sta_lta_series(&x, &cfg).unwrap();
    let invariant = [0.5, 3.0, -2.0].iter().all(|c| {
        let y: Vec<f64> = x.iter().map(|v| c * v).collect();
        let s = sta_lta_series(&y, &cfg).unwrap();
        s.iter().zip(&base).all(|(a, b)| a.to_bits() == b.to_bits())
    });
    verdict(
        worst <= 2 && invariant && traces == 50,
        format!("{traces} noiseless traces, long 30 / short 3: max |error| {worst} samples (<= 2); bitwise scale invariance for 0.5, 3, -2: {invariant}"),
    )
}

fn noise_injection() -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (i, snr) in [-1.0, 1.0, 3.0, 5.0, 10.0, 20.0].into_iter().enumerate() {
        let g = synth_gather(&SynthSpec {
            n_samples: 128,
            velocity: 20000.0,
            seed: 20 + i as u64,
            ..Default::default()
        })
        .unwrap();
        let got = measured_snr(&g, &inject_noise(&g, snr, 100 + i as u64));
        worst = worst.max((got - snr).abs());
        parts.push(format!("{snr}:{got:.3}"));
    }
    verdict(
        worst < 0.2,
        format!("256 traces x 128 samples, target:measured dB [{}], max deviation {worst:.3} dB (< 0.2)", parts.join(" ")),
    )
}

// ---- desk-scale training and robustness --------------------------------

fn desk_dir() -> PathBuf {
    std::env::var_os("FBPICK_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance-desk"))
}

fn desk_config(dir: &Path, run: &str, branches: &str) -> RunConfig {
    let mut c = RunConfig::defaults();
    c.paths.data_dir = dir.join("data");
    c.paths.run_dir = dir.join("runs").join(run);
    c.paths.output_dir = dir.join("reports").join(format!("acceptance-{run}"));
    c.model.branches = branches.into();
    c
}

/// Trains the run of `config` unless its checkpoints exist; returns the
/// calibrated test scores per seed.
fn desk_scores(config: &RunConfig) -> fbpick_cli::Result<Vec<Scored>> {
    if !config.paths.data_dir.join(corpus::MANIFEST).exists() {
        corpus::synthesize(&config.synth, &config.paths.data_dir, false)?;
    }
    let missing = config.training.seeds.iter().any(|&s| !checkpoint_path(&config.paths.run_dir, s).exists());
    if missing {
        let train = corpus::load_split(config, Split::Train, false)?;
        let val = corpus::load_split(config, Split::Val, false)?;
        train_all(config, &config.model.to_model_config()?, &config.paths.run_dir, &train, &val, &mut |l| {
            eprintln!("{l}")
        })?;
    }
    let test = corpus::load_split(config, Split::Test, false)?;
    Ok(eval::evaluate_run(config, &config.model.branches, &config.paths.run_dir, &test)?.0)
}

fn mean_of(rows: &[Scored], f: impl Fn(&fbpick_seismic::MetricsReport) -> f64) -> f64 {
    let v: Vec<f64> = rows.iter().filter_map(|r| r.report.as_ref()).map(f).collect();
    if v.len() < rows.len() || v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn desk_scale() -> Outcome {
    if !full_runs_enabled() {
        return skip("set FBPICK_FULL_ACCEPTANCE=1 (trains two full-size models, several hours on one core)");
    }
    let dir = desk_dir();
    let run = || -> fbpick_cli::Result<(Vec<Scored>, Vec<Scored>)> {
        Ok((
            desk_scores(&desk_config(&dir, "dsunet", "x+y+local"))?,
            desk_scores(&desk_config(&dir, "unet", "local"))?,
        ))
    };
    match run() {
        Err(e) => verdict(false, format!("run failed: {e}")),
        Ok((ds, unet)) => {
            let hr3 = mean_of(&ds, |r| r.hr_at(3).unwrap());
            let hr1 = mean_of(&ds, |r| r.hr_at(1).unwrap());
            let mae = mean_of(&ds, |r| r.mae);
            let apr = mean_of(&ds, |r| r.apr);
            let base_hr1 = mean_of(&unet, |r| r.hr_at(1).unwrap());
            let base_hr3 = mean_of(&unet, |r| r.hr_at(3).unwrap());
            let base_mae = mean_of(&unet, |r| r.mae);
            verdict(
                hr3 >= 0.90 && mae <= 1.0 && hr1 >= base_hr1,
                format!(
                    "DSU-Net at APR {apr:.4}: HR@3px {hr3:.4} (>= 0.90), MAE {mae:.4} (<= 1.0), HR@1px {hr1:.4} \
                     (>= baseline {base_hr1:.4}); all-local baseline HR@3px {base_hr3:.4}, MAE {base_mae:.4}"
                ),
            )
        }
    }
}

fn robustness_trend() -> Outcome {
    if !full_runs_enabled() {
        return skip("set FBPICK_FULL_ACCEPTANCE=1 (needs the desk-scale DSU-Net checkpoint)");
    }
    let dir = desk_dir();
    let mut config = desk_config(&dir, "dsunet", "x+y+local");
    config.eval.snr_list = vec![20.0, 10.0, 5.0, 3.0, 1.0, -1.0];
    config.training.seeds.truncate(1);
    let run = || -> fbpick_cli::Result<Vec<(f64, Option<f64>)>> {
        desk_scores(&config)?;
        let clean = corpus::load_split(&config, Split::Test, true)?;
        let tables = eval::run_robustness(&config, &clean, &mut |_| {})?;
        Ok(tables[0].1.iter().map(|r| (r.snr_db, r.report.as_ref().and_then(|m| m.hr_at(5)))).collect())
    };
    match run() {
        Err(e) => verdict(false, format!("run failed: {e}")),
        Ok(rows) => {
            let hr: Vec<f64> = rows.iter().map(|r| r.1.unwrap_or(f64::NAN)).collect();
            let ok = hr.iter().all(|v| !v.is_nan()) && hr.windows(2).all(|w| w[1] <= w[0] + 0.02);
            let shown: Vec<String> = rows.iter().map(|(s, h)| format!("{s}dB:{:.4}", h.unwrap_or(f64::NAN))).collect();
            verdict(ok, format!("HR@5px at APR 0.8 [{}], non-increasing within 0.02", shown.join(" ")))
        }
    }
}

// ---- reproducibility ----------------------------------------------------

fn tiny_config(root: &Path) -> RunConfig {
    let mut c = RunConfig::defaults();
    c.paths.data_dir = root.join("data");
    c.paths.run_dir = root.join("run");
    c.paths.output_dir = root.join("out");
    c.synth.train = 4;
    c.synth.val = 1;
    c.synth.test = 2;
    c.model.decoder_blocks = [8, 8, 4, 4];
    c.training.epochs = 2;
    c.training.batch_size = 2;
    c
}

/// Synth, train, pick and eval into `root`; returns every produced file
/// with its bytes, keyed by path relative to `root`.
fn tiny_pipeline(root: &Path) -> fbpick_cli::Result<Vec<(String, Vec<u8>)>> {
    let c = tiny_config(root);
    corpus::synthesize(&c.synth, &c.paths.data_dir, false)?;
    let train = corpus::load_split(&c, Split::Train, false)?;
    let val = corpus::load_split(&c, Split::Val, false)?;
    let test = corpus::load_split(&c, Split::Test, false)?;
    train_all(&c, &c.model.to_model_config()?, &c.paths.run_dir, &train, &val, &mut |_| {})?;
    let model = AnyModel::load(&checkpoint_path(&c.paths.run_dir, 0), c.training.precision)?;
    for (name, (g, l)) in test.names.iter().zip(test.gathers.iter().zip(&test.lmo)) {
        let res = model.pick(g, l, 0.3)?;
        let file = format!("{}.picks", name.replace('/', "-"));
        eval::write(&c.paths.output_dir.join("picks"), &file, &picks_text(&res, g.dt))?;
    }
    eval::run_eval(&c, &test, &mut |_| {})?;
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    Ok(files)
}

fn reproducibility() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    match (tiny_pipeline(a.path()), tiny_pipeline(b.path())) {
        (Ok(fa), Ok(fb)) => {
            let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
            let has = |suffix: &str| names.iter().any(|n| n.ends_with(suffix));
            let complete = has("model.ckpt") && has(".picks") && has("eval.tsv");
            let differing: Vec<&str> = fa
                .iter()
                .zip(&fb)
                .filter(|(x, y)| x != y)
                .map(|(x, _)| x.0.as_str())
                .collect();
            verdict(
                complete && fa.len() == fb.len() && differing.is_empty(),
                format!(
                    "two seeded runs, {} files each (corpus, checkpoint, log, picks, reports): {}",
                    fa.len(),
                    if differing.is_empty() && fa.len() == fb.len() {
                        "bitwise identical".to_string()
                    } else {
                        format!("differ in {differing:?}")
                    }
                ),
            )
        }
        (Err(e), _) | (_, Err(e)) => verdict(false, format!("run failed: {e}")),
    }
}

fn main() {
    #[allow(clippy::type_complexity)]
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient-correctness", gradient_correctness),
        ("zero-offset-reduction", zero_offset_reduction),
        ("bilinear-exactness", bilinear_exactness),
        ("metric-oracle-equivalence", metric_oracle),
        ("preprocessing-round-trip", preprocessing_round_trip),
        ("sta-lta", sta_lta),
        ("noise-injection", noise_injection),
        ("desk-scale-training", desk_scale),
        ("robustness-trend", robustness_trend),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let tag = match o.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::Skip => "SKIP",
        };
        println!("{tag} {name}: {} [{:.1} s]", o.detail, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

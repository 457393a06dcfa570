mod common;

use common::store_gradcheck;
use fbpick_core::gradcheck::random_tensor;
use fbpick_core::{
    AdamConfig, AdamState, Checkpoint, DsuNet, ModelConfig, ParamStore, Session, Tensor, TraConv, UpSampling,
};
use fbpick_seismic::pipeline::{lmo_crop, normalize_traces, tile_width, LmoParams, TileMode, PANEL_WIDTH};
use fbpick_seismic::{make_label_map, synth_gather, SynthSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn reduced(decoder_blocks: [usize; 4]) -> ModelConfig {
    ModelConfig {
        height: 16,
        width: 32,
        decoder_blocks,
        ..Default::default()
    }
}

#[test]
fn full_size_shape_trace() {
    let net = DsuNet::new(ModelConfig::default()).unwrap();
    let store = net.init_parameters::<f32>(1).unwrap();
    let mut sess = Session::inference(&store);
    let x = sess.tape.constant(random_tensor(&[1, 1, 128, 256], 1.0, 2).cast());
    let tr = net.forward_traced(&mut sess, x).unwrap();
    let shapes = |vs: &[fbpick_core::Var]| -> Vec<Vec<usize>> { vs.iter().map(|&v| sess.tape.shape(v).to_vec()).collect() };
    assert_eq!(
        shapes(&tr.encoder),
        vec![vec![1, 32, 128, 256], vec![1, 64, 64, 128], vec![1, 128, 32, 64], vec![1, 256, 16, 32]]
    );
    assert_eq!(
        shapes(&tr.concats),
        vec![vec![1, 256, 32, 64], vec![1, 128, 64, 128], vec![1, 64, 128, 256]]
    );
    assert_eq!(
        shapes(&tr.decoder),
        vec![vec![1, 128, 32, 64], vec![1, 64, 64, 128], vec![1, 32, 128, 256]]
    );
    let out = sess.tape.value(tr.output);
    assert_eq!(out.shape(), &[1, 1, 128, 256]);
    assert!(out.data().iter().all(|&p| p > 0.0 && p < 1.0));
}

#[test]
fn skip_tensors_appear_unchanged_in_concatenation() {
    let net = DsuNet::new(reduced([16, 8, 4, 4])).unwrap();
    let store = net.init_parameters::<f64>(3).unwrap();
    let mut sess = Session::training(&store);
    let x = sess.tape.constant(random_tensor(&[2, 1, 16, 32], 1.0, 4));
    let tr = net.forward_traced(&mut sess, x).unwrap();
    for (i, &cat) in tr.concats.iter().enumerate() {
        let skip = sess.tape.value(tr.encoder[2 - i]);
        let cat = sess.tape.value(cat);
        let (n, c, h, w) = skip.dims4().unwrap();
        for b in 0..n {
            for ch in 0..c {
                assert_eq!(skip.plane(b, ch), cat.plane(b, ch), "stage {i}");
            }
        }
        assert_eq!(cat.shape()[2..], [h, w]);
    }
}

#[test]
fn wrong_input_size_rejected() {
    let net = DsuNet::new(reduced([16, 8, 4, 4])).unwrap();
    let store = net.init_parameters::<f64>(0).unwrap();
    let mut sess = Session::inference(&store);
    let x = sess.tape.constant(Tensor::zeros(&[1, 1, 16, 24]).unwrap());
    assert!(net.forward(&mut sess, x).is_err());
}

#[test]
fn initialization_is_seeded() {
    let net = DsuNet::new(reduced([16, 8, 4, 4])).unwrap();
    let a = net.init_parameters::<f64>(5).unwrap();
    let b = net.init_parameters::<f64>(5).unwrap();
    let c = net.init_parameters::<f64>(6).unwrap();
    let flat = |s: &ParamStore<f64>| -> Vec<u64> {
        s.iter().flat_map(|(_, p)| p.tensor.data().iter().map(|v| v.to_bits())).collect()
    };
    assert_eq!(flat(&a), flat(&b));
    assert_ne!(flat(&a), flat(&c));
    for (name, p) in a.iter().filter(|(n, _)| n.contains(".offset.")) {
        assert!(p.tensor.data().iter().all(|&v| v == 0.0), "{name}");
    }
}

#[test]
fn eval_forward_is_pure() {
    let net = DsuNet::new(reduced([16, 8, 4, 4])).unwrap();
    let store = net.init_parameters::<f64>(7).unwrap();
    let x = random_tensor(&[1, 1, 16, 32], 1.0, 8);
    let run = || {
        let mut sess = Session::inference(&store);
        let xv = sess.tape.constant(x.clone());
        let y = net.forward(&mut sess, xv).unwrap();
        assert!(sess.take_updates().is_empty());
        sess.tape.value(y).clone()
    };
    assert_eq!(run(), run());
}

#[test]
fn traconv_and_upsampling_contracts() {
    let mut store = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = TraConv::new("a", 3, 5);
    let b = TraConv::new("b", 5, 5);
    a.register(&mut store, &mut rng).unwrap();
    b.register(&mut store, &mut rng).unwrap();
    let mut sess = Session::training(&store);
    let x = sess.tape.constant(random_tensor(&[2, 3, 8, 16], 3.0, 10));
    let y = a.forward(&mut sess, x).unwrap();
    let z = b.forward(&mut sess, y).unwrap();
    assert_eq!(sess.tape.shape(y), &[2, 5, 8, 16]);
    assert_eq!(sess.tape.shape(z), &[2, 5, 8, 16]);
    assert!(sess.tape.value(z).data().iter().all(|&v| v >= -1.0));

    for (c, h, w) in [(256, 16, 32), (64, 64, 128)] {
        let up = UpSampling::new("u", c).unwrap();
        let mut store = ParamStore::<f32>::new();
        up.register(&mut store, &mut rng).unwrap();
        let mut sess = Session::inference(&store);
        let x = sess.tape.constant(Tensor::zeros(&[1, c, h, w]).unwrap());
        let y = up.forward(&mut sess, x).unwrap();
        assert_eq!(sess.tape.shape(y), &[1, c / 2, 2 * h, 2 * w]);
    }
}

/// Whole network, training mode, on a 16x32 input.
fn off_lattice(store: &mut ParamStore<f64>, d: f64) {
    let names: Vec<String> = store.iter().filter(|(n, _)| n.contains(".offset.")).map(|(n, _)| n.to_owned()).collect();
    for name in names {
        let t = store.tensor_mut(&name).unwrap();
        let v = if name.ends_with(".bias") { d.atanh() } else { 0.0 };
        t.data_mut().iter_mut().for_each(|x| *x = v);
    }
}

#[test]
fn reduced_model_gradient_check() {
    let cases = [([8, 4, 2, 2], 2, 11), ([4, 4, 2, 2], 1, 12), ([8, 4, 4, 2], 2, 13)];
    for (blocks, n, seed) in cases {
        let net = DsuNet::new(reduced(blocks)).unwrap();
        let mut store = net.init_parameters::<f64>(seed).unwrap();
        // Bilinear sampling is piecewise linear in the coordinates. Thousands of
        // randomly placed sample points would put some within one finite
        // difference step of a lattice line, so every snake step is held at
        // 0.3 px instead: cumulative positions stay 0.1 px clear of integers.
        off_lattice(&mut store, 0.3 / 4.0);
        let x = random_tensor(&[n, 1, 16, 32], 1.0, seed + 100);
        let target = random_tensor(&[n, 1, 16, 32], 1.0, seed + 200).map(|v| if v > 0.8 { 1.0 } else { 0.0 });
        let (err, at) = store_gradcheck(&store, 3, seed, |sess| {
            let xv = sess.tape.constant(x.clone());
            let y = net.forward(sess, xv)?;
            sess.tape.bce_loss(y, &target)
        });
        assert!(err < 1e-3, "{blocks:?}: {err:e} at {at}");
    }
}

#[test]
fn checkpoint_round_trip_through_network() {
    let mut config = reduced([16, 8, 4, 4]);
    config.branches = "x+local".parse().unwrap();
    let net = DsuNet::new(config).unwrap();
    let store = net.init_parameters::<f64>(14).unwrap();
    let bytes = net.to_checkpoint(&store).to_bytes();
    let ck = Checkpoint::from_bytes(&bytes).unwrap();
    let (net2, store2) = DsuNet::from_checkpoint::<f64>(&ck).unwrap();
    assert_eq!(net2.config, net.config);
    assert_eq!(net2.to_checkpoint(&store2).to_bytes(), bytes);
    // an f32 model saved and reloaded keeps its values exactly
    let s32 = store.cast::<f32>();
    let (_, back) = DsuNet::from_checkpoint::<f32>(&net.to_checkpoint(&s32)).unwrap();
    for ((_, a), (_, b)) in s32.iter().zip(back.iter()) {
        assert_eq!(a.tensor, b.tensor);
    }
}

/// One synthetic panel, memorized by a narrow network. A step size of 1e-2
/// is used: at 1e-3 Adam moves each weight by about 1e-3 per step, too little
/// to push thousands of background logits below -5 within 200 steps.
#[test]
fn overfits_single_gather() {
    let spec = SynthSpec {
        seed: 15,
        ..Default::default()
    };
    let g = synth_gather(&spec).unwrap();
    let mut crop = lmo_crop(&g, &LmoParams::new(spec.velocity, spec.t0)).unwrap();
    normalize_traces(&mut crop.image);
    let panel = tile_width(&crop.picked_only(), PANEL_WIDTH, TileMode::Training)
        .unwrap()
        .remove(0);
    let label = make_label_map(&panel.picks, 128).unwrap();
    let x = Tensor::new(&[1, 1, 128, 256], panel.image.data.iter().map(|&v| v as f32).collect()).unwrap();
    let y = Tensor::new(&[1, 1, 128, 256], label.data.iter().map(|&v| v as f32).collect()).unwrap();

    let config = ModelConfig {
        decoder_blocks: [32, 16, 8, 8],
        ..Default::default()
    };
    let net = DsuNet::new(config).unwrap();
    let mut store = net.init_parameters::<f32>(16).unwrap();
    let mut adam = AdamState::new(AdamConfig {
        lr: 1e-2,
        ..AdamConfig::default()
    });
    let mut last = f32::INFINITY;
    for _ in 0..200 {
        let (grads, updates, loss) = {
            let mut sess = Session::training(&store);
            let xv = sess.tape.constant(x.clone());
            let p = net.forward(&mut sess, xv).unwrap();
            let l = sess.tape.bce_loss(p, &y).unwrap();
            sess.tape.backward(l).unwrap();
            let loss = sess.tape.value(l).item().unwrap();
            (sess.gradients(), sess.take_updates(), loss)
        };
        store.apply_updates(updates).unwrap();
        adam.step(&mut store, &grads).unwrap();
        last = loss;
    }
    assert!(last < 0.01, "final training loss {last}");
}

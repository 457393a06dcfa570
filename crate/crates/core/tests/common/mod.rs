#![allow(dead_code)]

use fbpick_core::gradcheck::{random_tensor, relative_error};
use fbpick_core::{ParamKind, ParamStore, Result, Session, Tape, Tensor, Var};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Reduces `y` to a scalar with fixed pseudo-random weights so every output
/// element matters to the gradient.
pub fn probe(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let w = random_tensor(tape.shape(y), 1.0, seed);
    tape.weighted_sum(y, &w)
}

/// Finite-difference check of trainable parameters in a store.
///
/// `f` runs one training-mode pass and returns the scalar loss. At most
/// `max_points` coordinates of each tensor are probed. Returns the worst
/// relative error and the name of the tensor where it occurred.
pub fn store_gradcheck(
    store: &ParamStore<f64>,
    max_points: usize,
    seed: u64,
    f: impl Fn(&mut Session<'_, f64>) -> Result<Var>,
) -> (f64, String) {
    let h = 1e-5;
    let mut sess = Session::training(store);
    let loss = f(&mut sess).unwrap();
    sess.tape.backward(loss).unwrap();
    let grads = sess.gradients();

    let eval = |s: &ParamStore<f64>| -> f64 {
        let mut sess = Session::training(s);
        let loss = f(&mut sess).unwrap();
        sess.tape.value(loss).item().unwrap()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = store.clone();
    let mut worst = (0.0, String::new());
    let names: Vec<String> = store
        .iter()
        .filter(|(_, p)| p.kind == ParamKind::Trainable)
        .map(|(n, _)| n.to_owned())
        .collect();
    for name in names {
        let g = &grads[&name];
        let n = g.len();
        let idx: Vec<usize> = if n > max_points {
            sample(&mut rng, n, max_points).into_vec()
        } else {
            (0..n).collect()
        };
        for j in idx {
            let orig = store.tensor(&name).unwrap().data()[j];
            work.tensor_mut(&name).unwrap().data_mut()[j] = orig + h;
            let plus = eval(&work);
            work.tensor_mut(&name).unwrap().data_mut()[j] = orig - h;
            let minus = eval(&work);
            work.tensor_mut(&name).unwrap().data_mut()[j] = orig;
            let e = relative_error(g[j], (plus - minus) / (2.0 * h), 1e-3);
            if e > worst.0 {
                worst = (e, format!("{name}[{j}]"));
            }
        }
    }
    worst
}

/// Adds uniform noise of the given scale to every trainable tensor whose
/// name contains `pattern`.
pub fn jitter(store: &mut ParamStore<f64>, pattern: &str, scale: f64, seed: u64) {
    let names: Vec<String> = store
        .iter()
        .filter(|(n, p)| p.kind == ParamKind::Trainable && n.contains(pattern))
        .map(|(n, _)| n.to_owned())
        .collect();
    for (i, name) in names.iter().enumerate() {
        let t = store.tensor_mut(name).unwrap();
        let noise = random_tensor(t.shape(), scale, seed + i as u64);
        for (v, d) in t.data_mut().iter_mut().zip(noise.data()) {
            *v += d;
        }
    }
}

/// Copies `x: [N, C, H, W]` with `pad` replicated border columns (`axis = 3`)
/// or rows (`axis = 2`) on both sides.
pub fn replicate_pad(x: &Tensor<f64>, pad: usize, axis: usize) -> Tensor<f64> {
    let (n, c, h, w) = x.dims4().unwrap();
    let (ph, pw) = if axis == 2 { (pad, 0) } else { (0, pad) };
    let (oh, ow) = (h + 2 * ph, w + 2 * pw);
    Tensor::from_fn(&[n, c, oh, ow], |i| {
        let col = i % ow;
        let row = (i / ow) % oh;
        let ch = (i / (ow * oh)) % c;
        let b = i / (ow * oh * c);
        let r = (row as isize - ph as isize).clamp(0, h as isize - 1) as usize;
        let q = (col as isize - pw as isize).clamp(0, w as isize - 1) as usize;
        x.at(&[b, ch, r, q])
    })
    .unwrap()
}

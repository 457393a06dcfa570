//! Supervised training of the segmentation network on LMO-cropped panels.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fbpick_core::{AdamConfig, AdamState, DsuNet, ModelConfig, ParamStore, Scalar, Session, Tensor};
use fbpick_seismic::pipeline::{augment_crop, crop_with_window, lmo_window, CROP_HEIGHT, PANEL_WIDTH};
use fbpick_seismic::{make_label_map, normalize_traces, tile_width, Gather, Image, LmoParams, TileMode, UNPICKED};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Precision, RunConfig};
use crate::corpus::SplitData;
use crate::error::{CliError, Result};

pub const CHECKPOINT: &str = "model.ckpt";
pub const LOG: &str = "train.tsv";

pub fn seed_dir(run_dir: &Path, seed: u64) -> PathBuf {
    run_dir.join(format!("seed-{seed}"))
}

pub fn checkpoint_path(run_dir: &Path, seed: u64) -> PathBuf {
    seed_dir(run_dir, seed).join(CHECKPOINT)
}

/// Normalized panel with its one-hot label.
#[derive(Clone, Debug)]
pub struct Sample {
    pub image: Image,
    pub label: Image,
}

/// Full-width panels of one gather. Traces without a manual pick are left
/// out; picks that fall outside the window give an all-zero label column.
pub fn gather_samples(g: &Gather, lmo: &LmoParams, augment_seed: Option<u64>) -> Result<Vec<Sample>> {
    let mut window = match augment_seed {
        Some(s) => augment_crop(g, lmo, s)?,
        None => lmo_window(g, lmo)?,
    };
    let keep: Vec<usize> = (0..window.width())
        .filter(|&c| g.picks[window.traces[c]] != UNPICKED)
        .collect();
    if keep.len() < PANEL_WIDTH {
        return Ok(Vec::new());
    }
    window.traces = keep.iter().map(|&c| window.traces[c]).collect();
    window.starts = keep.iter().map(|&c| window.starts[c]).collect();
    let mut crop = crop_with_window(g, &window)?;
    normalize_traces(&mut crop.image);
    tile_width(&crop, PANEL_WIDTH, TileMode::Training)?
        .into_iter()
        .map(|p| {
            Ok(Sample {
                label: make_label_map(&p.picks, CROP_HEIGHT)?,
                image: p.image,
            })
        })
        .collect()
}

/// Stacks images into an `[n, 1, h, w]` tensor.
pub fn stack<'a, T: Scalar>(images: impl IntoIterator<Item = &'a Image>) -> Result<Tensor<T>> {
    let mut data = Vec::new();
    let mut n = 0;
    let mut hw = (0, 0);
    for img in images {
        hw = (img.height, img.width);
        data.extend(img.data.iter().map(|&v| T::lit(v)));
        n += 1;
    }
    Ok(Tensor::new(&[n, 1, hw.0, hw.1], data)?)
}

/// Patience counter on a monitored loss.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    bad: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            bad: 0,
        }
    }

    /// Records one epoch; returns whether it is the new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.bad = 0;
            true
        } else {
            self.bad += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.bad >= self.patience
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub checkpoint: PathBuf,
}

fn finite(loss: f64, what: &str) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(CliError::Numeric(format!("{what} is {loss}; training diverged")))
    }
}

/// Mean BCE over `samples` in inference mode.
pub fn validation_loss<T: Scalar>(
    net: &DsuNet,
    store: &ParamStore<T>,
    samples: &[Sample],
    batch: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in samples.chunks(batch) {
        let x = stack::<T>(chunk.iter().map(|s| &s.image))?;
        let y = stack::<T>(chunk.iter().map(|s| &s.label))?;
        let mut sess = Session::inference(store);
        let xv = sess.tape.constant(x);
        let p = net.forward(&mut sess, xv)?;
        let l = sess.tape.bce_loss(p, &y)?;
        let v = sess.tape.value(l).item()?.to_f64().unwrap_or(f64::NAN);
        total += v * chunk.len() as f64;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Trains one seed and writes the best-validation checkpoint and a TSV log
/// into `dir`. Progress lines go to `progress`.
pub fn train_seed<T: Scalar>(
    config: &RunConfig,
    model: &ModelConfig,
    train: &SplitData,
    val: &SplitData,
    seed: u64,
    dir: &Path,
    progress: &mut dyn FnMut(&str),
) -> Result<TrainOutcome> {
    let t = &config.training;
    fs::create_dir_all(dir).map_err(|e| CliError::data(dir.display(), e))?;
    let net = DsuNet::new(model.clone())?;
    let mut store = net.init_parameters::<T>(seed)?;
    let mut adam = AdamState::new(AdamConfig {
        lr: t.learning_rate,
        weight_decay: t.weight_decay,
        ..AdamConfig::default()
    });

    let mut val_samples = Vec::new();
    for (g, l) in val.gathers.iter().zip(&val.lmo) {
        val_samples.extend(gather_samples(g, l, None)?);
    }
    if val_samples.is_empty() {
        return Err(CliError::Data("validation split yields no full-width panels".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stopper = EarlyStopping::new(t.patience);
    let mut log = String::from("epoch\ttrain_bce\tval_bce\tbest\n");
    let ckpt = dir.join(CHECKPOINT);
    let mut epochs_run = 0;
    for epoch in 1..=t.epochs {
        let mut samples = Vec::new();
        for (g, l) in train.gathers.iter().zip(&train.lmo) {
            let aug = t.augmentation.then(|| rng.random::<u64>());
            samples.extend(gather_samples(g, l, aug)?);
        }
        if samples.is_empty() {
            return Err(CliError::Data("training split yields no full-width panels".into()));
        }
        samples.shuffle(&mut rng);

        let mut total = 0.0;
        for (b, chunk) in samples.chunks(t.batch_size).enumerate() {
            let x = stack::<T>(chunk.iter().map(|s| &s.image))?;
            let y = stack::<T>(chunk.iter().map(|s| &s.label))?;
            let (grads, updates, loss) = {
                let mut sess = Session::training(&store);
                let xv = sess.tape.constant(x);
                let p = net.forward(&mut sess, xv)?;
                let l = sess.tape.bce_loss(p, &y)?;
                let loss = sess.tape.value(l).item()?.to_f64().unwrap_or(f64::NAN);
                finite(loss, &format!("training loss at epoch {epoch}, batch {}", b + 1))?;
                sess.tape.backward(l)?;
                (sess.gradients(), sess.take_updates(), loss)
            };
            store.apply_updates(updates)?;
            adam.step(&mut store, &grads)?;
            total += loss * chunk.len() as f64;
        }
        let train_loss = total / samples.len() as f64;
        let val_loss = finite(
            validation_loss(&net, &store, &val_samples, t.batch_size)?,
            &format!("validation loss at epoch {epoch}"),
        )?;
        let improved = stopper.observe(epoch, val_loss);
        if improved {
            let bytes = net.to_checkpoint(&store).to_bytes();
            fs::write(&ckpt, bytes).map_err(|e| CliError::data(ckpt.display(), e))?;
        }
        let _ = writeln!(log, "{epoch}\t{train_loss:.8}\t{val_loss:.8}\t{}", u8::from(improved));
        progress(&format!(
            "seed {seed} epoch {epoch}: train bce {train_loss:.5}, val bce {val_loss:.5}{}",
            if improved { " (best)" } else { "" }
        ));
        epochs_run = epoch;
        if stopper.should_stop() {
            progress(&format!("seed {seed}: no improvement for {} epochs, stopping", t.patience));
            break;
        }
    }
    let log_path = dir.join(LOG);
    fs::write(&log_path, log).map_err(|e| CliError::data(log_path.display(), e))?;
    Ok(TrainOutcome {
        seed,
        epochs_run,
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best,
        checkpoint: ckpt,
    })
}

/// Trains every configured seed into `run_dir/seed-N`.
pub fn train_all(
    config: &RunConfig,
    model: &ModelConfig,
    run_dir: &Path,
    train: &SplitData,
    val: &SplitData,
    progress: &mut dyn FnMut(&str),
) -> Result<Vec<TrainOutcome>> {
    config
        .training
        .seeds
        .iter()
        .map(|&s| {
            let dir = seed_dir(run_dir, s);
            match config.training.precision {
                Precision::F32 => train_seed::<f32>(config, model, train, val, s, &dir, progress),
                Precision::F64 => train_seed::<f64>(config, model, train, val, s, &dir, progress),
            }
        })
        .collect()
}

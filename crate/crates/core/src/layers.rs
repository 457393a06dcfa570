//! Parameterized building blocks shared by the snake-convolution module and
//! the U-Net: convolution, transposed convolution and batch normalization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Result};
use crate::params::{Mode, ParamKind, ParamStore, Session};
use crate::scalar::Scalar;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Batch-norm variance regularizer.
pub const BN_EPS: f64 = 1e-7;
/// Weight of the newest batch in the running statistics.
pub const BN_MOMENTUM: f64 = 0.1;

/// Tensor with entries uniform in `[-bound, bound)`.
pub(crate) fn uniform<T: Scalar>(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Result<Tensor<T>> {
    Tensor::from_fn(shape, |_| T::lit(rng.random_range(-bound..bound)))
}

/// Fan-in scaled uniform weights and bias, `bound = 1 / sqrt(fan_in)`.
pub(crate) fn register_weight_bias<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    weight_shape: &[usize],
    bias_len: usize,
    fan_in: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    store.insert(
        format!("{name}.weight"),
        uniform(weight_shape, bound, rng)?,
        ParamKind::Trainable,
    )?;
    store.insert(
        format!("{name}.bias"),
        uniform(&[bias_len], bound, rng)?,
        ParamKind::Trainable,
    )?;
    Ok(())
}

/// Same-padded stride-1 convolution with an odd kernel.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub name: String,
    pub c_in: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
}

impl Conv2d {
    pub fn new(name: impl Into<String>, c_in: usize, c_out: usize, kh: usize, kw: usize) -> Result<Self> {
        if kh.is_multiple_of(2) || kw.is_multiple_of(2) {
            return dim_err(format!("same-padded convolution needs odd kernel, got {kh}x{kw}"));
        }
        Ok(Self {
            name: name.into(),
            c_in,
            c_out,
            kh,
            kw,
        })
    }

    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        register_weight_bias(
            store,
            &self.name,
            &[self.c_out, self.c_in, self.kh, self.kw],
            self.c_out,
            self.c_in * self.kh * self.kw,
            rng,
        )
    }

    /// Registers all-zero weight and bias.
    pub fn register_zeros<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        store.insert(
            format!("{}.weight", self.name),
            Tensor::zeros(&[self.c_out, self.c_in, self.kh, self.kw])?,
            ParamKind::Trainable,
        )?;
        store.insert(
            format!("{}.bias", self.name),
            Tensor::zeros(&[self.c_out])?,
            ParamKind::Trainable,
        )
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let w = sess.param(&format!("{}.weight", self.name))?;
        let b = sess.param(&format!("{}.bias", self.name))?;
        sess.tape.conv2d(x, w, Some(b), (self.kh / 2, self.kw / 2))
    }
}

/// 2x2 / stride-2 transposed convolution.
#[derive(Clone, Debug)]
pub struct ConvTranspose2x2 {
    pub name: String,
    pub c_in: usize,
    pub c_out: usize,
}

impl ConvTranspose2x2 {
    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        // each output pixel receives exactly one tap per input channel
        register_weight_bias(store, &self.name, &[self.c_in, self.c_out, 2, 2], self.c_out, self.c_in, rng)
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let w = sess.param(&format!("{}.weight", self.name))?;
        let b = sess.param(&format!("{}.bias", self.name))?;
        sess.tape.conv_transpose2x2(x, w, Some(b))
    }
}

/// Per-channel batch normalization with learnable scale and shift.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub name: String,
    pub channels: usize,
}

impl BatchNorm2d {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        Self {
            name: name.into(),
            channels,
        }
    }

    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        let c = [self.channels];
        store.insert(format!("{}.weight", self.name), Tensor::ones(&c)?, ParamKind::Trainable)?;
        store.insert(format!("{}.bias", self.name), Tensor::zeros(&c)?, ParamKind::Trainable)?;
        store.insert(format!("{}.running_mean", self.name), Tensor::zeros(&c)?, ParamKind::Buffer)?;
        store.insert(format!("{}.running_var", self.name), Tensor::ones(&c)?, ParamKind::Buffer)?;
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let gamma = sess.param(&format!("{}.weight", self.name))?;
        let beta = sess.param(&format!("{}.bias", self.name))?;
        let mean_name = format!("{}.running_mean", self.name);
        let var_name = format!("{}.running_var", self.name);
        let running_mean = sess.buffer(&mean_name)?;
        let running_var = sess.buffer(&var_name)?;
        let eps = T::lit(BN_EPS);
        match sess.mode() {
            Mode::Eval => sess.tape.batch_norm_eval(
                x,
                gamma,
                beta,
                running_mean.data(),
                running_var.data(),
                eps,
            ),
            Mode::Train => {
                let (y, stats) = sess.tape.batch_norm_train(x, gamma, beta, eps)?;
                let m = T::lit(BN_MOMENTUM);
                let keep = T::one() - m;
                let blend = |old: &Tensor<T>, new: &[T]| -> Result<Tensor<T>> {
                    Tensor::new(
                        old.shape(),
                        old.data().iter().zip(new).map(|(&o, &n)| keep * o + m * n).collect(),
                    )
                };
                let new_mean = blend(running_mean, &stats.mean)?;
                let new_var = blend(running_var, &stats.var)?;
                sess.queue_update(mean_name, new_mean);
                sess.queue_update(var_name, new_var);
                Ok(y)
            }
        }
    }
}

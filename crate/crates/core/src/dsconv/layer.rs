use rand_chacha::ChaCha8Rng;

use super::SnakeConvSpec;
use crate::error::Result;
use crate::layers::{register_weight_bias, Conv2d};
use crate::params::{ParamStore, Session};
use crate::scalar::Scalar;
use crate::tape::Var;

/// One dynamic snake convolution with its offset predictor.
///
/// Parameters: `{name}.offset.{weight,bias}` (3x3 convolution to `K`
/// channels, zero-initialized) and `{name}.{weight,bias}` with weight shape
/// `[C_out, C_in, K]`.
#[derive(Clone, Debug)]
pub struct SnakeConv {
    pub name: String,
    pub spec: SnakeConvSpec,
    offset: Conv2d,
}

impl SnakeConv {
    pub fn new(name: impl Into<String>, spec: SnakeConvSpec) -> Result<Self> {
        spec.validate()?;
        let name = name.into();
        let offset = Conv2d::new(format!("{name}.offset"), spec.in_channels, spec.kernel_length, 3, 3)?;
        Ok(Self { name, spec, offset })
    }

    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        self.offset.register_zeros(store)?;
        let s = &self.spec;
        register_weight_bias(
            store,
            &self.name,
            &[s.out_channels, s.in_channels, s.kernel_length],
            s.out_channels,
            s.in_channels * s.kernel_length,
            rng,
        )
    }

    /// Per-step offsets in `(-1, 1)`, shape `[N, K, H, W]`.
    pub fn predict_offsets<T: Scalar>(&self, sess: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let raw = self.offset.forward(sess, x)?;
        let squashed = sess.tape.tanh(raw);
        // tanh rounds to exactly +-1 for large inputs; keep the range open
        Ok(sess.tape.scale(squashed, T::one() - T::epsilon()))
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let offsets = self.predict_offsets(sess, x)?;
        let coords = sess.tape.snake_coordinates(offsets, &self.spec)?;
        let w = sess.param(&format!("{}.weight", self.name))?;
        let b = sess.param(&format!("{}.bias", self.name))?;
        sess.tape.snake_conv(x, coords, w, Some(b))
    }
}

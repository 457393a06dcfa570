use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::tape::{Backward, Tape, Var};
use crate::tensor::Tensor;

/// Predictions are clamped this far inside `(0, 1)` before taking logs.
pub const BCE_CLAMP: f64 = 1e-7;

struct Bce<T: Scalar> {
    target: Tensor<T>,
}

impl<T: Scalar> Backward<T> for Bce<T> {
    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let lo = T::lit(BCE_CLAMP);
        let hi = T::one() - lo;
        let scale = grad[0] / T::from_usize(self.target.numel()).unwrap();
        let g = inputs[0]
            .data()
            .iter()
            .zip(self.target.data())
            .map(|(&p, &t)| {
                if p < lo || p > hi {
                    T::zero()
                } else {
                    scale * ((T::one() - t) / (T::one() - p) - t / p)
                }
            })
            .collect();
        vec![Some(g)]
    }
}

impl<T: Scalar> Tape<T> {
    /// Mean binary cross-entropy between probabilities and `{0, 1}` targets.
    pub fn bce_loss(&mut self, prediction: Var, target: &Tensor<T>) -> Result<Var> {
        let p = self.value(prediction);
        if p.shape() != target.shape() {
            return dim_err(format!(
                "bce_loss: prediction {:?} vs target {:?}",
                p.shape(),
                target.shape()
            ));
        }
        let lo = T::lit(BCE_CLAMP);
        let hi = T::one() - lo;
        let total: T = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| {
                // clamp without `max`/`min`, which would swallow NaN
                let p = if p < lo { lo } else if p > hi { hi } else { p };
                -(t * p.ln() + (T::one() - t) * (T::one() - p).ln())
            })
            .sum();
        let loss = total / T::from_usize(p.numel()).unwrap();
        Ok(self.push(
            Tensor::scalar(loss),
            &[prediction],
            Bce {
                target: target.clone(),
            },
        ))
    }
}

//! Adam with L2 weight decay folded into the gradient.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::params::{Gradients, ParamKind, ParamStore};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
struct Moments<T> {
    first: Vec<T>,
    second: Vec<T>,
}

/// Optimizer state: per-parameter moments plus the shared step counter.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    moments: IndexMap<String, Moments<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: IndexMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of every trainable tensor in `params`.
    ///
    /// Fails without touching anything if a trainable tensor lacks a gradient
    /// or a gradient has the wrong length.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        for (name, p) in params.iter() {
            if p.kind != ParamKind::Trainable {
                continue;
            }
            match grads.get(name) {
                None => {
                    return Err(Error::Usage(format!("no gradient for parameter {name}")));
                }
                Some(g) if g.len() != p.tensor.numel() => {
                    return Err(Error::Dimension(format!(
                        "gradient of {name} has {} values, parameter has {}",
                        g.len(),
                        p.tensor.numel()
                    )));
                }
                Some(_) => {}
            }
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (lr, wd, eps) = (T::lit(c.lr), T::lit(c.weight_decay), T::lit(c.eps));
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let bias1 = T::one() - b1.powi(t);
        let bias2 = T::one() - b2.powi(t);
        let names: Vec<String> = params
            .iter()
            .filter(|(_, p)| p.kind == ParamKind::Trainable)
            .map(|(n, _)| n.to_owned())
            .collect();
        for name in names {
            let grad = &grads[&name];
            let value = params.tensor_mut(&name)?;
            let m = self.moments.entry(name).or_insert_with(|| Moments {
                first: vec![T::zero(); grad.len()],
                second: vec![T::zero(); grad.len()],
            });
            for (((p, &g), m1), m2) in value
                .data_mut()
                .iter_mut()
                .zip(grad)
                .zip(m.first.iter_mut())
                .zip(m.second.iter_mut())
            {
                let g = g + wd * *p;
                *m1 = b1 * *m1 + (T::one() - b1) * g;
                *m2 = b2 * *m2 + (T::one() - b2) * g * g;
                let mhat = *m1 / bias1;
                let vhat = *m2 / bias2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

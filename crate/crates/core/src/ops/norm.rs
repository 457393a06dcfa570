use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::tape::{Backward, Tape, Var};
use crate::tensor::Tensor;

/// Per-channel statistics of one training-mode batch-norm evaluation.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased variance (biased when only one value per channel exists).
    pub var: Vec<T>,
}

struct BatchNormTrain<T> {
    mean: Vec<T>,
    inv_std: Vec<T>,
}

struct BatchNormEval<T> {
    mean: Vec<T>,
    inv_std: Vec<T>,
}

fn check<T: Scalar>(tape: &Tape<T>, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize, usize)> {
    let (n, c, h, w) = tape.value(x).dims4()?;
    if tape.value(gamma).shape() != [c] || tape.value(beta).shape() != [c] {
        return dim_err(format!(
            "batch_norm: scale/shift shapes {:?}/{:?} do not match {c} channels",
            tape.value(gamma).shape(),
            tape.value(beta).shape()
        ));
    }
    Ok((n, c, h * w))
}

/// Shared backward of the affine part: grads of gamma and beta, plus `x_hat`.
fn affine_grads<T: Scalar>(
    x: &[T],
    grad: &[T],
    mean: &[T],
    inv_std: &[T],
    n: usize,
    plane: usize,
) -> (Vec<T>, Vec<T>) {
    let c = mean.len();
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let start = (b * c + ch) * plane;
            for (&xv, &g) in x[start..start + plane].iter().zip(&grad[start..start + plane]) {
                dbeta[ch] += g;
                dgamma[ch] += g * (xv - mean[ch]) * inv_std[ch];
            }
        }
    }
    (dgamma, dbeta)
}

impl<T: Scalar> Backward<T> for BatchNormTrain<T> {
    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (n, c, h, w) = inputs[0].dims4().expect("rank 4");
        let plane = h * w;
        let x = inputs[0].data();
        let gamma = inputs[1].data();
        let (dgamma, dbeta) = affine_grads(x, grad, &self.mean, &self.inv_std, n, plane);
        let dx = needs[0].then(|| {
            let count = T::from_usize(n * plane).unwrap();
            let mut dx = vec![T::zero(); x.len()];
            for ch in 0..c {
                let mean_g = dbeta[ch] / count;
                let mean_gx = dgamma[ch] / count;
                let k = gamma[ch] * self.inv_std[ch];
                for b in 0..n {
                    let start = (b * c + ch) * plane;
                    for i in start..start + plane {
                        let xh = (x[i] - self.mean[ch]) * self.inv_std[ch];
                        dx[i] = k * (grad[i] - mean_g - xh * mean_gx);
                    }
                }
            }
            dx
        });
        vec![dx, needs[1].then_some(dgamma), needs[2].then_some(dbeta)]
    }
}

impl<T: Scalar> Backward<T> for BatchNormEval<T> {
    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (n, c, h, w) = inputs[0].dims4().expect("rank 4");
        let plane = h * w;
        let x = inputs[0].data();
        let gamma = inputs[1].data();
        let (dgamma, dbeta) = affine_grads(x, grad, &self.mean, &self.inv_std, n, plane);
        let dx = needs[0].then(|| {
            let mut dx = vec![T::zero(); x.len()];
            for b in 0..n {
                for ch in 0..c {
                    let k = gamma[ch] * self.inv_std[ch];
                    let start = (b * c + ch) * plane;
                    for i in start..start + plane {
                        dx[i] = grad[i] * k;
                    }
                }
            }
            dx
        });
        vec![dx, needs[1].then_some(dgamma), needs[2].then_some(dbeta)]
    }
}

fn normalize<T: Scalar>(x: &Tensor<T>, gamma: &[T], beta: &[T], mean: &[T], inv_std: &[T]) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let plane = h * w;
    let mut out = x.data().to_vec();
    for b in 0..n {
        for ch in 0..c {
            let start = (b * c + ch) * plane;
            let k = gamma[ch] * inv_std[ch];
            for v in &mut out[start..start + plane] {
                *v = (*v - mean[ch]) * k + beta[ch];
            }
        }
    }
    Tensor::new(x.shape(), out)
}

impl<T: Scalar> Tape<T> {
    /// Batch normalization with statistics of the current batch.
    ///
    /// Returns the normalized tensor and the batch statistics, which the
    /// caller folds into its running averages.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<(Var, BatchStats<T>)> {
        let (n, c, plane) = check(self, x, gamma, beta)?;
        let count = n * plane;
        let xv = self.value(x).data();
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for ch in 0..c {
            let mut s = T::zero();
            for b in 0..n {
                let start = (b * c + ch) * plane;
                s += xv[start..start + plane].iter().copied().sum::<T>();
            }
            let m = s / T::from_usize(count).unwrap();
            let mut ss = T::zero();
            for b in 0..n {
                let start = (b * c + ch) * plane;
                ss += xv[start..start + plane].iter().map(|&v| (v - m) * (v - m)).sum::<T>();
            }
            mean[ch] = m;
            var[ch] = ss;
        }
        let biased: Vec<T> = var.iter().map(|&s| s / T::from_usize(count).unwrap()).collect();
        let unbiased: Vec<T> = var
            .iter()
            .map(|&s| s / T::from_usize(count.saturating_sub(1).max(1)).unwrap())
            .collect();
        let inv_std: Vec<T> = biased.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let out = normalize(
            self.value(x),
            self.value(gamma).data(),
            self.value(beta).data(),
            &mean,
            &inv_std,
        )?;
        let stats = BatchStats {
            mean: mean.clone(),
            var: unbiased,
        };
        let var = self.push(out, &[x, gamma, beta], BatchNormTrain { mean, inv_std });
        Ok((var, stats))
    }

    /// Batch normalization with fixed running statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[T],
        running_var: &[T],
        eps: T,
    ) -> Result<Var> {
        let (_, c, _) = check(self, x, gamma, beta)?;
        if running_mean.len() != c || running_var.len() != c {
            return dim_err("batch_norm: running statistics do not match channel count");
        }
        let inv_std: Vec<T> = running_var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let out = normalize(
            self.value(x),
            self.value(gamma).data(),
            self.value(beta).data(),
            running_mean,
            &inv_std,
        )?;
        Ok(self.push(
            out,
            &[x, gamma, beta],
            BatchNormEval {
                mean: running_mean.to_vec(),
                inv_std,
            },
        ))
    }
}

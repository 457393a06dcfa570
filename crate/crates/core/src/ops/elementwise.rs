use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::tape::{Backward, Tape, Var};
use crate::tensor::Tensor;

struct Elu;

impl<T: Scalar> Backward<T> for Elu {
    fn backward(&self, inputs: &[&Tensor<T>], out: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let g = inputs[0]
            .data()
            .iter()
            .zip(out.data())
            .zip(grad)
            .map(|((&x, &y), &g)| if x > T::zero() { g } else { g * (y + T::one()) })
            .collect();
        vec![Some(g)]
    }
}

struct Sigmoid;

impl<T: Scalar> Backward<T> for Sigmoid {
    fn backward(&self, _: &[&Tensor<T>], out: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let g = out
            .data()
            .iter()
            .zip(grad)
            .map(|(&y, &g)| g * y * (T::one() - y))
            .collect();
        vec![Some(g)]
    }
}

struct Tanh;

impl<T: Scalar> Backward<T> for Tanh {
    fn backward(&self, _: &[&Tensor<T>], out: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let g = out
            .data()
            .iter()
            .zip(grad)
            .map(|(&y, &g)| g * (T::one() - y * y))
            .collect();
        vec![Some(g)]
    }
}

struct Add;

impl<T: Scalar> Backward<T> for Add {
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        needs.iter().map(|&n| n.then(|| grad.to_vec())).collect()
    }
}

struct Scale<T>(T);

impl<T: Scalar> Backward<T> for Scale<T> {
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(grad.iter().map(|&g| g * self.0).collect())]
    }
}

struct Reshape;

impl<T: Scalar> Backward<T> for Reshape {
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(grad.to_vec())]
    }
}

struct Sum;

impl<T: Scalar> Backward<T> for Sum {
    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(vec![grad[0]; inputs[0].numel()])]
    }
}

struct WeightedSum<T: Scalar>(Tensor<T>);

impl<T: Scalar> Backward<T> for WeightedSum<T> {
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(self.0.data().iter().map(|&w| w * grad[0]).collect())]
    }
}

/// Concatenation along the channel axis of `NCHW` tensors.
struct ConcatChannels {
    channels: Vec<usize>,
}

impl<T: Scalar> Backward<T> for ConcatChannels {
    fn backward(&self, inputs: &[&Tensor<T>], out: &Tensor<T>, grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (n, c_total, h, w) = out.dims4().expect("concat output is rank 4");
        let plane = h * w;
        let mut grads = Vec::with_capacity(inputs.len());
        let mut c_off = 0;
        for (i, &c) in self.channels.iter().enumerate() {
            if needs[i] {
                let mut g = Vec::with_capacity(n * c * plane);
                for b in 0..n {
                    let start = (b * c_total + c_off) * plane;
                    g.extend_from_slice(&grad[start..start + c * plane]);
                }
                grads.push(Some(g));
            } else {
                grads.push(None);
            }
            c_off += c;
        }
        grads
    }
}

impl<T: Scalar> Tape<T> {
    /// Exponential linear unit: `x` for `x > 0`, `exp(x) - 1` otherwise.
    pub fn elu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| if v > T::zero() { v } else { v.exp_m1() });
        self.push(out, &[x], Elu)
    }

    /// Logistic sigmoid, evaluated without overflow for large `|x|`.
    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| {
            if v >= T::zero() {
                T::one() / (T::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (T::one() + e)
            }
        });
        self.push(out, &[x], Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.tanh());
        self.push(out, &[x], Tanh)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return dim_err(format!("add: {:?} vs {:?}", va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(va.shape(), data)?;
        Ok(self.push(out, &[a, b], Add))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push(out, &[x], Scale(factor))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, &[x], Reshape))
    }

    /// Sum of all elements as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), &[x], Sum)
    }

    /// `sum(x * weights)` for a constant weight tensor of the same shape.
    pub fn weighted_sum(&mut self, x: Var, weights: &Tensor<T>) -> Result<Var> {
        let v = self.value(x);
        if v.shape() != weights.shape() {
            return dim_err(format!(
                "weighted_sum: {:?} vs {:?}",
                v.shape(),
                weights.shape()
            ));
        }
        let s = v.data().iter().zip(weights.data()).map(|(&a, &b)| a * b).sum();
        Ok(self.push(Tensor::scalar(s), &[x], WeightedSum(weights.clone())))
    }

    /// Joins `NCHW` tensors along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return dim_err("concat of zero tensors");
        }
        let (n, _, h, w) = self.value(parts[0]).dims4()?;
        let mut channels = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pn, pc, ph, pw) = self.value(p).dims4()?;
            if (pn, ph, pw) != (n, h, w) {
                return dim_err(format!(
                    "concat: {:?} does not match batch/spatial dims ({n}, {h}, {w})",
                    self.value(p).shape()
                ));
            }
            channels.push(pc);
        }
        let c_total: usize = channels.iter().sum();
        let plane = h * w;
        let mut data = Vec::with_capacity(n * c_total * plane);
        for b in 0..n {
            for (&p, &c) in parts.iter().zip(&channels) {
                let src = self.value(p).data();
                let start = b * c * plane;
                data.extend_from_slice(&src[start..start + c * plane]);
            }
        }
        let out = Tensor::new(&[n, c_total, h, w], data)?;
        Ok(self.push(out, parts, ConcatChannels { channels }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_tape(x: f64) -> (Tape<f64>, Var) {
        let mut tape = Tape::new();
        let v = tape.leaf(Tensor::scalar(x), true);
        (tape, v)
    }

    #[test]
    fn elu_reference_points() {
        for (x, want) in [(0.0, 0.0), (1.5, 1.5), (-1.0, (-1.0f64).exp() - 1.0)] {
            let (mut tape, v) = scalar_tape(x);
            let y = tape.elu(v);
            assert!((tape.value(y).item().unwrap() - want).abs() < 1e-15);
        }
        let (mut tape, v) = scalar_tape(-1.0);
        let y = tape.elu(v);
        assert!((tape.value(y).item().unwrap() + 0.6321).abs() < 1e-4);
    }

    #[test]
    fn sigmoid_saturates_and_centers() {
        let (mut tape, v) = scalar_tape(0.0);
        let y = tape.sigmoid(v);
        assert_eq!(tape.value(y).item().unwrap(), 0.5);
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(v).unwrap()[0], 0.25);

        let (mut tape, v) = scalar_tape(50.0);
        let y = tape.sigmoid(v);
        assert!((tape.value(y).item().unwrap() - 1.0).abs() <= 1e-15);
        let (mut tape, v) = scalar_tape(-800.0);
        let y = tape.sigmoid(v);
        assert_eq!(tape.value(y).item().unwrap(), 0.0);
    }

    #[test]
    fn concat_preserves_parts() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_fn(&[2, 1, 2, 2], |i| i as f64).unwrap(), true);
        let b = tape.leaf(Tensor::from_fn(&[2, 2, 2, 2], |i| 100.0 + i as f64).unwrap(), true);
        let c = tape.concat_channels(&[a, b]).unwrap();
        assert_eq!(tape.shape(c), &[2, 3, 2, 2]);
        assert_eq!(tape.value(c).at(&[1, 0, 1, 1]), 7.0);
        assert_eq!(tape.value(c).at(&[1, 2, 0, 0]), 112.0);
        let s = tape.sum(c);
        tape.backward(s).unwrap();
        assert!(tape.grad(a).unwrap().iter().all(|&g| g == 1.0));
        assert_eq!(tape.grad(b).unwrap().len(), 16);
    }
}

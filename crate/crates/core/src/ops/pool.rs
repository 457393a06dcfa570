use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::tape::{Backward, Tape, Var};
use crate::tensor::Tensor;

struct MaxPool2 {
    /// Flat input index that produced each output element.
    argmax: Vec<usize>,
    input_len: usize,
}

impl<T: Scalar> Backward<T> for MaxPool2 {
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let mut dx = vec![T::zero(); self.input_len];
        for (&src, &g) in self.argmax.iter().zip(grad) {
            dx[src] += g;
        }
        vec![Some(dx)]
    }
}

impl<T: Scalar> Tape<T> {
    /// 2x2 max pooling with stride 2.
    ///
    /// On ties the first element of the window in row-major order wins and
    /// alone receives the gradient.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return dim_err(format!("max_pool2: spatial dims {h}x{w} must be even"));
        }
        let (ho, wo) = (h / 2, w / 2);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        for plane in 0..n * c {
            let base = plane * h * w;
            for i in 0..ho {
                for j in 0..wo {
                    let top = base + 2 * i * w + 2 * j;
                    let mut best = top;
                    for cand in [top + 1, top + w, top + w + 1] {
                        if xv[cand] > xv[best] {
                            best = cand;
                        }
                    }
                    out.push(xv[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new(&[n, c, ho, wo], out)?;
        let input_len = xv.len();
        Ok(self.push(value, &[x], MaxPool2 { argmax, input_len }))
    }
}

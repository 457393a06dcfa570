//! Bilinear sampling at fractional coordinates, standalone and fused with
//! the snake-kernel weighting.
//!
//! Coordinates outside the image are clamped to the border, so the sampled
//! value there is constant and its coordinate gradient is zero.

use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::tape::{Backward, Tape, Var};
use crate::tensor::Tensor;

/// The four neighbours of one sampling point within an `h x w` plane.
#[derive(Clone, Copy, Debug)]
struct Tap<T> {
    i00: usize,
    i01: usize,
    i10: usize,
    i11: usize,
    fx: T,
    fy: T,
    x_free: bool,
    y_free: bool,
}

impl<T: Scalar> Tap<T> {
    #[inline]
    fn new(x: T, y: T, h: usize, w: usize) -> Self {
        let (wm, hm) = (T::from_usize(w - 1).unwrap(), T::from_usize(h - 1).unwrap());
        let xc = x.max(T::zero()).min(wm);
        let yc = y.max(T::zero()).min(hm);
        let x0 = xc.floor().to_usize().unwrap_or(0).min(w - 1);
        let y0 = yc.floor().to_usize().unwrap_or(0).min(h - 1);
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        Self {
            i00: y0 * w + x0,
            i01: y0 * w + x1,
            i10: y1 * w + x0,
            i11: y1 * w + x1,
            fx: xc - T::from_usize(x0).unwrap(),
            fy: yc - T::from_usize(y0).unwrap(),
            x_free: x >= T::zero() && x <= wm,
            y_free: y >= T::zero() && y <= hm,
        }
    }

    #[inline]
    fn value(&self, img: &[T]) -> T {
        let one = T::one();
        let top = (one - self.fx) * img[self.i00] + self.fx * img[self.i01];
        let bottom = (one - self.fx) * img[self.i10] + self.fx * img[self.i11];
        (one - self.fy) * top + self.fy * bottom
    }

    /// Partial derivatives of the sampled value with respect to `(x, y)`.
    #[inline]
    fn coord_grad(&self, img: &[T]) -> (T, T) {
        let one = T::one();
        let (a, b, c, d) = (img[self.i00], img[self.i01], img[self.i10], img[self.i11]);
        let gx = if self.x_free {
            (one - self.fy) * (b - a) + self.fy * (d - c)
        } else {
            T::zero()
        };
        let gy = if self.y_free {
            (one - self.fx) * (c - a) + self.fx * (d - b)
        } else {
            T::zero()
        };
        (gx, gy)
    }

    #[inline]
    fn scatter(&self, dimg: &mut [T], g: T) {
        let one = T::one();
        dimg[self.i00] += g * (one - self.fx) * (one - self.fy);
        dimg[self.i01] += g * self.fx * (one - self.fy);
        dimg[self.i10] += g * (one - self.fx) * self.fy;
        dimg[self.i11] += g * self.fx * self.fy;
    }
}

fn check_coords<T: Scalar>(input: &Tensor<T>, coords: &Tensor<T>) -> Result<(usize, usize, usize, usize, usize, usize, usize)> {
    let (n, c, h, w) = input.dims4()?;
    match *coords.shape() {
        [cn, 2, k, ho, wo] if cn == n => Ok((n, c, h, w, k, ho, wo)),
        _ => dim_err(format!(
            "coordinates {:?} do not fit input {:?}; expected [N, 2, K, H', W']",
            coords.shape(),
            input.shape()
        )),
    }
}

/// Taps of chain position `k` for every output pixel of batch item `b`.
#[allow(clippy::too_many_arguments)]
fn taps_for<T: Scalar>(coords: &[T], b: usize, k: usize, kl: usize, plane_out: usize, h: usize, w: usize, taps: &mut Vec<Tap<T>>) {
    taps.clear();
    let xs = &coords[((b * 2) * kl + k) * plane_out..][..plane_out];
    let ys = &coords[((b * 2 + 1) * kl + k) * plane_out..][..plane_out];
    taps.extend(xs.iter().zip(ys).map(|(&x, &y)| Tap::new(x, y, h, w)));
}

struct BilinearSample;

impl<T: Scalar> Backward<T> for BilinearSample {
    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (n, c, h, w, kl, ho, wo) = check_coords(inputs[0], inputs[1]).expect("checked in forward");
        let (img, coords) = (inputs[0].data(), inputs[1].data());
        let plane_in = h * w;
        let plane_out = ho * wo;
        let mut dimg = needs[0].then(|| vec![T::zero(); img.len()]);
        let mut dcoords = needs[1].then(|| vec![T::zero(); coords.len()]);
        let mut taps = Vec::with_capacity(plane_out);
        for b in 0..n {
            for k in 0..kl {
                taps_for(coords, b, k, kl, plane_out, h, w, &mut taps);
                for ch in 0..c {
                    let src = &img[(b * c + ch) * plane_in..][..plane_in];
                    let g = &grad[((b * c + ch) * kl + k) * plane_out..][..plane_out];
                    if let Some(d) = dimg.as_mut() {
                        let dsrc = &mut d[(b * c + ch) * plane_in..][..plane_in];
                        for (tap, &gv) in taps.iter().zip(g) {
                            tap.scatter(dsrc, gv);
                        }
                    }
                    if let Some(d) = dcoords.as_mut() {
                        for (p, (tap, &gv)) in taps.iter().zip(g).enumerate() {
                            let (gx, gy) = tap.coord_grad(src);
                            d[((b * 2) * kl + k) * plane_out + p] += gv * gx;
                            d[((b * 2 + 1) * kl + k) * plane_out + p] += gv * gy;
                        }
                    }
                }
            }
        }
        vec![dimg, dcoords]
    }
}

struct SnakeConvOp {
    c_out: usize,
}

impl<T: Scalar> Backward<T> for SnakeConvOp {
    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (n, c, h, w, kl, ho, wo) = check_coords(inputs[0], inputs[1]).expect("checked in forward");
        let (img, coords, weight) = (inputs[0].data(), inputs[1].data(), inputs[2].data());
        let o = self.c_out;
        let plane_in = h * w;
        let p = ho * wo;
        let mut dimg = needs[0].then(|| vec![T::zero(); img.len()]);
        let mut dcoords = needs[1].then(|| vec![T::zero(); coords.len()]);
        let mut dweight = needs[2].then(|| vec![T::zero(); weight.len()]);
        let need_sampled_grad = dimg.is_some() || dcoords.is_some();
        let mut taps = Vec::with_capacity(p);
        let mut sampled = vec![T::zero(); c * p];
        let mut dsampled = vec![T::zero(); if need_sampled_grad { c * p } else { 0 }];
        for b in 0..n {
            let gout = &grad[b * o * p..(b + 1) * o * p];
            let src_n = &img[b * c * plane_in..(b + 1) * c * plane_in];
            for k in 0..kl {
                taps_for(coords, b, k, kl, p, h, w, &mut taps);
                if let Some(dw) = dweight.as_mut() {
                    for ch in 0..c {
                        let src = &src_n[ch * plane_in..(ch + 1) * plane_in];
                        for (s, tap) in sampled[ch * p..(ch + 1) * p].iter_mut().zip(&taps) {
                            *s = tap.value(src);
                        }
                    }
                    // dW[o, c, k] += sum_p gout[o, p] * sampled[c, p]
                    T::gemm(o, p, c, T::one(), gout, p, 1, &sampled, 1, p, T::one(), &mut dw[k..], c * kl, kl);
                }
                if !need_sampled_grad {
                    continue;
                }
                // dS[c, p] = sum_o W[o, c, k] * gout[o, p]
                T::gemm(c, o, p, T::one(), &weight[k..], kl, c * kl, gout, p, 1, T::zero(), &mut dsampled, p, 1);
                for ch in 0..c {
                    let ds = &dsampled[ch * p..(ch + 1) * p];
                    if let Some(d) = dimg.as_mut() {
                        let dsrc = &mut d[(b * c + ch) * plane_in..][..plane_in];
                        for (tap, &g) in taps.iter().zip(ds) {
                            tap.scatter(dsrc, g);
                        }
                    }
                    if let Some(d) = dcoords.as_mut() {
                        let src = &src_n[ch * plane_in..(ch + 1) * plane_in];
                        let (dx, rest) = d[(b * 2 * kl + k) * p..].split_at_mut(kl * p);
                        let dy = &mut rest[..p];
                        for (q, (tap, &g)) in taps.iter().zip(ds).enumerate() {
                            let (gx, gy) = tap.coord_grad(src);
                            dx[q] += g * gx;
                            dy[q] += g * gy;
                        }
                    }
                }
            }
        }
        let db = needs.get(3).copied().unwrap_or(false).then(|| {
            let mut db = vec![T::zero(); o];
            for b in 0..n {
                for (oi, d) in db.iter_mut().enumerate() {
                    *d += grad[(b * o + oi) * p..][..p].iter().copied().sum::<T>();
                }
            }
            db
        });
        let mut out = vec![dimg, dcoords, dweight];
        if inputs.len() == 4 {
            out.push(db);
        }
        out
    }
}

impl<T: Scalar> Tape<T> {
    /// Samples `input: [N, C, H, W]` at `coords: [N, 2, K, H', W']`
    /// (x then y, in pixels); output is `[N, C, K, H', W']`.
    pub fn bilinear_sample(&mut self, input: Var, coords: Var) -> Result<Var> {
        let (n, c, h, w, kl, ho, wo) = check_coords(self.value(input), self.value(coords))?;
        let img = self.value(input).data();
        let cv = self.value(coords).data();
        let plane_in = h * w;
        let plane_out = ho * wo;
        let mut out = vec![T::zero(); n * c * kl * plane_out];
        let mut taps = Vec::with_capacity(plane_out);
        for b in 0..n {
            for k in 0..kl {
                taps_for(cv, b, k, kl, plane_out, h, w, &mut taps);
                for ch in 0..c {
                    let src = &img[(b * c + ch) * plane_in..][..plane_in];
                    let dst = &mut out[((b * c + ch) * kl + k) * plane_out..][..plane_out];
                    for (d, tap) in dst.iter_mut().zip(&taps) {
                        *d = tap.value(src);
                    }
                }
            }
        }
        let value = Tensor::new(&[n, c, kl, ho, wo], out)?;
        Ok(self.push(value, &[input, coords], BilinearSample))
    }

    /// Snake convolution: `out[o, p] = bias[o] + sum_{c,k} weight[o, c, k] *
    /// sample(input[c], coords[k, p])`.
    ///
    /// `weight` is `[C_out, C_in, K]`. Equivalent to `bilinear_sample`
    /// followed by a pointwise convolution over the `C_in * K` samples, but
    /// never materializes the sampled tensor.
    pub fn snake_conv(&mut self, input: Var, coords: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let (n, c, h, w, kl, ho, wo) = check_coords(self.value(input), self.value(coords))?;
        let o = match *self.value(weight).shape() {
            [o, wc, wk] if wc == c && wk == kl => o,
            ref s => {
                return dim_err(format!(
                    "snake weight {s:?} does not match {c} input channels and kernel length {kl}"
                ))
            }
        };
        if let Some(b) = bias {
            if self.value(b).shape() != [o] {
                return dim_err("snake bias length differs from output channels");
            }
        }
        let img = self.value(input).data();
        let cv = self.value(coords).data();
        let wv = self.value(weight).data();
        let plane_in = h * w;
        let p = ho * wo;
        let mut out = vec![T::zero(); n * o * p];
        if let Some(b) = bias {
            let bv = self.value(b).data();
            for b in 0..n {
                for (oi, &bo) in bv.iter().enumerate() {
                    out[(b * o + oi) * p..][..p].fill(bo);
                }
            }
        }
        let mut taps = Vec::with_capacity(p);
        let mut sampled = vec![T::zero(); c * p];
        for b in 0..n {
            let src_n = &img[b * c * plane_in..(b + 1) * c * plane_in];
            for k in 0..kl {
                taps_for(cv, b, k, kl, p, h, w, &mut taps);
                for ch in 0..c {
                    let src = &src_n[ch * plane_in..(ch + 1) * plane_in];
                    for (s, tap) in sampled[ch * p..(ch + 1) * p].iter_mut().zip(&taps) {
                        *s = tap.value(src);
                    }
                }
                T::gemm(o, c, p, T::one(), &wv[k..], c * kl, kl, &sampled, p, 1, T::one(), &mut out[b * o * p..(b + 1) * o * p], p, 1);
            }
        }
        let value = Tensor::new(&[n, o, ho, wo], out)?;
        let rule = SnakeConvOp { c_out: o };
        Ok(match bias {
            Some(b) => self.push(value, &[input, coords, weight, b], rule),
            None => self.push(value, &[input, coords, weight], rule),
        })
    }
}

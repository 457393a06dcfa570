//! Stride-1 2-D convolution and the 2x2/stride-2 transposed convolution.
//!
//! Both lower to GEMM: the convolution through an explicit column buffer
//! (`im2col`), rebuilt in the backward pass instead of being kept alive.

use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::tape::{Backward, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ph: usize,
    pw: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.ph == 0 && self.pw == 0
    }

    /// Output columns `ox` whose input column `ox + j - pw` is in range.
    fn valid_cols(&self, j: usize) -> (usize, usize) {
        let lo = self.pw.saturating_sub(j);
        let hi = (self.w + self.pw).saturating_sub(j).min(self.wo);
        (lo, hi.max(lo))
    }
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let plane = g.out_plane();
    for c in 0..g.c_in {
        let src = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let r = (c * g.kh + i) * g.kw + j;
                let row = &mut cols[r * plane..(r + 1) * plane];
                let (lo, hi) = g.valid_cols(j);
                for oy in 0..g.ho {
                    let dst = &mut row[oy * g.wo..(oy + 1) * g.wo];
                    let iy = oy + i;
                    if iy < g.ph || iy - g.ph >= g.h {
                        dst.fill(T::zero());
                        continue;
                    }
                    let iy = iy - g.ph;
                    dst[..lo].fill(T::zero());
                    dst[hi..].fill(T::zero());
                    if hi > lo {
                        let ix0 = lo + j - g.pw;
                        dst[lo..hi].copy_from_slice(&src[iy * g.w + ix0..iy * g.w + ix0 + (hi - lo)]);
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let plane = g.out_plane();
    for c in 0..g.c_in {
        let dst = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let r = (c * g.kh + i) * g.kw + j;
                let row = &cols[r * plane..(r + 1) * plane];
                let (lo, hi) = g.valid_cols(j);
                if hi <= lo {
                    continue;
                }
                for oy in 0..g.ho {
                    let iy = oy + i;
                    if iy < g.ph || iy - g.ph >= g.h {
                        continue;
                    }
                    let iy = iy - g.ph;
                    let ix0 = lo + j - g.pw;
                    let d = &mut dst[iy * g.w + ix0..iy * g.w + ix0 + (hi - lo)];
                    for (a, &b) in d.iter_mut().zip(&row[oy * g.wo + lo..oy * g.wo + hi]) {
                        *a += b;
                    }
                }
            }
        }
    }
}

struct Conv2d {
    geom: ConvGeom,
    batch: usize,
    c_out: usize,
    has_bias: bool,
}

impl<T: Scalar> Backward<T> for Conv2d {
    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let g = &self.geom;
        let (x, kernel) = (inputs[0].data(), inputs[1].data());
        let rows = g.rows();
        let plane = g.out_plane();
        let in_plane = g.c_in * g.h * g.w;
        let mut dx = needs[0].then(|| vec![T::zero(); x.len()]);
        let mut dk = needs[1].then(|| vec![T::zero(); kernel.len()]);
        let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); rows * plane] };
        let mut dcols = if dx.is_some() && !g.is_pointwise() {
            vec![T::zero(); rows * plane]
        } else {
            Vec::new()
        };
        for n in 0..self.batch {
            let gout = &grad[n * self.c_out * plane..(n + 1) * self.c_out * plane];
            let xn = &x[n * in_plane..(n + 1) * in_plane];
            if let Some(dk) = dk.as_mut() {
                let colv: &[T] = if g.is_pointwise() {
                    xn
                } else {
                    im2col(xn, g, &mut cols);
                    &cols
                };
                // dK[o, r] += sum_p gout[o, p] * cols[r, p]
                T::gemm(self.c_out, plane, rows, T::one(), gout, plane, 1, colv, 1, plane, T::one(), dk, rows, 1);
            }
            if let Some(dx) = dx.as_mut() {
                let dxn = &mut dx[n * in_plane..(n + 1) * in_plane];
                if g.is_pointwise() {
                    T::gemm(rows, self.c_out, plane, T::one(), kernel, 1, rows, gout, plane, 1, T::one(), dxn, plane, 1);
                } else {
                    T::gemm(rows, self.c_out, plane, T::one(), kernel, 1, rows, gout, plane, 1, T::zero(), &mut dcols, plane, 1);
                    col2im(&dcols, g, dxn);
                }
            }
        }
        let db = (self.has_bias && needs.get(2).copied().unwrap_or(false)).then(|| {
            let mut db = vec![T::zero(); self.c_out];
            for n in 0..self.batch {
                for (o, d) in db.iter_mut().enumerate() {
                    let start = (n * self.c_out + o) * plane;
                    *d += grad[start..start + plane].iter().copied().sum::<T>();
                }
            }
            db
        });
        let mut out = vec![dx, dk];
        if self.has_bias {
            out.push(db);
        }
        out
    }
}

struct ConvTranspose2x2 {
    batch: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    has_bias: bool,
}

impl ConvTranspose2x2 {
    /// Output offset of tap `(o, a, b)` at input pixel `(i, j)`.
    #[inline]
    fn out_index(&self, o: usize, a: usize, b: usize, i: usize, j: usize) -> usize {
        let wo = 2 * self.w;
        (o * 2 * self.h + 2 * i + a) * wo + 2 * j + b
    }
}

impl<T: Scalar> Backward<T> for ConvTranspose2x2 {
    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (x, kernel) = (inputs[0].data(), inputs[1].data());
        let plane = self.h * self.w;
        let taps = self.c_out * 4;
        let out_n = self.c_out * 4 * plane;
        let mut dx = needs[0].then(|| vec![T::zero(); x.len()]);
        let mut dk = needs[1].then(|| vec![T::zero(); kernel.len()]);
        let mut gcols = vec![T::zero(); taps * plane];
        for n in 0..self.batch {
            let gout = &grad[n * out_n..(n + 1) * out_n];
            for o in 0..self.c_out {
                for a in 0..2 {
                    for b in 0..2 {
                        let row = &mut gcols[((o * 2 + a) * 2 + b) * plane..][..plane];
                        for i in 0..self.h {
                            for j in 0..self.w {
                                row[i * self.w + j] = gout[self.out_index(o, a, b, i, j)];
                            }
                        }
                    }
                }
            }
            let xn = &x[n * self.c_in * plane..(n + 1) * self.c_in * plane];
            if let Some(dx) = dx.as_mut() {
                let dxn = &mut dx[n * self.c_in * plane..(n + 1) * self.c_in * plane];
                T::gemm(self.c_in, taps, plane, T::one(), kernel, taps, 1, &gcols, plane, 1, T::one(), dxn, plane, 1);
            }
            if let Some(dk) = dk.as_mut() {
                T::gemm(self.c_in, plane, taps, T::one(), xn, plane, 1, &gcols, 1, plane, T::one(), dk, taps, 1);
            }
        }
        let db = (self.has_bias && needs.get(2).copied().unwrap_or(false)).then(|| {
            let mut db = vec![T::zero(); self.c_out];
            for n in 0..self.batch {
                for (o, d) in db.iter_mut().enumerate() {
                    let start = (n * self.c_out + o) * 4 * plane;
                    *d += grad[start..start + 4 * plane].iter().copied().sum::<T>();
                }
            }
            db
        });
        let mut out = vec![dx, dk];
        if self.has_bias {
            out.push(db);
        }
        out
    }
}

impl<T: Scalar> Tape<T> {
    /// Stride-1 convolution of `x: [N, C_in, H, W]` with `kernel: [C_out, C_in, kH, kW]`
    /// and zero padding `(ph, pw)`.
    ///
    /// Output is `[N, C_out, H + 2ph - kH + 1, W + 2pw - kW + 1]`.
    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Option<Var>, padding: (usize, usize)) -> Result<Var> {
        let (n, c_in, h, w) = self.value(x).dims4()?;
        let (c_out, kc, kh, kw) = self.value(kernel).dims4()?;
        if kc != c_in {
            return dim_err(format!(
                "conv2d: input has {c_in} channels but kernel expects {kc}"
            ));
        }
        if let Some(b) = bias {
            if self.value(b).shape() != [c_out] {
                return dim_err(format!(
                    "conv2d: bias shape {:?} does not match {c_out} output channels",
                    self.value(b).shape()
                ));
            }
        }
        let (ph, pw) = padding;
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return dim_err(format!(
                "conv2d: kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * ph,
                w + 2 * pw
            ));
        }
        let geom = ConvGeom {
            c_in,
            h,
            w,
            kh,
            kw,
            ph,
            pw,
            ho: h + 2 * ph - kh + 1,
            wo: w + 2 * pw - kw + 1,
        };
        let rows = geom.rows();
        let plane = geom.out_plane();
        let mut out = vec![T::zero(); n * c_out * plane];
        {
            let xv = self.value(x).data();
            let kv = self.value(kernel).data();
            let bv = bias.map(|b| self.value(b).data());
            let mut cols = if geom.is_pointwise() { Vec::new() } else { vec![T::zero(); rows * plane] };
            for b in 0..n {
                let xn = &xv[b * c_in * h * w..(b + 1) * c_in * h * w];
                let colv: &[T] = if geom.is_pointwise() {
                    xn
                } else {
                    im2col(xn, &geom, &mut cols);
                    &cols
                };
                let on = &mut out[b * c_out * plane..(b + 1) * c_out * plane];
                if let Some(bv) = bv {
                    for (o, &bo) in bv.iter().enumerate() {
                        on[o * plane..(o + 1) * plane].fill(bo);
                    }
                }
                T::gemm(c_out, rows, plane, T::one(), kv, rows, 1, colv, plane, 1, T::one(), on, plane, 1);
            }
        }
        let value = Tensor::new(&[n, c_out, geom.ho, geom.wo], out)?;
        let rule = Conv2d {
            geom,
            batch: n,
            c_out,
            has_bias: bias.is_some(),
        };
        Ok(match bias {
            Some(b) => self.push(value, &[x, kernel, b], rule),
            None => self.push(value, &[x, kernel], rule),
        })
    }

    /// Transposed convolution with a 2x2 kernel and stride 2.
    ///
    /// `kernel` is laid out `[C_in, C_out, 2, 2]`; output is `[N, C_out, 2H, 2W]`.
    pub fn conv_transpose2x2(&mut self, x: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        let (n, c_in, h, w) = self.value(x).dims4()?;
        let (kc, c_out, kh, kw) = self.value(kernel).dims4()?;
        if kc != c_in || kh != 2 || kw != 2 {
            return dim_err(format!(
                "conv_transpose2x2: kernel {:?} incompatible with {c_in} input channels",
                self.value(kernel).shape()
            ));
        }
        if let Some(b) = bias {
            if self.value(b).shape() != [c_out] {
                return dim_err("conv_transpose2x2: bias length differs from output channels");
            }
        }
        let rule = ConvTranspose2x2 {
            batch: n,
            c_in,
            c_out,
            h,
            w,
            has_bias: bias.is_some(),
        };
        let plane = h * w;
        let taps = c_out * 4;
        let mut out = vec![T::zero(); n * taps * plane];
        {
            let xv = self.value(x).data();
            let kv = self.value(kernel).data();
            let bv = bias.map(|b| self.value(b).data());
            let mut cols = vec![T::zero(); taps * plane];
            for b in 0..n {
                let xn = &xv[b * c_in * plane..(b + 1) * c_in * plane];
                // cols[(o,a,b), p] = sum_c K[c, (o,a,b)] * x[c, p]
                T::gemm(taps, c_in, plane, T::one(), kv, 1, taps, xn, plane, 1, T::zero(), &mut cols, plane, 1);
                let on = &mut out[b * taps * plane..(b + 1) * taps * plane];
                for o in 0..c_out {
                    let bias_o = bv.map_or(T::zero(), |bv| bv[o]);
                    for a in 0..2 {
                        for bb in 0..2 {
                            let row = &cols[((o * 2 + a) * 2 + bb) * plane..][..plane];
                            for i in 0..h {
                                for j in 0..w {
                                    on[rule.out_index(o, a, bb, i, j)] = row[i * w + j] + bias_o;
                                }
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::new(&[n, c_out, 2 * h, 2 * w], out)?;
        Ok(match bias {
            Some(b) => self.push(value, &[x, kernel, b], rule),
            None => self.push(value, &[x, kernel], rule),
        })
    }
}

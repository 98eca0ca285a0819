//! 2-D cross-correlation via im2col + GEMM.

use super::scalar::{gemm, MatRef};
use super::{Scalar, Tensor4};
use crate::error::{Error, Result};

/// Geometry of a bias-free convolution. Weights are laid out
/// `out_c × in_c × kh × kw`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn square(in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize) -> Self {
        Conv2d {
            in_c,
            out_c,
            kh: k,
            kw: k,
            stride,
            pad,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.out_c * self.in_c * self.kh * self.kw
    }

    fn col_rows(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    pub fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.stride == 0 {
            return Err(Error::Shape("convolution stride must be >= 1".into()));
        }
        let (ph, pw) = (h + 2 * self.pad, w + 2 * self.pad);
        if ph < self.kh || pw < self.kw {
            return Err(Error::Shape(format!(
                "kernel {}x{} larger than padded input {ph}x{pw}",
                self.kh, self.kw
            )));
        }
        Ok(((ph - self.kh) / self.stride + 1, (pw - self.kw) / self.stride + 1))
    }

    fn check<T: Scalar>(&self, x: &Tensor4<T>, weight: &[T]) -> Result<(usize, usize)> {
        if x.c != self.in_c {
            return Err(Error::Shape(format!(
                "convolution expects {} input channels, got {}",
                self.in_c, x.c
            )));
        }
        if weight.len() != self.weight_len() {
            return Err(Error::Shape(format!(
                "convolution weight has {} values, expected {}",
                weight.len(),
                self.weight_len()
            )));
        }
        self.out_hw(x.h, x.w)
    }

    /// Unfold one image (`in_c × h × w`) into `cols` (`K × oh·ow`).
    fn im2col<T: Scalar>(&self, img: &[T], h: usize, w: usize, oh: usize, ow: usize, cols: &mut [T]) {
        let p = oh * ow;
        let mut row = 0;
        for c in 0..self.in_c {
            let plane = &img[c * h * w..(c + 1) * h * w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        let out = &mut dst[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= h as isize {
                            out.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, o) in out.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            *o = if ix < 0 || ix >= w as isize {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Fold `cols` back into an image gradient, accumulating overlaps.
    fn col2im<T: Scalar>(&self, cols: &[T], h: usize, w: usize, oh: usize, ow: usize, img: &mut [T]) {
        let p = oh * ow;
        let mut row = 0;
        for c in 0..self.in_c {
            let plane = &mut img[c * h * w..(c + 1) * h * w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, &g) in src[oy * ow..(oy + 1) * ow].iter().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += g;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    pub fn forward<T: Scalar>(&self, x: &Tensor4<T>, weight: &[T]) -> Result<Tensor4<T>> {
        let (oh, ow) = self.check(x, weight)?;
        let p = oh * ow;
        let k = self.col_rows();
        let mut y = Tensor4::zeros(x.n, self.out_c, oh, ow);
        let wmat = MatRef::new(weight, self.out_c, k);
        let mut cols = if self.is_pointwise() {
            Vec::new()
        } else {
            vec![T::zero(); k * p]
        };
        for i in 0..x.n {
            let out = &mut y.data[i * self.out_c * p..(i + 1) * self.out_c * p];
            if self.is_pointwise() {
                gemm(wmat, MatRef::new(x.item(i), k, p), T::zero(), out);
            } else {
                self.im2col(x.item(i), x.h, x.w, oh, ow, &mut cols);
                gemm(wmat, MatRef::new(&cols, k, p), T::zero(), out);
            }
        }
        Ok(y)
    }

    /// Accumulate the weight gradient into `dweight` and, when requested,
    /// return the input gradient.
    pub fn backward<T: Scalar>(
        &self,
        x: &Tensor4<T>,
        weight: &[T],
        dy: &Tensor4<T>,
        dweight: &mut [T],
        need_dx: bool,
    ) -> Result<Option<Tensor4<T>>> {
        let (oh, ow) = self.check(x, weight)?;
        if dy.shape() != [x.n, self.out_c, oh, ow] {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match convolution output {:?}",
                dy.shape(),
                [x.n, self.out_c, oh, ow]
            )));
        }
        if dweight.len() != weight.len() {
            return Err(Error::Shape("weight gradient buffer size mismatch".into()));
        }
        let p = oh * ow;
        let k = self.col_rows();
        let wmat = MatRef::new(weight, self.out_c, k);
        let pointwise = self.is_pointwise();
        let mut cols = if pointwise { Vec::new() } else { vec![T::zero(); k * p] };
        let mut dcols = vec![T::zero(); k * p];
        let mut dx = need_dx.then(|| Tensor4::zeros(x.n, x.c, x.h, x.w));
        for i in 0..x.n {
            let g = MatRef::new(dy.item(i), self.out_c, p);
            let cols_i = if pointwise {
                x.item(i)
            } else {
                self.im2col(x.item(i), x.h, x.w, oh, ow, &mut cols);
                &cols[..]
            };
            gemm(g, MatRef::new(cols_i, k, p).t(), T::one(), dweight);
            if let Some(dx) = dx.as_mut() {
                let len = dx.item_len();
                let dst = &mut dx.data[i * len..(i + 1) * len];
                if pointwise {
                    gemm(wmat.t(), g, T::zero(), dst);
                } else {
                    gemm(wmat.t(), g, T::zero(), &mut dcols);
                    self.col2im(&dcols, x.h, x.w, oh, ow, dst);
                }
            }
        }
        Ok(dx)
    }
}

/// Plain cross-correlation, for callers that do not keep a [`Conv2d`].
pub fn conv2d<T: Scalar>(
    x: &Tensor4<T>,
    weight: &[T],
    out_c: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Result<Tensor4<T>> {
    Conv2d {
        in_c: x.c,
        out_c,
        kh,
        kw,
        stride,
        pad,
    }
    .forward(x, weight)
}

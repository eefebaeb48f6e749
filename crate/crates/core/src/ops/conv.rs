//! Dilated, strided, zero-padded 2-D cross-correlation via im2col.

use alloc::format;
use alloc::vec;

use super::gemm::{gemm, MatRef};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Stride, zero padding and dilation shared by both spatial axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvGeometry {
    pub const fn new(stride: usize, padding: usize, dilation: usize) -> Self {
        ConvGeometry { stride, padding, dilation }
    }

    /// Stride 1, "same" padding for an odd `kernel` at the given dilation.
    pub const fn same(kernel: usize, dilation: usize) -> Self {
        ConvGeometry { stride: 1, padding: (kernel - 1) / 2 * dilation, dilation }
    }

    pub const fn effective_extent(&self, kernel: usize) -> usize {
        (kernel - 1) * self.dilation + 1
    }

    /// Output length along one axis, or `None` when the kernel does not fit.
    pub fn output_len(&self, input: usize, kernel: usize) -> Option<usize> {
        let padded = input + 2 * self.padding;
        let extent = self.effective_extent(kernel);
        if kernel == 0 || extent > padded {
            return None;
        }
        Some((padded - extent) / self.stride + 1)
    }
}

/// Kernel `(out_ch, in_ch, kH, kW)`, bias with `out_ch` entries, and geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dParams {
    pub kernel: Tensor,
    pub bias: Tensor,
    pub geometry: ConvGeometry,
}

/// Checks every shape precondition and returns the output shape.
pub fn conv2d_output_shape(input: Shape, kernel: Shape, bias_len: Option<usize>, geom: ConvGeometry) -> Result<Shape> {
    const OP: &str = "conv2d";
    if geom.stride == 0 || geom.dilation == 0 {
        return Err(Error::InvalidArgument {
            op: OP,
            reason: format!("stride and dilation must be positive (got {} and {})", geom.stride, geom.dilation),
        });
    }
    if input.c != kernel.c {
        return Err(Error::ShapeMismatch { op: OP, dim: "input channels", expected: kernel.c, found: input.c });
    }
    if let Some(len) = bias_len {
        if len != kernel.n {
            return Err(Error::ShapeMismatch { op: OP, dim: "bias length", expected: kernel.n, found: len });
        }
    }
    let ho = geom.output_len(input.h, kernel.h).ok_or_else(|| Error::InvalidShape {
        op: OP,
        shape: input,
        reason: format!(
            "height: effective kernel extent {} exceeds padded input height {}",
            geom.effective_extent(kernel.h),
            input.h + 2 * geom.padding
        ),
    })?;
    let wo = geom.output_len(input.w, kernel.w).ok_or_else(|| Error::InvalidShape {
        op: OP,
        shape: input,
        reason: format!(
            "width: effective kernel extent {} exceeds padded input width {}",
            geom.effective_extent(kernel.w),
            input.w + 2 * geom.padding
        ),
    })?;
    Ok(Shape::new(input.n, kernel.n, ho, wo))
}

struct Layout {
    input: Shape,
    kernel: Shape,
    out: Shape,
    geom: ConvGeometry,
}

impl Layout {
    fn rows(&self) -> usize {
        self.kernel.c * self.kernel.h * self.kernel.w
    }

    fn cols(&self) -> usize {
        self.out.h * self.out.w
    }

    /// Source coordinate along one axis, if it lands inside the input.
    #[inline]
    fn source(&self, out_pos: usize, tap: usize, len: usize) -> Option<usize> {
        let pos = (out_pos * self.geom.stride + tap * self.geom.dilation) as isize - self.geom.padding as isize;
        if pos >= 0 && (pos as usize) < len {
            Some(pos as usize)
        } else {
            None
        }
    }

    fn im2col(&self, image: &[f64], cols: &mut [f64]) {
        let (kh, kw) = (self.kernel.h, self.kernel.w);
        let (ho, wo) = (self.out.h, self.out.w);
        let (h, w) = (self.input.h, self.input.w);
        let p = self.cols();
        for ci in 0..self.kernel.c {
            let plane = &image[ci * h * w..(ci + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = (ci * kh + ky) * kw + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..ho {
                        let line = &mut dst[oy * wo..(oy + 1) * wo];
                        match self.source(oy, ky, h) {
                            None => line.iter_mut().for_each(|v| *v = 0.0),
                            Some(sy) => {
                                let src = &plane[sy * w..(sy + 1) * w];
                                for (ox, v) in line.iter_mut().enumerate() {
                                    *v = match self.source(ox, kx, w) {
                                        Some(sx) => src[sx],
                                        None => 0.0,
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im_add(&self, cols: &[f64], image: &mut [f64]) {
        let (kh, kw) = (self.kernel.h, self.kernel.w);
        let (ho, wo) = (self.out.h, self.out.w);
        let (h, w) = (self.input.h, self.input.w);
        let p = self.cols();
        for ci in 0..self.kernel.c {
            let plane = &mut image[ci * h * w..(ci + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = (ci * kh + ky) * kw + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..ho {
                        let Some(sy) = self.source(oy, ky, h) else { continue };
                        let line = &src[oy * wo..(oy + 1) * wo];
                        let dst = &mut plane[sy * w..(sy + 1) * w];
                        for (ox, g) in line.iter().enumerate() {
                            if let Some(sx) = self.source(ox, kx, w) {
                                dst[sx] += g;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Forward convolution; `bias` may be omitted.
pub fn conv2d_forward(input: &Tensor, kernel: &Tensor, bias: Option<&Tensor>, geom: ConvGeometry) -> Result<Tensor> {
    let out_shape = conv2d_output_shape(input.shape(), kernel.shape(), bias.map(Tensor::len), geom)?;
    let layout = Layout { input: input.shape(), kernel: kernel.shape(), out: out_shape, geom };
    let (k, p, cout) = (layout.rows(), layout.cols(), out_shape.c);
    let in_item = input.shape().c * input.shape().plane();
    let out_item = cout * p;
    let mut out = Tensor::zeros(out_shape);
    let mut cols = vec![0.0; k * p];
    for n in 0..input.shape().n {
        layout.im2col(&input.data()[n * in_item..(n + 1) * in_item], &mut cols);
        let dst = &mut out.data_mut()[n * out_item..(n + 1) * out_item];
        gemm(cout, k, p, MatRef::row_major(kernel.data(), k), MatRef::row_major(&cols, p), 0.0, dst);
        if let Some(bias) = bias {
            for (o, b) in bias.data().iter().enumerate() {
                dst[o * p..(o + 1) * p].iter_mut().for_each(|v| *v += b);
            }
        }
    }
    Ok(out)
}

/// Gradients of a convolution with respect to its input, kernel and bias.
pub struct Conv2dGrads {
    pub input: Option<Tensor>,
    pub kernel: Option<Tensor>,
    pub bias: Option<Tensor>,
}

pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    geom: ConvGeometry,
    grad_out: &Tensor,
    want: [bool; 3],
) -> Conv2dGrads {
    let layout = Layout { input: input.shape(), kernel: kernel.shape(), out: grad_out.shape(), geom };
    let (k, p, cout) = (layout.rows(), layout.cols(), grad_out.shape().c);
    let in_item = input.shape().c * input.shape().plane();
    let out_item = cout * p;
    let mut d_input = want[0].then(|| Tensor::zeros(input.shape()));
    let mut d_kernel = want[1].then(|| Tensor::zeros(kernel.shape()));
    let mut d_bias = want[2].then(|| Tensor::zeros(Shape::new(1, cout, 1, 1)));
    let mut cols = vec![0.0; k * p];
    let mut d_cols = vec![0.0; if want[0] { k * p } else { 0 }];
    for n in 0..input.shape().n {
        let g = &grad_out.data()[n * out_item..(n + 1) * out_item];
        if let Some(db) = d_bias.as_mut() {
            for (o, v) in db.data_mut().iter_mut().enumerate() {
                *v += g[o * p..(o + 1) * p].iter().sum::<f64>();
            }
        }
        if let Some(dk) = d_kernel.as_mut() {
            layout.im2col(&input.data()[n * in_item..(n + 1) * in_item], &mut cols);
            gemm(cout, p, k, MatRef::row_major(g, p), MatRef::transposed(&cols, p), 1.0, dk.data_mut());
        }
        if let Some(di) = d_input.as_mut() {
            gemm(k, cout, p, MatRef::transposed(kernel.data(), k), MatRef::row_major(g, p), 0.0, &mut d_cols);
            layout.col2im_add(&d_cols, &mut di.data_mut()[n * in_item..(n + 1) * in_item]);
        }
    }
    Conv2dGrads { input: d_input, kernel: d_kernel, bias: d_bias }
}

/// `conv2d` on plain tensors, for code paths that need no gradient.
pub fn conv2d(input: &Tensor, params: &Conv2dParams) -> Result<Tensor> {
    conv2d_forward(input, &params.kernel, Some(&params.bias), params.geometry)
}

/// Spreads a kernel's taps `dilation` apart with zeros in between.
pub fn zero_interleave(kernel: &Tensor, dilation: usize) -> Tensor {
    let s = kernel.shape();
    let ext_h = (s.h - 1) * dilation + 1;
    let ext_w = (s.w - 1) * dilation + 1;
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, ext_h, ext_w));
    for o in 0..s.n {
        for i in 0..s.c {
            for y in 0..s.h {
                for x in 0..s.w {
                    *out.at_mut(o, i, y * dilation, x * dilation) = kernel.at(o, i, y, x);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_len_formula() {
        let g = ConvGeometry::new(1, 2, 2);
        assert_eq!(g.output_len(5, 3), Some(5));
        let g = ConvGeometry::new(2, 1, 1);
        assert_eq!(g.output_len(64, 3), Some(32));
        assert_eq!(ConvGeometry::new(1, 0, 3).output_len(7, 3), Some(1));
        assert_eq!(ConvGeometry::new(1, 0, 3).output_len(6, 3), None);
    }

    #[test]
    fn channel_mismatch_names_dimension() {
        let x = Tensor::zeros(Shape::new(1, 2, 4, 4));
        let k = Tensor::zeros(Shape::new(1, 3, 3, 3));
        let err = conv2d_forward(&x, &k, None, ConvGeometry::same(3, 1)).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { dim: "input channels", expected: 3, found: 2, .. }));
        let msg = alloc::string::ToString::to_string(&err);
        assert!(msg.contains("input channels"));
    }

    #[test]
    fn oversized_kernel_rejected() {
        let x = Tensor::zeros(Shape::new(1, 1, 3, 3));
        let k = Tensor::zeros(Shape::new(1, 1, 3, 3));
        let err = conv2d_forward(&x, &k, None, ConvGeometry::new(1, 0, 2)).unwrap_err();
        assert!(matches!(err, Error::InvalidShape { .. }));
    }

    #[test]
    fn bias_length_checked() {
        let x = Tensor::zeros(Shape::new(1, 1, 3, 3));
        let k = Tensor::zeros(Shape::new(2, 1, 1, 1));
        let b = Tensor::zeros(Shape::new(1, 3, 1, 1));
        assert!(conv2d_forward(&x, &k, Some(&b), ConvGeometry::new(1, 0, 1)).is_err());
    }
}

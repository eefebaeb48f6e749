//! Forward/backward kernels on plain tensors. The tape in [`crate::graph`]
//! wires these together; they are also usable directly when no gradient is
//! needed.

mod conv;
pub(crate) mod gemm;
mod pool;
mod resize;

use alloc::vec::Vec;

pub use conv::{
    conv2d, conv2d_backward, conv2d_forward, conv2d_output_shape, zero_interleave, Conv2dGrads, Conv2dParams,
    ConvGeometry,
};
pub use pool::{avg_pool_backward, avg_pool_forward, PoolGeometry};
pub use resize::{resize_backward, resize_forward};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Logistic function, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

pub fn bilinear_resize(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    resize_forward(input, out_h, out_w)
}

pub fn avg_pool(input: &Tensor, kernel: usize, stride: usize, padding: usize) -> Result<Tensor> {
    avg_pool_forward(input, PoolGeometry { kernel, stride, padding })
}

/// Output shape of a channel concatenation, checking batch and spatial agreement.
pub fn concat_shape(shapes: &[Shape]) -> Result<Shape> {
    const OP: &str = "concat_channels";
    let first = *shapes.first().ok_or_else(|| Error::InvalidArgument { op: OP, reason: "no inputs".into() })?;
    let mut c = 0;
    for s in shapes {
        for (dim, expected, found) in [("batch", first.n, s.n), ("height", first.h, s.h), ("width", first.w, s.w)] {
            if expected != found {
                return Err(Error::ShapeMismatch { op: OP, dim, expected, found });
            }
        }
        c += s.c;
    }
    Ok(first.with_channels(c))
}

pub fn concat_channels(inputs: &[&Tensor]) -> Result<Tensor> {
    let shapes: Vec<Shape> = inputs.iter().map(|t| t.shape()).collect();
    let out_shape = concat_shape(&shapes)?;
    let mut data = Vec::with_capacity(out_shape.numel());
    for n in 0..out_shape.n {
        for t in inputs {
            let len = t.shape().c * t.shape().plane();
            data.extend_from_slice(&t.data()[n * len..(n + 1) * len]);
        }
    }
    Tensor::from_vec(out_shape, data)
}

/// Splits a concatenation gradient back into per-input pieces.
pub fn split_channels(grad: &Tensor, shapes: &[Shape]) -> Vec<Tensor> {
    let plane = grad.shape().plane();
    let total_c = grad.shape().c;
    let mut offset = 0;
    shapes
        .iter()
        .map(|s| {
            let mut data = Vec::with_capacity(s.numel());
            for n in 0..s.n {
                let start = (n * total_c + offset) * plane;
                data.extend_from_slice(&grad.data()[start..start + s.c * plane]);
            }
            offset += s.c;
            Tensor::from_vec(*s, data).expect("split sizes follow concat shape")
        })
        .collect()
}

pub fn stack_channels(input: &Tensor, copies: usize) -> Result<Tensor> {
    let s = input.shape();
    if s.c != 1 {
        return Err(Error::ShapeMismatch { op: "stack_channels", dim: "channels", expected: 1, found: s.c });
    }
    if copies == 0 {
        return Err(Error::InvalidArgument { op: "stack_channels", reason: "copies must be at least 1".into() });
    }
    let plane = s.plane();
    let mut data = Vec::with_capacity(s.numel() * copies);
    for n in 0..s.n {
        let src = &input.data()[n * plane..(n + 1) * plane];
        for _ in 0..copies {
            data.extend_from_slice(src);
        }
    }
    Tensor::from_vec(s.with_channels(copies), data)
}

/// Channel-sum of a stacked gradient.
pub fn unstack_channels(grad: &Tensor) -> Tensor {
    let s = grad.shape();
    let plane = s.plane();
    let mut out = Tensor::zeros(s.with_channels(1));
    for n in 0..s.n {
        let dst = &mut out.data_mut()[n * plane..(n + 1) * plane];
        for c in 0..s.c {
            let start = (n * s.c + c) * plane;
            for (d, g) in dst.iter_mut().zip(&grad.data()[start..start + plane]) {
                *d += g;
            }
        }
    }
    out
}

pub(crate) fn check_same_shape(op: &'static str, a: Shape, b: Shape) -> Result<()> {
    for (dim, expected, found) in [("batch", a.n, b.n), ("channels", a.c, b.c), ("height", a.h, b.h), ("width", a.w, b.w)] {
        if expected != found {
            return Err(Error::ShapeMismatch { op, dim, expected, found });
        }
    }
    Ok(())
}

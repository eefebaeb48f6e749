//! Bilinear resampling with half-pixel centres (`align_corners = false`).

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

/// Interpolation taps along one axis. Source coordinates left of the first
/// centre clamp to it, right of the last centre collapse onto it.
fn taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (libm::floor(src) as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            let frac = if lo == hi { 0.0 } else { src - lo as f64 };
            Tap { lo, hi, frac }
        })
        .collect()
}

fn check(input: Shape, out_h: usize, out_w: usize) -> Result<()> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument {
            op: "bilinear_resize",
            reason: alloc::format!("output size must be at least 1x1 (got {out_h}x{out_w})"),
        });
    }
    if input.h == 0 || input.w == 0 {
        return Err(Error::InvalidShape { op: "bilinear_resize", shape: input, reason: "empty spatial extent".into() });
    }
    Ok(())
}

pub fn resize_forward(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let s = input.shape();
    check(s, out_h, out_w)?;
    if s.h == out_h && s.w == out_w {
        return Ok(input.clone());
    }
    let ty = taps(s.h, out_h);
    let tx = taps(s.w, out_w);
    let out_shape = s.with_spatial(out_h, out_w);
    let mut out = Tensor::zeros(out_shape);
    let src_plane = s.plane();
    let dst_plane = out_shape.plane();
    for (p, dst) in out.data_mut().chunks_mut(dst_plane).enumerate() {
        let src = &input.data()[p * src_plane..(p + 1) * src_plane];
        for (oy, y) in ty.iter().enumerate() {
            let r0 = &src[y.lo * s.w..(y.lo + 1) * s.w];
            let r1 = &src[y.hi * s.w..(y.hi + 1) * s.w];
            for (ox, x) in tx.iter().enumerate() {
                let top = r0[x.lo] * (1.0 - x.frac) + r0[x.hi] * x.frac;
                let bottom = r1[x.lo] * (1.0 - x.frac) + r1[x.hi] * x.frac;
                dst[oy * out_w + ox] = top * (1.0 - y.frac) + bottom * y.frac;
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`resize_forward`]: scatters `grad_out` back onto `input_shape`.
pub fn resize_backward(input_shape: Shape, grad_out: &Tensor) -> Tensor {
    let g = grad_out.shape();
    if input_shape.h == g.h && input_shape.w == g.w {
        return grad_out.clone();
    }
    let ty = taps(input_shape.h, g.h);
    let tx = taps(input_shape.w, g.w);
    let mut d_in = Tensor::zeros(input_shape);
    let src_plane = input_shape.plane();
    let dst_plane = g.plane();
    let w = input_shape.w;
    for (p, dst) in d_in.data_mut().chunks_mut(src_plane).enumerate() {
        let go = &grad_out.data()[p * dst_plane..(p + 1) * dst_plane];
        for (oy, y) in ty.iter().enumerate() {
            for (ox, x) in tx.iter().enumerate() {
                let v = go[oy * g.w + ox];
                let top = v * (1.0 - y.frac);
                let bottom = v * y.frac;
                dst[y.lo * w + x.lo] += top * (1.0 - x.frac);
                dst[y.lo * w + x.hi] += top * x.frac;
                dst[y.hi * w + x.lo] += bottom * (1.0 - x.frac);
                dst[y.hi * w + x.hi] += bottom * x.frac;
            }
        }
    }
    d_in
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_output() {
        let x = Tensor::zeros(Shape::new(1, 1, 2, 2));
        assert!(resize_forward(&x, 0, 3).is_err());
        assert!(resize_forward(&x, 3, 0).is_err());
    }

    #[test]
    fn downsample_by_two_averages_pairs() {
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 4), alloc::vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let y = resize_forward(&x, 1, 2).unwrap();
        assert_eq!(y.data(), &[2.0, 6.0]);
    }

    #[test]
    fn single_pixel_broadcasts() {
        let x = Tensor::full(Shape::new(1, 2, 1, 1), 3.5);
        let y = resize_forward(&x, 5, 7).unwrap();
        assert!(y.data().iter().all(|&v| v == 3.5));
    }
}

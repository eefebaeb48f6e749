//! Average pooling; padded cells count toward the divisor.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl PoolGeometry {
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument {
                op: "avg_pool",
                reason: alloc::format!("kernel and stride must be positive (got {} and {})", self.kernel, self.stride),
            });
        }
        let ph = input.h + 2 * self.padding;
        let pw = input.w + 2 * self.padding;
        if self.kernel > ph || self.kernel > pw {
            return Err(Error::InvalidShape {
                op: "avg_pool",
                shape: input,
                reason: alloc::format!("kernel {} larger than padded input {}x{}", self.kernel, ph, pw),
            });
        }
        Ok(input.with_spatial((ph - self.kernel) / self.stride + 1, (pw - self.kernel) / self.stride + 1))
    }

    /// Clipped input range covered by output position `o`.
    #[inline]
    fn window(&self, o: usize, len: usize) -> (usize, usize) {
        let start = (o * self.stride) as isize - self.padding as isize;
        let end = start + self.kernel as isize;
        let lo = start.clamp(0, len as isize);
        let hi = end.clamp(lo, len as isize);
        (lo as usize, hi as usize)
    }
}

pub fn avg_pool_forward(input: &Tensor, geom: PoolGeometry) -> Result<Tensor> {
    let s = input.shape();
    let out_shape = geom.output_shape(s)?;
    let area = (geom.kernel * geom.kernel) as f64;
    let mut out = Tensor::zeros(out_shape);
    // Separable box sums: horizontal window sums, then vertical.
    let (h, w) = (s.h, s.w);
    let mut rows = alloc::vec![0.0; h * out_shape.w];
    for (p, dst) in out.data_mut().chunks_mut(out_shape.plane()).enumerate() {
        let src = &input.data()[p * s.plane()..(p + 1) * s.plane()];
        for y in 0..h {
            for ox in 0..out_shape.w {
                let (x0, x1) = geom.window(ox, w);
                rows[y * out_shape.w + ox] = src[y * w + x0..y * w + x1].iter().sum();
            }
        }
        for oy in 0..out_shape.h {
            let (y0, y1) = geom.window(oy, h);
            for ox in 0..out_shape.w {
                let sum: f64 = (y0..y1).map(|y| rows[y * out_shape.w + ox]).sum();
                dst[oy * out_shape.w + ox] = sum / area;
            }
        }
    }
    Ok(out)
}

pub fn avg_pool_backward(input_shape: Shape, geom: PoolGeometry, grad_out: &Tensor) -> Tensor {
    let g = grad_out.shape();
    let area = (geom.kernel * geom.kernel) as f64;
    let mut d_in = Tensor::zeros(input_shape);
    let (h, w) = (input_shape.h, input_shape.w);
    for (p, dst) in d_in.data_mut().chunks_mut(input_shape.plane()).enumerate() {
        let go = &grad_out.data()[p * g.plane()..(p + 1) * g.plane()];
        for oy in 0..g.h {
            let (y0, y1) = geom.window(oy, h);
            for ox in 0..g.w {
                let (x0, x1) = geom.window(ox, w);
                let v = go[oy * g.w + ox] / area;
                for y in y0..y1 {
                    dst[y * w + x0..y * w + x1].iter_mut().for_each(|d| *d += v);
                }
            }
        }
    }
    d_in
}

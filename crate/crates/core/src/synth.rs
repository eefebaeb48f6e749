//! Procedural camouflage scenes: a smooth blob whose texture continues the
//! background's value noise with a small mean shift.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::encoder::SIZE_MULTIPLE;
use crate::error::{Error, Result};
use crate::ops;
use crate::rng::SeededRng;
use crate::tensor::{Shape, Tensor};

/// Foreground fraction bounds every generated mask satisfies.
pub const MIN_FOREGROUND: f64 = 0.02;
pub const MAX_FOREGROUND: f64 = 0.60;

/// Scales drawn by [`draw_scale`] unless configured otherwise.
pub const DEFAULT_SCALES: [f64; 3] = [0.75, 1.0, 1.25];

const OCTAVES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub count: usize,
    pub size: usize,
    /// Foreground/background mean shift in `(0, 0.5]`; smaller is harder.
    pub contrast: f64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.size % SIZE_MULTIPLE != 0 {
            return Err(Error::InvalidArgument {
                op: "synth",
                reason: format!("size must be a positive multiple of {SIZE_MULTIPLE} (got {})", self.size),
            });
        }
        if !(self.contrast > 0.0 && self.contrast <= 0.5) {
            return Err(Error::InvalidArgument {
                op: "synth",
                reason: format!("contrast must lie in (0, 0.5] (got {})", self.contrast),
            });
        }
        Ok(())
    }
}

/// One scene: `1x3xHxW` image in `[0, 1]`, `1x1xHxW` binary mask and edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Tensor,
    pub mask: Tensor,
    pub edge: Tensor,
}

/// Generates `cfg.count` samples; sample `i` depends only on `(seed, i)`.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<Sample>> {
    cfg.validate()?;
    (0..cfg.count).map(|i| synth_sample(cfg, i)).collect()
}

/// The `index`-th sample of the dataset described by `cfg`.
pub fn synth_sample(cfg: &SynthConfig, index: usize) -> Result<Sample> {
    cfg.validate()?;
    let size = cfg.size;
    let mut rng = SeededRng::fork(cfg.seed, index as u64);
    let mask = loop {
        let m = blob_mask(size, &mut rng);
        let frac = m.iter().filter(|&&v| v).count() as f64 / (size * size) as f64;
        if (MIN_FOREGROUND..=MAX_FOREGROUND).contains(&frac) {
            break m;
        }
    };
    let fg_count = mask.iter().filter(|&&v| v).count() as f64;
    let bg_count = (size * size) as f64 - fg_count;

    // Object brighter or darker than its surroundings, centred on 0.5.
    let sign = if rng.coin() { 1.0 } else { -1.0 };
    let fg_level = 0.5 + sign * cfg.contrast / 2.0;
    let bg_level = 0.5 - sign * cfg.contrast / 2.0;
    let amplitude = 0.8 * (1.0 - cfg.contrast);

    let mut image = Tensor::zeros(Shape::new(1, 3, size, size));
    for c in 0..3 {
        let noise = value_noise(size, &mut rng);
        let (mut fg_mean, mut bg_mean) = (0.0, 0.0);
        for (&n, &m) in noise.iter().zip(&mask) {
            if m {
                fg_mean += n;
            } else {
                bg_mean += n;
            }
        }
        fg_mean /= fg_count;
        bg_mean /= bg_count;
        let plane = &mut image.data_mut()[c * size * size..(c + 1) * size * size];
        for ((px, &n), &m) in plane.iter_mut().zip(&noise).zip(&mask) {
            let v = if m { fg_level + amplitude * (n - fg_mean) } else { bg_level + amplitude * (n - bg_mean) };
            *px = v.clamp(0.0, 1.0);
        }
    }
    let mask = Tensor::from_vec(Shape::new(1, 1, size, size), mask.iter().map(|&m| m as u8 as f64).collect())?;
    let edge = edge_from_mask(&mask)?;
    Ok(Sample { id: format!("synth_{index:05}"), image, mask, edge })
}

/// Ellipse with a low-frequency radial perturbation, rasterised at pixel centres.
fn blob_mask(size: usize, rng: &mut SeededRng) -> Vec<bool> {
    let s = size as f64;
    let cx = rng.uniform(0.35, 0.65) * s;
    let cy = rng.uniform(0.35, 0.65) * s;
    let radius = rng.uniform(0.18, 0.30) * s;
    let aspect = rng.uniform(0.75, 1.33);
    let (rx, ry) = (radius * libm::sqrt(aspect), radius / libm::sqrt(aspect));
    let theta = rng.uniform(0.0, PI);
    let (sin_t, cos_t) = (libm::sin(theta), libm::cos(theta));
    let harmonics: Vec<(f64, f64, f64)> =
        (2..=4).map(|k| (k as f64, rng.uniform(0.0, 0.10), rng.uniform(0.0, 2.0 * PI))).collect();
    let mut mask = vec![false; size * size];
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let u = (dx * cos_t + dy * sin_t) / rx;
            let v = (-dx * sin_t + dy * cos_t) / ry;
            let rho = libm::sqrt(u * u + v * v);
            let phi = libm::atan2(v, u);
            let boundary = 1.0 + harmonics.iter().map(|&(k, a, p)| a * libm::sin(k * phi + p)).sum::<f64>();
            mask[y * size + x] = rho <= boundary;
        }
    }
    mask
}

/// Multi-octave value noise normalised to `[0, 1]`.
fn value_noise(size: usize, rng: &mut SeededRng) -> Vec<f64> {
    let mut acc = vec![0.0; size * size];
    let mut amplitude = 1.0;
    let mut cells = 4usize;
    for _ in 0..OCTAVES {
        let lattice: Vec<f64> = (0..(cells + 1) * (cells + 1)).map(|_| rng.unit()).collect();
        let step = size as f64 / cells as f64;
        for y in 0..size {
            let fy = (y as f64 + 0.5) / step;
            let (iy, ty) = (libm::floor(fy) as usize, smoothstep(fy - libm::floor(fy)));
            let iy = iy.min(cells - 1);
            for x in 0..size {
                let fx = (x as f64 + 0.5) / step;
                let (ix, tx) = (libm::floor(fx) as usize, smoothstep(fx - libm::floor(fx)));
                let ix = ix.min(cells - 1);
                let at = |j: usize, i: usize| lattice[j * (cells + 1) + i];
                let top = at(iy, ix) * (1.0 - tx) + at(iy, ix + 1) * tx;
                let bottom = at(iy + 1, ix) * (1.0 - tx) + at(iy + 1, ix + 1) * tx;
                acc[y * size + x] += amplitude * (top * (1.0 - ty) + bottom * ty);
            }
        }
        amplitude *= 0.5;
        cells *= 2;
    }
    let (lo, hi) = acc.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    acc.iter().map(|v| (v - lo) / span).collect()
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Morphological gradient with a 3x3 square element: `dilate(m) - erode(m)`.
/// Neighbourhoods are clipped at the image border, so constant masks have no edge.
pub fn edge_from_mask(mask: &Tensor) -> Result<Tensor> {
    if let Some(index) = mask.data().iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::NotBinary { op: "edge_from_mask", index, value: mask.data()[index] });
    }
    let s = mask.shape();
    let mut edge = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            for y in 0..s.h {
                for x in 0..s.w {
                    let (mut lo, mut hi) = (1.0f64, 0.0f64);
                    for yy in y.saturating_sub(1)..=(y + 1).min(s.h - 1) {
                        for xx in x.saturating_sub(1)..=(x + 1).min(s.w - 1) {
                            let v = mask.at(n, c, yy, xx);
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                    }
                    *edge.at_mut(n, c, y, x) = hi - lo;
                }
            }
        }
    }
    Ok(edge)
}

/// Training size for `base * scale`: nearest multiple of 32, ties rounding
/// down, never below 32. Scaled sizes under 32 are rejected.
pub fn scaled_size(base: usize, scale: f64) -> Result<usize> {
    let raw = base as f64 * scale;
    if !(scale > 0.0) || raw < SIZE_MULTIPLE as f64 {
        return Err(Error::InvalidArgument {
            op: "multiscale_batch",
            reason: format!("scale {scale} maps size {base} to {raw}, below the minimum {SIZE_MULTIPLE}"),
        });
    }
    let k = libm::ceil(raw / SIZE_MULTIPLE as f64 - 0.5).max(1.0) as usize;
    Ok(k * SIZE_MULTIPLE)
}

pub fn draw_scale(rng: &mut SeededRng, scales: &[f64]) -> f64 {
    scales[rng.below(scales.len())]
}

/// A resized mini-batch: `Nx3xSxS` images, `Nx1xSxS` binary mask and edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub image: Tensor,
    pub mask: Tensor,
    pub edge: Tensor,
    pub size: usize,
}

/// Resizes each sample to `scaled_size(base, scale)` and stacks them. Masks
/// and edges are re-binarised at 0.5 after interpolation.
pub fn multiscale_batch(samples: &[&Sample], scale: f64) -> Result<Batch> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument { op: "multiscale_batch", reason: "empty batch".into() })?;
    let size = scaled_size(first.image.shape().h, scale)?;
    let binarize = |t: Tensor| t.map(|v| if v >= 0.5 { 1.0 } else { 0.0 });
    let mut images = Vec::with_capacity(samples.len());
    let mut masks = Vec::with_capacity(samples.len());
    let mut edges = Vec::with_capacity(samples.len());
    for s in samples {
        images.push(ops::resize_forward(&s.image, size, size)?);
        masks.push(binarize(ops::resize_forward(&s.mask, size, size)?));
        edges.push(binarize(ops::resize_forward(&s.edge, size, size)?));
    }
    Ok(Batch {
        image: Tensor::stack_batch(&images)?,
        mask: Tensor::stack_batch(&masks)?,
        edge: Tensor::stack_batch(&edges)?,
        size,
    })
}

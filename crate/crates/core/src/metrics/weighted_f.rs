use alloc::vec;
use alloc::vec::Vec;

use super::distance::nearest_foreground;
use super::{EvalPair, EPS};

pub const DEFAULT_BETA_SQ: f64 = 0.3;

const KERNEL: usize = 7;
const SIGMA: f64 = 5.0;

/// Normalised 7x7 Gaussian (sigma 5), row-major.
pub fn gaussian_kernel() -> [f64; KERNEL * KERNEL] {
    let r = (KERNEL / 2) as isize;
    let mut k = [0.0; KERNEL * KERNEL];
    for dy in -r..=r {
        for dx in -r..=r {
            k[((dy + r) as usize) * KERNEL + (dx + r) as usize] = libm::exp(-((dx * dx + dy * dy) as f64) / (2.0 * SIGMA * SIGMA));
        }
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Same-size correlation with zero padding.
fn filter(src: &[f64], height: usize, width: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (KERNEL / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let mut acc = 0.0;
            for ky in 0..KERNEL as isize {
                let yy = y + ky - r;
                if yy < 0 || yy >= height as isize {
                    continue;
                }
                for kx in 0..KERNEL as isize {
                    let xx = x + kx - r;
                    if xx < 0 || xx >= width as isize {
                        continue;
                    }
                    acc += kernel[(ky * KERNEL as isize + kx) as usize] * src[yy as usize * width + xx as usize];
                }
            }
            out[y as usize * width + x as usize] = acc;
        }
    }
    out
}

/// Weighted F-measure.
///
/// Errors outside the object take the error of their nearest object pixel,
/// are smoothed with the Gaussian, and inside the object the smaller of raw
/// and smoothed error is kept. Background errors are amplified by
/// `2 - exp(ln(0.5) / 5 * distance)`. Empty ground truth scores 1 for an
/// all-zero prediction and 0 otherwise.
pub fn weighted_f(pair: &EvalPair, beta_sq: f64) -> f64 {
    let (h, w) = (pair.gt().height, pair.gt().width);
    let pred = &pair.pred().data;
    let fg: Vec<bool> = (0..pred.len()).map(|i| pair.is_fg(i)).collect();
    let Some(nearest) = nearest_foreground(&fg, h, w) else {
        return if pred.iter().all(|&p| p == 0.0) { 1.0 } else { 0.0 };
    };
    let err: Vec<f64> = pred.iter().zip(&pair.gt().data).map(|(p, g)| libm::fabs(p - g)).collect();
    let spread: Vec<f64> = (0..err.len()).map(|i| err[nearest.index[i]]).collect();
    let smoothed = filter(&spread, h, w, &gaussian_kernel());
    let decay = libm::log(0.5) / 5.0;
    let (mut fg_count, mut fg_err, mut bg_err) = (0.0, 0.0, 0.0);
    for i in 0..err.len() {
        if fg[i] {
            let e = if smoothed[i] < err[i] { smoothed[i] } else { err[i] };
            fg_count += 1.0;
            fg_err += e;
        } else {
            let weight = 2.0 - libm::exp(decay * nearest.distance(i));
            bg_err += err[i] * weight;
        }
    }
    let tp = fg_count - fg_err;
    let recall = 1.0 - fg_err / fg_count;
    let precision = tp / (EPS + tp + bg_err);
    (1.0 + beta_sq) * recall * precision / (EPS + recall + beta_sq * precision)
}

use alloc::vec::Vec;

use super::{EvalPair, EPS};

/// Number of uniform binarisation thresholds `0, 1/255, ..., 1`.
pub const E_THRESHOLDS: usize = 256;

/// Enhanced alignment `((1 + xi)^2) / 4` for one (gt bias, pred bias) pair.
#[inline]
fn enhanced(phi_g: f64, phi_p: f64) -> f64 {
    let xi = 2.0 * phi_g * phi_p / (phi_g * phi_g + phi_p * phi_p + EPS);
    (1.0 + xi) * (1.0 + xi) / 4.0
}

/// E-measure at each threshold `t / 255`, binarising with `pred >= t / 255`.
///
/// Each pixel's alignment depends only on its (gt, binarised pred) class, so
/// a threshold costs four class counts rather than a pass over the image.
pub fn e_measure_curve(pair: &EvalPair) -> Vec<f64> {
    let n = pair.pred().len();
    let mut fg: Vec<f64> = Vec::new();
    let mut bg: Vec<f64> = Vec::new();
    for (i, &p) in pair.pred().data.iter().enumerate() {
        if pair.is_fg(i) {
            fg.push(p);
        } else {
            bg.push(p);
        }
    }
    fg.sort_by(f64::total_cmp);
    bg.sort_by(f64::total_cmp);
    let gt_mean = fg.len() as f64 / n as f64;
    // Constant ground truth: offset the bias by eps.
    let shift = if fg.is_empty() || bg.is_empty() { EPS } else { 0.0 };
    let phi_g1 = 1.0 - gt_mean + shift;
    let phi_g0 = 0.0 - gt_mean + shift;
    (0..E_THRESHOLDS)
        .map(|t| {
            let thr = t as f64 / 255.0;
            let fg_on = fg.len() - fg.partition_point(|&v| v < thr);
            let bg_on = bg.len() - bg.partition_point(|&v| v < thr);
            let (fg_off, bg_off) = (fg.len() - fg_on, bg.len() - bg_on);
            let b_mean = (fg_on + bg_on) as f64 / n as f64;
            let (phi_p1, phi_p0) = (1.0 - b_mean, 0.0 - b_mean);
            let sum = fg_on as f64 * enhanced(phi_g1, phi_p1)
                + fg_off as f64 * enhanced(phi_g1, phi_p0)
                + bg_on as f64 * enhanced(phi_g0, phi_p1)
                + bg_off as f64 * enhanced(phi_g0, phi_p0);
            sum / n as f64
        })
        .collect()
}

/// Mean of [`e_measure_curve`] over all thresholds.
pub fn e_measure_mean(pair: &EvalPair) -> f64 {
    let curve = e_measure_curve(pair);
    curve.iter().sum::<f64>() / curve.len() as f64
}

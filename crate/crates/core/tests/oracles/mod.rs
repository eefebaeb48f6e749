//! Brute-force metric implementations written straight from the definitions.
//! Shared by the metric tests and the acceptance run.
#![allow(dead_code)]

use errnet_core::rng::SeededRng;

pub const EPS: f64 = 1e-8;

/// Random 8x8 pair; foreground density varies per pair.
pub fn random_pair(rng: &mut SeededRng) -> (Vec<f64>, Vec<f64>) {
    let density = rng.uniform(0.15, 0.85);
    let gt: Vec<f64> = (0..64).map(|_| if rng.unit() < density { 1.0 } else { 0.0 }).collect();
    let pred: Vec<f64> = (0..64)
        .map(|i| {
            // mix of informative and noisy pixels, some exactly on 0 or 1
            let r = rng.unit();
            if r < 0.1 {
                gt[i]
            } else if r < 0.15 {
                0.0
            } else {
                (0.6 * gt[i] + 0.4 * rng.unit()).clamp(0.0, 1.0)
            }
        })
        .collect();
    (pred, gt)
}

pub fn mae_oracle(pred: &[f64], gt: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..pred.len() {
        s += (pred[i] - gt[i]).abs();
    }
    s / pred.len() as f64
}

pub fn e_oracle(pred: &[f64], gt: &[f64], t: usize) -> f64 {
    let n = pred.len() as f64;
    let thr = t as f64 / 255.0;
    let b: Vec<f64> = pred.iter().map(|&p| if p >= thr { 1.0 } else { 0.0 }).collect();
    let bm = b.iter().sum::<f64>() / n;
    let gm = gt.iter().sum::<f64>() / n;
    let constant = gm == 0.0 || gm == 1.0;
    let mut acc = 0.0;
    for i in 0..pred.len() {
        let pg = gt[i] - gm + if constant { EPS } else { 0.0 };
        let pp = b[i] - bm;
        let xi = 2.0 * pg * pp / (pg * pg + pp * pp + EPS);
        acc += (1.0 + xi).powi(2) / 4.0;
    }
    acc / n
}

pub fn s_oracle(pred: &[f64], gt: &[f64], h: usize, w: usize) -> f64 {
    let n = (h * w) as f64;
    let ymean = gt.iter().sum::<f64>() / n;
    if ymean == 0.0 {
        return (1.0 - pred.iter().sum::<f64>() / n).clamp(0.0, 1.0);
    }
    if ymean == 1.0 {
        return (pred.iter().sum::<f64>() / n).clamp(0.0, 1.0);
    }
    // object term
    let score = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = if xs.len() > 1 { xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64 } else { 0.0 };
        2.0 * m / (m * m + 1.0 + var.sqrt() + EPS)
    };
    let fg: Vec<f64> = (0..pred.len()).filter(|&i| gt[i] == 1.0).map(|i| pred[i]).collect();
    let bg: Vec<f64> = (0..pred.len()).filter(|&i| gt[i] == 0.0).map(|i| 1.0 - pred[i]).collect();
    let so = ymean * score(&fg) + (1.0 - ymean) * score(&bg);
    // region term, centroid in 1-based coordinates, rounded
    let (mut cx, mut cy, mut cnt) = (0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if gt[y * w + x] == 1.0 {
                cx += (x + 1) as f64;
                cy += (y + 1) as f64;
                cnt += 1.0;
            }
        }
    }
    let (cx, cy) = ((cx / cnt).round() as usize, (cy / cnt).round() as usize);
    let mut sr = 0.0;
    for (y0, y1, x0, x1) in [(0, cy, 0, cx), (0, cy, cx, w), (cy, h, 0, cx), (cy, h, cx, w)] {
        if y1 <= y0 || x1 <= x0 {
            continue;
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for y in y0..y1 {
            for x in x0..x1 {
                xs.push(pred[y * w + x]);
                ys.push(gt[y * w + x]);
            }
        }
        let k = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / k;
        let my = ys.iter().sum::<f64>() / k;
        let sxx = xs.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / (k - 1.0 + EPS);
        let syy = ys.iter().map(|v| (v - my).powi(2)).sum::<f64>() / (k - 1.0 + EPS);
        let sxy = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (k - 1.0 + EPS);
        let alpha = 4.0 * mx * my * sxy;
        let beta = (mx * mx + my * my) * (sxx + syy);
        let q = if alpha != 0.0 {
            alpha / (beta + EPS)
        } else if beta == 0.0 {
            1.0
        } else {
            0.0
        };
        sr += k / n * q;
    }
    (0.5 * so + 0.5 * sr).clamp(0.0, 1.0)
}

/// Exhaustive nearest-foreground search: ties go to the smallest flat index.
pub fn nearest_oracle(gt: &[f64], h: usize, w: usize) -> Vec<(f64, usize)> {
    (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64, (i % w) as f64);
            let mut best = (f64::INFINITY, usize::MAX);
            for j in 0..h * w {
                if gt[j] == 1.0 {
                    let (yy, xx) = ((j / w) as f64, (j % w) as f64);
                    let d = ((y - yy).powi(2) + (x - xx).powi(2)).sqrt();
                    if d < best.0 {
                        best = (d, j);
                    }
                }
            }
            best
        })
        .collect()
}

pub fn wf_oracle(pred: &[f64], gt: &[f64], h: usize, w: usize) -> f64 {
    if gt.iter().all(|&g| g == 0.0) {
        return if pred.iter().all(|&p| p == 0.0) { 1.0 } else { 0.0 };
    }
    let e: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| (p - g).abs()).collect();
    let near = nearest_oracle(gt, h, w);
    let et: Vec<f64> = (0..e.len()).map(|i| e[near[i].1]).collect();
    // explicit normalised 7x7 Gaussian, sigma 5, zero padding
    let mut k = [[0.0; 7]; 7];
    let mut ks = 0.0;
    for (dy, row) in k.iter_mut().enumerate() {
        for (dx, v) in row.iter_mut().enumerate() {
            let (a, b) = (dy as f64 - 3.0, dx as f64 - 3.0);
            *v = (-(a * a + b * b) / 50.0).exp();
            ks += *v;
        }
    }
    let mut ea = vec![0.0; e.len()];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for dy in -3..=3isize {
                for dx in -3..=3isize {
                    let (yy, xx) = (y + dy, x + dx);
                    if yy >= 0 && xx >= 0 && yy < h as isize && xx < w as isize {
                        acc += k[(dy + 3) as usize][(dx + 3) as usize] / ks * et[yy as usize * w + xx as usize];
                    }
                }
            }
            ea[y as usize * w + x as usize] = acc;
        }
    }
    let (mut tp_loss, mut fg, mut fp) = (0.0, 0.0, 0.0);
    for i in 0..e.len() {
        if gt[i] == 1.0 {
            fg += 1.0;
            tp_loss += ea[i].min(e[i]);
        } else {
            let b = 2.0 - ((0.5f64).ln() / 5.0 * near[i].0).exp();
            fp += e[i] * b;
        }
    }
    let tp = fg - tp_loss;
    let r = 1.0 - tp_loss / fg;
    let p = tp / (EPS + tp + fp);
    1.3 * r * p / (EPS + r + 0.3 * p)
}

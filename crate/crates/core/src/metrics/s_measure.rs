use super::{EvalPair, Map, EPS};

pub const DEFAULT_ALPHA: f64 = 0.5;

/// Structure measure `alpha * S_o + (1 - alpha) * S_r`, clamped to `[0, 1]`.
///
/// Empty ground truth scores `1 - mean(pred)`; full ground truth scores
/// `mean(pred)`.
pub fn s_measure(pair: &EvalPair, alpha: f64) -> f64 {
    let y = pair.gt().mean();
    let q = if y == 0.0 {
        1.0 - pair.pred().mean()
    } else if y == 1.0 {
        pair.pred().mean()
    } else {
        alpha * s_object(pair) + (1.0 - alpha) * s_region(pair)
    };
    q.clamp(0.0, 1.0)
}

/// `2 mu / (mu^2 + 1 + sigma + eps)` with the sample standard deviation.
fn object_score(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return 0.0;
    }
    let mu = sum / n as f64;
    let sigma = if n > 1 {
        libm::sqrt(values.map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1) as f64)
    } else {
        0.0
    };
    2.0 * mu / (mu * mu + 1.0 + sigma + EPS)
}

/// Object-aware term: foreground and background distribution similarity,
/// weighted by the foreground fraction.
pub fn s_object(pair: &EvalPair) -> f64 {
    let (pred, gt) = (&pair.pred().data, &pair.gt().data);
    let fg = pred.iter().zip(gt).filter(|(_, &g)| g == 1.0).map(|(&p, _)| p);
    let bg = pred.iter().zip(gt).filter(|(_, &g)| g == 0.0).map(|(&p, _)| 1.0 - p);
    let u = pair.gt().mean();
    u * object_score(fg) + (1.0 - u) * object_score(bg)
}

/// 1-based rounded centroid `(x, y)` of the foreground; image centre if empty.
fn centroid(gt: &Map) -> (usize, usize) {
    let total: f64 = gt.data.iter().sum();
    if total == 0.0 {
        return (libm::round(gt.width as f64 / 2.0) as usize, libm::round(gt.height as f64 / 2.0) as usize);
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for y in 0..gt.height {
        for x in 0..gt.width {
            let g = gt.at(y, x);
            sx += g * (x + 1) as f64;
            sy += g * (y + 1) as f64;
        }
    }
    (libm::round(sx / total) as usize, libm::round(sy / total) as usize)
}

/// SSIM-style similarity of one block. `N - 1 + eps` divides the moments.
fn block_ssim(pair: &EvalPair, ys: core::ops::Range<usize>, xs: core::ops::Range<usize>) -> f64 {
    let w = pair.gt().width;
    let n = ys.len() * xs.len();
    let (pred, gt) = (&pair.pred().data, &pair.gt().data);
    let idx = || ys.clone().flat_map(|y| xs.clone().map(move |x| y * w + x));
    let x_mean = idx().map(|i| pred[i]).sum::<f64>() / n as f64;
    let y_mean = idx().map(|i| gt[i]).sum::<f64>() / n as f64;
    let denom = n as f64 - 1.0 + EPS;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for i in idx() {
        let (dx, dy) = (pred[i] - x_mean, gt[i] - y_mean);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let (sxx, syy, sxy) = (sxx / denom, syy / denom, sxy / denom);
    let a = 4.0 * x_mean * y_mean * sxy;
    let b = (x_mean * x_mean + y_mean * y_mean) * (sxx + syy);
    if a != 0.0 {
        a / (b + EPS)
    } else if b == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Region-aware term: four blocks split at the ground-truth centroid,
/// weighted by area.
pub fn s_region(pair: &EvalPair) -> f64 {
    let gt = pair.gt();
    let (h, w) = (gt.height, gt.width);
    let (cx, cy) = centroid(gt);
    let area = (h * w) as f64;
    let blocks = [(0..cy, 0..cx), (0..cy, cx..w), (cy..h, 0..cx), (cy..h, cx..w)];
    let mut q = 0.0;
    for (ys, xs) in blocks {
        if ys.is_empty() || xs.is_empty() {
            continue;
        }
        let weight = (ys.len() * xs.len()) as f64 / area;
        q += weight * block_ssim(pair, ys, xs);
    }
    q
}

//! Exact Euclidean distance to the nearest foreground pixel.

use alloc::vec;
use alloc::vec::Vec;

/// Per-pixel squared distance and the flat index of the nearest foreground
/// pixel. Among equidistant candidates the smallest flat index wins.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestForeground {
    pub dist_sq: Vec<u64>,
    pub index: Vec<usize>,
}

impl NearestForeground {
    pub fn distance(&self, i: usize) -> f64 {
        libm::sqrt(self.dist_sq[i] as f64)
    }
}

const INF: u64 = u64::MAX / 4;

/// 1-D lower envelope of parabolas (Felzenszwalb & Huttenlocher).
fn envelope_1d(f: &[u64], out: &mut [u64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    let first = match f.iter().position(|&x| x < INF) {
        Some(q) => q,
        None => {
            out.iter_mut().for_each(|o| *o = INF);
            return;
        }
    };
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if f[q] >= INF {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] as f64 + (q * q) as f64) - (f[p] as f64 + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q.abs_diff(p) as u64;
        *o = d * d + f[p];
    }
}

/// Squared distances to the nearest `true` cell of a `height x width` grid.
fn squared_edt(fg: &[bool], height: usize, width: usize) -> Vec<u64> {
    let n = height.max(width);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0f64; n + 1]);
    let mut grid: Vec<u64> = fg.iter().map(|&b| if b { 0 } else { INF }).collect();
    let mut col = vec![0u64; height];
    let mut col_out = vec![0u64; height];
    for x in 0..width {
        for y in 0..height {
            col[y] = grid[y * width + x];
        }
        envelope_1d(&col, &mut col_out, &mut v, &mut z);
        for y in 0..height {
            grid[y * width + x] = col_out[y];
        }
    }
    let mut row_out = vec![0u64; width];
    for y in 0..height {
        envelope_1d(&grid[y * width..(y + 1) * width], &mut row_out, &mut v, &mut z);
        grid[y * width..(y + 1) * width].copy_from_slice(&row_out);
    }
    grid
}

fn isqrt(n: u64) -> u64 {
    let mut r = libm::sqrt(n as f64) as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Nearest foreground pixel for every pixel; `None` if there is no foreground.
pub fn nearest_foreground(fg: &[bool], height: usize, width: usize) -> Option<NearestForeground> {
    if !fg.iter().any(|&b| b) {
        return None;
    }
    let dist_sq = squared_edt(fg, height, width);
    let mut index = vec![0usize; fg.len()];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let d2 = dist_sq[i];
            if d2 == 0 {
                index[i] = i;
                continue;
            }
            // Enumerate lattice points on the circle of radius sqrt(d2) in
            // increasing flat-index order and keep the first foreground hit.
            let r = isqrt(d2) as isize;
            let mut best = usize::MAX;
            for dy in -r..=r {
                let yy = y as isize + dy;
                if yy < 0 || yy >= height as isize {
                    continue;
                }
                let rem = d2 - (dy * dy) as u64;
                let dx = isqrt(rem);
                if dx * dx != rem {
                    continue;
                }
                for xx in [x as isize - dx as isize, x as isize + dx as isize] {
                    if xx >= 0 && xx < width as isize {
                        let j = yy as usize * width + xx as usize;
                        if fg[j] && j < best {
                            best = j;
                        }
                    }
                }
                if best != usize::MAX {
                    break;
                }
            }
            debug_assert!(best != usize::MAX);
            index[i] = best;
        }
    }
    Some(NearestForeground { dist_sq, index })
}

//! Camouflage/saliency evaluation metrics: S-measure, mean E-measure,
//! weighted F-measure and MAE, all on `[0, 1]` prediction maps against
//! binary ground truth.

mod distance;
mod e_measure;
mod s_measure;
mod weighted_f;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub use distance::{nearest_foreground, NearestForeground};
pub use e_measure::{e_measure_curve, e_measure_mean, E_THRESHOLDS};
pub use s_measure::{s_measure, s_object, s_region, DEFAULT_ALPHA};
pub use weighted_f::{gaussian_kernel, weighted_f, DEFAULT_BETA_SQ};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Guard added to ratio denominators.
pub const EPS: f64 = 1e-8;

/// A single-channel map in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Map {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Map {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch { op: "map", dim: "element count", expected: height * width, found: data.len() });
        }
        Ok(Map { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Map { height, width, data: alloc::vec![value; height * width] }
    }

    /// First plane of a tensor.
    pub fn from_tensor(t: &Tensor) -> Self {
        let s = t.shape();
        Map { height: s.h, width: s.w, data: t.data()[..s.plane()].to_vec() }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Prediction in `[0, 1]` and binary ground truth of equal size.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pred: Map,
    gt: Map,
}

impl EvalPair {
    pub fn new(pred: Map, gt: Map) -> Result<Self> {
        for (dim, a, b) in [("height", gt.height, pred.height), ("width", gt.width, pred.width)] {
            if a != b {
                return Err(Error::ShapeMismatch { op: "eval_pair", dim, expected: a, found: b });
            }
        }
        if pred.is_empty() {
            return Err(Error::InvalidArgument { op: "eval_pair", reason: "empty maps".into() });
        }
        if let Some(i) = pred.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument {
                op: "eval_pair",
                reason: format!("prediction value {} at index {i} outside [0, 1]", pred.data[i]),
            });
        }
        if let Some(index) = gt.data.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::NotBinary { op: "eval_pair", index, value: gt.data[index] });
        }
        Ok(EvalPair { pred, gt })
    }

    pub fn pred(&self) -> &Map {
        &self.pred
    }

    pub fn gt(&self) -> &Map {
        &self.gt
    }

    pub(crate) fn is_fg(&self, i: usize) -> bool {
        self.gt.data[i] == 1.0
    }
}

/// `mean(|pred - gt|)`.
pub fn mae(pair: &EvalPair) -> f64 {
    let sum: f64 = pair.pred.data.iter().zip(&pair.gt.data).map(|(p, g)| libm::fabs(p - g)).sum();
    sum / pair.pred.len() as f64
}

/// The four scores of one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub s_alpha: f64,
    pub e_phi: f64,
    pub f_w_beta: f64,
    pub mae: f64,
}

impl Scores {
    pub fn compute(pair: &EvalPair) -> Self {
        Scores {
            s_alpha: s_measure(pair, DEFAULT_ALPHA),
            e_phi: e_measure_mean(pair),
            f_w_beta: weighted_f(pair, DEFAULT_BETA_SQ),
            mae: mae(pair),
        }
    }
}

/// Per-image scores, dataset means and per-file failures.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub rows: Vec<(String, Scores)>,
    pub errors: Vec<(String, String)>,
}

impl MetricReport {
    /// Arithmetic means over all rows, `None` when there are none.
    pub fn means(&self) -> Option<Scores> {
        if self.rows.is_empty() {
            return None;
        }
        let n = self.rows.len() as f64;
        let mut acc = Scores { s_alpha: 0.0, e_phi: 0.0, f_w_beta: 0.0, mae: 0.0 };
        for (_, s) in &self.rows {
            acc.s_alpha += s.s_alpha;
            acc.e_phi += s.e_phi;
            acc.f_w_beta += s.f_w_beta;
            acc.mae += s.mae;
        }
        Some(Scores { s_alpha: acc.s_alpha / n, e_phi: acc.e_phi / n, f_w_beta: acc.f_w_beta / n, mae: acc.mae / n })
    }
}

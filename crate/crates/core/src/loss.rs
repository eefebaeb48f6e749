//! Co-supervision objective: weighted BCE + weighted IoU on each camouflage
//! map, weighted BCE on the edge map.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::model::PredictionVars;
use crate::ops;
use crate::tensor::Tensor;

/// Side of the averaging window behind the pixel weights.
pub const WEIGHT_WINDOW: usize = 31;
/// Scale of the boundary emphasis in the pixel weights.
pub const WEIGHT_GAIN: f64 = 5.0;

fn check_binary(op: &'static str, g: &Tensor) -> Result<()> {
    match g.data().iter().position(|&v| v != 0.0 && v != 1.0) {
        Some(index) => Err(Error::NotBinary { op, index, value: g.data()[index] }),
        None => Ok(()),
    }
}

/// `1 + 5 * |avg_pool31(g) - g|`, large near object boundaries.
pub fn pixel_weight_map(g: &Tensor) -> Result<Tensor> {
    check_binary("pixel_weight_map", g)?;
    let local = ops::avg_pool(g, WEIGHT_WINDOW, 1, WEIGHT_WINDOW / 2)?;
    let data = local.data().iter().zip(g.data()).map(|(a, b)| 1.0 + WEIGHT_GAIN * libm::fabs(a - b)).collect();
    Tensor::from_vec(g.shape(), data)
}

/// Weighted BCE as a plain number.
pub fn weighted_bce(logits: &Tensor, g: &Tensor, weight: &Tensor) -> Result<f64> {
    let mut graph = Graph::new();
    let x = graph.constant(logits.clone());
    let l = graph.weighted_bce(x, g, weight)?;
    graph.value(l).item()
}

/// Weighted IoU loss as a plain number.
pub fn weighted_iou(logits: &Tensor, g: &Tensor, weight: &Tensor) -> Result<f64> {
    let mut graph = Graph::new();
    let x = graph.constant(logits.clone());
    let l = graph.weighted_iou(x, g, weight)?;
    graph.value(l).item()
}

/// Per-level loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelLoss {
    pub wbce: f64,
    pub wiou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub edge: f64,
    /// Keyed `"3"`, `"4"`, `"5"`, `"g"` in that order.
    pub per_level: Vec<(&'static str, LevelLoss)>,
}

impl LossBreakdown {
    pub fn level(&self, key: &str) -> Option<LevelLoss> {
        self.per_level.iter().find(|(k, _)| *k == key).map(|(_, l)| *l)
    }

    /// `edge + sum(wbce_i + wiou_i)`, accumulated in the same order as `total`.
    pub fn component_sum(&self) -> f64 {
        let mut acc = self.edge;
        for (_, l) in &self.per_level {
            acc += l.wbce + l.wiou;
        }
        acc
    }
}

/// Records the total objective on `g`. Every camouflage map is resized to
/// `g_mask`'s resolution and the edge map to `g_edge`'s.
pub fn total_loss(g: &mut Graph, preds: &PredictionVars, g_mask: &Tensor, g_edge: &Tensor) -> Result<(Var, LossBreakdown)> {
    let (ms, es) = (g_mask.shape(), g_edge.shape());
    for (dim, a, b) in [("batch", ms.n, es.n), ("height", ms.h, es.h), ("width", ms.w, es.w)] {
        if a != b {
            return Err(Error::ShapeMismatch { op: "total_loss", dim, expected: a, found: b });
        }
    }
    let mask_weight = pixel_weight_map(g_mask)?;
    let edge_weight = pixel_weight_map(g_edge)?;

    let edge_logits = g.bilinear_resize(preds.p_e, es.h, es.w)?;
    let edge = g.weighted_bce(edge_logits, g_edge, &edge_weight)?;
    let mut total = edge;
    let mut per_level = Vec::with_capacity(4);
    for (key, var) in [("3", preds.p_3), ("4", preds.p_4), ("5", preds.p_5), ("g", preds.p_g)] {
        let logits = g.bilinear_resize(var, ms.h, ms.w)?;
        let bce = g.weighted_bce(logits, g_mask, &mask_weight)?;
        let iou = g.weighted_iou(logits, g_mask, &mask_weight)?;
        total = g.add(total, bce)?;
        total = g.add(total, iou)?;
        per_level.push((key, LevelLoss { wbce: g.value(bce).item()?, wiou: g.value(iou).item()? }));
    }
    let breakdown = LossBreakdown { total: g.value(total).item()?, edge: g.value(edge).item()?, per_level };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn weight_map_rejects_non_binary() {
        let g = Tensor::full(Shape::new(1, 1, 4, 4), 0.5);
        assert!(matches!(pixel_weight_map(&g), Err(Error::NotBinary { index: 0, .. })));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let x = Tensor::zeros(Shape::new(1, 1, 4, 4));
        let y = Tensor::zeros(Shape::new(1, 1, 4, 5));
        assert!(weighted_bce(&x, &y, &y).is_err());
        assert!(weighted_iou(&x, &y, &y).is_err());
    }

    #[test]
    fn uniform_logits_give_ln2() {
        let x = Tensor::zeros(Shape::new(2, 1, 3, 3));
        let g = Tensor::from_fn(x.shape(), |n, _, y, x| ((n + y + x) % 2) as f64);
        let w = Tensor::from_fn(x.shape(), |_, _, y, x| 1.0 + (y * 3 + x) as f64);
        assert!((weighted_bce(&x, &g, &w).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
    }
}

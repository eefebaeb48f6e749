//! Bias-corrected Adam.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::loss::{total_loss, LossBreakdown};
use crate::model::ErrNet;
use crate::params::ParamStore;
use crate::synth::Batch;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    /// First and second moments, aligned with the store's ids.
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    /// Zero moments shaped like every parameter of `params`.
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        AdamState { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros.clone(), v: zeros }
    }
}

/// One update of every parameter. `grads` is aligned with the store's ids;
/// a missing entry is an error naming the parameter.
pub fn adam_step(params: &mut ParamStore, grads: &[Option<Tensor>], state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::InvalidArgument {
            op: "adam_step",
            reason: alloc::format!("expected {} gradients and moments, got {} and {}", params.len(), grads.len(), state.m.len()),
        });
    }
    for (id, grad) in params.ids().zip(grads) {
        let grad = grad.as_ref().ok_or_else(|| Error::MissingGradient { name: params.name(id).to_string() })?;
        if grad.shape() != params.get(id).shape() {
            return Err(Error::InvalidShape {
                op: "adam_step",
                shape: grad.shape(),
                reason: alloc::format!("gradient for `{}` must have shape {}", params.name(id), params.get(id).shape()),
            });
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - libm::pow(b1, t);
    let c2 = 1.0 - libm::pow(b2, t);
    for (k, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
        let grad = grads[k].as_ref().expect("checked above");
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        for (((p, &g), m), v) in params.get_mut(id).data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (libm::sqrt(v_hat) + eps);
        }
    }
    Ok(())
}

/// Forward, backward and one Adam update of `net` on a batch.
/// Returns the loss breakdown measured before the update.
pub fn train_step(net: &mut ErrNet, state: &mut AdamState, batch: &Batch, lr: f64) -> Result<LossBreakdown> {
    let mut g = Graph::new();
    let bound = net.params.bind(&mut g);
    let x = g.constant(batch.image.clone());
    let trace = net.trace(&mut g, &bound, x)?;
    let (loss, breakdown) = total_loss(&mut g, &trace.vars(), &batch.mask, &batch.edge)?;
    if !breakdown.total.is_finite() {
        return Err(Error::NonFinite { op: "train_step", index: 0 });
    }
    g.backward(loss)?;
    let grads = bound.grads(&g);
    adam_step(&mut net.params, &grads, state, lr)?;
    Ok(breakdown)
}

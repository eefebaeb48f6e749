//! The full detector: encoder, atrous global prior, selective edge
//! aggregation and the cascade of reversible re-calibration units.
//!
//! Units run coarse to fine (level 5, 4, 3). Every prior is bilinearly
//! resized to the resolution of the unit's encoder features before it is
//! combined, and neighbour and global priors are summed as logits before the
//! sigmoid. `p_3` is the network's output.

mod aspp;
mod rru;
mod sea;

pub use aspp::{Aspp, ASPP_DILATIONS};
pub use rru::{NgesPriors, Rru, RruOutput, RRU_HIDDEN};
pub use sea::{Sea, SeaOutput, EDGE_CHANNELS};

use crate::encoder::{Encoder, EncoderConfig, FeaturePyramid};
use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::ops;
use crate::params::{Bound, ParamStore};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrNetConfig {
    pub encoder: EncoderConfig,
    /// Width of the atrous branches and of the block that mixes them.
    pub aspp_mid_channels: usize,
}

impl Default for ErrNetConfig {
    fn default() -> Self {
        ErrNetConfig { encoder: EncoderConfig::DESK, aspp_mid_channels: 64 }
    }
}

/// Graph handles for everything a forward pass produces.
#[derive(Debug, Clone, Copy)]
pub struct ForwardTrace {
    pub features: FeaturePyramid,
    pub global: Var,
    pub sea: SeaOutput,
    /// Units for levels 5, 4, 3, in execution order.
    pub units: [RruOutput; 3],
}

impl ForwardTrace {
    /// Unit output for level 3, 4 or 5.
    pub fn unit(&self, level: usize) -> &RruOutput {
        &self.units[5 - level]
    }

    pub fn vars(&self) -> PredictionVars {
        PredictionVars {
            p_g: self.global,
            p_5: self.unit(5).logits,
            p_4: self.unit(4).logits,
            p_3: self.unit(3).logits,
            p_e: self.sea.edge_logits,
            f_e: self.sea.features,
        }
    }
}

/// The five logit maps and the edge features, still on the graph.
#[derive(Debug, Clone, Copy)]
pub struct PredictionVars {
    pub p_g: Var,
    pub p_5: Var,
    pub p_4: Var,
    pub p_3: Var,
    pub p_e: Var,
    pub f_e: Var,
}

impl PredictionVars {
    pub fn extract(&self, g: &Graph) -> PredictionSet {
        PredictionSet {
            p_g: g.value(self.p_g).clone(),
            p_5: g.value(self.p_5).clone(),
            p_4: g.value(self.p_4).clone(),
            p_3: g.value(self.p_3).clone(),
            p_e: g.value(self.p_e).clone(),
            f_e: g.value(self.f_e).clone(),
        }
    }
}

/// Materialised network outputs (logits, before any sigmoid).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub p_g: Tensor,
    pub p_5: Tensor,
    pub p_4: Tensor,
    pub p_3: Tensor,
    pub p_e: Tensor,
    pub f_e: Tensor,
}

impl PredictionSet {
    /// Camouflage maps by level key, in loss order `3, 4, 5, g`.
    pub fn mask_levels(&self) -> [(&'static str, &Tensor); 4] {
        [("3", &self.p_3), ("4", &self.p_4), ("5", &self.p_5), ("g", &self.p_g)]
    }
}

/// Probability map: `sigmoid(resize(p_3, out_h, out_w))`.
pub fn final_prediction(ps: &PredictionSet, out_h: usize, out_w: usize) -> Result<Tensor> {
    Ok(ops::resize_forward(&ps.p_3, out_h, out_w)?.map(ops::sigmoid))
}

#[derive(Debug, Clone)]
pub struct ErrNet {
    pub config: ErrNetConfig,
    pub params: ParamStore,
    pub encoder: Encoder,
    pub aspp: Aspp,
    pub sea: Sea,
    /// Levels 5, 4, 3.
    pub units: [Rru; 3],
}

impl ErrNet {
    /// Builds the network with seeded uniform initialisation.
    pub fn new(config: ErrNetConfig, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::new(seed);
        let mut params = ParamStore::new();
        let encoder = Encoder::new(config.encoder, &mut params, &mut rng)?;
        let [c1, c2, c3, c4, c5] = config.encoder.channels;
        if config.aspp_mid_channels == 0 {
            return Err(crate::Error::InvalidArgument { op: "errnet", reason: "aspp.mid_channels must be at least 1".into() });
        }
        let aspp = Aspp::new(&mut params, c5, config.aspp_mid_channels, &mut rng)?;
        let sea = Sea::new(&mut params, c1, c2, &mut rng)?;
        let units = [
            Rru::new(&mut params, 5, c5, &mut rng)?,
            Rru::new(&mut params, 4, c4, &mut rng)?,
            Rru::new(&mut params, 3, c3, &mut rng)?,
        ];
        Ok(ErrNet { config, params, encoder, aspp, sea, units })
    }

    /// Records the full forward pass of `image` on `g`.
    pub fn trace(&self, g: &mut Graph, p: &Bound, image: Var) -> Result<ForwardTrace> {
        let features = self.encoder.forward(g, p, image)?;
        let global = self.aspp.forward(g, p, features.e(5))?;
        let sea = self.sea.forward(g, p, features.e(1), features.e(2))?;
        let mut outputs = [None; 3];
        let mut neighbour = None;
        for (k, unit) in self.units.iter().enumerate() {
            let priors = NgesPriors { neighbour, global, edge: sea.features, semantic: features.e(unit.level) };
            let out = unit.forward(g, p, priors)?;
            neighbour = Some(out.logits);
            outputs[k] = Some(out);
        }
        let units = outputs.map(|o| o.expect("all three units ran"));
        Ok(ForwardTrace { features, global, sea, units })
    }

    /// Inference on a plain tensor.
    pub fn predict(&self, image: &Tensor) -> Result<PredictionSet> {
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let x = g.constant(image.clone());
        Ok(self.trace(&mut g, &p, x)?.vars().extract(&g))
    }
}

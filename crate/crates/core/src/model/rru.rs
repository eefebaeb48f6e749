use alloc::format;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::ops::ConvGeometry;
use crate::params::{Bound, Conv, ConvBlock, ParamStore};
use crate::rng::SeededRng;

use super::sea::EDGE_CHANNELS;

/// Width of the mixing block before each level's single-channel projection.
pub const RRU_HIDDEN: usize = 64;

/// The four prior sources fed to one re-calibration unit.
#[derive(Debug, Clone, Copy)]
pub struct NgesPriors {
    /// Logits of the next-coarser unit; absent at level 5.
    pub neighbour: Option<Var>,
    /// Global prior logits from the atrous pyramid.
    pub global: Var,
    /// Edge features from the aggregation branch.
    pub edge: Var,
    /// Encoder features `E_i`.
    pub semantic: Var,
}

/// Intermediates of one unit, exposed for inspection.
#[derive(Debug, Clone, Copy)]
pub struct RruOutput {
    /// Prior logits after alignment (and summation below level 5).
    pub combined_logits: Var,
    /// `1 - sigmoid(combined_logits)`, single channel.
    pub reverse: Var,
    /// `reverse` stacked to `E_i`'s channel count.
    pub reverse_stacked: Var,
    pub logits: Var,
}

/// Reversible re-calibration unit for level 3, 4 or 5.
#[derive(Debug, Clone)]
pub struct Rru {
    pub level: usize,
    pub mix: ConvBlock,
    pub head: Conv,
}

impl Rru {
    pub fn new(store: &mut ParamStore, level: usize, semantic_ch: usize, rng: &mut SeededRng) -> Result<Self> {
        if !(3..=5).contains(&level) {
            return Err(Error::InvalidArgument { op: "rru", reason: format!("level must be 3, 4 or 5 (got {level})") });
        }
        let mix = ConvBlock::new(store, &format!("rru{level}.mix"), EDGE_CHANNELS + semantic_ch, RRU_HIDDEN, 1, 1, rng)?;
        let head = Conv::new(store, &format!("rru{level}.head"), RRU_HIDDEN, 1, 1, ConvGeometry::new(1, 0, 1), rng)?;
        Ok(Rru { level, mix, head })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, priors: NgesPriors) -> Result<RruOutput> {
        match (self.level, priors.neighbour) {
            (5, Some(_)) => {
                return Err(Error::InvalidArgument { op: "rru", reason: "level 5 takes no neighbour prior".into() })
            }
            (l, None) if l < 5 => {
                return Err(Error::InvalidArgument { op: "rru", reason: format!("level {l} requires a neighbour prior") })
            }
            _ => {}
        }
        let target = g.shape(priors.semantic);
        let global = g.bilinear_resize(priors.global, target.h, target.w)?;
        let combined_logits = match priors.neighbour {
            None => global,
            Some(n) => {
                let n = g.bilinear_resize(n, target.h, target.w)?;
                g.add(n, global)?
            }
        };
        let s = g.sigmoid(combined_logits);
        let reverse = g.one_minus(s);
        let reverse_stacked = g.stack_channels(reverse, target.c)?;
        let gated = g.mul(reverse_stacked, priors.semantic)?;
        let edge = g.bilinear_resize(priors.edge, target.h, target.w)?;
        let cat = g.concat_channels(&[edge, gated])?;
        let hidden = self.mix.forward(g, p, cat)?;
        let logits = self.head.forward(g, p, hidden)?;
        Ok(RruOutput { combined_logits, reverse, reverse_stacked, logits })
    }
}

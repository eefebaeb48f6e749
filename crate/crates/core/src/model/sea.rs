use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::ops::ConvGeometry;
use crate::params::{Bound, Conv, ConvBlock, ParamStore};
use crate::rng::SeededRng;

/// Channel width of the edge features `F^e`.
pub const EDGE_CHANNELS: usize = 64;

/// Selective edge aggregation over the two stride-4 hierarchies.
#[derive(Debug, Clone)]
pub struct Sea {
    pub reduce1: ConvBlock,
    pub reduce2: ConvBlock,
    pub switch: ConvBlock,
    pub residual1: ConvBlock,
    pub residual2: ConvBlock,
    pub fuse: ConvBlock,
    pub edge_head: Conv,
}

/// Edge features and edge logits.
#[derive(Debug, Clone, Copy)]
pub struct SeaOutput {
    pub features: Var,
    pub edge_logits: Var,
    /// The selective weighted switcher `w^s`.
    pub switch: Var,
}

impl Sea {
    pub fn new(store: &mut ParamStore, c1: usize, c2: usize, rng: &mut SeededRng) -> Result<Self> {
        let ch = EDGE_CHANNELS;
        Ok(Sea {
            reduce1: ConvBlock::new(store, "sea.reduce1", c1, ch, 1, 1, rng)?,
            reduce2: ConvBlock::new(store, "sea.reduce2", c2, ch, 1, 1, rng)?,
            switch: ConvBlock::new(store, "sea.switch", ch, ch, 1, 1, rng)?,
            residual1: ConvBlock::new(store, "sea.residual1", ch, ch, 1, 1, rng)?,
            residual2: ConvBlock::new(store, "sea.residual2", ch, ch, 1, 1, rng)?,
            fuse: ConvBlock::new(store, "sea.fuse", 2 * ch, ch, 1, 1, rng)?,
            edge_head: Conv::new(store, "sea.edge_head", ch, 1, 3, ConvGeometry::same(3, 1), rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, e1: Var, e2: Var) -> Result<SeaOutput> {
        let (s1, s2) = (g.shape(e1), g.shape(e2));
        for (dim, a, b) in [("batch", s1.n, s2.n), ("height", s1.h, s2.h), ("width", s1.w, s2.w)] {
            if a != b {
                return Err(Error::ShapeMismatch { op: "sea", dim, expected: a, found: b });
            }
        }
        let r1 = self.reduce1.forward(g, p, e1)?;
        let r2 = self.reduce2.forward(g, p, e2)?;
        let gated = g.mul(r1, r2)?;
        let switch = self.switch.forward(g, p, gated)?;
        let a1 = g.add(r1, switch)?;
        let a2 = g.add(r2, switch)?;
        let f1 = self.residual1.forward(g, p, a1)?;
        let f2 = self.residual2.forward(g, p, a2)?;
        let cat = g.concat_channels(&[f1, f2])?;
        let features = self.fuse.forward(g, p, cat)?;
        let edge_logits = self.edge_head.forward(g, p, features)?;
        Ok(SeaOutput { features, edge_logits, switch })
    }
}

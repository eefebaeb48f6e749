use alloc::format;
use alloc::vec::Vec;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::ops::ConvGeometry;
use crate::params::{Bound, Conv, ConvBlock, ParamStore};
use crate::rng::SeededRng;

/// Dilation rates of the four atrous branches.
pub const ASPP_DILATIONS: [usize; 4] = [1, 6, 12, 18];

/// Atrous pyramid on `E5` producing the global prior logits `P^c_g`.
///
/// Each branch is a 3x3 block with padding equal to its dilation, so every
/// branch keeps `E5`'s spatial size. `E5` and the four branches are
/// concatenated, mixed by one block and projected to a single channel.
#[derive(Debug, Clone)]
pub struct Aspp {
    pub branches: [ConvBlock; 4],
    pub fuse: ConvBlock,
    pub head: Conv,
}

impl Aspp {
    pub fn new(store: &mut ParamStore, in_ch: usize, mid_ch: usize, rng: &mut SeededRng) -> Result<Self> {
        let mut branches = Vec::with_capacity(4);
        for d in ASPP_DILATIONS {
            branches.push(ConvBlock::new(store, &format!("aspp.branch_d{d}"), in_ch, mid_ch, 1, d, rng)?);
        }
        let branches: [ConvBlock; 4] = branches.try_into().expect("four dilation rates");
        let fuse = ConvBlock::new(store, "aspp.fuse", in_ch + 4 * mid_ch, mid_ch, 1, 1, rng)?;
        let head = Conv::new(store, "aspp.head", mid_ch, 1, 1, ConvGeometry::new(1, 0, 1), rng)?;
        Ok(Aspp { branches, fuse, head })
    }

    /// Branch outputs in [`ASPP_DILATIONS`] order.
    pub fn branch_outputs(&self, g: &mut Graph, p: &Bound, e5: Var) -> Result<[Var; 4]> {
        let mut out = [e5; 4];
        for (slot, branch) in out.iter_mut().zip(&self.branches) {
            *slot = branch.forward(g, p, e5)?;
        }
        Ok(out)
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, e5: Var) -> Result<Var> {
        let [b1, b6, b12, b18] = self.branch_outputs(g, p, e5)?;
        let cat = g.concat_channels(&[e5, b1, b6, b12, b18])?;
        let mixed = self.fuse.forward(g, p, cat)?;
        self.head.forward(g, p, mixed)
    }
}

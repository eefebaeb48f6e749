//! Five-stage strided convolutional encoder (strides 4, 4, 8, 16, 32).

use alloc::format;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{Bound, ConvBlock, ParamStore};
use crate::rng::SeededRng;

/// Spatial stride of each hierarchy relative to the input image.
pub const STRIDES: [usize; 5] = [4, 4, 8, 16, 32];

/// Inputs must be divisible by the coarsest stride.
pub const SIZE_MULTIPLE: usize = 32;

/// Channel widths `c1..c5` of the five hierarchies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub channels: [usize; 5],
}

impl EncoderConfig {
    pub const DESK: EncoderConfig = EncoderConfig { channels: [16, 32, 32, 64, 64] };
    /// Widths of the ResNet-50 stages the encoder stands in for.
    pub const RESNET50: EncoderConfig = EncoderConfig { channels: [64, 256, 512, 1024, 2048] };

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.channels.iter().position(|&c| c == 0) {
            return Err(Error::InvalidArgument { op: "encoder", reason: format!("encoder.c{} must be at least 1", i + 1) });
        }
        Ok(())
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig::DESK
    }
}

/// `E1..E5` recorded on a graph.
#[derive(Debug, Clone, Copy)]
pub struct FeaturePyramid {
    pub levels: [Var; 5],
    pub channels: [usize; 5],
}

impl FeaturePyramid {
    pub const STRIDES: [usize; 5] = STRIDES;

    /// `E_i`, 1-based as in the network description.
    pub fn e(&self, i: usize) -> Var {
        self.levels[i - 1]
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    stem: [ConvBlock; 2],
    e2: ConvBlock,
    stages: [[ConvBlock; 2]; 3],
}

impl Encoder {
    pub fn new(config: EncoderConfig, store: &mut ParamStore, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let [c1, c2, c3, c4, c5] = config.channels;
        let stem = [
            ConvBlock::new(store, "encoder.stem1", 3, c1, 2, 1, rng)?,
            ConvBlock::new(store, "encoder.stem2", c1, c1, 2, 1, rng)?,
        ];
        let e2 = ConvBlock::new(store, "encoder.e2", c1, c2, 1, 1, rng)?;
        let mut stage = |name: &str, cin: usize, cout: usize| -> Result<[ConvBlock; 2]> {
            Ok([
                ConvBlock::new(store, &format!("encoder.{name}.down"), cin, cout, 2, 1, rng)?,
                ConvBlock::new(store, &format!("encoder.{name}.conv"), cout, cout, 1, 1, rng)?,
            ])
        };
        let stages = [stage("e3", c2, c3)?, stage("e4", c3, c4)?, stage("e5", c4, c5)?];
        Ok(Encoder { config, stem, e2, stages })
    }

    pub fn config(&self) -> EncoderConfig {
        self.config
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, image: Var) -> Result<FeaturePyramid> {
        let s = g.shape(image);
        if s.c != 3 {
            return Err(Error::ShapeMismatch { op: "encoder", dim: "input channels", expected: 3, found: s.c });
        }
        if s.h % SIZE_MULTIPLE != 0 || s.w % SIZE_MULTIPLE != 0 || s.h == 0 || s.w == 0 {
            return Err(Error::InvalidShape {
                op: "encoder",
                shape: s,
                reason: format!("height and width must be positive multiples of {SIZE_MULTIPLE}"),
            });
        }
        let x = self.stem[0].forward(g, p, image)?;
        let e1 = self.stem[1].forward(g, p, x)?;
        let e2 = self.e2.forward(g, p, e1)?;
        let mut levels = [e1, e2, e2, e2, e2];
        let mut prev = e2;
        for (k, [down, conv]) in self.stages.iter().enumerate() {
            let x = down.forward(g, p, prev)?;
            prev = conv.forward(g, p, x)?;
            levels[k + 2] = prev;
        }
        Ok(FeaturePyramid { levels, channels: self.config.channels })
    }
}

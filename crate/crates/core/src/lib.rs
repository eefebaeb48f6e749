//! Numerical core of an ERRNet-style camouflaged object detector.
//!
//! Everything here is pure computation on heap buffers: a small NCHW tensor
//! type with a reverse-mode tape ([`graph`]), the encoder and decoder
//! ([`encoder`], [`model`]), the co-supervised objective ([`loss`]), Adam
//! ([`optim`]), the evaluation metrics ([`metrics`]) and a procedural
//! camouflage dataset ([`synth`]). File formats, configuration and the
//! command line live in the `errnet` companion crate.
//!
//! The crate is `no_std` and needs only `alloc`.
#![no_std]

extern crate alloc;

pub mod encoder;
mod error;
pub mod gradcheck;
pub mod graph;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod optim;
pub mod params;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use model::{final_prediction, ErrNet, ErrNetConfig, PredictionSet};
pub use tensor::{Shape, Tensor};

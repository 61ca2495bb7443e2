//! Camera-driven mmWave beam-pair selection.
//!
//! A two-stage pipeline: a small CNN classifies sliding-window crops of a
//! camera image as antenna or background, the top-scoring cells form a
//! bitmap, and a second CNN maps (possibly multi-camera) bitmaps to the best
//! transmit/receive beam pair of a 13-beam azimuth codebook. The crate also
//! carries the synthetic testbed that stands in for the radio and cameras,
//! the link-quality labeler, the CNN to fully-convolutional conversion and
//! the evaluation metrics.
//!
//! Everything here is pure computation over `alloc` collections; file
//! formats, timing and the command line live in the `visbeam` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod codebook;
pub mod crops;
pub mod detector;
pub mod error;
pub mod fcn;
mod math;
pub mod labeler;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scene;
pub mod stage2;
pub mod tensor;

pub use codebook::{BeamPair, Codebook};
pub use error::{Error, Result};
pub use tensor::Tensor;

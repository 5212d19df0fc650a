#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Margin-based adversarial training with progressive ranking stages.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense tensors, a reverse-mode tape, RMSprop and clipping.
//! * [`gan`]: generator/critic networks and the Wasserstein and margin losses.
//! * [`gogan`]: staged training where each stage is ranked against the
//!   frozen one before it.
//! * [`gradcheck`]: finite-difference checks of the tape gradients.
//! * [`theory`]: the score-axis gap geometry and its reduction identities.
//! * [`completion`] and [`metrics`]: latent-space image completion scored by
//!   PSNR and SSIM.
//! * [`data`]: synthetic mixtures, procedural images and file formats.

pub mod completion;
pub mod data;
pub mod error;
pub mod gan;
pub mod gogan;
pub mod gradcheck;
pub mod metrics;
pub mod rng;
pub mod tensor;
pub mod theory;

pub use error::{Error, Result};

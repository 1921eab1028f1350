//! Pose-robust face frontalization with a parsing-guided dual-discriminator
//! GAN, plus the M2FPA probe/gallery protocol and rank-1 evaluation.

pub mod dataset;
mod error;
pub mod evaluator;
pub mod image;
pub mod losses;
pub mod networks;
pub mod parsing;
pub mod toy;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use image::{Image, Plane};

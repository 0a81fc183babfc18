//! Tooling for region referring and grounding with multimodal models.

pub mod cli;
pub mod error;
pub mod featmap;
pub mod geometry;
pub mod grit;
pub mod grounding;
pub mod quantizer;
pub mod sampler;

pub use error::{Error, Result};

//! ReasonPlan at desk scale: simulator, reasoning annotation, a tiny
//! multimodal transformer with latent next-scene prediction, training and
//! closed-loop evaluation.

pub mod annotation;
pub mod closed_loop;
pub mod config;
pub mod error;
pub mod experiment;
pub mod frontend;
pub mod geometry;
pub mod model;
pub mod scene;
pub mod tensor;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};

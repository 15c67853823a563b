//! Regression concept vectors.
//!
//! Fit the direction in a layer's activation space along which a continuous
//! concept measure increases, measure how the network output changes along
//! it, and summarize that into TCAV-style and bidirectional (Br) relevance
//! scores with significance tests over repeated fits.
//!
//! The crate also ships the concept extractors (nucleus morphology and GLCM
//! texture), a small differentiable classifier with synthetic data for
//! end-to-end checks, and the file formats used to exchange activations and
//! gradients with external model exporters.

pub mod error;
pub mod linalg;
pub mod morpho;
pub mod pipeline;
pub mod rcvfit;
pub mod scoring;
pub mod seed;
pub mod stats;
pub mod tensorio;
pub mod toynet;

pub use error::{Error, Result};

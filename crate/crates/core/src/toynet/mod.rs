//! Desk-scale differentiable classifier and synthetic data with a known
//! causal concept.

mod net;
mod synthetic;

pub use net::{logistic, Dense, Forward, ToyNet, TrainOptions, TrainReport};
pub use synthetic::{make_synthetic, ConceptDef, ConceptKind, SyntheticDataset, SyntheticSpec};

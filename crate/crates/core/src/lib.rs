pub mod anomaly;
pub mod autoencoder;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod lstm;
pub mod matrix;
pub mod pipeline;
pub mod synth;
pub mod windowing;

pub use error::{Error, Result};
pub use matrix::Matrix;

pub mod dataset;
pub mod error;
pub mod eval;
pub mod flow;
pub mod ingest;
pub mod nbeatsx;
pub mod pipeline;
pub mod preprocess;
pub mod scalar;
pub mod synth;
pub mod table;
pub mod tuning;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// The model at the precision the pipeline uses.
pub type Model = nbeatsx::NBeatsX<f64>;
/// Single-precision model.
pub type ModelF32 = nbeatsx::NBeatsX<f32>;
pub type Batch = nbeatsx::Batch<f64>;
pub type Gradients = nbeatsx::Gradients<f64>;

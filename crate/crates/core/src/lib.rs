//! Multi-hop label-wise attention for long-document multi-label
//! classification, on a small self-contained autodiff core.

pub mod checkpoint;
pub mod check;
pub mod chunking;
pub mod config;
pub mod data;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod mhlat;
pub mod model;
pub mod tensor;
pub mod train;

pub use config::{ModelConfig, TuningMode};
pub use model::Model;
pub use error::{Error, Result};
pub use exec::Exec;
pub use tensor::{ParamStore, Tape, Tensor, Var};

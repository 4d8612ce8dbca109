//! Data pipeline and evaluation machinery for a multi-task chest X-ray
//! vision-language model: manifest handling, location/segmentation token
//! codecs, output parsing, task dataset derivation, inverse-size mixture
//! scheduling, metrics, and an oracle-driven end-to-end harness.

pub mod codec;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod mixture;
pub mod model;
pub mod parser;
pub mod rng;
pub mod task;

pub use error::{Error, Result};
pub use task::TaskKind;

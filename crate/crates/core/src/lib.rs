//! Leaf disease severity quantification from photographs, plus the
//! evaluation and statistics used to compare quantification methods.

pub mod cluster;
pub mod deteval;
pub mod error;
pub mod grabcut;
pub mod raster;
pub mod severity;
pub mod stats;
pub mod synth;

pub use error::{Error, ErrorInfo, Result};

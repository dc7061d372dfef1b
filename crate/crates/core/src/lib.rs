//! Hierarchical fish tracking: per-fish units of body-part subtrackers,
//! tail-beat analysis on the resulting tracks, a deterministic scene
//! simulator and class-aware evaluation.

pub mod association;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod kalman;
pub mod model;
pub mod pipeline;
pub mod simulator;
pub mod tailbeat;
pub mod tracker;

pub use error::{Error, Result};
pub use model::{BBox, ComponentClass, Detection, GroupedDetection, ModuleSet, Taxonomy, TrackerConfig};

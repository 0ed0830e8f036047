//! Hybrid vector search: top-k nearest-neighbor queries constrained by
//! conjunctive attribute predicates, answered over a workload-aware
//! partitioned IVF layout with batched execution.

pub mod bitmap;
pub mod engine;
pub mod error;
pub mod ivf;
pub mod model;
pub mod qdtree;
pub mod storage;
pub mod workloadgen;

pub use bitmap::Bitmap;
pub use error::{Error, Result};

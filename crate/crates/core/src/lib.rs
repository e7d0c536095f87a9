//! Fair k-nearest-neighbor search under exact multi-attribute count constraints.
//!
//! Records are partitioned by their protected-attribute tuple, each partition
//! gets its own LSH index, and the candidates retrieved from the partitions
//! relevant to a query are post-processed by an exact fair-selection solver.

pub mod baselines;
mod codec;
pub mod dataset;
pub mod distance;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod generate;
pub mod index;
pub mod lsh;
pub mod partition;
pub mod retrieval;
pub mod select;
pub mod types;

pub use dataset::Dataset;
pub use distance::{distance, DistanceKind};
pub use error::{FairKnnError, Result};
pub use exec::Exec;
pub use types::{Attribute, AttributeSchema, FairnessSpec, Query, RecordId, ValueIndex, VectorRecord};

//! Differentially private synthetic data for linear queries over multi-table joins.
//!
//! The pipeline releases a synthetic distribution over the full joined domain by
//! running private multiplicative weights on the join, calibrated by local or
//! residual sensitivity, optionally after partitioning the instance into
//! degree-uniform pieces.

pub mod error;
pub mod experiment;
pub mod hard;
pub mod hierarchical;
pub mod noise;
pub mod pmw;
pub mod queries;
pub mod release;
pub mod relational;
pub mod sensitivity;

pub use error::{Error, Result};
pub use noise::{FixedNoise, NoiseSource, PrivacyParams, RngStream};
pub use relational::{Attribute, Instance, JoinQuery, JoinTable, Relation};
pub use experiment::{run_experiment, ErrorTable, ExperimentSpec, Pipeline};
pub use hierarchical::{is_hierarchical, AttributeForest};

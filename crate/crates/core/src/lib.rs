//! Behavior information aggregation network: a fraud detector that learns
//! from edge behavior (timestamps and interaction types) by moving edge
//! learning onto the line graph and merging the result back onto nodes.

pub mod attention;
pub mod checks;
pub mod data;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod temporal;
pub mod tensor;

pub use error::{BianError, Result};

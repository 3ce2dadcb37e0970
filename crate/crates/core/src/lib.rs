//! Micro-GPT arithmetic lab: datasets, a from-scratch decoder-only transformer,
//! AdamW training, the modular equivalence-class oracle, and mechanistic probes.

pub mod config;
pub mod corpus;
pub mod error;
pub mod model;
pub mod oracle;
pub mod parallel;
pub mod pipeline;
pub mod probes;
pub mod report;
pub mod train;

pub use error::{Error, Result};

//! Surrogate-guided failure search for parameterized simulated systems.
//!
//! A classifier trained on logged `(configuration, failed?)` pairs serves as
//! a cheap fitness function. Search strategies (hill climbing, a genetic
//! algorithm, best-of-M sampling, plain random) use it to propose
//! configurations that are then executed against a system under test, and
//! the resulting failures are compared by count and by clustering-based
//! input/output diversity.

pub mod analysis;
pub mod config;
pub mod dataset;
pub mod executor;
pub mod pipeline;
pub mod search;
pub mod surrogate;

//! Monotonic max-sum GNNs for link prediction and sound Datalog rule
//! extraction.

pub mod capacity;
pub mod datalog;
pub mod encoder;
pub mod extraction;
pub mod gnn;
pub mod kgdata;
pub mod rng;
pub mod scoring;
pub mod soundness;
pub mod training;
pub mod transform;

//! Federated knowledge graph embedding with mutual knowledge distillation
//! and triple-level unlearning.
//!
//! The crate simulates a set of clients, each holding a relation-disjoint
//! shard of a knowledge graph, that jointly learn entity embeddings through
//! a server. Each client keeps a local and a global view of its entities and
//! distills between them; forgetting a set of triples is done with
//! interference and decay phases that reuse the same machinery.

pub mod config;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod federation;
pub mod kg;
pub mod losses;
pub mod partition;
pub mod rng;
pub mod synthetic;
pub mod unlearning;

pub use error::{Error, Result};

//! Conceptual ecology models: validation, trait-based parameter derivation,
//! compilation to an agent-based program, and a deterministic engine.

pub mod canonical;
pub mod model;
pub mod ontology;
pub mod traits;
pub mod compiler;
pub mod engine;
#[cfg(any(test, feature = "ir-oracle"))]
pub mod oracle;

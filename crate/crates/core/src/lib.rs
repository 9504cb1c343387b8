//! Core library for the ModiGen workflow: Modelica corpus preprocessing,
//! property-graph retrieval, LLM-backed generation, simulation-based
//! validation with feedback repair, and pass@k evaluation.

pub mod corpus;
pub mod feedback;
pub mod frontend;
pub mod genclient;
pub mod graph;
pub mod jsonl;
pub mod metrics;
pub mod simbackend;
pub mod validate;

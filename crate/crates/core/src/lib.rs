//! Knowledge-grounded visual question generation: scene graphs, a symbolic
//! program executor, constrained question generation, rotation embeddings,
//! fact retrieval and evaluation.

pub mod cli;
pub mod dataset;
pub mod evaluation;
pub mod executor;
pub mod generator;
pub mod kgembed;
pub mod graph;
pub mod model;
pub mod program;
pub mod retrieval;
pub mod synth;

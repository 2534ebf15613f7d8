//! Bidirectional translation between R2RML documents and two-level OBDA
//! mapping sets (view mappings plus ontology mappings), together with the
//! machinery needed to check that translations preserve the virtual RDF
//! graph: an in-memory SQL engine, a materializer, a conjunctive query
//! unfolder and a small benchmark runner.
//!
//! Module map:
//!
//! - [`rdf`]: RDF terms, graphs and a Turtle reader/writer.
//! - [`r2rml`]: typed R2RML documents extracted from RDF graphs.
//! - [`mapping`]: the view/ontology mapping pair and its JSON interchange format.
//! - [`translate`]: import of R2RML into mapping sets and export back.
//! - [`sqlgen`]: unfolding of view conjunctions into a single SQL query.
//! - [`engine`]: CSV-backed tables and an evaluator for the generated SQL subset.
//! - [`vrdf`]: materialization and conjunctive query answering.
//! - [`sparqlcq`]: the SPARQL fragment used by query sets and its CQ restriction.
//! - [`bench`]: the randomized, sequential timing protocol and its reports.

pub mod bench;
pub mod engine;
pub mod example;
pub mod exec;
pub mod mapping;
pub mod r2rml;
pub mod rdf;
pub mod sparqlcq;
pub mod sqlgen;
pub mod template;
pub mod translate;
pub mod vrdf;

pub use exec::Execution;

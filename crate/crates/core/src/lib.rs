//! Entity-oriented table question answering engine.
//!
//! Given a table and a natural-language question, the pipeline:
//!
//! 1. identifies the table's primary key, attributes and relations by
//!    prompting an LLM ([`schema`]),
//! 2. builds a property graph of entities and attributes ([`graph`]) and
//!    runs an entity-oriented hybrid search: BM25 full-text ranking
//!    ([`lexical`]), embedding cosine similarity ([`vector`]) and a Cypher
//!    subset executed over the graph ([`cypher`]), fused in [`retrieval`],
//! 3. renders the top-K entities as paragraphs and asks the LLM for the
//!    final answer ([`answer`]).
//!
//! All LLM access goes through [`llm`], which ships a scripted
//! deterministic mock provider so the whole pipeline runs byte-reproducibly
//! without network access. [`eval`] contains the benchmark harness and the
//! denotation-accuracy metric.

pub mod answer;
pub mod config;
pub mod cypher;
pub mod eval;
pub mod graph;
pub mod lexical;
pub mod llm;
pub mod retrieval;
pub mod schema;
pub mod table;
pub mod value;
pub mod vector;

pub use config::Config;
pub use retrieval::{Engine, QuestionSession, SearchConfig, TableContext};
pub use table::Table;

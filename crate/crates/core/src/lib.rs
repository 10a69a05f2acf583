//! Robust spoken-language understanding over speech-recognizer word-graphs.
//!
//! The pipeline: [`wordgraph`] normalization, [`lattice_parser`] to find
//! top-category analyses anywhere in the graph, [`search`] for the best
//! sequence of analyses and skipped words, [`semantics`] to turn the chosen
//! analyses into update expressions, and [`eval`] for accuracy metrics.

pub mod eval;
pub mod grammar;
pub mod lattice_parser;
pub mod ngram;
pub mod search;
pub mod semantics;
pub mod term;
pub mod wordgraph;

pub use grammar::{Grammar, LexEntry, Rule};
pub use lattice_parser::{parse_all, parse_string, ParsedItem};
pub use term::Term;
pub use wordgraph::{normalize, WordGraph};

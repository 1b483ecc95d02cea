//! Quasi-synchronous context-free grammars over a source tree: rule tables
//! and their low-rank factorizations, chart inference, structural
//! regularizers, a brute-force oracle, and benchmarking.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc;
pub mod bench;
pub mod error;
pub mod fixtures;
pub mod grammar;
pub mod inference;
pub mod logspace;
pub mod oracle;
pub mod regularizers;
pub mod tree;
pub mod verify;

pub use error::{Error, Result};
pub use tree::{parse_bracketed, random_binary_tree, Distance, SourceTree, Span};

//! Chart algorithms over `(symbol, source node)` pairs.
//!
//! Width-1 spans hold preterminal values and wider spans hold nonterminal
//! values, so a length-1 target has no derivation (the start rule only
//! reaches nonterminals). Spans are visited by width, then start index.
//!
//! The specialized passes keep every chart cell as a [`ScaledVec`]: a log
//! scale plus linear values in `[0, 1]`. Contractions then run as plain
//! multiply-adds with the per-cell maxima factored out, which is a
//! logsumexp with max subtraction applied to whole cells instead of single
//! terms.
//!
//! [`ScaledVec`]: crate::logspace::ScaledVec

mod chart;
mod e_model;
mod generic;
mod outside;
mod p_model;
mod sample;
pub mod semiring;
mod vanilla;

pub use chart::SpanIndex;
pub use e_model::{inside_e_naive, inside_e_rank, inside_e_rank_with, EWeights, RankMode};
pub use generic::{inside_generic, GrammarRef};
pub use outside::{expected_rule_counts, InsideOutside, RuleCounts};
pub use p_model::{inside_p, PWeights};
pub use sample::{sample_target_tree, sample_target_trees, NodeLabel, PosteriorSampler, SymbolKind, TargetTree};
pub use semiring::{CountingSemiring, EntropySemiring, LogSemiring, MaxSemiring, RealSemiring, Semiring};
pub use vanilla::{inside_vanilla, DenseWeights};

pub(crate) use vanilla::vanilla_log_chart;

use crate::error::{Error, Result};
use crate::grammar::Dims;
use crate::tree::SourceTree;

pub(crate) fn check_instance(d: &Dims, tree: &SourceTree, target: &[usize]) -> Result<()> {
    if d.nodes != tree.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "grammar has {} source nodes, tree has {}",
            d.nodes,
            tree.num_nodes()
        )));
    }
    if target.is_empty() {
        return Err(Error::EmptyTarget);
    }
    if let Some((position, &token)) = target.iter().enumerate().find(|(_, &w)| w >= d.vocab) {
        return Err(Error::TokenOutOfRange { token, position, vocab: d.vocab });
    }
    Ok(())
}

/// Preterminal log values for the token at one position, in child-block
/// order `[D][α]`.
pub(crate) fn terminal_logs(d: &Dims, terminal: &[f64], word: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(d.pt * d.nodes);
    for dd in 0..d.pt {
        for al in 0..d.nodes {
            v.push(terminal[d.terminal(dd, al, word)]);
        }
    }
    v
}

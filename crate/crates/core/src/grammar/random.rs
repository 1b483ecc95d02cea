//! Grammars with i.i.d. Gaussian logits, softmax-normalized per left-hand
//! side. Richer than the embedding parameterization (no low-rank structure),
//! which makes them the default workload for equivalence checks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{FactorTablesE, FactorTablesP, QcfgRuleTable, SymbolConfig, UnaryRules};
use crate::error::Result;
use crate::logspace::log_normalize;

fn logits(rng: &mut ChaCha8Rng, len: usize, row: usize, scale: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng)).collect();
    v.chunks_mut(row).for_each(log_normalize);
    v
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn random_unary(cfg: &SymbolConfig, nodes: usize, seed: u64, scale: f64) -> UnaryRules {
    let d = cfg.dims(nodes);
    let mut r = rng(seed, 1);
    UnaryRules {
        start: logits(&mut r, d.start_len(), d.start_len(), scale),
        terminal: logits(&mut r, d.terminal_len(), d.vocab, scale),
    }
}

pub fn random_dense(cfg: &SymbolConfig, nodes: usize, seed: u64, scale: f64) -> Result<QcfgRuleTable> {
    let d = cfg.dims(nodes);
    let c2 = d.children() * d.children();
    let binary = logits(&mut rng(seed, 2), d.binary_len(), c2, scale);
    QcfgRuleTable::new(*cfg, nodes, random_unary(cfg, nodes, seed, scale), binary)
}

pub fn random_e(cfg: &SymbolConfig, nodes: usize, seed: u64, scale: f64) -> Result<FactorTablesE> {
    cfg.require_ranks()?;
    let d = cfg.dims(nodes);
    let mut r = rng(seed, 3);
    let head = logits(&mut r, d.parents() * d.rank, d.rank, scale);
    let left = logits(&mut r, d.rank * d.children(), d.children(), scale);
    let right = logits(&mut r, d.rank * d.children(), d.children(), scale);
    FactorTablesE::new(*cfg, nodes, head, left, right)
}

pub fn random_p(cfg: &SymbolConfig, nodes: usize, seed: u64, scale: f64) -> Result<FactorTablesP> {
    cfg.require_ranks()?;
    let d = cfg.dims(nodes);
    let n = nodes;
    let mut r = rng(seed, 4);
    let head = logits(&mut r, d.parents() * d.rank, d.rank, scale);
    let triple = logits(&mut r, d.rank * n * n * n, n * n, scale);
    let left_sym = logits(&mut r, d.rank * n * d.syms(), d.syms(), scale);
    let right_sym = logits(&mut r, d.rank * n * d.syms(), d.syms(), scale);
    FactorTablesP::new(*cfg, nodes, head, triple, left_sym, right_sym)
}

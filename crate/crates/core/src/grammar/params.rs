//! Additive-embedding parameterization: embeddings of the terms on each side
//! of a rule are summed, the two sums are scored by an inner product, and the
//! scores are softmax-normalized per left-hand side.
//!
//! The feed-forward map from features to embeddings is the identity here, so
//! the embeddings are the parameters themselves.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{check_len, FactorTablesE, FactorTablesP, QcfgRuleTable, SymbolConfig, UnaryRules};
use crate::error::{Error, Result};
use crate::logspace::{log_normalize, log_sum_exp};
use crate::tree::SourceTree;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingParams {
    pub dim: usize,
    /// `[A][dim]`
    pub nonterminals: Vec<f64>,
    /// `[D][dim]`
    pub preterminals: Vec<f64>,
    /// Start symbol.
    pub start: Vec<f64>,
    /// Rank symbols as right-hand side of `A[α] -> R` and left-hand side of
    /// the alignment triple.
    pub rank_head: Vec<f64>,
    /// Rank symbols as left-hand side of the left-child factor.
    pub rank_left: Vec<f64>,
    /// Rank symbols as left-hand side of the right-child factor.
    pub rank_right: Vec<f64>,
    /// One feature vector per source node.
    pub nodes: Vec<f64>,
    /// `[w][dim]`
    pub words: Vec<f64>,
    pub temperature: f64,
}

impl EmbeddingParams {
    pub fn zeros(cfg: &SymbolConfig, num_nodes: usize, dim: usize) -> Self {
        EmbeddingParams {
            dim,
            nonterminals: vec![0.0; cfg.num_nonterminals * dim],
            preterminals: vec![0.0; cfg.num_preterminals * dim],
            start: vec![0.0; dim],
            rank_head: vec![0.0; cfg.num_ranks * dim],
            rank_left: vec![0.0; cfg.num_ranks * dim],
            rank_right: vec![0.0; cfg.num_ranks * dim],
            nodes: vec![0.0; num_nodes * dim],
            words: vec![0.0; cfg.vocab_size * dim],
            temperature: 1.0,
        }
    }

    /// Gaussian initialization with standard deviation `scale`; identical
    /// `(cfg, num_nodes, dim, seed, scale)` give bitwise-identical values.
    pub fn random(cfg: &SymbolConfig, num_nodes: usize, dim: usize, seed: u64, scale: f64) -> Self {
        let mut p = Self::zeros(cfg, num_nodes, dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, scale.abs()).expect("finite scale");
        for v in [
            &mut p.nonterminals,
            &mut p.preterminals,
            &mut p.start,
            &mut p.rank_head,
            &mut p.rank_left,
            &mut p.rank_right,
            &mut p.nodes,
            &mut p.words,
        ] {
            v.iter_mut().for_each(|x| *x = normal.sample(&mut rng));
        }
        p
    }

    fn check(&self, cfg: &SymbolConfig, num_nodes: usize) -> Result<()> {
        cfg.validate()?;
        let d = self.dim;
        if d == 0 {
            return Err(Error::DimensionMismatch("embedding_dim must be >= 1".into()));
        }
        check_len("nonterminal embeddings", self.nonterminals.len(), cfg.num_nonterminals * d)?;
        check_len("preterminal embeddings", self.preterminals.len(), cfg.num_preterminals * d)?;
        check_len("start embedding", self.start.len(), d)?;
        check_len("rank embeddings", self.rank_head.len(), cfg.num_ranks * d)?;
        check_len("rank embeddings", self.rank_left.len(), cfg.num_ranks * d)?;
        check_len("rank embeddings", self.rank_right.len(), cfg.num_ranks * d)?;
        check_len("node features", self.nodes.len(), num_nodes * d)?;
        check_len("word embeddings", self.words.len(), cfg.vocab_size * d)?;
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidConfig("temperature must be positive".into()));
        }
        Ok(())
    }

    fn row<'a>(&self, table: &'a [f64], i: usize) -> &'a [f64] {
        &table[i * self.dim..(i + 1) * self.dim]
    }

    /// Embedding of child symbol `b` (nonterminals first, then preterminals).
    fn symbol(&self, nt: usize, b: usize) -> &[f64] {
        if b < nt {
            self.row(&self.nonterminals, b)
        } else {
            self.row(&self.preterminals, b - nt)
        }
    }

    fn node(&self, a: usize) -> &[f64] {
        self.row(&self.nodes, a)
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn ip(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Writes `log softmax(s[j] + s[k])` over all `(j, k)` pairs into `out`.
fn pair_log_softmax(s: &[f64], out: &mut [f64]) {
    let z = 2.0 * log_sum_exp(s);
    let n = s.len();
    for j in 0..n {
        for k in 0..n {
            out[j * n + k] = s[j] + s[k] - z;
        }
    }
}

fn check_tree(cfg: &SymbolConfig, tree: &SourceTree, params: &EmbeddingParams) -> Result<()> {
    params.check(cfg, tree.num_nodes())
}

/// Start rules `S -> A[α]` and terminal rules `D[α] -> w`.
pub fn parameterize_unary(cfg: &SymbolConfig, tree: &SourceTree, params: &EmbeddingParams) -> Result<UnaryRules> {
    check_tree(cfg, tree, params)?;
    let n = tree.num_nodes();
    let d = cfg.dims(n);
    let t = params.temperature;

    let mut start = vec![0.0; d.parents()];
    for a in 0..d.nt {
        for al in 0..n {
            let rhs = add(params.symbol(d.nt, a), params.node(al));
            start[d.parent(a, al)] = ip(&params.start, &rhs) / t;
        }
    }
    log_normalize(&mut start);

    let mut terminal = vec![0.0; d.terminal_len()];
    for dd in 0..d.pt {
        for al in 0..n {
            let lhs = add(params.symbol(d.nt, d.nt + dd), params.node(al));
            let base = d.terminal(dd, al, 0);
            let row = &mut terminal[base..base + d.vocab];
            for (w, x) in row.iter_mut().enumerate() {
                *x = ip(&lhs, params.row(&params.words, w)) / t;
            }
            log_normalize(row);
        }
    }
    Ok(UnaryRules { start, terminal })
}

/// Dense vanilla table: `p(A[αi] -> B[αj] C[αk]) ∝ exp((e_A+e_αi)·(e_B+e_αj+e_C+e_αk))`.
pub fn parameterize_dense(cfg: &SymbolConfig, tree: &SourceTree, params: &EmbeddingParams) -> Result<QcfgRuleTable> {
    let unary = parameterize_unary(cfg, tree, params)?;
    let n = tree.num_nodes();
    let d = cfg.dims(n);
    let c = d.children();
    let t = params.temperature;
    let mut binary = vec![0.0; d.binary_len()];
    let mut s = vec![0.0; c];
    for a in 0..d.nt {
        for ai in 0..n {
            let lhs = add(params.symbol(d.nt, a), params.node(ai));
            for b in 0..d.syms() {
                for aj in 0..n {
                    s[d.child(b, aj)] = (ip(&lhs, params.symbol(d.nt, b)) + ip(&lhs, params.node(aj))) / t;
                }
            }
            let p = d.parent(a, ai);
            pair_log_softmax(&s, &mut binary[p * c * c..(p + 1) * c * c]);
        }
    }
    QcfgRuleTable::new(*cfg, n, unary, binary)
}

fn rank_rows(lhs_of: impl Fn(usize) -> Vec<f64>, rows: usize, rhs: &[Vec<f64>], t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * rhs.len());
    for i in 0..rows {
        let lhs = lhs_of(i);
        let start = out.len();
        out.extend(rhs.iter().map(|r| ip(&lhs, r) / t));
        log_normalize(&mut out[start..]);
    }
    out
}

fn head_factor(cfg: &SymbolConfig, n: usize, params: &EmbeddingParams) -> Vec<f64> {
    let d = cfg.dims(n);
    let ranks: Vec<Vec<f64>> = (0..d.rank).map(|r| params.row(&params.rank_head, r).to_vec()).collect();
    rank_rows(
        |p| add(params.symbol(d.nt, p / n), params.node(p % n)),
        d.parents(),
        &ranks,
        params.temperature,
    )
}

/// E-model factors scored with the same additive recipe.
pub fn parameterize_e(cfg: &SymbolConfig, tree: &SourceTree, params: &EmbeddingParams) -> Result<FactorTablesE> {
    cfg.require_ranks()?;
    check_tree(cfg, tree, params)?;
    let n = tree.num_nodes();
    let d = cfg.dims(n);
    let children: Vec<Vec<f64>> = (0..d.children())
        .map(|ch| add(params.symbol(d.nt, ch / n), params.node(ch % n)))
        .collect();
    let head = head_factor(cfg, n, params);
    let left = rank_rows(|r| params.row(&params.rank_left, r).to_vec(), d.rank, &children, params.temperature);
    let right = rank_rows(|r| params.row(&params.rank_right, r).to_vec(), d.rank, &children, params.temperature);
    FactorTablesE::new(*cfg, n, head, left, right)
}

/// P-model factors; the triple scores `(e_R + e_αi)·(e_αj + e_αk)`.
pub fn parameterize_p(cfg: &SymbolConfig, tree: &SourceTree, params: &EmbeddingParams) -> Result<FactorTablesP> {
    cfg.require_ranks()?;
    check_tree(cfg, tree, params)?;
    let n = tree.num_nodes();
    let d = cfg.dims(n);
    let t = params.temperature;
    let head = head_factor(cfg, n, params);

    let mut triple = vec![0.0; d.rank * n * n * n];
    let mut s = vec![0.0; n];
    for r in 0..d.rank {
        for ai in 0..n {
            let lhs = add(params.row(&params.rank_head, r), params.node(ai));
            for (aj, x) in s.iter_mut().enumerate() {
                *x = ip(&lhs, params.node(aj)) / t;
            }
            let base = (r * n + ai) * n * n;
            pair_log_softmax(&s, &mut triple[base..base + n * n]);
        }
    }

    let syms: Vec<Vec<f64>> = (0..d.syms()).map(|b| params.symbol(d.nt, b).to_vec()).collect();
    let left_sym = rank_rows(
        |row| add(params.row(&params.rank_left, row / n), params.node(row % n)),
        d.rank * n,
        &syms,
        t,
    );
    let right_sym = rank_rows(
        |row| add(params.row(&params.rank_right, row / n), params.node(row % n)),
        d.rank * n,
        &syms,
        t,
    );
    FactorTablesP::new(*cfg, n, head, triple, left_sym, right_sym)
}

//! Rule-weight tables for a QCFG anchored on one source tree.
//!
//! Three representations of the binary rules are kept: the dense vanilla
//! tensor, the E-model factors (head / left / right through rank symbols) and
//! the P-model factors (head, alignment triple, and per-node symbol
//! emissions). Start and terminal rules are always dense and shared between
//! representations ([`UnaryRules`]).
//!
//! Child symbols are fused `(symbol, node)` pairs: nonterminals occupy symbol
//! ids `0..nt`, preterminals `nt..nt+pt`, and the fused index is
//! `symbol * nodes + node`.

pub mod io;
pub mod mask;
pub mod params;
pub mod random;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace::{log_normalize, log_sum_exp, NEG_INF};

pub use mask::{apply_basic_alignment_mask, apply_hierarchy_mask, mask_triple, HierarchyMode};
pub use params::{parameterize_dense, parameterize_e, parameterize_p, parameterize_unary, EmbeddingParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolConfig {
    pub num_nonterminals: usize,
    pub num_preterminals: usize,
    pub vocab_size: usize,
    /// Rank symbols; 0 for dense-only grammars.
    pub num_ranks: usize,
}

impl SymbolConfig {
    pub fn new(nt: usize, pt: usize, vocab: usize, rank: usize) -> Self {
        SymbolConfig { num_nonterminals: nt, num_preterminals: pt, vocab_size: vocab, num_ranks: rank }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nonterminals == 0 || self.num_preterminals == 0 || self.vocab_size == 0 {
            return Err(Error::InvalidConfig(format!(
                "nonterminals, preterminals and vocabulary must be >= 1 (got {:?})",
                self
            )));
        }
        Ok(())
    }

    pub(crate) fn require_ranks(&self) -> Result<()> {
        self.validate()?;
        if self.num_ranks == 0 {
            return Err(Error::InvalidConfig("decomposed model needs num_ranks >= 1".into()));
        }
        Ok(())
    }

    pub fn dims(&self, nodes: usize) -> Dims {
        Dims {
            nt: self.num_nonterminals,
            pt: self.num_preterminals,
            vocab: self.vocab_size,
            rank: self.num_ranks,
            nodes,
        }
    }
}

/// Index arithmetic for every table layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub nt: usize,
    pub pt: usize,
    pub vocab: usize,
    pub rank: usize,
    pub nodes: usize,
}

impl Dims {
    /// `|NT| + |PT|`
    #[inline]
    pub fn syms(&self) -> usize {
        self.nt + self.pt
    }

    /// Number of fused `(NT, node)` parents.
    #[inline]
    pub fn parents(&self) -> usize {
        self.nt * self.nodes
    }

    /// Number of fused `(NT ∪ PT, node)` children.
    #[inline]
    pub fn children(&self) -> usize {
        self.syms() * self.nodes
    }

    #[inline]
    pub fn parent(&self, a: usize, node: usize) -> usize {
        a * self.nodes + node
    }

    #[inline]
    pub fn child(&self, sym: usize, node: usize) -> usize {
        sym * self.nodes + node
    }

    /// Child index of preterminal `d` (0-based among preterminals).
    #[inline]
    pub fn pt_child(&self, d: usize, node: usize) -> usize {
        (self.nt + d) * self.nodes + node
    }

    #[inline]
    pub fn binary(&self, parent: usize, left: usize, right: usize) -> usize {
        let c = self.children();
        (parent * c + left) * c + right
    }

    #[inline]
    pub fn terminal(&self, d: usize, node: usize, word: usize) -> usize {
        (d * self.nodes + node) * self.vocab + word
    }

    pub fn binary_len(&self) -> usize {
        self.parents() * self.children() * self.children()
    }

    pub fn start_len(&self) -> usize {
        self.parents()
    }

    pub fn terminal_len(&self) -> usize {
        self.pt * self.nodes * self.vocab
    }

    /// Range of child indices holding nonterminals (`true`) or preterminals.
    #[inline]
    pub fn child_block(&self, nonterminal: bool) -> std::ops::Range<usize> {
        if nonterminal {
            0..self.nt * self.nodes
        } else {
            self.nt * self.nodes..self.children()
        }
    }
}

/// `S -> A[α]` and `D[α] -> w` rules, in log space.
#[derive(Clone, Debug, PartialEq)]
pub struct UnaryRules {
    /// `[A][α]`, normalized jointly (the start symbol is the only LHS).
    pub start: Vec<f64>,
    /// `[D][α][w]`, normalized per `(D, α)`.
    pub terminal: Vec<f64>,
}

/// Dense vanilla QCFG table over one source tree.
#[derive(Clone, Debug, PartialEq)]
pub struct QcfgRuleTable {
    pub cfg: SymbolConfig,
    pub nodes: usize,
    pub unary: UnaryRules,
    /// `[A][αi][B][αj][C][αk]` row-major, `B, C ∈ NT ∪ PT`.
    pub binary: Vec<f64>,
    /// False once a mask or reweighting has removed mass without renormalizing.
    pub normalized: bool,
}

impl QcfgRuleTable {
    pub fn new(cfg: SymbolConfig, nodes: usize, unary: UnaryRules, binary: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dims(nodes);
        check_len("start", unary.start.len(), d.start_len())?;
        check_len("terminal", unary.terminal.len(), d.terminal_len())?;
        check_len("binary", binary.len(), d.binary_len())?;
        Ok(QcfgRuleTable { cfg, nodes, unary, binary, normalized: true })
    }

    pub fn dims(&self) -> Dims {
        self.cfg.dims(self.nodes)
    }

    /// Largest |logsumexp - 0| over every left-hand side that still has mass.
    pub fn normalization_error(&self) -> f64 {
        let d = self.dims();
        let c2 = d.children() * d.children();
        let mut worst = lse_dev(&self.unary.start);
        for row in self.binary.chunks(c2) {
            worst = worst.max(lse_dev(row));
        }
        for row in self.unary.terminal.chunks(d.vocab) {
            worst = worst.max(lse_dev(row));
        }
        worst
    }

    /// Renormalizes every left-hand side that still has finite mass.
    pub fn renormalize(&mut self) {
        let d = self.dims();
        let c2 = d.children() * d.children();
        log_normalize(&mut self.unary.start);
        self.binary.chunks_mut(c2).for_each(log_normalize);
        self.unary.terminal.chunks_mut(d.vocab).for_each(log_normalize);
        self.normalized = true;
    }

    /// Multiplies every rule that aligns a new target node to `node` by
    /// `exp(log_boost)` per such alignment (start rules and binary children),
    /// then renormalizes. Used to build instances whose posterior piles
    /// alignments onto one source node.
    pub fn boost_alignment(&mut self, node: usize, log_boost: f64) {
        let d = self.dims();
        for x in 0..d.parents() {
            for l in 0..d.children() {
                for r in 0..d.children() {
                    let hits = (l % d.nodes == node) as u32 + (r % d.nodes == node) as u32;
                    if hits > 0 {
                        self.binary[d.binary(x, l, r)] += log_boost * hits as f64;
                    }
                }
            }
        }
        for a in 0..d.nt {
            self.unary.start[d.parent(a, node)] += log_boost;
        }
        self.renormalize();
    }
}

fn lse_dev(row: &[f64]) -> f64 {
    let z = log_sum_exp(row);
    if z == NEG_INF {
        0.0
    } else {
        z.abs()
    }
}

pub(crate) fn check_unary(d: &Dims, unary: &UnaryRules) -> Result<()> {
    check_len("start", unary.start.len(), d.start_len())?;
    check_len("terminal", unary.terminal.len(), d.terminal_len())
}

pub(crate) fn check_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::DimensionMismatch(format!("{name} table has {got} entries, expected {want}")));
    }
    Ok(())
}

/// E-model factors: `A[αi] -> R`, `R -> B[αj]`, `R -> C[αk]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorTablesE {
    pub cfg: SymbolConfig,
    pub nodes: usize,
    /// `[A][αi][R]`
    pub head: Vec<f64>,
    /// `[R][B][αj]`
    pub left: Vec<f64>,
    /// `[R][C][αk]`
    pub right: Vec<f64>,
}

impl FactorTablesE {
    pub fn new(cfg: SymbolConfig, nodes: usize, head: Vec<f64>, left: Vec<f64>, right: Vec<f64>) -> Result<Self> {
        cfg.require_ranks()?;
        let d = cfg.dims(nodes);
        check_len("head", head.len(), d.parents() * d.rank)?;
        check_len("left", left.len(), d.rank * d.children())?;
        check_len("right", right.len(), d.rank * d.children())?;
        Ok(FactorTablesE { cfg, nodes, head, left, right })
    }

    pub fn dims(&self) -> Dims {
        self.cfg.dims(self.nodes)
    }

    pub fn normalization_error(&self) -> f64 {
        let d = self.dims();
        self.head
            .chunks(d.rank)
            .chain(self.left.chunks(d.children()))
            .chain(self.right.chunks(d.children()))
            .map(lse_dev)
            .fold(0.0, f64::max)
    }
}

/// P-model factors: `A[αi] -> R`, `R, αi -> αj, αk`, `R, αj -> B`, `R, αk -> C`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorTablesP {
    pub cfg: SymbolConfig,
    pub nodes: usize,
    /// `[A][αi][R]`
    pub head: Vec<f64>,
    /// `[R][αi][αj][αk]`
    pub triple: Vec<f64>,
    /// `[R][αj][B]`
    pub left_sym: Vec<f64>,
    /// `[R][αk][C]`
    pub right_sym: Vec<f64>,
}

impl FactorTablesP {
    pub fn new(
        cfg: SymbolConfig,
        nodes: usize,
        head: Vec<f64>,
        triple: Vec<f64>,
        left_sym: Vec<f64>,
        right_sym: Vec<f64>,
    ) -> Result<Self> {
        cfg.require_ranks()?;
        let d = cfg.dims(nodes);
        check_len("head", head.len(), d.parents() * d.rank)?;
        check_len("triple", triple.len(), d.rank * nodes * nodes * nodes)?;
        check_len("left_sym", left_sym.len(), d.rank * nodes * d.syms())?;
        check_len("right_sym", right_sym.len(), d.rank * nodes * d.syms())?;
        Ok(FactorTablesP { cfg, nodes, head, triple, left_sym, right_sym })
    }

    pub fn dims(&self) -> Dims {
        self.cfg.dims(self.nodes)
    }

    pub fn normalization_error(&self) -> f64 {
        let d = self.dims();
        let n = self.nodes;
        self.head
            .chunks(d.rank)
            .chain(self.triple.chunks(n * n))
            .chain(self.left_sym.chunks(d.syms()))
            .chain(self.right_sym.chunks(d.syms()))
            .map(lse_dev)
            .fold(0.0, f64::max)
    }
}

/// Dense binary weights `log Σ_R head + left + right`.
pub fn compose_e(f: &FactorTablesE, unary: UnaryRules) -> Result<QcfgRuleTable> {
    let d = f.dims();
    let (c, r) = (d.children(), d.rank);
    let mut binary = vec![NEG_INF; d.binary_len()];
    let mut terms = vec![0.0; r];
    for p in 0..d.parents() {
        let head = &f.head[p * r..(p + 1) * r];
        for l in 0..c {
            for rr in 0..c {
                for (k, t) in terms.iter_mut().enumerate() {
                    *t = head[k] + f.left[k * c + l] + f.right[k * c + rr];
                }
                binary[d.binary(p, l, rr)] = log_sum_exp(&terms);
            }
        }
    }
    QcfgRuleTable::new(f.cfg, f.nodes, unary, binary)
}

/// Dense binary weights `log Σ_R head + triple + left_sym + right_sym`.
pub fn compose_p(f: &FactorTablesP, unary: UnaryRules) -> Result<QcfgRuleTable> {
    let d = f.dims();
    let (n, m, r) = (d.nodes, d.syms(), d.rank);
    let mut binary = vec![NEG_INF; d.binary_len()];
    let mut terms = vec![0.0; r];
    for a in 0..d.nt {
        for ai in 0..n {
            let p = d.parent(a, ai);
            for b in 0..m {
                for aj in 0..n {
                    for cc in 0..m {
                        for ak in 0..n {
                            for (k, t) in terms.iter_mut().enumerate() {
                                *t = f.head[p * r + k]
                                    + f.triple[((k * n + ai) * n + aj) * n + ak]
                                    + f.left_sym[(k * n + aj) * m + b]
                                    + f.right_sym[(k * n + ak) * m + cc];
                            }
                            binary[d.binary(p, d.child(b, aj), d.child(cc, ak))] = log_sum_exp(&terms);
                        }
                    }
                }
            }
        }
    }
    QcfgRuleTable::new(f.cfg, f.nodes, unary, binary)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Vanilla,
    E,
    P,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(ModelKind::Vanilla),
            "e" => Ok(ModelKind::E),
            "p" => Ok(ModelKind::P),
            other => Err(Error::InvalidConfig(format!("unknown model '{other}'"))),
        }
    }
}

/// Number of binary rules (vanilla) or decomposed rules (E / P) for source
/// size `s`:
///
/// * vanilla: `|NT| (|NT|+|PT|)² s³`
/// * E: `(3|NT| + 2|PT|) |R| s`
/// * P: `|R| s³ + (3|NT| + 2|PT|) |R| s`
///
/// Passing the node count of a concrete tree as `s` gives the exact number of
/// stored binary-factor entries.
pub fn count_rules(cfg: &SymbolConfig, s: u64, model: ModelKind) -> u128 {
    let nt = cfg.num_nonterminals as u128;
    let pt = cfg.num_preterminals as u128;
    let r = cfg.num_ranks as u128;
    let s = s as u128;
    match model {
        ModelKind::Vanilla => nt * (nt + pt) * (nt + pt) * s * s * s,
        ModelKind::E => (3 * nt + 2 * pt) * r * s,
        ModelKind::P => r * s * s * s + (3 * nt + 2 * pt) * r * s,
    }
}

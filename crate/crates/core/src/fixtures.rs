//! Small hand-built and seeded instances shared by tests, the verifier and
//! the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::inference::{inside_generic, CountingSemiring, GrammarRef};
use crate::oracle::{enumerate, Derivation, OracleLimits};
use crate::grammar::random::random_dense;
use crate::grammar::{
    apply_basic_alignment_mask, apply_hierarchy_mask, HierarchyMode, QcfgRuleTable, SymbolConfig, UnaryRules,
};
use crate::logspace::NEG_INF;
use crate::tree::{parse_bracketed, random_binary_tree, SourceTree};

#[derive(Clone, Debug)]
pub struct Instance {
    pub tree: SourceTree,
    pub table: QcfgRuleTable,
    pub target: Vec<usize>,
}

/// Which masks a generated instance carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskLevel {
    None,
    Basic,
    BasicDescendant,
    BasicDirectChild,
}

impl MaskLevel {
    pub const ALL: [MaskLevel; 4] =
        [MaskLevel::None, MaskLevel::Basic, MaskLevel::BasicDescendant, MaskLevel::BasicDirectChild];

    pub fn apply(self, table: &QcfgRuleTable, tree: &SourceTree) -> Result<QcfgRuleTable> {
        let basic = || apply_basic_alignment_mask(table, tree);
        match self {
            MaskLevel::None => Ok(table.clone()),
            MaskLevel::Basic => basic(),
            MaskLevel::BasicDescendant => apply_hierarchy_mask(&basic()?, tree, HierarchyMode::Descendant),
            MaskLevel::BasicDirectChild => apply_hierarchy_mask(&basic()?, tree, HierarchyMode::DirectChild),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TinyShape {
    pub leaves: usize,
    pub target_len: usize,
    pub nt: usize,
    pub pt: usize,
    pub vocab: usize,
}

impl TinyShape {
    /// Uniform draw from `S, T ∈ {2,3,4}`, `|NT|, |PT| ∈ {1,2,3}`, vocab 3.
    pub fn draw(rng: &mut impl Rng) -> Self {
        TinyShape {
            leaves: rng.random_range(2..=4),
            target_len: rng.random_range(2..=4),
            nt: rng.random_range(1..=3),
            pt: rng.random_range(1..=3),
            vocab: 3,
        }
    }

    pub fn cfg(&self, rank: usize) -> SymbolConfig {
        SymbolConfig::new(self.nt, self.pt, self.vocab, rank)
    }
}

pub fn random_tokens(len: usize, vocab: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a7a_5151);
    (0..len).map(|_| rng.random_range(0..vocab)).collect()
}

/// Random tree, random dense grammar and random target for `shape`.
pub fn random_instance(shape: TinyShape, mask: MaskLevel, seed: u64) -> Result<Instance> {
    let tree = random_binary_tree(shape.leaves, seed)?;
    let table = random_dense(&shape.cfg(0), tree.num_nodes(), seed, 1.0)?;
    let table = mask.apply(&table, &tree)?;
    Ok(Instance { target: random_tokens(shape.target_len, shape.vocab, seed), tree, table })
}

/// A random instance small enough to enumerate. Starting from `mask`, the
/// mask is tightened until the derivation count fits `limits`; with
/// `need_derivation`, targets without any derivation are redrawn. Returns
/// `None` when no attempt qualifies.
pub fn enumerable_instance(
    shape: TinyShape,
    mask: MaskLevel,
    seed: u64,
    limits: &OracleLimits,
    need_derivation: bool,
) -> Result<Option<(Instance, Vec<Derivation>, MaskLevel)>> {
    let first = MaskLevel::ALL.iter().position(|&m| m == mask).unwrap_or(0);
    for attempt in 0..8u64 {
        let mut inst = random_instance(shape, MaskLevel::None, seed)?;
        if attempt > 0 {
            inst.target = random_tokens(shape.target_len, shape.vocab, seed.wrapping_add(attempt << 32));
        }
        for &level in &MaskLevel::ALL[first..] {
            let table = level.apply(&inst.table, &inst.tree)?;
            let count = inside_generic::<CountingSemiring>(GrammarRef::Dense(&table), &inst.tree, &inst.target)?;
            if count > limits.max_derivations as u128 {
                continue;
            }
            if count == 0 && need_derivation {
                break;
            }
            let derivs = enumerate(&table, &inst.tree, &inst.target, limits)?;
            return Ok(Some((Instance { table, ..inst }, derivs, level)));
        }
    }
    Ok(None)
}

/// An enumerable instance with at least one and at most `max_derivations`
/// derivations, found by walking sub-seeds of `seed` with masks starting at
/// basic alignment.
pub fn small_support_instance(seed: u64, max_derivations: usize) -> Result<(Instance, Vec<Derivation>)> {
    let limits = OracleLimits { max_derivations, ..OracleLimits::default() };
    for sub in 0..256u64 {
        let s = seed.wrapping_mul(1_000_003).wrapping_add(sub);
        let shape = TinyShape::draw(&mut ChaCha8Rng::seed_from_u64(s ^ 0x5a5a));
        if let Some((inst, derivs, _)) = enumerable_instance(shape, MaskLevel::Basic, s, &limits, true)? {
            return Ok((inst, derivs));
        }
    }
    Err(Error::InvalidConfig(format!("no instance with at most {max_derivations} derivations near seed {seed}")))
}

fn ab_tree() -> SourceTree {
    parse_bracketed("(a b)", 2).expect("static bracketing")
}

/// `|NT| = |PT| = 1`, vocab 2, tree `(a b)`, with `first` the weight of the
/// root rule `A[root] -> D[a] D[b]` and `1 - first` of `A[root] -> D[b] D[a]`.
/// Terminals at leaves are uniform over both words, so target `[0, 1]` has
/// exactly these two derivations (one when `first == 1`).
pub fn two_derivation_instance(first: f64) -> Instance {
    let tree = ab_tree();
    let cfg = SymbolConfig::new(1, 1, 2, 0);
    let d = cfg.dims(tree.num_nodes());
    let (root, a, b) = (tree.root(), 0, 2);
    let mut start = vec![NEG_INF; d.start_len()];
    start[d.parent(0, root)] = 0.0;
    let mut binary = vec![NEG_INF; d.binary_len()];
    for p in 0..d.parents() {
        // every other LHS keeps a single arbitrary rule so rows stay normalized
        binary[d.binary(p, d.pt_child(0, a), d.pt_child(0, b))] = 0.0;
    }
    let p_root = d.parent(0, root);
    binary[d.binary(p_root, d.pt_child(0, a), d.pt_child(0, b))] = first.ln();
    if first < 1.0 {
        binary[d.binary(p_root, d.pt_child(0, b), d.pt_child(0, a))] = (1.0 - first).ln();
    }
    let mut terminal = vec![NEG_INF; d.terminal_len()];
    for al in 0..d.nodes {
        if tree.is_leaf(al) {
            terminal[d.terminal(0, al, 0)] = 0.5f64.ln();
            terminal[d.terminal(0, al, 1)] = 0.5f64.ln();
        } else {
            terminal[d.terminal(0, al, 0)] = 0.0;
        }
    }
    let table = QcfgRuleTable::new(cfg, d.nodes, UnaryRules { start, terminal }, binary).expect("static shapes");
    Instance { tree, table, target: vec![0, 1] }
}

/// Single derivation of `[0, 1]` with probability 1: the root rewrites to
/// `D[a] D[b]`, `a` emits word 0 and `b` word 1.
pub fn deterministic_instance() -> Instance {
    let mut inst = two_derivation_instance(1.0);
    let d = inst.table.dims();
    for (al, w) in [(0, 0), (2, 1)] {
        let base = d.terminal(0, al, 0);
        inst.table.unary.terminal[base..base + 2].iter_mut().for_each(|x| *x = NEG_INF);
        inst.table.unary.terminal[base + w] = 0.0;
    }
    inst
}

/// A random unmasked instance whose posterior piles alignments onto one
/// source node, so a coverage bound of 1 is active there. Uses more source
/// leaves than target tokens so that bound is strictly feasible.
pub fn tight_coverage_instance(seed: u64) -> Result<(Instance, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0ffee);
    let target_len = rng.random_range(2..=3);
    let leaves = rng.random_range(target_len + 1..=4);
    let shape = TinyShape { leaves, target_len, nt: rng.random_range(1..=2), pt: rng.random_range(1..=2), vocab: 3 };
    let mut inst = random_instance(shape, MaskLevel::None, seed)?;
    let node = rng.random_range(0..inst.tree.num_nodes());
    inst.table.boost_alignment(node, 3.0);
    Ok((inst, node))
}

//! Hard constraints expressed as `-inf` entries. Masks never raise a weight
//! and leave the table unnormalized; call
//! [`QcfgRuleTable::renormalize`](super::QcfgRuleTable::renormalize) when a
//! proper distribution is needed.

use serde::{Deserialize, Serialize};

use super::{FactorTablesP, QcfgRuleTable};
use crate::error::{Error, Result};
use crate::logspace::NEG_INF;
use crate::tree::{Distance, SourceTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HierarchyMode {
    /// Both children aligned to proper descendants of the parent's node.
    Descendant,
    /// Both children aligned to distinct direct children of the parent's node.
    DirectChild,
}

impl std::str::FromStr for HierarchyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "descendant" => Ok(HierarchyMode::Descendant),
            "direct-child" | "direct_child" => Ok(HierarchyMode::DirectChild),
            other => Err(Error::InvalidConfig(format!("unknown hierarchy mode '{other}'"))),
        }
    }
}

/// Whether `A[i] -> B[j] C[k]` survives the hierarchy constraint.
pub fn hierarchy_allows(tree: &SourceTree, mode: HierarchyMode, i: usize, j: usize, k: usize) -> bool {
    let (dj, dk) = (tree.distance(i, j), tree.distance(i, k));
    match mode {
        HierarchyMode::Descendant => {
            let proper = |d: Distance| matches!(d, Distance::Finite(x) if x >= 1);
            proper(dj) && proper(dk)
        }
        HierarchyMode::DirectChild => dj == Distance::Finite(1) && dk == Distance::Finite(1) && j != k,
    }
}

fn allowed_triples(tree: &SourceTree, mode: HierarchyMode) -> Vec<bool> {
    let n = tree.num_nodes();
    let mut ok = vec![false; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                ok[(i * n + j) * n + k] = hierarchy_allows(tree, mode, i, j, k);
            }
        }
    }
    ok
}

fn check_nodes(nodes: usize, tree: &SourceTree) -> Result<()> {
    if nodes != tree.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "table has {nodes} source nodes, tree has {}",
            tree.num_nodes()
        )));
    }
    Ok(())
}

pub fn apply_hierarchy_mask(table: &QcfgRuleTable, tree: &SourceTree, mode: HierarchyMode) -> Result<QcfgRuleTable> {
    check_nodes(table.nodes, tree)?;
    let d = table.dims();
    let n = d.nodes;
    let ok = allowed_triples(tree, mode);
    let mut out = table.clone();
    for p in 0..d.parents() {
        let i = p % n;
        for l in 0..d.children() {
            for r in 0..d.children() {
                if !ok[(i * n + l % n) * n + r % n] {
                    out.binary[d.binary(p, l, r)] = NEG_INF;
                }
            }
        }
    }
    out.normalized = false;
    Ok(out)
}

/// Leaves align only to leaves, internal target nodes only to internal
/// source nodes, and the target root only to the source root.
pub fn apply_basic_alignment_mask(table: &QcfgRuleTable, tree: &SourceTree) -> Result<QcfgRuleTable> {
    check_nodes(table.nodes, tree)?;
    if tree.num_leaves() < 2 {
        return Err(Error::SingleLeafTree);
    }
    let d = table.dims();
    let n = d.nodes;
    let mut out = table.clone();
    for a in 0..d.nt {
        for al in 0..n {
            if al != tree.root() {
                out.unary.start[d.parent(a, al)] = NEG_INF;
            }
        }
    }
    for dd in 0..d.pt {
        for al in tree.internal_nodes() {
            let base = d.terminal(dd, al, 0);
            out.unary.terminal[base..base + d.vocab].iter_mut().for_each(|x| *x = NEG_INF);
        }
    }
    // a child index is role-consistent when NT pairs with internal nodes and PT with leaves
    let consistent = |c: usize| (c / n < d.nt) != tree.is_leaf(c % n);
    for p in 0..d.parents() {
        let lhs_ok = !tree.is_leaf(p % n);
        for l in 0..d.children() {
            for r in 0..d.children() {
                if !(lhs_ok && consistent(l) && consistent(r)) {
                    out.binary[d.binary(p, l, r)] = NEG_INF;
                }
            }
        }
    }
    out.normalized = false;
    Ok(out)
}

/// Applies a hierarchy constraint through the P model's alignment-triple
/// factor, which prohibits the same `(αi, αj, αk)` combinations for every
/// rank symbol.
pub fn mask_triple(f: &FactorTablesP, tree: &SourceTree, mode: HierarchyMode) -> Result<FactorTablesP> {
    check_nodes(f.nodes, tree)?;
    let n = f.nodes;
    let ok = allowed_triples(tree, mode);
    let mut out = f.clone();
    for (idx, x) in out.triple.iter_mut().enumerate() {
        if !ok[idx % (n * n * n)] {
            *x = NEG_INF;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::random::random_dense;
    use crate::grammar::SymbolConfig;
    use crate::tree::{parse_bracketed, random_binary_tree};

    #[test]
    fn single_leaf_descendant_masks_everything() {
        let tree = parse_bracketed("a", 1).unwrap();
        let t = random_dense(&SymbolConfig::new(2, 2, 3, 0), 1, 0, 1.0).unwrap();
        let m = apply_hierarchy_mask(&t, &tree, HierarchyMode::Descendant).unwrap();
        assert!(m.binary.iter().all(|x| *x == NEG_INF));
        assert!(!m.normalized);
        assert!(matches!(apply_basic_alignment_mask(&t, &tree), Err(Error::SingleLeafTree)));
    }

    #[test]
    fn direct_child_on_three_nodes() {
        let tree = parse_bracketed("(a b)", 2).unwrap();
        let n = 3;
        // enumerate all 27 node triples by distance definition
        let mut want = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if tree.distance(i, j) == Distance::Finite(1) && tree.distance(i, k) == Distance::Finite(1) && j != k {
                        want.push((i, j, k));
                    }
                }
            }
        }
        let root = tree.root();
        let leaves: Vec<_> = tree.leaves().collect();
        assert_eq!(want, vec![(root, leaves[0], leaves[1]), (root, leaves[1], leaves[0])]);

        let t = random_dense(&SymbolConfig::new(1, 1, 2, 0), n, 3, 1.0).unwrap();
        let m = apply_hierarchy_mask(&t, &tree, HierarchyMode::DirectChild).unwrap();
        let d = m.dims();
        for p in 0..d.parents() {
            for l in 0..d.children() {
                for r in 0..d.children() {
                    let keep = want.contains(&(p % n, l % n, r % n));
                    assert_eq!(m.binary[d.binary(p, l, r)].is_finite(), keep);
                }
            }
        }
    }

    #[test]
    fn masks_are_idempotent_and_never_raise() {
        let tree = random_binary_tree(3, 4).unwrap();
        let t = random_dense(&SymbolConfig::new(2, 1, 3, 0), 5, 1, 1.0).unwrap();
        for mode in [HierarchyMode::Descendant, HierarchyMode::DirectChild] {
            let once = apply_hierarchy_mask(&t, &tree, mode).unwrap();
            let twice = apply_hierarchy_mask(&once, &tree, mode).unwrap();
            assert_eq!(once, twice);
            assert!(once.binary.iter().zip(&t.binary).all(|(m, o)| *m == *o || *m == NEG_INF));
        }
        let once = apply_basic_alignment_mask(&t, &tree).unwrap();
        assert_eq!(once, apply_basic_alignment_mask(&once, &tree).unwrap());
    }

    #[test]
    fn basic_mask_start_and_terminal() {
        let tree = parse_bracketed("(a b)", 2).unwrap();
        let t = random_dense(&SymbolConfig::new(2, 2, 3, 0), 3, 5, 1.0).unwrap();
        let m = apply_basic_alignment_mask(&t, &tree).unwrap();
        let d = m.dims();
        for a in 0..d.nt {
            for al in 0..3 {
                assert_eq!(m.unary.start[d.parent(a, al)].is_finite(), al == tree.root());
            }
        }
        for dd in 0..d.pt {
            for w in 0..d.vocab {
                assert_eq!(m.unary.terminal[d.terminal(dd, tree.root(), w)], NEG_INF);
            }
        }
    }

    #[test]
    fn basic_mask_binary_count_on_seven_nodes() {
        let tree = random_binary_tree(4, 17).unwrap();
        let cfg = SymbolConfig::new(2, 3, 2, 0);
        let t = random_dense(&cfg, 7, 2, 1.0).unwrap();
        let m = apply_basic_alignment_mask(&t, &tree).unwrap();
        let internal = tree.internal_nodes().count();
        let leaves = tree.leaves().count();
        // brute-force count of role-consistent (symbol, node) children
        let mut consistent = 0;
        for sym in 0..5 {
            for node in 0..7 {
                if (sym < 2 && !tree.is_leaf(node)) || (sym >= 2 && tree.is_leaf(node)) {
                    consistent += 1;
                }
            }
        }
        assert_eq!(consistent, 2 * internal + 3 * leaves);
        let survivors = m.binary.iter().filter(|x| x.is_finite()).count();
        assert_eq!(survivors, 2 * internal * consistent * consistent);
    }
}

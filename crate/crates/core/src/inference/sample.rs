use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::chart::SpanIndex;
use super::{check_instance, vanilla_log_chart};
use crate::error::{Error, Result};
use crate::grammar::{Dims, QcfgRuleTable};
use crate::logspace::{log_sum_exp, NEG_INF};
use crate::tree::SourceTree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolKind {
    Nonterminal,
    Preterminal,
}

/// A sampled target tree. Every node carries its target span, its symbol and
/// the source node it is aligned to; preterminals also carry the token.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TargetTree {
    pub start: usize,
    pub end: usize,
    pub kind: SymbolKind,
    pub symbol: usize,
    pub node: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TargetTree>,
}

/// `(start, end, kind, symbol, node)` for one labelled target node.
pub type NodeLabel = (usize, usize, SymbolKind, usize, usize);

impl TargetTree {
    /// Preorder labels; two trees over the same target are the same
    /// derivation iff their signatures are equal.
    pub fn signature(&self) -> Vec<NodeLabel> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<NodeLabel>) {
        out.push((self.start, self.end, self.kind, self.symbol, self.node));
        for c in &self.children {
            c.collect(out);
        }
    }
}

/// Draws exact posterior samples by walking the inside chart top-down.
pub struct PosteriorSampler<'a> {
    table: &'a QcfgRuleTable,
    dims: Dims,
    target: Vec<usize>,
    idx: SpanIndex,
    beta: Vec<Vec<f64>>,
    log_z: f64,
}

fn draw<R: Rng, T: Copy>(rng: &mut R, cands: &[(f64, T)]) -> T {
    let max = cands.iter().map(|c| c.0).fold(NEG_INF, f64::max);
    let total: f64 = cands.iter().map(|c| (c.0 - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    for &(w, item) in cands {
        u -= (w - max).exp();
        if u < 0.0 {
            return item;
        }
    }
    cands.iter().rev().find(|c| c.0 > NEG_INF).map(|c| c.1).expect("non-empty candidates")
}

impl<'a> PosteriorSampler<'a> {
    pub fn new(table: &'a QcfgRuleTable, tree: &SourceTree, target: &[usize]) -> Result<Self> {
        let dims = table.dims();
        check_instance(&dims, tree, target)?;
        if target.len() < 2 {
            return Err(Error::NoDerivation);
        }
        let (idx, beta) = vanilla_log_chart(table, target);
        let root = &beta[idx.at(0, target.len())];
        let log_z = log_sum_exp(&table.unary.start.iter().zip(root).map(|(s, b)| s + b).collect::<Vec<_>>());
        if log_z == NEG_INF {
            return Err(Error::NoDerivation);
        }
        Ok(PosteriorSampler { table, dims, target: target.to_vec(), idx, beta, log_z })
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> TargetTree {
        let t = self.target.len();
        let root = &self.beta[self.idx.at(0, t)];
        let cands: Vec<(f64, usize)> = self
            .table
            .unary
            .start
            .iter()
            .zip(root)
            .enumerate()
            .map(|(p, (s, b))| (s + b, p))
            .filter(|c| c.0 > NEG_INF)
            .collect();
        let p = draw(rng, &cands);
        self.expand(rng, 0, t, p)
    }

    fn expand<R: Rng>(&self, rng: &mut R, i: usize, k: usize, p: usize) -> TargetTree {
        let d = &self.dims;
        let pt_off = d.nt * d.nodes;
        let mut cands = Vec::new();
        for j in i + 1..k {
            let (lo, ro) = (if j - i == 1 { pt_off } else { 0 }, if k - j == 1 { pt_off } else { 0 });
            let (bl, br) = (&self.beta[self.idx.at(i, j)], &self.beta[self.idx.at(j, k)]);
            for (b, &lb) in bl.iter().enumerate() {
                if lb == NEG_INF {
                    continue;
                }
                for (cc, &rb) in br.iter().enumerate() {
                    let w = self.table.binary[d.binary(p, lo + b, ro + cc)];
                    let v = w + lb + rb;
                    if v > NEG_INF {
                        cands.push((v, (j, lo + b, ro + cc)));
                    }
                }
            }
        }
        let (j, l, r) = draw(rng, &cands);
        let left = self.child(rng, i, j, l);
        let right = self.child(rng, j, k, r);
        TargetTree {
            start: i,
            end: k,
            kind: SymbolKind::Nonterminal,
            symbol: p / d.nodes,
            node: p % d.nodes,
            token: None,
            children: vec![left, right],
        }
    }

    fn child<R: Rng>(&self, rng: &mut R, i: usize, k: usize, c: usize) -> TargetTree {
        let d = &self.dims;
        if k - i == 1 {
            TargetTree {
                start: i,
                end: k,
                kind: SymbolKind::Preterminal,
                symbol: c / d.nodes - d.nt,
                node: c % d.nodes,
                token: Some(self.target[i]),
                children: Vec::new(),
            }
        } else {
            self.expand(rng, i, k, c)
        }
    }
}

pub fn sample_target_tree(table: &QcfgRuleTable, tree: &SourceTree, target: &[usize], seed: u64) -> Result<TargetTree> {
    Ok(sample_target_trees(table, tree, target, 1, seed)?.remove(0))
}

pub fn sample_target_trees(
    table: &QcfgRuleTable,
    tree: &SourceTree,
    target: &[usize],
    count: usize,
    seed: u64,
) -> Result<Vec<TargetTree>> {
    let sampler = PosteriorSampler::new(table, tree, target)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| sampler.sample(&mut rng)).collect())
}

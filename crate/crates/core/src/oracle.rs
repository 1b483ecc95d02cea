//! Brute-force ground truth: enumerate every labelled, aligned derivation of
//! a target string and evaluate quantities by their definitions.
//!
//! Enumeration expands pending target nodes depth-first, left child first,
//! so the rule list of each derivation is in preorder. Only rules with
//! `-inf` weight are pruned; no chart is consulted.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grammar::{Dims, QcfgRuleTable};
use crate::inference::{check_instance, NodeLabel, RuleCounts, SymbolKind};
use crate::logspace::{log_sum_exp, NEG_INF};
use crate::tree::{Distance, SourceTree};

/// Structural limits on enumerable instances.
#[derive(Clone, Copy, Debug)]
pub struct OracleLimits {
    pub max_symbols: usize,
    pub max_leaves: usize,
    pub max_target: usize,
    /// Upper bound on the number of materialized derivations.
    pub max_derivations: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { max_symbols: 4, max_leaves: 4, max_target: 4, max_derivations: 2_000_000 }
    }
}

/// One applied rule. Symbol/node pairs use the fused indices of
/// [`Dims`]: parents are `A * n + α`, children `sym * n + α`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RuleUse {
    Start { parent: usize },
    Binary { parent: usize, left: usize, right: usize, i: usize, j: usize, k: usize },
    Terminal { child: usize, word: usize, position: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Derivation {
    pub rules: Vec<RuleUse>,
    pub log_weight: f64,
}

impl Derivation {
    /// Preorder node labels, comparable with sampled trees.
    pub fn signature(&self, d: &Dims) -> Vec<NodeLabel> {
        let n = d.nodes;
        self.rules
            .iter()
            .filter_map(|r| match *r {
                RuleUse::Start { .. } => None,
                RuleUse::Binary { parent, i, k, .. } => {
                    Some((i, k, SymbolKind::Nonterminal, parent / n, parent % n))
                }
                RuleUse::Terminal { child, position, .. } => {
                    Some((position, position + 1, SymbolKind::Preterminal, child / n - d.nt, child % n))
                }
            })
            .collect()
    }

    /// Log weight of the same rule sequence under another table.
    pub fn rescore(&self, table: &QcfgRuleTable) -> f64 {
        let d = table.dims();
        self.rules.iter().map(|r| rule_weight(table, &d, r)).sum()
    }
}

fn rule_weight(table: &QcfgRuleTable, d: &Dims, r: &RuleUse) -> f64 {
    match *r {
        RuleUse::Start { parent } => table.unary.start[parent],
        RuleUse::Binary { parent, left, right, .. } => table.binary[d.binary(parent, left, right)],
        RuleUse::Terminal { child, word, .. } => {
            let local = child - d.nt * d.nodes;
            table.unary.terminal[local * d.vocab + word]
        }
    }
}

#[derive(Clone, Copy)]
enum Pending {
    Nt { i: usize, k: usize, parent: usize },
    Pt { position: usize, child: usize },
}

struct Walk<'a, F> {
    table: &'a QcfgRuleTable,
    d: Dims,
    target: &'a [usize],
    pending: Vec<Pending>,
    rules: Vec<RuleUse>,
    emit: F,
}

impl<F: FnMut(&Derivation) -> Result<()>> Walk<'_, F> {
    fn child(&self, i: usize, k: usize, c: usize) -> Pending {
        if k - i == 1 {
            Pending::Pt { position: i, child: c }
        } else {
            Pending::Nt { i, k, parent: c }
        }
    }

    fn go(&mut self, lw: f64) -> Result<()> {
        let Some(top) = self.pending.pop() else {
            let d = Derivation { rules: self.rules.clone(), log_weight: lw };
            return (self.emit)(&d);
        };
        match top {
            Pending::Pt { position, child } => {
                let rule = RuleUse::Terminal { child, word: self.target[position], position };
                let w = rule_weight(self.table, &self.d, &rule);
                if w > NEG_INF {
                    self.rules.push(rule);
                    self.go(lw + w)?;
                    self.rules.pop();
                }
            }
            Pending::Nt { i, k, parent } => {
                for j in i + 1..k {
                    let lb = self.d.child_block(j - i > 1);
                    let rb = self.d.child_block(k - j > 1);
                    for left in lb {
                        for right in rb.clone() {
                            let rule = RuleUse::Binary { parent, left, right, i, j, k };
                            let w = rule_weight(self.table, &self.d, &rule);
                            if w == NEG_INF {
                                continue;
                            }
                            self.rules.push(rule);
                            let (l, r) = (self.child(i, j, left), self.child(j, k, right));
                            self.pending.push(r);
                            self.pending.push(l);
                            self.go(lw + w)?;
                            self.pending.pop();
                            self.pending.pop();
                            self.rules.pop();
                        }
                    }
                }
            }
        }
        self.pending.push(top);
        Ok(())
    }
}

fn check_limits(table: &QcfgRuleTable, tree: &SourceTree, target: &[usize], limits: &OracleLimits) -> Result<()> {
    let d = table.dims();
    check_instance(&d, tree, target)?;
    if d.nt > limits.max_symbols || d.pt > limits.max_symbols {
        return Err(Error::CapExceeded(format!("{} nonterminals / {} preterminals (max {})", d.nt, d.pt, limits.max_symbols)));
    }
    if tree.num_leaves() > limits.max_leaves {
        return Err(Error::CapExceeded(format!("{} source leaves (max {})", tree.num_leaves(), limits.max_leaves)));
    }
    if target.len() > limits.max_target {
        return Err(Error::CapExceeded(format!("target length {} (max {})", target.len(), limits.max_target)));
    }
    Ok(())
}

/// Streams every derivation to `emit`; an error from `emit` stops the walk.
pub fn for_each_derivation<F>(
    table: &QcfgRuleTable,
    tree: &SourceTree,
    target: &[usize],
    limits: &OracleLimits,
    emit: F,
) -> Result<()>
where
    F: FnMut(&Derivation) -> Result<()>,
{
    check_limits(table, tree, target, limits)?;
    if target.len() < 2 {
        return Ok(());
    }
    let d = table.dims();
    let t = target.len();
    let mut walk = Walk { table, d, target, pending: Vec::new(), rules: Vec::new(), emit };
    for parent in 0..d.parents() {
        let w = table.unary.start[parent];
        if w == NEG_INF {
            continue;
        }
        walk.rules.push(RuleUse::Start { parent });
        walk.pending.push(Pending::Nt { i: 0, k: t, parent });
        walk.go(w)?;
        walk.pending.pop();
        walk.rules.pop();
    }
    Ok(())
}

/// All derivations, failing once more than `limits.max_derivations` exist.
pub fn enumerate(table: &QcfgRuleTable, tree: &SourceTree, target: &[usize], limits: &OracleLimits) -> Result<Vec<Derivation>> {
    let mut out = Vec::new();
    for_each_derivation(table, tree, target, limits, |dv| {
        if out.len() >= limits.max_derivations {
            return Err(Error::CapExceeded(format!("more than {} derivations", limits.max_derivations)));
        }
        out.push(dv.clone());
        Ok(())
    })?;
    Ok(out)
}

pub fn oracle_count(derivs: &[Derivation]) -> u128 {
    derivs.len() as u128
}

pub fn oracle_log_z(derivs: &[Derivation]) -> f64 {
    let ws: Vec<f64> = derivs.iter().map(|d| d.log_weight).collect();
    log_sum_exp(&ws)
}

pub fn oracle_max(derivs: &[Derivation]) -> f64 {
    derivs.iter().map(|d| d.log_weight).fold(NEG_INF, f64::max)
}

fn posterior_weights(derivs: &[Derivation]) -> Result<(f64, Vec<f64>)> {
    if derivs.is_empty() {
        return Err(Error::EmptyDerivations);
    }
    let z = oracle_log_z(derivs);
    if z == NEG_INF {
        return Err(Error::NoDerivation);
    }
    Ok((z, derivs.iter().map(|d| (d.log_weight - z).exp()).collect()))
}

/// `-Σ p̂ log p̂` over normalized derivation probabilities.
pub fn oracle_entropy(derivs: &[Derivation]) -> Result<f64> {
    let (z, p) = posterior_weights(derivs)?;
    Ok(derivs
        .iter()
        .zip(&p)
        .filter(|(_, &p)| p > 0.0)
        .map(|(d, &p)| -p * (d.log_weight - z))
        .sum())
}

/// Posterior-weighted rule multiplicities.
pub fn oracle_expected_counts(derivs: &[Derivation], d: &Dims) -> Result<RuleCounts> {
    let (_, p) = posterior_weights(derivs)?;
    let mut c = RuleCounts {
        start: vec![0.0; d.start_len()],
        binary: vec![0.0; d.binary_len()],
        terminal: vec![0.0; d.terminal_len()],
    };
    for (dv, &p) in derivs.iter().zip(&p) {
        for r in &dv.rules {
            match *r {
                RuleUse::Start { parent } => c.start[parent] += p,
                RuleUse::Binary { parent, left, right, .. } => c.binary[d.binary(parent, left, right)] += p,
                RuleUse::Terminal { child, word, .. } => {
                    c.terminal[(child - d.nt * d.nodes) * d.vocab + word] += p
                }
            }
        }
    }
    Ok(c)
}

/// `log Σ_t p(t) Π_{binary r ∈ t} ζ(d(r))` with unnormalized `p(t)`.
pub fn oracle_log_expected_reward(
    derivs: &[Derivation],
    tree: &SourceTree,
    d: &Dims,
    zeta: &dyn Fn(Distance) -> f64,
) -> f64 {
    let n = d.nodes;
    let terms: Vec<f64> = derivs
        .iter()
        .map(|dv| {
            let reward: f64 = dv
                .rules
                .iter()
                .map(|r| match *r {
                    RuleUse::Binary { parent, left, right, .. } => {
                        zeta(tree.rule_distance_unchecked(parent % n, left % n, right % n)).ln()
                    }
                    _ => 0.0,
                })
                .sum();
            dv.log_weight + reward
        })
        .collect();
    log_sum_exp(&terms)
}

/// `Σ_t q̂(t) log(q̂(t) / p̂(t))`, matching derivations by rule sequence.
pub fn oracle_kl(q: &[Derivation], p: &[Derivation]) -> Result<f64> {
    let (zq, wq) = posterior_weights(q)?;
    let (zp, _) = posterior_weights(p)?;
    let index: HashMap<&[RuleUse], f64> = p.iter().map(|d| (d.rules.as_slice(), d.log_weight)).collect();
    let mut kl = 0.0;
    for (dq, &pq) in q.iter().zip(&wq) {
        if pq == 0.0 {
            continue;
        }
        let lp = index
            .get(dq.rules.as_slice())
            .copied()
            .filter(|&w| w > NEG_INF)
            .ok_or_else(|| Error::SupportMismatch("derivation with q > 0 missing under p".into()))?;
        kl += pq * ((dq.log_weight - zq) - (lp - zp));
    }
    Ok(kl)
}

/// Normalized posterior over derivation signatures.
pub fn oracle_posterior(derivs: &[Derivation], d: &Dims) -> Result<HashMap<Vec<NodeLabel>, f64>> {
    let (_, p) = posterior_weights(derivs)?;
    let mut out = HashMap::new();
    for (dv, &p) in derivs.iter().zip(&p) {
        *out.entry(dv.signature(d)).or_insert(0.0) += p;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(lw: f64) -> Derivation {
        Derivation { rules: vec![RuleUse::Start { parent: (lw * -1000.0) as usize }], log_weight: lw }
    }

    #[test]
    fn entropy_of_small_distributions() {
        assert!(oracle_entropy(&[dv(0.0)]).unwrap().abs() < 1e-15);
        let two = [dv(0.5f64.ln()), dv(0.5f64.ln() - 1e-12)];
        assert!((oracle_entropy(&two).unwrap() - 2f64.ln()).abs() < 1e-9);
        let three = [dv(0.5f64.ln()), dv(0.25f64.ln()), dv(0.25f64.ln() - 1e-12)];
        assert!((oracle_entropy(&three).unwrap() - 1.039721).abs() < 1e-6);
    }

    #[test]
    fn empty_list() {
        assert_eq!(oracle_log_z(&[]), NEG_INF);
        assert_eq!(oracle_entropy(&[]), Err(Error::EmptyDerivations));
    }
}

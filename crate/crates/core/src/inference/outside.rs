use super::{check_instance, vanilla_log_chart};
use crate::error::{Error, Result};
use crate::grammar::QcfgRuleTable;
use crate::logspace::{log_add, log_sum_exp, NEG_INF};
use crate::tree::SourceTree;

/// Posterior expected usage of every rule, laid out like the rule table.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleCounts {
    pub start: Vec<f64>,
    pub binary: Vec<f64>,
    pub terminal: Vec<f64>,
}

impl RuleCounts {
    pub fn total(&self) -> f64 {
        self.start.iter().chain(&self.binary).chain(&self.terminal).sum()
    }

    /// `Σ_r E[c_r] · w_r` over finite weights, for any table with the
    /// same layout.
    pub fn dot_weights(&self, table: &QcfgRuleTable) -> f64 {
        fn part(c: &[f64], w: &[f64]) -> f64 {
            c.iter().zip(w).filter(|(&c, _)| c > 0.0).map(|(c, w)| c * w).sum()
        }
        part(&self.start, &table.unary.start)
            + part(&self.binary, &table.binary)
            + part(&self.terminal, &table.unary.terminal)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InsideOutside {
    pub log_z: f64,
    pub counts: RuleCounts,
}

/// Inside-outside over the dense table. Counts are `∂ log Z / ∂ log w_r`.
pub fn expected_rule_counts(table: &QcfgRuleTable, tree: &SourceTree, target: &[usize]) -> Result<InsideOutside> {
    let d = table.dims();
    check_instance(&d, tree, target)?;
    let t = target.len();
    if t < 2 {
        return Err(Error::NoDerivation);
    }
    let (idx, beta) = vanilla_log_chart(table, target);
    let root = &beta[idx.at(0, t)];
    let terms: Vec<f64> = table.unary.start.iter().zip(root).map(|(s, b)| s + b).collect();
    let log_z = log_sum_exp(&terms);
    if log_z == NEG_INF {
        return Err(Error::NoDerivation);
    }
    let mut counts = RuleCounts {
        start: terms.iter().map(|&x| (x - log_z).exp()).collect(),
        binary: vec![0.0; d.binary_len()],
        terminal: vec![0.0; d.terminal_len()],
    };
    let mut outside: Vec<Vec<f64>> = beta.iter().map(|c| vec![NEG_INF; c.len()]).collect();
    outside[idx.at(0, t)] = table.unary.start.clone();
    let pt_off = d.nt * d.nodes;
    let c = d.children();

    let spans: Vec<(usize, usize)> = idx.wide_spans().collect();
    for &(i, k) in spans.iter().rev() {
        let out = std::mem::take(&mut outside[idx.at(i, k)]);
        for j in i + 1..k {
            let (lo, ro) = (if j - i == 1 { pt_off } else { 0 }, if k - j == 1 { pt_off } else { 0 });
            let (li, ri) = (idx.at(i, j), idx.at(j, k));
            let (bl, br) = (&beta[li], &beta[ri]);
            let mut ol = vec![NEG_INF; bl.len()];
            let mut or = vec![NEG_INF; br.len()];
            for (p, &o) in out.iter().enumerate() {
                if o == NEG_INF {
                    continue;
                }
                let row = &table.binary[p * c * c..(p + 1) * c * c];
                for (b, &lb) in bl.iter().enumerate() {
                    if lb == NEG_INF {
                        continue;
                    }
                    for (cc, &rb) in br.iter().enumerate() {
                        let at = (lo + b) * c + ro + cc;
                        let w = row[at];
                        if rb == NEG_INF || w == NEG_INF {
                            continue;
                        }
                        let s = o + w;
                        ol[b] = log_add(ol[b], s + rb);
                        or[cc] = log_add(or[cc], s + lb);
                        counts.binary[p * c * c + at] += (s + lb + rb - log_z).exp();
                    }
                }
            }
            merge(&mut outside[li], &ol);
            merge(&mut outside[ri], &or);
        }
        outside[idx.at(i, k)] = out;
    }

    for (s, &w) in target.iter().enumerate() {
        let at = idx.at(s, s + 1);
        for dd in 0..d.pt {
            for al in 0..d.nodes {
                let q = dd * d.nodes + al;
                let v = outside[at][q] + beta[at][q];
                if v > NEG_INF {
                    counts.terminal[d.terminal(dd, al, w)] += (v - log_z).exp();
                }
            }
        }
    }
    Ok(InsideOutside { log_z, counts })
}

fn merge(dst: &mut [f64], src: &[f64]) {
    for (a, &b) in dst.iter_mut().zip(src) {
        *a = log_add(*a, b);
    }
}

use super::chart::{live_splits, ScaledChart};
use super::{check_instance, terminal_logs};
use crate::error::Result;
use crate::grammar::{Dims, QcfgRuleTable};
use crate::logspace::{dot, log_sum_exp, LinearWeights, ScaledVec, NEG_INF};
use crate::tree::SourceTree;

/// Log partition `log Σ_d p(d)` of the dense table over derivations
/// yielding `target`. Cost is `O(|NT| M² n³ T³)`.
pub fn inside_vanilla(table: &QcfgRuleTable, tree: &SourceTree, target: &[usize]) -> Result<f64> {
    DenseWeights::new(table).log_z(tree, target)
}

/// A dense table converted to linear space once, for repeated inside calls.
pub struct DenseWeights<'a> {
    table: &'a QcfgRuleTable,
    w: LinearWeights,
}

impl<'a> DenseWeights<'a> {
    pub fn new(table: &'a QcfgRuleTable) -> Self {
        DenseWeights { table, w: LinearWeights::new(&table.binary) }
    }

    /// Same value as [`inside_vanilla`].
    pub fn log_z(&self, tree: &SourceTree, target: &[usize]) -> Result<f64> {
        let d = self.table.dims();
        check_instance(&d, tree, target)?;
        if target.len() < 2 {
            return Ok(NEG_INF);
        }
        let chart = scaled_chart(self.table, &self.w, &d, target);
        Ok(root_log_z(&self.table.unary.start, chart.get(0, target.len())))
    }
}

pub(crate) fn root_log_z(start: &[f64], root: &ScaledVec) -> f64 {
    if root.is_zero() {
        return NEG_INF;
    }
    let terms: Vec<f64> = start.iter().enumerate().map(|(p, &s)| s + root.log_at(p)).collect();
    log_sum_exp(&terms)
}

pub(crate) fn preterminal_cells(chart: &mut ScaledChart, d: &Dims, terminal: &[f64], target: &[usize]) {
    for (t, &w) in target.iter().enumerate() {
        chart.set(t, t + 1, ScaledVec::from_logs(&terminal_logs(d, terminal, w)));
    }
}

/// `(coefficient, left cell, left offset, right cell, right offset)`.
type SplitTerm<'c> = (f64, &'c [f64], usize, &'c [f64], usize);

fn scaled_chart(table: &QcfgRuleTable, w: &LinearWeights, d: &Dims, target: &[usize]) -> ScaledChart {
    let t = target.len();
    let c = d.children();
    let pt_off = d.nt * d.nodes;
    let mut chart = ScaledChart::new(t);
    preterminal_cells(&mut chart, d, &table.unary.terminal, target);

    // All spans of one width are independent, so each table row is read
    // once per width and applied to every span of that width.
    for width in 2..=t {
        let mut jobs = Vec::new();
        let mut empty = Vec::new();
        for i in 0..=t - width {
            let k = i + width;
            let (splits, max) = live_splits(i, k, |j| Some(chart.get(i, j).log_scale + chart.get(j, k).log_scale));
            if splits.is_empty() {
                empty.push((i, k, ScaledVec::zeros(d.parents())));
                continue;
            }
            let parts: Vec<SplitTerm> = splits
                .iter()
                .map(|&(j, coef)| {
                    let lo = if j - i == 1 { pt_off } else { 0 };
                    let ro = if k - j == 1 { pt_off } else { 0 };
                    (coef, chart.get(i, j).vals.as_slice(), lo, chart.get(j, k).vals.as_slice(), ro)
                })
                .collect();
            jobs.push((i, k, max, parts, vec![0.0; d.parents()]));
        }
        for p in 0..d.parents() {
            let row = &w.lin[p * c * c..(p + 1) * c * c];
            for (_, _, _, parts, y) in jobs.iter_mut() {
                let mut acc = 0.0;
                for &(coef, lv, lo, rv, ro) in parts.iter() {
                    let mut s = 0.0;
                    for (b, &vb) in lv.iter().enumerate() {
                        if vb == 0.0 {
                            continue;
                        }
                        let base = (lo + b) * c + ro;
                        s += vb * dot(&row[base..base + rv.len()], rv);
                    }
                    acc += coef * s;
                }
                y[p] = acc;
            }
        }
        let done: Vec<(usize, usize, ScaledVec)> = jobs
            .into_iter()
            .map(|(i, k, max, _, y)| (i, k, ScaledVec::from_linear(y, max + w.shift)))
            .collect();
        for (i, k, cell) in done.into_iter().chain(empty) {
            chart.set(i, k, cell);
        }
    }
    chart
}

/// Inside chart in log space, indexed by [`SpanIndex`](super::SpanIndex).
pub(crate) fn vanilla_log_chart(table: &QcfgRuleTable, target: &[usize]) -> (super::SpanIndex, Vec<Vec<f64>>) {
    let d = table.dims();
    let chart = scaled_chart(table, &LinearWeights::new(&table.binary), &d, target);
    let logs = chart.cells.iter().map(|c| c.to_logs()).collect();
    (chart.idx, logs)
}

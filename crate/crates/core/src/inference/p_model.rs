use super::chart::{live_splits, ScaledChart};
use super::check_instance;
use super::vanilla::{preterminal_cells, root_log_z};
use crate::error::Result;
use crate::grammar::{check_unary, Dims, FactorTablesP, UnaryRules};
use crate::logspace::{axpy, dot, LinearWeights, ScaledVec, NEG_INF};
use crate::tree::SourceTree;

/// `out[R][α] = Σ_B sym[R][α][B] v[B][α]` over the symbol block of `cell`.
fn reduce_symbols(sym: &LinearWeights, d: &Dims, nonterminal: bool, cell: &ScaledVec) -> ScaledVec {
    let n = d.nodes;
    let m = d.syms();
    let (off, count) = if nonterminal { (0, d.nt) } else { (d.nt, d.pt) };
    if cell.is_zero() {
        return ScaledVec::zeros(d.rank * n);
    }
    let mut out = vec![0.0; d.rank * n];
    for r in 0..d.rank {
        for al in 0..n {
            let row = &sym.lin[(r * n + al) * m + off..(r * n + al) * m + off + count];
            let mut s = 0.0;
            for (b, &w) in row.iter().enumerate() {
                s += w * cell.vals[b * n + al];
            }
            out[r * n + al] = s;
        }
    }
    ScaledVec::from_linear(out, cell.log_scale + sym.shift)
}

/// P-model inside: symbols are summed out per side, the node triple is
/// contracted once per span, then the head maps back to `(A, αi)`.
pub fn inside_p(f: &FactorTablesP, unary: &UnaryRules, tree: &SourceTree, target: &[usize]) -> Result<f64> {
    PWeights::new(f, unary)?.log_z(tree, target)
}

/// P-model tables converted to linear space once, for repeated inside calls.
pub struct PWeights<'a> {
    f: &'a FactorTablesP,
    unary: &'a UnaryRules,
    head: LinearWeights,
    triple: LinearWeights,
    lsym: LinearWeights,
    rsym: LinearWeights,
}

impl<'a> PWeights<'a> {
    pub fn new(f: &'a FactorTablesP, unary: &'a UnaryRules) -> Result<Self> {
        check_unary(&f.dims(), unary)?;
        Ok(PWeights {
            f,
            unary,
            head: LinearWeights::new(&f.head),
            triple: LinearWeights::new(&f.triple),
            lsym: LinearWeights::new(&f.left_sym),
            rsym: LinearWeights::new(&f.right_sym),
        })
    }

    /// Same value as [`inside_p`].
    pub fn log_z(&self, tree: &SourceTree, target: &[usize]) -> Result<f64> {
        let d = self.f.dims();
        check_instance(&d, tree, target)?;
        if target.len() < 2 {
            return Ok(NEG_INF);
        }
        Ok(self.pass(d, target))
    }

    fn pass(&self, d: Dims, target: &[usize]) -> f64 {
        let unary = self.unary;
        let t = target.len();
        let (n, r) = (d.nodes, d.rank);
        let (head, triple, lsym, rsym) = (&self.head, &self.triple, &self.lsym, &self.rsym);

        let mut chart = ScaledChart::new(t);
        preterminal_cells(&mut chart, &d, &unary.terminal, target);
        let mut bl = ScaledChart::new(t);
        let mut br = ScaledChart::new(t);
        for s in 0..t {
            bl.set(s, s + 1, reduce_symbols(lsym, &d, false, chart.get(s, s + 1)));
            br.set(s, s + 1, reduce_symbols(rsym, &d, false, chart.get(s, s + 1)));
        }

        // Spans of one width are independent; looping rank slices outermost
        // keeps each `n × n²` slice of the triple table hot across spans.
        let nn = n * n;
        let mut hat = vec![0.0; nn];
        for width in 2..=t {
            let mut jobs = Vec::new();
            let mut empty = Vec::new();
            for i in 0..=t - width {
                let k = i + width;
                let (splits, max) = live_splits(i, k, |j| Some(bl.get(i, j).log_scale + br.get(j, k).log_scale));
                if splits.is_empty() {
                    empty.push((i, k));
                } else {
                    jobs.push((i, k, max, splits, vec![0.0; r * n]));
                }
            }
            for rr in 0..r {
                let slice = &triple.lin[rr * n * nn..(rr + 1) * n * nn];
                for (i, k, _, splits, g) in jobs.iter_mut() {
                    hat.iter_mut().for_each(|x| *x = 0.0);
                    for &(j, coef) in splits.iter() {
                        let lrow = &bl.get(*i, j).vals[rr * n..(rr + 1) * n];
                        let rrow = &br.get(j, *k).vals[rr * n..(rr + 1) * n];
                        for (a2, &lv) in lrow.iter().enumerate() {
                            let a = coef * lv;
                            if a != 0.0 {
                                axpy(&mut hat[a2 * n..(a2 + 1) * n], a, rrow);
                            }
                        }
                    }
                    for a1 in 0..n {
                        g[rr * n + a1] = dot(&slice[a1 * nn..(a1 + 1) * nn], &hat);
                    }
                }
            }
            for (i, k) in empty {
                chart.set(i, k, ScaledVec::zeros(d.parents()));
            }
            for (i, k, max, _, g) in jobs {
                let mut y = vec![0.0; d.parents()];
                for a in 0..d.nt {
                    for a1 in 0..n {
                        let p = d.parent(a, a1);
                        let hrow = &head.lin[p * r..(p + 1) * r];
                        y[p] = (0..r).map(|rr| hrow[rr] * g[rr * n + a1]).sum();
                    }
                }
                let cell = ScaledVec::from_linear(y, max + triple.shift + head.shift);
                if k - i < t {
                    bl.set(i, k, reduce_symbols(lsym, &d, true, &cell));
                    br.set(i, k, reduce_symbols(rsym, &d, true, &cell));
                }
                chart.set(i, k, cell);
            }
        }
        root_log_z(&unary.start, chart.get(0, t))
    }
}

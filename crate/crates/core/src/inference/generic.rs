use super::chart::SpanIndex;
use super::semiring::Semiring;
use super::{check_instance, terminal_logs};
use crate::error::Result;
use crate::grammar::{check_unary, Dims, FactorTablesE, FactorTablesP, QcfgRuleTable, UnaryRules};
use crate::tree::SourceTree;

/// A grammar in any of the three parameterizations.
#[derive(Clone, Copy, Debug)]
pub enum GrammarRef<'a> {
    Dense(&'a QcfgRuleTable),
    E(&'a FactorTablesE, &'a UnaryRules),
    P(&'a FactorTablesP, &'a UnaryRules),
}

impl<'a> GrammarRef<'a> {
    pub fn dims(&self) -> Dims {
        match self {
            GrammarRef::Dense(t) => t.dims(),
            GrammarRef::E(f, _) => f.dims(),
            GrammarRef::P(f, _) => f.dims(),
        }
    }

    pub fn unary(&self) -> &'a UnaryRules {
        match self {
            GrammarRef::Dense(t) => &t.unary,
            GrammarRef::E(_, u) | GrammarRef::P(_, u) => u,
        }
    }
}

fn lift<S: Semiring>(logs: &[f64]) -> Vec<S::Elem> {
    logs.iter().map(|&w| S::from_log_weight(w)).collect()
}

fn sum<S: Semiring>(it: impl Iterator<Item = S::Elem>) -> S::Elem {
    it.fold(S::zero(), |a, b| S::plus(&a, &b))
}

/// Inside value of `target` under semiring `S`, following the same
/// factorization as the specialized pass for each model.
pub fn inside_generic<S: Semiring>(g: GrammarRef<'_>, tree: &SourceTree, target: &[usize]) -> Result<S::Elem> {
    let d = g.dims();
    check_instance(&d, tree, target)?;
    let unary = g.unary();
    check_unary(&d, unary)?;
    let t = target.len();
    if t < 2 {
        return Ok(S::zero());
    }
    let idx = SpanIndex::new(t);
    let mut chart: Vec<Vec<S::Elem>> = vec![Vec::new(); idx.size()];
    for (s, &w) in target.iter().enumerate() {
        chart[idx.at(s, s + 1)] = lift::<S>(&terminal_logs(&d, &unary.terminal, w));
    }
    match g {
        GrammarRef::Dense(table) => dense::<S>(&d, table, idx, &mut chart),
        GrammarRef::E(f, _) => rank_e::<S>(&d, f, idx, &mut chart),
        GrammarRef::P(f, _) => rank_p::<S>(&d, f, idx, &mut chart),
    }
    let root = &chart[idx.at(0, t)];
    let start = lift::<S>(&unary.start);
    Ok(sum::<S>(start.iter().zip(root).map(|(s, b)| S::times(s, b))))
}

fn offset(d: &Dims, width: usize) -> usize {
    if width == 1 {
        d.nt * d.nodes
    } else {
        0
    }
}

fn dense<S: Semiring>(d: &Dims, table: &QcfgRuleTable, idx: SpanIndex, chart: &mut [Vec<S::Elem>]) {
    let w = lift::<S>(&table.binary);
    for (i, k) in idx.wide_spans() {
        let mut cell = vec![S::zero(); d.parents()];
        for (p, out) in cell.iter_mut().enumerate() {
            for j in i + 1..k {
                let (lo, ro) = (offset(d, j - i), offset(d, k - j));
                let (lv, rv) = (&chart[idx.at(i, j)], &chart[idx.at(j, k)]);
                for (b, bv) in lv.iter().enumerate() {
                    for (c, cv) in rv.iter().enumerate() {
                        let term = S::times(&S::times(&w[d.binary(p, lo + b, ro + c)], bv), cv);
                        *out = S::plus(out, &term);
                    }
                }
            }
        }
        chart[idx.at(i, k)] = cell;
    }
}

fn rank_e<S: Semiring>(d: &Dims, f: &FactorTablesE, idx: SpanIndex, chart: &mut [Vec<S::Elem>]) {
    let (head, left, right) = (lift::<S>(&f.head), lift::<S>(&f.left), lift::<S>(&f.right));
    let (r, c) = (d.rank, d.children());
    let project = |w: &[S::Elem], off: usize, v: &[S::Elem]| -> Vec<S::Elem> {
        (0..r)
            .map(|rr| sum::<S>(v.iter().enumerate().map(|(b, x)| S::times(&w[rr * c + off + b], x))))
            .collect()
    };
    for (i, k) in idx.wide_spans() {
        let mut acc = vec![S::zero(); r];
        for j in i + 1..k {
            let pl = project(&left, offset(d, j - i), &chart[idx.at(i, j)]);
            let pr = project(&right, offset(d, k - j), &chart[idx.at(j, k)]);
            for rr in 0..r {
                acc[rr] = S::plus(&acc[rr], &S::times(&pl[rr], &pr[rr]));
            }
        }
        chart[idx.at(i, k)] = (0..d.parents())
            .map(|p| sum::<S>((0..r).map(|rr| S::times(&head[p * r + rr], &acc[rr]))))
            .collect();
    }
}

fn rank_p<S: Semiring>(d: &Dims, f: &FactorTablesP, idx: SpanIndex, chart: &mut [Vec<S::Elem>]) {
    let (head, triple) = (lift::<S>(&f.head), lift::<S>(&f.triple));
    let (lsym, rsym) = (lift::<S>(&f.left_sym), lift::<S>(&f.right_sym));
    let (n, m, r) = (d.nodes, d.syms(), d.rank);
    let reduce = |w: &[S::Elem], width: usize, v: &[S::Elem]| -> Vec<S::Elem> {
        let so = if width == 1 { d.nt } else { 0 };
        let count = v.len() / n;
        let mut out = Vec::with_capacity(r * n);
        for rr in 0..r {
            for al in 0..n {
                out.push(sum::<S>((0..count).map(|b| S::times(&w[(rr * n + al) * m + so + b], &v[b * n + al]))));
            }
        }
        out
    };
    for (i, k) in idx.wide_spans() {
        let mut hat = vec![S::zero(); r * n * n];
        for j in i + 1..k {
            let bl = reduce(&lsym, j - i, &chart[idx.at(i, j)]);
            let br = reduce(&rsym, k - j, &chart[idx.at(j, k)]);
            for rr in 0..r {
                for a2 in 0..n {
                    for a3 in 0..n {
                        let at = (rr * n + a2) * n + a3;
                        hat[at] = S::plus(&hat[at], &S::times(&bl[rr * n + a2], &br[rr * n + a3]));
                    }
                }
            }
        }
        let mut cell = Vec::with_capacity(d.parents());
        for a in 0..d.nt {
            for a1 in 0..n {
                let p = d.parent(a, a1);
                cell.push(sum::<S>((0..r).map(|rr| {
                    let g = sum::<S>((0..n * n).map(|q| S::times(&triple[(rr * n + a1) * n * n + q], &hat[rr * n * n + q])));
                    S::times(&head[p * r + rr], &g)
                })));
            }
        }
        chart[idx.at(i, k)] = cell;
    }
}

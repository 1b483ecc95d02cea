use super::chart::{live_splits, ScaledChart};
use super::check_instance;
use super::vanilla::{preterminal_cells, root_log_z};
use crate::error::Result;
use crate::grammar::{Dims, FactorTablesE, UnaryRules};
use crate::logspace::{dot, LinearWeights, ScaledVec, NEG_INF};
use crate::tree::SourceTree;

/// How the rank-space E pass stores wide cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RankMode {
    /// Symbol-space cells; each cell is projected into rank space once.
    #[default]
    Projection,
    /// Rank-space cells; nonterminal projections go through the
    /// precomputed `R × R` transfer matrices.
    PureRank,
}

struct Factors {
    head: LinearWeights,
    left: LinearWeights,
    right: LinearWeights,
}

impl Factors {
    fn new(f: &FactorTablesE) -> Self {
        Factors {
            head: LinearWeights::new(&f.head),
            left: LinearWeights::new(&f.left),
            right: LinearWeights::new(&f.right),
        }
    }
}

fn prepare(f: &FactorTablesE, unary: &UnaryRules, tree: &SourceTree, target: &[usize]) -> Result<Dims> {
    let d = f.dims();
    check_instance(&d, tree, target)?;
    crate::grammar::check_unary(&d, unary)?;
    Ok(d)
}

/// `out[R] = Σ_b w[R][off + b] v[b]`, returned with the combined log scale.
fn project(w: &LinearWeights, d: &Dims, off: usize, cell: &ScaledVec) -> ScaledVec {
    let c = d.children();
    let n = cell.vals.len();
    if cell.is_zero() {
        return ScaledVec::zeros(d.rank);
    }
    let vals = (0..d.rank).map(|r| dot(&w.lin[r * c + off..r * c + off + n], &cell.vals)).collect();
    ScaledVec::from_linear(vals, cell.log_scale + w.shift)
}

fn child_offset(d: &Dims, width: usize) -> usize {
    if width == 1 {
        d.nt * d.nodes
    } else {
        0
    }
}

fn apply_head(h: &LinearWeights, d: &Dims, acc: Vec<f64>, scale: f64) -> ScaledVec {
    let r = d.rank;
    let y = (0..d.parents()).map(|p| dot(&h.lin[p * r..(p + 1) * r], &acc)).collect();
    ScaledVec::from_linear(y, scale + h.shift)
}

/// E-model inside that re-projects both children at every split point.
pub fn inside_e_naive(f: &FactorTablesE, unary: &UnaryRules, tree: &SourceTree, target: &[usize]) -> Result<f64> {
    EWeights::new(f, unary)?.log_z_naive(tree, target)
}

/// E-model tables converted to linear space once, for repeated inside calls.
pub struct EWeights<'a> {
    f: &'a FactorTablesE,
    unary: &'a UnaryRules,
    fw: Factors,
}

impl<'a> EWeights<'a> {
    pub fn new(f: &'a FactorTablesE, unary: &'a UnaryRules) -> Result<Self> {
        crate::grammar::check_unary(&f.dims(), unary)?;
        Ok(EWeights { f, unary, fw: Factors::new(f) })
    }

    /// Same value as [`inside_e_naive`].
    pub fn log_z_naive(&self, tree: &SourceTree, target: &[usize]) -> Result<f64> {
        let d = prepare(self.f, self.unary, tree, target)?;
        if target.len() < 2 {
            return Ok(NEG_INF);
        }
        Ok(naive_pass(d, &self.fw, self.unary, target))
    }

    /// Same value as [`inside_e_rank_with`].
    pub fn log_z_rank(&self, tree: &SourceTree, target: &[usize], mode: RankMode) -> Result<f64> {
        let d = prepare(self.f, self.unary, tree, target)?;
        if target.len() < 2 {
            return Ok(NEG_INF);
        }
        Ok(match mode {
            RankMode::Projection => projection_pass(&d, &self.fw, self.unary, target),
            RankMode::PureRank => pure_rank_pass(&d, &self.fw, self.unary, target),
        })
    }
}

fn naive_pass(d: Dims, fw: &Factors, unary: &UnaryRules, target: &[usize]) -> f64 {
    let t = target.len();
    let mut chart = ScaledChart::new(t);
    preterminal_cells(&mut chart, &d, &unary.terminal, target);
    for (i, k) in chart.idx.wide_spans().collect::<Vec<_>>() {
        let mut acc = vec![0.0; d.rank];
        let mut terms = Vec::with_capacity(k - i - 1);
        for j in i + 1..k {
            let pl = project(&fw.left, &d, child_offset(&d, j - i), chart.get(i, j));
            let pr = project(&fw.right, &d, child_offset(&d, k - j), chart.get(j, k));
            terms.push((pl, pr));
        }
        let (splits, max) = live_splits(i, k, |j| {
            let (pl, pr) = &terms[j - i - 1];
            Some(pl.log_scale + pr.log_scale)
        });
        for &(j, coef) in &splits {
            let (pl, pr) = &terms[j - i - 1];
            for ((a, l), r) in acc.iter_mut().zip(&pl.vals).zip(&pr.vals) {
                *a += coef * l * r;
            }
        }
        let cell = if splits.is_empty() { ScaledVec::zeros(d.parents()) } else { apply_head(&fw.head, &d, acc, max) };
        chart.set(i, k, cell);
    }
    root_log_z(&unary.start, chart.get(0, t))
}

/// E-model inside in rank space: every cell is projected once, then each
/// split costs `O(|R|)`.
pub fn inside_e_rank(f: &FactorTablesE, unary: &UnaryRules, tree: &SourceTree, target: &[usize]) -> Result<f64> {
    inside_e_rank_with(f, unary, tree, target, RankMode::Projection)
}

pub fn inside_e_rank_with(
    f: &FactorTablesE,
    unary: &UnaryRules,
    tree: &SourceTree,
    target: &[usize],
    mode: RankMode,
) -> Result<f64> {
    EWeights::new(f, unary)?.log_z_rank(tree, target, mode)
}

/// Rank-space accumulation `Σ_j c_j PL_ij ⊙ PR_jk` over the split points.
fn accumulate(
    d: &Dims,
    i: usize,
    k: usize,
    pl: &ScaledChart,
    pr: &ScaledChart,
) -> Option<(Vec<f64>, f64)> {
    let (splits, max) = live_splits(i, k, |j| Some(pl.get(i, j).log_scale + pr.get(j, k).log_scale));
    if splits.is_empty() {
        return None;
    }
    let mut acc = vec![0.0; d.rank];
    for &(j, coef) in &splits {
        let (a, b) = (&pl.get(i, j).vals, &pr.get(j, k).vals);
        for r in 0..d.rank {
            acc[r] += coef * a[r] * b[r];
        }
    }
    Some((acc, max))
}

fn projection_pass(d: &Dims, fw: &Factors, unary: &UnaryRules, target: &[usize]) -> f64 {
    let t = target.len();
    let mut chart = ScaledChart::new(t);
    preterminal_cells(&mut chart, d, &unary.terminal, target);
    let mut pl = ScaledChart::new(t);
    let mut pr = ScaledChart::new(t);
    let pt_off = child_offset(d, 1);
    for s in 0..t {
        pl.set(s, s + 1, project(&fw.left, d, pt_off, chart.get(s, s + 1)));
        pr.set(s, s + 1, project(&fw.right, d, pt_off, chart.get(s, s + 1)));
    }
    for (i, k) in chart.idx.wide_spans().collect::<Vec<_>>() {
        let cell = match accumulate(d, i, k, &pl, &pr) {
            Some((acc, max)) => apply_head(&fw.head, d, acc, max),
            None => ScaledVec::zeros(d.parents()),
        };
        if k - i < t {
            pl.set(i, k, project(&fw.left, d, 0, &cell));
            pr.set(i, k, project(&fw.right, d, 0, &cell));
        }
        chart.set(i, k, cell);
    }
    root_log_z(&unary.start, chart.get(0, t))
}

/// `T[R'][R] = Σ_{(A, α)} side[R'][(A, α)] head[(A, α)][R]`.
fn transfer(side: &LinearWeights, head: &LinearWeights, d: &Dims) -> LinearWeights {
    let (r, c, p) = (d.rank, d.children(), d.parents());
    let mut lin = vec![0.0; r * r];
    for rp in 0..r {
        let row = &mut lin[rp * r..(rp + 1) * r];
        for q in 0..p {
            let a = side.lin[rp * c + q];
            if a != 0.0 {
                crate::logspace::axpy(row, a, &head.lin[q * r..(q + 1) * r]);
            }
        }
    }
    LinearWeights { shift: side.shift + head.shift, lin }
}

fn rank_apply(m: &LinearWeights, r: usize, v: &ScaledVec) -> ScaledVec {
    if v.is_zero() {
        return ScaledVec::zeros(r);
    }
    let vals = (0..r).map(|a| dot(&m.lin[a * r..(a + 1) * r], &v.vals)).collect();
    ScaledVec::from_linear(vals, v.log_scale + m.shift)
}

fn pure_rank_pass(d: &Dims, fw: &Factors, unary: &UnaryRules, target: &[usize]) -> f64 {
    let t = target.len();
    let r = d.rank;
    let tl = transfer(&fw.left, &fw.head, d);
    let tr = transfer(&fw.right, &fw.head, d);
    let mut pre = ScaledChart::new(t);
    preterminal_cells(&mut pre, d, &unary.terminal, target);
    let mut pl = ScaledChart::new(t);
    let mut pr = ScaledChart::new(t);
    let pt_off = child_offset(d, 1);
    for s in 0..t {
        pl.set(s, s + 1, project(&fw.left, d, pt_off, pre.get(s, s + 1)));
        pr.set(s, s + 1, project(&fw.right, d, pt_off, pre.get(s, s + 1)));
    }
    let mut root = ScaledVec::zeros(r);
    for (i, k) in pre.idx.wide_spans().collect::<Vec<_>>() {
        let acc = match accumulate(d, i, k, &pl, &pr) {
            Some((acc, max)) => ScaledVec::from_linear(acc, max),
            None => ScaledVec::zeros(r),
        };
        if k - i < t {
            pl.set(i, k, rank_apply(&tl, r, &acc));
            pr.set(i, k, rank_apply(&tr, r, &acc));
        } else {
            root = acc;
        }
    }
    if root.is_zero() {
        return NEG_INF;
    }
    let start = LinearWeights::new(&unary.start);
    let mut u = vec![0.0; r];
    for q in 0..d.parents() {
        if start.lin[q] != 0.0 {
            crate::logspace::axpy(&mut u, start.lin[q], &fw.head.lin[q * r..(q + 1) * r]);
        }
    }
    let z = dot(&u, &root.vals);
    if z <= 0.0 {
        return NEG_INF;
    }
    z.ln() + root.log_scale + start.shift + fw.head.shift
}

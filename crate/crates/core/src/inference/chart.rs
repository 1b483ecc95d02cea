use crate::logspace::ScaledVec;

/// Flat index over spans `(i, k)` with `0 <= i < k <= T`.
#[derive(Clone, Copy, Debug)]
pub struct SpanIndex {
    pub len: usize,
}

impl SpanIndex {
    pub fn new(len: usize) -> Self {
        SpanIndex { len }
    }

    #[inline]
    pub fn at(&self, i: usize, k: usize) -> usize {
        debug_assert!(i < k && k <= self.len);
        i * (self.len + 1) + k
    }

    pub fn size(&self) -> usize {
        (self.len + 1) * (self.len + 1)
    }

    /// Spans of width >= 2 in bottom-up order.
    pub fn wide_spans(&self) -> impl Iterator<Item = (usize, usize)> {
        let t = self.len;
        (2..=t).flat_map(move |w| (0..=t - w).map(move |i| (i, i + w)))
    }
}

/// Chart of scaled cells; unpopulated spans hold empty vectors.
pub(crate) struct ScaledChart {
    pub idx: SpanIndex,
    pub cells: Vec<ScaledVec>,
}

impl ScaledChart {
    pub fn new(len: usize) -> Self {
        let idx = SpanIndex::new(len);
        ScaledChart { idx, cells: vec![ScaledVec::zeros(0); idx.size()] }
    }

    pub fn get(&self, i: usize, k: usize) -> &ScaledVec {
        &self.cells[self.idx.at(i, k)]
    }

    pub fn set(&mut self, i: usize, k: usize, v: ScaledVec) {
        let at = self.idx.at(i, k);
        self.cells[at] = v;
    }
}

/// Nonzero split points of span `(i, k)` with their combined scale, and the
/// maximum of those scales.
pub(crate) fn live_splits(
    i: usize,
    k: usize,
    scale: impl Fn(usize) -> Option<f64>,
) -> (Vec<(usize, f64)>, f64) {
    let mut out = Vec::with_capacity(k - i - 1);
    let mut max = f64::NEG_INFINITY;
    for j in i + 1..k {
        if let Some(s) = scale(j) {
            if s > f64::NEG_INFINITY {
                max = max.max(s);
                out.push((j, s));
            }
        }
    }
    for entry in out.iter_mut() {
        entry.1 = (entry.1 - max).exp();
    }
    (out, max)
}

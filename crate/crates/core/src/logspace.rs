//! Log-space reductions and the shifted-linear representation used by the
//! fast inside passes.

pub const NEG_INF: f64 = f64::NEG_INFINITY;

/// `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == NEG_INF {
        return b;
    }
    if b == NEG_INF {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Streamed logsumexp with max subtraction.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(NEG_INF, f64::max);
    if max == NEG_INF {
        return NEG_INF;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

pub fn log_sum_exp_iter<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    log_sum_exp(&v)
}

/// Log-softmax in place over one row.
pub fn log_normalize(row: &mut [f64]) {
    let z = log_sum_exp(row);
    if z.is_finite() {
        for x in row.iter_mut() {
            *x -= z;
        }
    }
}

/// A vector stored as `exp(log_scale) * vals` with `max(vals) == 1`
/// (or all zeros with `log_scale == -inf`).
#[derive(Clone, Debug)]
pub struct ScaledVec {
    pub log_scale: f64,
    pub vals: Vec<f64>,
}

impl ScaledVec {
    pub fn zeros(len: usize) -> Self {
        ScaledVec { log_scale: NEG_INF, vals: vec![0.0; len] }
    }

    pub fn from_logs(logs: &[f64]) -> Self {
        let max = logs.iter().copied().fold(NEG_INF, f64::max);
        if max == NEG_INF {
            return Self::zeros(logs.len());
        }
        ScaledVec { log_scale: max, vals: logs.iter().map(|&x| (x - max).exp()).collect() }
    }

    /// Wraps raw non-negative values carrying an external log scale.
    pub fn from_linear(mut vals: Vec<f64>, log_scale: f64) -> Self {
        let max = vals.iter().copied().fold(0.0, f64::max);
        if max <= 0.0 || log_scale == NEG_INF {
            vals.iter_mut().for_each(|v| *v = 0.0);
            return ScaledVec { log_scale: NEG_INF, vals };
        }
        let inv = 1.0 / max;
        vals.iter_mut().for_each(|v| *v *= inv);
        ScaledVec { log_scale: log_scale + max.ln(), vals }
    }

    pub fn is_zero(&self) -> bool {
        self.log_scale == NEG_INF
    }

    pub fn log_at(&self, i: usize) -> f64 {
        let v = self.vals[i];
        if v > 0.0 { self.log_scale + v.ln() } else { NEG_INF }
    }

    pub fn to_logs(&self) -> Vec<f64> {
        (0..self.vals.len()).map(|i| self.log_at(i)).collect()
    }
}

/// A weight table converted once to linear space: `w = exp(shift) * lin`.
pub struct LinearWeights {
    pub shift: f64,
    pub lin: Vec<f64>,
}

impl LinearWeights {
    pub fn new(logs: &[f64]) -> Self {
        let shift = logs.iter().copied().fold(NEG_INF, f64::max);
        if shift == NEG_INF {
            return LinearWeights { shift: NEG_INF, lin: vec![0.0; logs.len()] };
        }
        LinearWeights { shift, lin: logs.iter().map(|&x| (x - shift).exp()).collect() }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let i = c * 4;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for i in chunks * 4..n {
        s += a[i] * b[i];
    }
    s
}

/// `y += a * x`
#[inline]
pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_matches_direct() {
        let a: f64 = -1.3;
        let b: f64 = 0.4;
        assert!((log_add(a, b) - (a.exp() + b.exp()).ln()).abs() < 1e-15);
        assert_eq!(log_add(NEG_INF, b), b);
        assert_eq!(log_add(NEG_INF, NEG_INF), NEG_INF);
    }

    #[test]
    fn lse_handles_large_and_empty() {
        assert_eq!(log_sum_exp(&[]), NEG_INF);
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn scaled_round_trip() {
        let logs = [-3.0, NEG_INF, 2.5, -700.0];
        let s = ScaledVec::from_logs(&logs);
        let back = s.to_logs();
        for (a, b) in logs.iter().zip(&back) {
            if a.is_finite() {
                assert!((a - b).abs() < 1e-12);
            } else {
                assert_eq!(*b, NEG_INF);
            }
        }
        let z = ScaledVec::from_linear(vec![0.0, 0.0], 3.0);
        assert!(z.is_zero());
    }

    #[test]
    fn dot_unrolled() {
        let a: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..11).map(|i| (i * 2) as f64).collect();
        assert_eq!(dot(&a, &b), a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>());
    }
}

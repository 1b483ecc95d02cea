//! Semirings for the generic chart pass.
//!
//! Each instance maps a rule log weight into its carrier with
//! [`Semiring::from_log_weight`]; `-inf` weights map to `zero()`.

use crate::logspace::{log_add, NEG_INF};

pub trait Semiring {
    type Elem: Clone + std::fmt::Debug;

    fn zero() -> Self::Elem;
    fn one() -> Self::Elem;
    fn plus(a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn times(a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn from_log_weight(w: f64) -> Self::Elem;
}

/// `(logaddexp, +)`: log partition.
pub struct LogSemiring;

impl Semiring for LogSemiring {
    type Elem = f64;
    fn zero() -> f64 {
        NEG_INF
    }
    fn one() -> f64 {
        0.0
    }
    fn plus(a: &f64, b: &f64) -> f64 {
        log_add(*a, *b)
    }
    fn times(a: &f64, b: &f64) -> f64 {
        if *a == NEG_INF || *b == NEG_INF {
            NEG_INF
        } else {
            a + b
        }
    }
    fn from_log_weight(w: f64) -> f64 {
        w
    }
}

/// `(max, +)`: best derivation log weight.
pub struct MaxSemiring;

impl Semiring for MaxSemiring {
    type Elem = f64;
    fn zero() -> f64 {
        NEG_INF
    }
    fn one() -> f64 {
        0.0
    }
    fn plus(a: &f64, b: &f64) -> f64 {
        a.max(*b)
    }
    fn times(a: &f64, b: &f64) -> f64 {
        LogSemiring::times(a, b)
    }
    fn from_log_weight(w: f64) -> f64 {
        w
    }
}

/// Derivation counting; any finite weight counts as one rule.
pub struct CountingSemiring;

impl Semiring for CountingSemiring {
    type Elem = u128;
    fn zero() -> u128 {
        0
    }
    fn one() -> u128 {
        1
    }
    fn plus(a: &u128, b: &u128) -> u128 {
        a.saturating_add(*b)
    }
    fn times(a: &u128, b: &u128) -> u128 {
        a.saturating_mul(*b)
    }
    fn from_log_weight(w: f64) -> u128 {
        u128::from(w > NEG_INF)
    }
}

/// Plain probabilities; only safe for small instances.
pub struct RealSemiring;

impl Semiring for RealSemiring {
    type Elem = f64;
    fn zero() -> f64 {
        0.0
    }
    fn one() -> f64 {
        1.0
    }
    fn plus(a: &f64, b: &f64) -> f64 {
        a + b
    }
    fn times(a: &f64, b: &f64) -> f64 {
        a * b
    }
    fn from_log_weight(w: f64) -> f64 {
        w.exp()
    }
}

/// First-order expectation semiring over `(p, r)` with `r` accumulating
/// `p · (-log p)`. At the root, `H = log Z + r / Z`
/// ([`EntropySemiring::entropy`]).
pub struct EntropySemiring;

impl Semiring for EntropySemiring {
    type Elem = (f64, f64);
    fn zero() -> (f64, f64) {
        (0.0, 0.0)
    }
    fn one() -> (f64, f64) {
        (1.0, 0.0)
    }
    fn plus(a: &(f64, f64), b: &(f64, f64)) -> (f64, f64) {
        (a.0 + b.0, a.1 + b.1)
    }
    fn times(a: &(f64, f64), b: &(f64, f64)) -> (f64, f64) {
        (a.0 * b.0, a.0 * b.1 + b.0 * a.1)
    }
    fn from_log_weight(w: f64) -> (f64, f64) {
        if w == NEG_INF {
            (0.0, 0.0)
        } else {
            let p = w.exp();
            (p, -p * w)
        }
    }
}

impl EntropySemiring {
    /// Entropy of the normalized derivation distribution from a root value.
    pub fn entropy(root: &(f64, f64)) -> f64 {
        let (z, r) = *root;
        z.ln() + r / z
    }
}

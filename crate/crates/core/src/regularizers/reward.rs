use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grammar::QcfgRuleTable;
use crate::inference::{expected_rule_counts, inside_vanilla};
use crate::logspace::NEG_INF;
use crate::tree::{Distance, SourceTree};

/// `ζ(d) = d·e^{-d}`, `ζ(∞) = 0`.
pub fn zeta(d: Distance) -> f64 {
    match d {
        Distance::Finite(d) => {
            let d = d as f64;
            d * (-d).exp()
        }
        Distance::Infinite => 0.0,
    }
}

/// `(d, ζ(d))` for `d = 1..=max_d`.
pub fn reward_values(max_d: u32) -> Result<Vec<(u32, f64)>> {
    if max_d < 1 {
        return Err(Error::InvalidConfig("max distance must be at least 1".into()));
    }
    Ok((1..=max_d).map(|d| (d, zeta(Distance::Finite(d)))).collect())
}

#[derive(Clone, Default)]
pub enum RewardFn {
    #[default]
    DistanceDecay,
    /// `ζ ≡ 1`.
    Constant,
    Custom(Arc<dyn Fn(Distance) -> f64 + Send + Sync>),
}

impl RewardFn {
    pub fn eval(&self, d: Distance) -> f64 {
        match self {
            RewardFn::DistanceDecay => zeta(d),
            RewardFn::Constant => 1.0,
            RewardFn::Custom(f) => f(d),
        }
    }
}

impl fmt::Debug for RewardFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewardFn::DistanceDecay => f.write_str("DistanceDecay"),
            RewardFn::Constant => f.write_str("Constant"),
            RewardFn::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RewardConfig {
    pub reward: RewardFn,
    /// Entropy weight `τ >= 0`.
    pub tau: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardObjective {
    /// `log Σ_t p(t) Π_r ζ(d(r))`
    pub log_expected_reward: f64,
    /// Entropy of the target-tree posterior.
    pub entropy: f64,
    /// `log_expected_reward + τ · entropy`
    pub combined: f64,
}

/// Reward term by one inside pass with each binary weight scaled by
/// `ζ(d(r))`; entropy as `log Z - Σ_r E[c_r] log w_r`.
pub fn expected_reward_objective(
    table: &QcfgRuleTable,
    tree: &SourceTree,
    target: &[usize],
    cfg: &RewardConfig,
) -> Result<RewardObjective> {
    if !(cfg.tau >= 0.0) {
        return Err(Error::InvalidConfig(format!("tau must be non-negative, got {}", cfg.tau)));
    }
    let io = expected_rule_counts(table, tree, target)?;
    let entropy = (io.log_z - io.counts.dot_weights(table)).max(0.0);

    let d = table.dims();
    let n = d.nodes;
    let mut rewarded = table.clone();
    let mut log_zeta = vec![NEG_INF; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                log_zeta[(i * n + j) * n + k] = cfg.reward.eval(tree.rule_distance_unchecked(i, j, k)).ln();
            }
        }
    }
    let c = d.children();
    for p in 0..d.parents() {
        let i = p % n;
        for l in 0..c {
            for r in 0..c {
                rewarded.binary[d.binary(p, l, r)] += log_zeta[(i * n + l % n) * n + r % n];
            }
        }
    }
    rewarded.normalized = false;
    let log_expected_reward = inside_vanilla(&rewarded, tree, target)?;
    Ok(RewardObjective { log_expected_reward, entropy, combined: log_expected_reward + cfg.tau * entropy })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AxiomReport {
    pub monotone_checked: usize,
    pub monotone_violations: Vec<u32>,
    pub product_checked: usize,
    pub product_violations: Vec<(u32, u32, u32, u32)>,
}

impl AxiomReport {
    pub fn holds(&self) -> bool {
        self.monotone_violations.is_empty() && self.product_violations.is_empty()
    }
}

/// Strict decrease on `1..=max_d`, and `f(a)f(b) > f(c)f(d)` for every
/// quadruple with `a + b = c + d <= max_d` and `max(a, b) < max(c, d)`.
pub fn check_reward_axioms(f: &dyn Fn(Distance) -> f64, max_d: u32) -> AxiomReport {
    let v = |d: u32| f(Distance::Finite(d));
    let mut rep = AxiomReport::default();
    for d in 1..max_d {
        rep.monotone_checked += 1;
        if !(v(d) > v(d + 1)) {
            rep.monotone_violations.push(d);
        }
    }
    for s in 2..=max_d {
        for a in 1..s {
            let b = s - a;
            for c in 1..s {
                let dd = s - c;
                if a.max(b) < c.max(dd) {
                    rep.product_checked += 1;
                    if !(v(a) * v(b) > v(c) * v(dd)) {
                        rep.product_violations.push((a, b, c, dd));
                    }
                }
            }
        }
    }
    rep
}

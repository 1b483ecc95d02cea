use serde::Serialize;

use crate::error::{Error, Result};
use crate::grammar::{Dims, QcfgRuleTable};
use crate::inference::{expected_rule_counts, inside_vanilla, RuleCounts};
use crate::logspace::NEG_INF;
use crate::tree::SourceTree;

/// How the KL term enters [`pr_objective`]'s combined value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlCombination {
    /// `log p - γ·KL`
    #[default]
    Penalize,
    /// `log p + γ·KL`
    Add,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageConfig {
    pub upper_bound: f64,
    /// Per-node bound `ξ`.
    pub xi: Vec<f64>,
    pub gamma: f64,
    pub step: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub combination: KlCombination,
}

impl CoverageConfig {
    /// `ξ = u·1` over `nodes` source nodes with the default solver settings.
    pub fn uniform(u: f64, nodes: usize) -> Self {
        CoverageConfig {
            upper_bound: u,
            xi: vec![u; nodes],
            gamma: 1.0,
            step: 1.0,
            max_iters: 500,
            tol: 1e-4,
            combination: KlCombination::Penalize,
        }
    }

    pub fn validate(&self, nodes: usize) -> Result<()> {
        if !(self.upper_bound >= 1.0) {
            return Err(Error::InvalidConfig(format!("upper bound must be >= 1, got {}", self.upper_bound)));
        }
        if self.xi.len() != nodes {
            return Err(Error::DimensionMismatch(format!("xi has {} entries for {nodes} nodes", self.xi.len())));
        }
        if !(self.gamma >= 0.0 && self.step > 0.0 && self.tol > 0.0) {
            return Err(Error::InvalidConfig("gamma >= 0, step > 0 and tol > 0 required".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualState {
    pub lambda: Vec<f64>,
    /// `-ξ·λ - log Z(λ)`
    pub dual_value: f64,
    pub converged: bool,
    pub iterations: usize,
    /// ∞-norm of the projected gradient at `lambda`.
    pub grad_norm: f64,
    /// `E_q[φ_i]` at `lambda`.
    pub expected_features: Vec<f64>,
    pub trajectory: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PrSolution {
    pub state: DualState,
    /// `log p(r) - λ·φ(r)`, unnormalized.
    pub q_weights: QcfgRuleTable,
}

/// Applies `w_r · exp(-λ_α)` to every binary and terminal rule whose
/// left-hand side is aligned to `α`.
pub fn reweight(table: &QcfgRuleTable, lambda: &[f64]) -> QcfgRuleTable {
    let d = table.dims();
    let c2 = d.children() * d.children();
    let mut q = table.clone();
    for (p, row) in q.binary.chunks_mut(c2).enumerate() {
        let l = lambda[p % d.nodes];
        if l != 0.0 {
            row.iter_mut().for_each(|w| *w -= l);
        }
    }
    for (x, row) in q.unary.terminal.chunks_mut(d.vocab).enumerate() {
        let l = lambda[x % d.nodes];
        if l != 0.0 {
            row.iter_mut().for_each(|w| *w -= l);
        }
    }
    q.normalized = false;
    q
}

/// `E[φ_α]`: expected number of target nodes (binary and preterminal
/// left-hand sides) aligned to each source node.
pub fn expected_node_features(counts: &RuleCounts, d: &Dims) -> Vec<f64> {
    let mut out = vec![0.0; d.nodes];
    let c2 = d.children() * d.children();
    for (p, row) in counts.binary.chunks(c2).enumerate() {
        out[p % d.nodes] += row.iter().sum::<f64>();
    }
    for (x, row) in counts.terminal.chunks(d.vocab).enumerate() {
        out[x % d.nodes] += row.iter().sum::<f64>();
    }
    out
}

struct Problem<'a> {
    table: &'a QcfgRuleTable,
    tree: &'a SourceTree,
    target: &'a [usize],
    xi: &'a [f64],
    log_z_p: f64,
}

impl Problem<'_> {
    fn dual(&self, lambda: &[f64]) -> Result<f64> {
        let q = reweight(self.table, lambda);
        let log_z = inside_vanilla(&q, self.tree, self.target)? - self.log_z_p;
        let xl: f64 = self.xi.iter().zip(lambda).map(|(x, l)| x * l).sum();
        Ok(-xl - log_z)
    }

    fn features(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let q = reweight(self.table, lambda);
        let io = expected_rule_counts(&q, self.tree, self.target)?;
        Ok(expected_node_features(&io.counts, &self.table.dims()))
    }
}

fn projected_grad(lambda: &[f64], grad: &[f64]) -> f64 {
    lambda
        .iter()
        .zip(grad)
        .map(|(&l, &g)| if l <= 0.0 && g < 0.0 { 0.0 } else { g.abs() })
        .fold(0.0, f64::max)
}

fn prepare<'a>(
    table: &'a QcfgRuleTable,
    tree: &'a SourceTree,
    target: &'a [usize],
    xi: &'a [f64],
) -> Result<Problem<'a>> {
    let log_z_p = inside_vanilla(table, tree, target)?;
    if log_z_p == NEG_INF {
        return Err(Error::NoDerivation);
    }
    Ok(Problem { table, tree, target, xi, log_z_p })
}

/// Dual objective `-ξ·λ - log Z(λ)` with `Z(λ) = E_p[exp(-λ·φ)]`.
pub fn dual_value(table: &QcfgRuleTable, tree: &SourceTree, target: &[usize], xi: &[f64], lambda: &[f64]) -> Result<f64> {
    if xi.len() != table.nodes || lambda.len() != table.nodes {
        return Err(Error::DimensionMismatch("xi and lambda need one entry per source node".into()));
    }
    prepare(table, tree, target, xi)?.dual(lambda)
}

/// Projected gradient ascent on the coverage dual. Steps that lower the
/// dual are retried at half the step size.
pub fn pr_solve(table: &QcfgRuleTable, tree: &SourceTree, target: &[usize], cfg: &CoverageConfig) -> Result<PrSolution> {
    cfg.validate(table.nodes)?;
    let pb = prepare(table, tree, target, &cfg.xi)?;
    let n = table.nodes;
    let mut lambda = vec![0.0; n];
    let mut value = pb.dual(&lambda)?;
    let mut feats = pb.features(&lambda)?;
    let mut step = cfg.step;
    let mut trajectory = vec![value];
    let mut iterations = 0;
    loop {
        let grad: Vec<f64> = feats.iter().zip(&cfg.xi).map(|(f, x)| f - x).collect();
        let norm = projected_grad(&lambda, &grad);
        if norm <= cfg.tol {
            let state = DualState {
                lambda: lambda.clone(),
                dual_value: value,
                converged: true,
                iterations,
                grad_norm: norm,
                expected_features: feats,
                trajectory,
            };
            return Ok(PrSolution { q_weights: reweight(table, &lambda), state });
        }
        if iterations >= cfg.max_iters {
            return Err(Error::NonConvergence { iterations, grad_norm: norm });
        }
        iterations += 1;
        loop {
            let cand: Vec<f64> = lambda.iter().zip(&grad).map(|(l, g)| (l + step * g).max(0.0)).collect();
            let v = pb.dual(&cand)?;
            if v >= value || step < 1e-12 {
                lambda = cand;
                value = v;
                break;
            }
            step *= 0.5;
        }
        feats = pb.features(&lambda)?;
        trajectory.push(value);
    }
}

/// `KL(q̂ || p̂)` over target trees for two tables on the same rule layout:
/// `Σ_r E_q[c_r](log q_r - log p_r) - log Z_q + log Z_p`.
pub fn kl_factored(q: &QcfgRuleTable, p: &QcfgRuleTable, tree: &SourceTree, target: &[usize]) -> Result<f64> {
    if q.dims() != p.dims() {
        return Err(Error::DimensionMismatch("q and p tables differ in shape".into()));
    }
    let io = expected_rule_counts(q, tree, target)?;
    let log_z_p = inside_vanilla(p, tree, target)?;
    let mut cross = 0.0;
    let groups = [
        ("start", &io.counts.start, &q.unary.start, &p.unary.start),
        ("binary", &io.counts.binary, &q.binary, &p.binary),
        ("terminal", &io.counts.terminal, &q.unary.terminal, &p.unary.terminal),
    ];
    for (name, c, wq, wp) in groups {
        for ((&c, &a), &b) in c.iter().zip(wq.iter()).zip(wp.iter()) {
            if c <= 0.0 {
                continue;
            }
            if b == NEG_INF {
                return Err(Error::SupportMismatch(format!("{name} rule used by q has zero weight under p")));
            }
            cross += c * (a - b);
        }
    }
    let kl = cross - io.log_z + log_z_p;
    Ok(if kl < 0.0 && kl > -1e-9 { 0.0 } else { kl })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrObjective {
    pub log_likelihood: f64,
    pub kl: f64,
    pub combined: f64,
    pub state: DualState,
}

/// `log p(s₂|t₁)` and `KL(q*||p)` at the dual optimum, combined with
/// weight `γ` according to `cfg.combination`.
pub fn pr_objective(table: &QcfgRuleTable, tree: &SourceTree, target: &[usize], cfg: &CoverageConfig) -> Result<PrObjective> {
    let sol = pr_solve(table, tree, target, cfg)?;
    let log_likelihood = inside_vanilla(table, tree, target)?;
    let kl = kl_factored(&sol.q_weights, table, tree, target)?;
    let combined = match cfg.combination {
        KlCombination::Penalize => log_likelihood - cfg.gamma * kl,
        KlCombination::Add => log_likelihood + cfg.gamma * kl,
    };
    Ok(PrObjective { log_likelihood, kl, combined, state: sol.state })
}

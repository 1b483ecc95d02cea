//! Property suites run by the `verify` command. Each property is checked on
//! `seeds` independently generated instances, in parallel.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fixtures::{
    enumerable_instance, random_tokens, small_support_instance, tight_coverage_instance, Instance, MaskLevel, TinyShape,
};
use crate::grammar::random::{random_e, random_p, random_unary};
use crate::grammar::{apply_hierarchy_mask, compose_e, compose_p, mask_triple, HierarchyMode};
use crate::inference::{
    expected_rule_counts, inside_e_naive, inside_e_rank, inside_e_rank_with, inside_generic, inside_p,
    inside_vanilla, sample_target_trees, CountingSemiring, GrammarRef, LogSemiring, MaxSemiring, RankMode,
};
use crate::logspace::NEG_INF;
use crate::oracle::{
    oracle_count, oracle_entropy, oracle_expected_counts, oracle_kl, oracle_log_expected_reward, oracle_log_z,
    oracle_max, oracle_posterior, Derivation, OracleLimits,
};
use crate::regularizers::{
    check_reward_axioms, dual_value, expected_reward_objective, kl_factored, pr_solve, reweight, zeta,
    CoverageConfig, RewardConfig, RewardFn,
};
use crate::tree::random_binary_tree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyScope {
    Inside,
    Rank,
    PModel,
    Rewards,
    Pr,
    Sampling,
    All,
}

impl VerifyScope {
    const SUITES: [VerifyScope; 6] = [
        VerifyScope::Inside,
        VerifyScope::Rank,
        VerifyScope::PModel,
        VerifyScope::Rewards,
        VerifyScope::Pr,
        VerifyScope::Sampling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VerifyScope::Inside => "inside",
            VerifyScope::Rank => "rank",
            VerifyScope::PModel => "p-model",
            VerifyScope::Rewards => "rewards",
            VerifyScope::Pr => "pr",
            VerifyScope::Sampling => "sampling",
            VerifyScope::All => "all",
        }
    }
}

impl fmt::Display for VerifyScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VerifyScope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::SUITES
            .into_iter()
            .chain([VerifyScope::All])
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown verify scope '{s}'")))
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub seeds: usize,
    pub base_seed: u64,
    /// Perturb one factor entry before the decomposition checks.
    pub corrupt: bool,
    pub sample_count: usize,
    pub limits: OracleLimits,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seeds: 20,
            base_seed: 0,
            corrupt: false,
            sample_count: 20_000,
            limits: OracleLimits { max_derivations: 200_000, ..OracleLimits::default() },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PropertyReport {
    pub name: &'static str,
    pub scope: VerifyScope,
    pub instances: usize,
    pub passed: usize,
    /// First few failure messages.
    pub failures: Vec<String>,
}

impl PropertyReport {
    pub fn ok(&self) -> bool {
        self.passed == self.instances
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub scope: VerifyScope,
    pub seeds: usize,
    pub corrupt: bool,
    pub ok: bool,
    pub properties: Vec<PropertyReport>,
}

type Check = fn(u64, &VerifyOptions) -> std::result::Result<(), String>;

fn close(name: &str, a: f64, b: f64, tol: f64) -> std::result::Result<(), String> {
    if (a == NEG_INF && b == NEG_INF) || (a - b).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{name}: {a} vs {b} (tol {tol:e})"))
    }
}

fn lib<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn shape(seed: u64) -> TinyShape {
    TinyShape::draw(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed))
}

fn oracle_case(seed: u64, opts: &VerifyOptions, need: bool) -> std::result::Result<(Instance, Vec<Derivation>), String> {
    let mask = MaskLevel::ALL[(seed % 2) as usize];
    match lib(enumerable_instance(shape(seed), mask, seed, &opts.limits, need))? {
        Some((inst, d, _)) => Ok((inst, d)),
        None => Err("no enumerable instance".into()),
    }
}

fn check_log_z(seed: u64, o: &VerifyOptions) -> std::result::Result<(), String> {
    let (i, d) = oracle_case(seed, o, false)?;
    close("log Z", lib(inside_vanilla(&i.table, &i.tree, &i.target))?, oracle_log_z(&d), 1e-9)
}

fn check_semirings(seed: u64, o: &VerifyOptions) -> std::result::Result<(), String> {
    let (i, d) = oracle_case(seed, o, false)?;
    let g = GrammarRef::Dense(&i.table);
    let count = lib(inside_generic::<CountingSemiring>(g, &i.tree, &i.target))?;
    if count != oracle_count(&d) {
        return Err(format!("count {count} vs oracle {}", oracle_count(&d)));
    }
    close("viterbi", lib(inside_generic::<MaxSemiring>(g, &i.tree, &i.target))?, oracle_max(&d), 1e-12)?;
    let z = lib(inside_vanilla(&i.table, &i.tree, &i.target))?;
    close("generic log", lib(inside_generic::<LogSemiring>(g, &i.tree, &i.target))?, z, 1e-12)
}

fn check_counts(seed: u64, o: &VerifyOptions) -> std::result::Result<(), String> {
    let (i, d) = oracle_case(seed, o, true)?;
    let io = lib(expected_rule_counts(&i.table, &i.tree, &i.target))?;
    let oc = lib(oracle_expected_counts(&d, &i.table.dims()))?;
    let t = i.target.len() as f64;
    let c = &io.counts;
    close("start total", c.start.iter().sum(), 1.0, 1e-9)?;
    close("binary total", c.binary.iter().sum(), t - 1.0, 1e-9)?;
    close("terminal total", c.terminal.iter().sum(), t, 1e-9)?;
    for (a, b) in c.start.iter().chain(&c.binary).chain(&c.terminal).zip(oc.start.iter().chain(&oc.binary).chain(&oc.terminal)) {
        close("expected count", *a, *b, 1e-8)?;
    }
    Ok(())
}

fn check_gradient(seed: u64, o: &VerifyOptions) -> std::result::Result<(), String> {
    let (i, _) = oracle_case(seed, o, true)?;
    let io = lib(expected_rule_counts(&i.table, &i.tree, &i.target))?;
    finite_difference_check(&i, &io.counts.binary, 1e-4, 1e-5)
}

/// Central differences of `log Z` in each binary log weight whose expected
/// count is at least `1e-4`.
pub fn finite_difference_check(
    inst: &Instance,
    binary_counts: &[f64],
    h: f64,
    rel_tol: f64,
) -> std::result::Result<(), String> {
    let mut table = inst.table.clone();
    for (r, &c) in binary_counts.iter().enumerate() {
        if c < 1e-4 {
            continue;
        }
        let w = table.binary[r];
        table.binary[r] = w + h;
        let up = lib(inside_vanilla(&table, &inst.tree, &inst.target))?;
        table.binary[r] = w - h;
        let down = lib(inside_vanilla(&table, &inst.tree, &inst.target))?;
        table.binary[r] = w;
        let fd = (up - down) / (2.0 * h);
        if (fd - c).abs() > rel_tol * c.abs() {
            return Err(format!("rule {r}: finite difference {fd} vs expected count {c}"));
        }
    }
    Ok(())
}

fn decomposition_setup(seed: u64) -> (TinyShape, usize, crate::tree::SourceTree, Vec<usize>) {
    let s = shape(seed);
    let rank = [1, 2, 4][(seed % 3) as usize];
    let tree = random_binary_tree(s.leaves, seed).expect("at least two leaves");
    let target = random_tokens(s.target_len, s.vocab, seed);
    (s, rank, tree, target)
}

fn check_e(seed: u64, o: &VerifyOptions) -> std::result::Result<(), String> {
    let (s, rank, tree, target) = decomposition_setup(seed);
    let cfg = s.cfg(rank);
    let n = tree.num_nodes();
    let unary = random_unary(&cfg, n, seed, 1.0);
    let f = lib(random_e(&cfg, n, seed, 1.0))?;
    let dense = lib(compose_e(&f, unary.clone()))?;
    let mut g = f.clone();
    if o.corrupt {
        g.head[0] += 1.0;
    }
    let zv = lib(inside_vanilla(&dense, &tree, &target))?;
    let zn = lib(inside_e_naive(&g, &unary, &tree, &target))?;
    let zr = lib(inside_e_rank(&g, &unary, &tree, &target))?;
    close("e-naive vs composed vanilla", zn, zv, 1e-9)?;
    close("e-rank vs e-naive", zr, zn, 1e-9)?;
    let zp = lib(inside_e_rank_with(&g, &unary, &tree, &target, RankMode::PureRank))?;
    close("pure rank vs projection", zp, zr, 1e-9)
}

fn check_p(seed: u64, o: &VerifyOptions) -> std::result::Result<(), String> {
    let (s, rank, tree, target) = decomposition_setup(seed);
    let cfg = s.cfg(rank);
    let n = tree.num_nodes();
    let unary = random_unary(&cfg, n, seed, 1.0);
    let f = lib(random_p(&cfg, n, seed, 1.0))?;
    let dense = lib(compose_p(&f, unary.clone()))?;
    let mut g = f.clone();
    if o.corrupt {
        g.head[0] += 1.0;
    }
    close("p vs composed vanilla", lib(inside_p(&g, &unary, &tree, &target))?, lib(inside_vanilla(&dense, &tree, &target))?, 1e-9)?;
    let masked = lib(mask_triple(&g, &tree, HierarchyMode::Descendant))?;
    let dense = lib(apply_hierarchy_mask(&dense, &tree, HierarchyMode::Descendant))?;
    close(
        "masked triple vs masked dense",
        lib(inside_p(&masked, &unary, &tree, &target))?,
        lib(inside_vanilla(&dense, &tree, &target))?,
        1e-9,
    )
}

fn check_axioms(_: u64, _: &VerifyOptions) -> std::result::Result<(), String> {
    let rep = check_reward_axioms(&zeta, 16);
    if rep.holds() {
        Ok(())
    } else {
        Err(format!("{:?} / {:?}", rep.monotone_violations, rep.product_violations))
    }
}

fn check_reward(seed: u64, o: &VerifyOptions) -> std::result::Result<(), String> {
    let (i, d) = oracle_case(seed, o, true)?;
    let obj = lib(expected_reward_objective(&i.table, &i.tree, &i.target, &RewardConfig::default()))?;
    let want = oracle_log_expected_reward(&d, &i.tree, &i.table.dims(), &zeta);
    close("log expected reward", obj.log_expected_reward, want, 1e-8)?;
    close("entropy", obj.entropy, lib(oracle_entropy(&d))?, 1e-8)?;
    let flat = RewardConfig { reward: RewardFn::Constant, tau: 0.0 };
    let obj = lib(expected_reward_objective(&i.table, &i.tree, &i.target, &flat))?;
    let z = lib(inside_vanilla(&i.table, &i.tree, &i.target))?;
    if obj.combined != z {
        return Err(format!("constant reward objective {} != log Z {z}", obj.combined));
    }
    Ok(())
}

/// Solver conditions on a tight instance: feasibility, complementary
/// slackness, an active multiplier, and dominance over random probes.
pub fn pr_tight_check(seed: u64, probes: usize) -> std::result::Result<(), String> {
    let (i, node) = lib(tight_coverage_instance(seed))?;
    let cfg = CoverageConfig::uniform(1.0, i.table.nodes);
    let sol = lib(pr_solve(&i.table, &i.tree, &i.target, &cfg))?;
    let st = &sol.state;
    if !st.converged || st.iterations > cfg.max_iters {
        return Err(format!("not converged after {} iterations", st.iterations));
    }
    if !(st.lambda[node] > 0.0) {
        return Err(format!("multiplier at boosted node {node} is {}", st.lambda[node]));
    }
    for (k, (&f, &x)) in st.expected_features.iter().zip(&cfg.xi).enumerate() {
        if f > x + 1e-3 {
            return Err(format!("node {k}: E_q[phi] = {f} exceeds {x}"));
        }
        let cs = st.lambda[k] * (f - x);
        if cs.abs() > 1e-2 {
            return Err(format!("node {k}: complementary slackness {cs}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd0a1);
    for _ in 0..probes {
        let probe: Vec<f64> = (0..i.table.nodes).map(|_| rng.random_range(0.0..4.0)).collect();
        let v = lib(dual_value(&i.table, &i.tree, &i.target, &cfg.xi, &probe))?;
        if v > st.dual_value + 1e-12 {
            return Err(format!("probe dual {v} beats solution {}", st.dual_value));
        }
    }
    Ok(())
}

fn check_pr_tight(seed: u64, _: &VerifyOptions) -> std::result::Result<(), String> {
    pr_tight_check(seed, 20)
}

fn check_pr_slack(seed: u64, o: &VerifyOptions) -> std::result::Result<(), String> {
    let (i, _) = oracle_case(seed, o, true)?;
    let cfg = CoverageConfig::uniform((2 * i.target.len()) as f64, i.table.nodes);
    let sol = lib(pr_solve(&i.table, &i.tree, &i.target, &cfg))?;
    if sol.state.lambda.iter().any(|&l| l != 0.0) {
        return Err(format!("slack bound gave lambda {:?}", sol.state.lambda));
    }
    let kl = lib(kl_factored(&sol.q_weights, &i.table, &i.tree, &i.target))?;
    close("slack KL", kl, 0.0, 1e-9)
}

fn check_kl(seed: u64, o: &VerifyOptions) -> std::result::Result<(), String> {
    let (i, dp) = oracle_case(seed, o, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4b4c);
    let lambda: Vec<f64> = (0..i.table.nodes).map(|_| rng.random_range(0.0..2.0)).collect();
    let q = reweight(&i.table, &lambda);
    let dq = lib(crate::oracle::enumerate(&q, &i.tree, &i.target, &o.limits))?;
    let kl = lib(kl_factored(&q, &i.table, &i.tree, &i.target))?;
    if kl < 0.0 {
        return Err(format!("negative KL {kl}"));
    }
    close("KL", kl, lib(oracle_kl(&dq, &dp))?, 1e-8)?;
    close("KL(p,p)", lib(kl_factored(&i.table, &i.table, &i.tree, &i.target))?, 0.0, 1e-9)
}

/// Total-variation distance between `count` posterior samples and the
/// enumerated posterior.
pub fn sampling_tv(inst: &Instance, derivs: &[Derivation], count: usize, seed: u64) -> Result<f64> {
    let d = inst.table.dims();
    let post = oracle_posterior(derivs, &d)?;
    let samples = sample_target_trees(&inst.table, &inst.tree, &inst.target, count, seed)?;
    let mut emp: HashMap<_, f64> = HashMap::new();
    for s in &samples {
        *emp.entry(s.signature()).or_default() += 1.0 / count as f64;
    }
    let mut tv: f64 = post.iter().map(|(k, p)| (p - emp.get(k).copied().unwrap_or(0.0)).abs()).sum();
    tv += emp.iter().filter(|(k, _)| !post.contains_key(*k)).map(|(_, q)| q).sum::<f64>();
    Ok(tv / 2.0)
}

/// Largest posterior support used for sampling checks; with 20000 draws the
/// expected TV noise over 24 outcomes stays near 0.014.
pub const SAMPLING_MAX_DERIVATIONS: usize = 24;

fn check_sampling(seed: u64, o: &VerifyOptions) -> std::result::Result<(), String> {
    let max = SAMPLING_MAX_DERIVATIONS.min(o.limits.max_derivations);
    let (i, d) = lib(small_support_instance(seed, max))?;
    let tv = lib(sampling_tv(&i, &d, o.sample_count, seed))?;
    if tv <= 0.03 {
        Ok(())
    } else {
        Err(format!("TV distance {tv}"))
    }
}

fn properties(scope: VerifyScope) -> Vec<(&'static str, VerifyScope, Check, bool)> {
    // (name, scope, check, one instance only)
    let all: Vec<(&'static str, VerifyScope, Check, bool)> = vec![
        ("oracle-log-z", VerifyScope::Inside, check_log_z, false),
        ("semiring-generic", VerifyScope::Inside, check_semirings, false),
        ("expected-counts", VerifyScope::Inside, check_counts, false),
        ("gradient-finite-difference", VerifyScope::Inside, check_gradient, false),
        ("e-decomposition", VerifyScope::Rank, check_e, false),
        ("p-decomposition", VerifyScope::PModel, check_p, false),
        ("reward-axioms", VerifyScope::Rewards, check_axioms, true),
        ("reward-entropy-oracle", VerifyScope::Rewards, check_reward, false),
        ("pr-tight", VerifyScope::Pr, check_pr_tight, false),
        ("pr-slack", VerifyScope::Pr, check_pr_slack, false),
        ("kl-oracle", VerifyScope::Pr, check_kl, false),
        ("sampling-tv", VerifyScope::Sampling, check_sampling, false),
    ];
    all.into_iter().filter(|p| scope == VerifyScope::All || p.1 == scope).collect()
}

pub fn run_verify(scope: VerifyScope, opts: &VerifyOptions) -> VerifyReport {
    let mut reports = Vec::new();
    for (name, sc, check, single) in properties(scope) {
        let n = if single { 1 } else { opts.seeds };
        let results: Vec<std::result::Result<(), String>> = (0..n as u64)
            .into_par_iter()
            .map(|k| {
                let seed = opts.base_seed.wrapping_add(k);
                check(seed, opts).map_err(|e| format!("seed {seed}: {e}"))
            })
            .collect();
        let failures: Vec<String> = results.iter().filter_map(|r| r.clone().err()).collect();
        reports.push(PropertyReport {
            name,
            scope: sc,
            instances: n,
            passed: n - failures.len(),
            failures: failures.into_iter().take(5).collect(),
        });
    }
    VerifyReport {
        scope,
        seeds: opts.seeds,
        corrupt: opts.corrupt,
        ok: reports.iter().all(PropertyReport::ok),
        properties: reports,
    }
}

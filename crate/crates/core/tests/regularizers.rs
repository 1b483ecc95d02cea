use qcfg::fixtures::{deterministic_instance, random_instance, tight_coverage_instance, two_derivation_instance, MaskLevel, TinyShape};
use qcfg::inference::inside_vanilla;
use qcfg::oracle::{enumerate, oracle_entropy, oracle_kl, oracle_log_expected_reward, OracleLimits};
use qcfg::regularizers::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn limits() -> OracleLimits {
    OracleLimits { max_derivations: 200_000, ..OracleLimits::default() }
}

#[test]
fn constant_reward_without_entropy_is_log_z() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..10 {
        let inst = random_instance(TinyShape::draw(&mut rng), MaskLevel::Basic, seed).unwrap();
        let cfg = RewardConfig { reward: RewardFn::Constant, tau: 0.0 };
        let Ok(obj) = expected_reward_objective(&inst.table, &inst.tree, &inst.target, &cfg) else { continue };
        let z = inside_vanilla(&inst.table, &inst.tree, &inst.target).unwrap();
        assert_eq!(obj.log_expected_reward, z);
        assert_eq!(obj.combined, z);
    }
}

#[test]
fn deterministic_direct_child_rule() {
    let inst = deterministic_instance();
    let obj = expected_reward_objective(&inst.table, &inst.tree, &inst.target, &RewardConfig::default()).unwrap();
    assert!((obj.log_expected_reward - (-1.0)).abs() < 1e-12);
    assert!(obj.entropy.abs() < 1e-12);
}

#[test]
fn reward_and_entropy_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    for seed in 0..40 {
        let inst = random_instance(TinyShape::draw(&mut rng), MaskLevel::ALL[seed as usize % 4], seed).unwrap();
        let Ok(derivs) = enumerate(&inst.table, &inst.tree, &inst.target, &limits()) else { continue };
        if derivs.is_empty() {
            continue;
        }
        checked += 1;
        let cfg = RewardConfig { reward: RewardFn::DistanceDecay, tau: 0.5 };
        let obj = expected_reward_objective(&inst.table, &inst.tree, &inst.target, &cfg).unwrap();
        let or = oracle_log_expected_reward(&derivs, &inst.tree, &inst.table.dims(), &zeta);
        let oe = oracle_entropy(&derivs).unwrap();
        assert!((obj.log_expected_reward - or).abs() < 1e-8 || (or == f64::NEG_INFINITY && obj.log_expected_reward == or));
        assert!((obj.entropy - oe).abs() < 1e-8);
        assert!((obj.combined - (obj.log_expected_reward + 0.5 * obj.entropy)).abs() < 1e-12 || or == f64::NEG_INFINITY);
    }
    assert!(checked >= 15);
}

#[test]
fn two_point_kl() {
    let p = two_derivation_instance(0.5);
    let q = two_derivation_instance(0.9);
    let kl = kl_factored(&q.table, &p.table, &p.tree, &p.target).unwrap();
    let want = 0.9 * 1.8f64.ln() + 0.1 * 0.2f64.ln();
    assert!((kl - want).abs() < 1e-12);
    assert!((kl - 0.368064).abs() < 1e-6);
    let dq = enumerate(&q.table, &q.tree, &q.target, &limits()).unwrap();
    let dp = enumerate(&p.table, &p.tree, &p.target, &limits()).unwrap();
    assert!((oracle_kl(&dq, &dp).unwrap() - want).abs() < 1e-12);
    assert_eq!(kl_factored(&p.table, &p.table, &p.tree, &p.target).unwrap(), 0.0);
}

#[test]
fn kl_support_mismatch() {
    let p = deterministic_instance();
    let mut q = two_derivation_instance(0.5);
    q.table.unary.terminal = p.table.unary.terminal.clone();
    q.table.unary.terminal.iter_mut().for_each(|w| *w = (0.5f64).ln());
    assert!(matches!(
        kl_factored(&q.table, &p.table, &p.tree, &p.target),
        Err(qcfg::Error::SupportMismatch(_))
    ));
}

#[test]
fn slack_bound_leaves_posterior_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..10 {
        let inst = random_instance(TinyShape::draw(&mut rng), MaskLevel::Basic, seed).unwrap();
        let cfg = CoverageConfig::uniform(2.0 * inst.target.len() as f64, inst.table.nodes);
        let Ok(sol) = pr_solve(&inst.table, &inst.tree, &inst.target, &cfg) else { continue };
        assert!(sol.state.lambda.iter().all(|&l| l == 0.0));
        let kl = kl_factored(&sol.q_weights, &inst.table, &inst.tree, &inst.target).unwrap();
        assert!(kl.abs() <= 1e-9);
        let obj = pr_objective(&inst.table, &inst.tree, &inst.target, &cfg).unwrap();
        assert_eq!(obj.combined, obj.log_likelihood);
    }
}

#[test]
fn tight_bound_is_enforced() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..10 {
        let (inst, node) = tight_coverage_instance(seed).unwrap();
        let cfg = CoverageConfig::uniform(1.0, inst.table.nodes);
        let sol = pr_solve(&inst.table, &inst.tree, &inst.target, &cfg).unwrap();
        let st = &sol.state;
        assert!(st.converged && st.iterations <= 500);
        assert!(st.lambda[node] > 0.0, "seed {seed}: {:?}", st.lambda);
        for i in 0..inst.table.nodes {
            assert!(st.expected_features[i] <= cfg.xi[i] + 1e-3);
            assert!((st.lambda[i] * (st.expected_features[i] - cfg.xi[i])).abs() <= 1e-2);
        }
        for _ in 0..20 {
            let probe: Vec<f64> = (0..inst.table.nodes).map(|_| rng.random_range(0.0..3.0)).collect();
            let v = dual_value(&inst.table, &inst.tree, &inst.target, &cfg.xi, &probe).unwrap();
            assert!(st.dual_value >= v - 1e-12);
        }
        let obj = pr_objective(&inst.table, &inst.tree, &inst.target, &cfg).unwrap();
        assert!(obj.kl > 0.0);
        let kl = kl_factored(&sol.q_weights, &inst.table, &inst.tree, &inst.target).unwrap();
        assert!((obj.kl - kl).abs() < 1e-12);
        let zero = CoverageConfig { gamma: 0.0, ..cfg };
        let obj = pr_objective(&inst.table, &inst.tree, &inst.target, &zero).unwrap();
        assert_eq!(obj.combined, obj.log_likelihood);
    }
}

#[test]
fn kl_matches_oracle_on_reweighted_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for seed in 0..20 {
        let inst = random_instance(TinyShape::draw(&mut rng), MaskLevel::BasicDescendant, seed).unwrap();
        let Ok(dp) = enumerate(&inst.table, &inst.tree, &inst.target, &limits()) else { continue };
        if dp.is_empty() {
            continue;
        }
        let lambda: Vec<f64> = (0..inst.table.nodes).map(|_| rng.random_range(0.0..2.0)).collect();
        let q = reweight(&inst.table, &lambda);
        let dq = enumerate(&q, &inst.tree, &inst.target, &limits()).unwrap();
        let kl = kl_factored(&q, &inst.table, &inst.tree, &inst.target).unwrap();
        assert!(kl >= 0.0);
        assert!((kl - oracle_kl(&dq, &dp).unwrap()).abs() < 1e-8);
    }
}

use qcfg::fixtures::{deterministic_instance, random_instance, two_derivation_instance, MaskLevel, TinyShape};
use qcfg::grammar::random::{random_e, random_p, random_unary};
use qcfg::grammar::{compose_e, compose_p, mask_triple, HierarchyMode, SymbolConfig};
use qcfg::inference::*;
use qcfg::logspace::NEG_INF;
use qcfg::oracle::{enumerate, oracle_count, oracle_expected_counts, oracle_log_z, oracle_max, oracle_posterior, OracleLimits};
use qcfg::{random_binary_tree, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_limits() -> OracleLimits {
    OracleLimits { max_derivations: 200_000, ..OracleLimits::default() }
}

#[test]
fn deterministic_grammar_has_log_z_zero() {
    let inst = deterministic_instance();
    let z = inside_vanilla(&inst.table, &inst.tree, &inst.target).unwrap();
    assert!(z.abs() < 1e-12);
    let derivs = enumerate(&inst.table, &inst.tree, &inst.target, &small_limits()).unwrap();
    assert_eq!(derivs.len(), 1);
    assert_eq!(derivs[0].log_weight, 0.0);
}

#[test]
fn zero_terminal_token_gives_neg_inf() {
    let inst = deterministic_instance();
    // word 1 cannot be emitted from the left leaf or the root
    let z = inside_vanilla(&inst.table, &inst.tree, &[1, 1]).unwrap();
    assert_eq!(z, NEG_INF);
    assert!(enumerate(&inst.table, &inst.tree, &[1, 1], &small_limits()).unwrap().is_empty());
}

#[test]
fn length_one_target_has_no_derivation() {
    let inst = two_derivation_instance(0.5);
    assert_eq!(inside_vanilla(&inst.table, &inst.tree, &[0]).unwrap(), NEG_INF);
}

#[test]
fn input_validation() {
    let inst = two_derivation_instance(0.5);
    assert_eq!(inside_vanilla(&inst.table, &inst.tree, &[]), Err(Error::EmptyTarget));
    assert_eq!(
        inside_vanilla(&inst.table, &inst.tree, &[0, 7]),
        Err(Error::TokenOutOfRange { token: 7, position: 1, vocab: 2 })
    );
    let other = random_binary_tree(3, 0).unwrap();
    assert!(matches!(inside_vanilla(&inst.table, &other, &[0, 1]), Err(Error::DimensionMismatch(_))));
}

#[test]
fn vanilla_matches_oracle_on_small_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for seed in 0..60u64 {
        let shape = TinyShape::draw(&mut rng);
        let mask = MaskLevel::ALL[seed as usize % 4];
        let inst = random_instance(shape, mask, seed).unwrap();
        let Ok(derivs) = enumerate(&inst.table, &inst.tree, &inst.target, &small_limits()) else { continue };
        checked += 1;
        let z = inside_vanilla(&inst.table, &inst.tree, &inst.target).unwrap();
        let oz = oracle_log_z(&derivs);
        if oz == NEG_INF {
            assert_eq!(z, NEG_INF);
            continue;
        }
        assert!((z - oz).abs() < 1e-9, "seed {seed}: {z} vs {oz}");
        let g = GrammarRef::Dense(&inst.table);
        let zl = inside_generic::<LogSemiring>(g, &inst.tree, &inst.target).unwrap();
        assert!((zl - z).abs() < 1e-12);
        let count = inside_generic::<CountingSemiring>(g, &inst.tree, &inst.target).unwrap();
        assert_eq!(count, oracle_count(&derivs));
        let best = inside_generic::<MaxSemiring>(g, &inst.tree, &inst.target).unwrap();
        assert!((best - oracle_max(&derivs)).abs() < 1e-12);
        let ent = inside_generic::<EntropySemiring>(g, &inst.tree, &inst.target).unwrap();
        let oe = qcfg::oracle::oracle_entropy(&derivs).unwrap();
        assert!((EntropySemiring::entropy(&ent) - oe).abs() < 1e-9);
    }
    assert!(checked >= 30, "only {checked} instances within the enumeration budget");
}

#[test]
fn decomposed_passes_agree_with_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..40u64 {
        let shape = TinyShape::draw(&mut rng);
        let rank = [1, 2, 4][seed as usize % 3];
        let cfg = shape.cfg(rank);
        let tree = random_binary_tree(shape.leaves, seed).unwrap();
        let n = tree.num_nodes();
        let target = qcfg::fixtures::random_tokens(shape.target_len, shape.vocab, seed);
        let unary = random_unary(&cfg, n, seed, 1.0);
        let fe = random_e(&cfg, n, seed, 1.0).unwrap();
        let dense = compose_e(&fe, unary.clone()).unwrap();
        let zv = inside_vanilla(&dense, &tree, &target).unwrap();
        let zn = inside_e_naive(&fe, &unary, &tree, &target).unwrap();
        let zr = inside_e_rank(&fe, &unary, &tree, &target).unwrap();
        let zp = inside_e_rank_with(&fe, &unary, &tree, &target, RankMode::PureRank).unwrap();
        let zg = inside_generic::<LogSemiring>(GrammarRef::E(&fe, &unary), &tree, &target).unwrap();
        for (name, z) in [("naive", zn), ("rank", zr), ("pure", zp), ("generic", zg)] {
            assert!((z - zv).abs() < 1e-9, "seed {seed} {name}: {z} vs {zv}");
        }
        let fp = random_p(&cfg, n, seed, 1.0).unwrap();
        let dense = compose_p(&fp, unary.clone()).unwrap();
        let zv = inside_vanilla(&dense, &tree, &target).unwrap();
        let zp = inside_p(&fp, &unary, &tree, &target).unwrap();
        let zg = inside_generic::<LogSemiring>(GrammarRef::P(&fp, &unary), &tree, &target).unwrap();
        assert!((zp - zv).abs() < 1e-9, "seed {seed} p: {zp} vs {zv}");
        assert!((zg - zv).abs() < 1e-9);
    }
}

#[test]
fn masked_triple_matches_masked_dense() {
    for seed in 0..10u64 {
        let cfg = SymbolConfig::new(2, 2, 3, 2);
        let tree = random_binary_tree(3, seed).unwrap();
        let n = tree.num_nodes();
        let target = qcfg::fixtures::random_tokens(4, 3, seed);
        let unary = random_unary(&cfg, n, seed, 1.0);
        let fp = random_p(&cfg, n, seed, 1.0).unwrap();
        let masked = mask_triple(&fp, &tree, HierarchyMode::DirectChild).unwrap();
        let dense = compose_p(&fp, unary.clone()).unwrap();
        let dense = qcfg::grammar::apply_hierarchy_mask(&dense, &tree, HierarchyMode::DirectChild).unwrap();
        let a = inside_p(&masked, &unary, &tree, &target).unwrap();
        let b = inside_vanilla(&dense, &tree, &target).unwrap();
        assert!((a - b).abs() < 1e-9 || (a == NEG_INF && b == NEG_INF), "{a} vs {b}");
    }
}

#[test]
fn expected_counts_match_oracle_and_totals() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..30u64 {
        let shape = TinyShape::draw(&mut rng);
        let inst = random_instance(shape, MaskLevel::BasicDescendant, seed).unwrap();
        let Ok(io) = expected_rule_counts(&inst.table, &inst.tree, &inst.target) else { continue };
        let t = inst.target.len() as f64;
        let c = &io.counts;
        assert!((c.start.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((c.binary.iter().sum::<f64>() - (t - 1.0)).abs() < 1e-9);
        assert!((c.terminal.iter().sum::<f64>() - t).abs() < 1e-9);
        let Ok(derivs) = enumerate(&inst.table, &inst.tree, &inst.target, &small_limits()) else { continue };
        let oc = oracle_expected_counts(&derivs, &inst.table.dims()).unwrap();
        for (a, b) in c.binary.iter().zip(&oc.binary).chain(c.terminal.iter().zip(&oc.terminal)).chain(c.start.iter().zip(&oc.start)) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn expected_counts_error_without_derivation() {
    let inst = deterministic_instance();
    assert_eq!(expected_rule_counts(&inst.table, &inst.tree, &[1, 1]).unwrap_err(), Error::NoDerivation);
}

#[test]
fn sampler_is_deterministic_and_exact_on_two_paths() {
    let inst = two_derivation_instance(0.5);
    let a = sample_target_trees(&inst.table, &inst.tree, &inst.target, 10, 7).unwrap();
    let b = sample_target_trees(&inst.table, &inst.tree, &inst.target, 10, 7).unwrap();
    assert_eq!(a, b);
    let samples = sample_target_trees(&inst.table, &inst.tree, &inst.target, 10_000, 1).unwrap();
    let first = samples.iter().filter(|t| t.children[0].node == 0).count() as f64 / 10_000.0;
    assert!((first - 0.5).abs() <= 0.02, "{first}");
    let det = deterministic_instance();
    for t in sample_target_trees(&det.table, &det.tree, &det.target, 20, 3).unwrap() {
        assert_eq!(t.children[0].node, 0);
        assert_eq!(t.children[1].node, 2);
    }
}

#[test]
fn sampler_matches_oracle_posterior() {
    let shape = TinyShape { leaves: 2, target_len: 3, nt: 1, pt: 2, vocab: 2 };
    let inst = random_instance(shape, MaskLevel::Basic, 4).unwrap();
    let d = inst.table.dims();
    let derivs = enumerate(&inst.table, &inst.tree, &inst.target, &small_limits()).unwrap();
    let post = oracle_posterior(&derivs, &d).unwrap();
    let samples = sample_target_trees(&inst.table, &inst.tree, &inst.target, 20_000, 9).unwrap();
    let mut emp = std::collections::HashMap::new();
    for s in &samples {
        *emp.entry(s.signature()).or_insert(0.0) += 1.0 / 20_000.0;
    }
    let mut tv = 0.0;
    for (k, p) in &post {
        tv += (p - emp.get(k).copied().unwrap_or(0.0)).abs();
    }
    assert!(emp.keys().all(|k| post.contains_key(k)));
    assert!(tv / 2.0 <= 0.03, "tv {}", tv / 2.0);
}

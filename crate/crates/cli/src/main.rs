use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use qcfg::alloc::TrackingAllocator;
use qcfg::bench::{run_benchmark, write_csv, BenchConfig, BenchModel};
use qcfg::fixtures::{random_tokens, tight_coverage_instance};
use qcfg::grammar::io::{read_tables, write_tables, GrammarTables};
use qcfg::grammar::random::{random_dense, random_e, random_p, random_unary};
use qcfg::grammar::{
    apply_basic_alignment_mask, apply_hierarchy_mask, compose_e, compose_p, parameterize_dense, parameterize_e,
    parameterize_p, parameterize_unary, EmbeddingParams, HierarchyMode, QcfgRuleTable, SymbolConfig,
};
use qcfg::inference::{
    inside_e_naive, inside_e_rank, inside_e_rank_with, inside_p, inside_vanilla, sample_target_trees, RankMode,
};
use qcfg::regularizers::{pr_objective, reward_values, CoverageConfig, KlCombination};
use qcfg::verify::{run_verify, VerifyOptions, VerifyScope};
use qcfg::{parse_bracketed, random_binary_tree, SourceTree};

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

/// Inference engine for quasi-synchronous context-free grammars.
///
/// Every subcommand also accepts `--config FILE` with `key=value` lines that
/// mirror its flags; flags given on the command line take precedence.
#[derive(Parser, Debug)]
#[command(name = "qcfg", version, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate rule tables and write them as PREFIX.json + PREFIX.bin.
    GenGrammar(GenGrammarArgs),
    /// Generate a source tree and a random target sequence.
    GenInstance(GenInstanceArgs),
    /// Compute the log partition value of a target.
    Inside(InsideArgs),
    /// Draw exact posterior samples of target trees.
    Sample(SampleArgs),
    /// Solve the coverage-constraint dual.
    PrSolve(PrSolveArgs),
    /// Print the distance reward table as CSV.
    RewardTable(RewardTableArgs),
    /// Time the inside algorithms across lengths and write CSV.
    Benchmark(BenchmarkArgs),
    /// Run the property suites against the brute-force oracle.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone)]
struct TreeArgs {
    /// Source tree as a binary bracketing, e.g. "((a b) c)".
    #[arg(long, conflicts_with = "random_tree")]
    tree: Option<String>,
    /// Sample a random source tree with this many leaves.
    #[arg(long, value_name = "S")]
    random_tree: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, hide = true)]
    config: Option<PathBuf>,
}

impl TreeArgs {
    fn tree(&self) -> Result<SourceTree> {
        match (&self.tree, self.random_tree) {
            (Some(text), _) => {
                let leaves = text.split(|c: char| c == '(' || c == ')' || c.is_whitespace()).filter(|w| !w.is_empty()).count();
                Ok(parse_bracketed(text, leaves)?)
            }
            (None, Some(s)) => Ok(random_binary_tree(s, self.seed)?),
            (None, None) => bail!("one of --tree or --random-tree is required"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Family {
    Dense,
    E,
    P,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Init {
    /// Additive-embedding parameterization.
    Embedding,
    /// Independent Gaussian logits.
    Gaussian,
}

#[derive(Args, Debug, Clone)]
struct GrammarArgs {
    #[arg(long, default_value_t = 2)]
    nt: usize,
    #[arg(long, default_value_t = 2)]
    pt: usize,
    #[arg(long, default_value_t = 2)]
    rank: usize,
    #[arg(long, default_value_t = 10)]
    vocab: usize,
    #[arg(long, value_enum, default_value_t = Init::Embedding)]
    init: Init,
    /// Embedding width.
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Standard deviation of embeddings or logits.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Softmax temperature of the embedding parameterization.
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Load tables written by gen-grammar instead of generating them.
    #[arg(long, value_name = "PREFIX")]
    grammar: Option<PathBuf>,
}

fn generate(g: &GrammarArgs, family: Family, tree: &SourceTree, seed: u64) -> Result<GrammarTables> {
    if let Some(prefix) = &g.grammar {
        let (header, tables) = read_tables(prefix)?;
        if header.tree_sha256 != qcfg::grammar::io::tree_hash(tree) {
            bail!("grammar {} was generated for tree {}, not {}", prefix.display(), header.tree, tree.render());
        }
        return Ok(tables);
    }
    let rank = if family == Family::Dense { 0 } else { g.rank };
    let cfg = SymbolConfig::new(g.nt, g.pt, g.vocab, rank);
    cfg.validate()?;
    let n = tree.num_nodes();
    Ok(match g.init {
        Init::Embedding => {
            let mut params = EmbeddingParams::random(&cfg, n, g.dim, seed, g.scale);
            params.temperature = g.temperature;
            match family {
                Family::Dense => GrammarTables::Dense(parameterize_dense(&cfg, tree, &params)?),
                Family::E => GrammarTables::E(parameterize_unary(&cfg, tree, &params)?, parameterize_e(&cfg, tree, &params)?),
                Family::P => GrammarTables::P(parameterize_unary(&cfg, tree, &params)?, parameterize_p(&cfg, tree, &params)?),
            }
        }
        Init::Gaussian => match family {
            Family::Dense => GrammarTables::Dense(random_dense(&cfg, n, seed, g.scale)?),
            Family::E => GrammarTables::E(random_unary(&cfg, n, seed, g.scale), random_e(&cfg, n, seed, g.scale)?),
            Family::P => GrammarTables::P(random_unary(&cfg, n, seed, g.scale), random_p(&cfg, n, seed, g.scale)?),
        },
    })
}

fn dense_of(tables: GrammarTables) -> Result<QcfgRuleTable> {
    Ok(match tables {
        GrammarTables::Dense(t) => t,
        GrammarTables::E(u, f) => compose_e(&f, u)?,
        GrammarTables::P(u, f) => compose_p(&f, u)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MaskArg {
    None,
    Basic,
    Descendant,
    DirectChild,
}

fn apply_mask(table: QcfgRuleTable, tree: &SourceTree, mask: MaskArg, renormalize: bool) -> Result<QcfgRuleTable> {
    let mut out = match mask {
        MaskArg::None => return Ok(table),
        MaskArg::Basic => apply_basic_alignment_mask(&table, tree)?,
        MaskArg::Descendant => apply_hierarchy_mask(&table, tree, HierarchyMode::Descendant)?,
        MaskArg::DirectChild => apply_hierarchy_mask(&table, tree, HierarchyMode::DirectChild)?,
    };
    if renormalize {
        out.renormalize();
    }
    Ok(out)
}

fn parse_target(text: &str) -> Result<Vec<usize>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().with_context(|| format!("bad token id '{s}'")))
        .collect()
}

#[derive(Args, Debug)]
struct TargetArgs {
    /// Target token ids, comma or space separated.
    #[arg(long, conflicts_with = "target_len")]
    target: Option<String>,
    /// Draw a random target of this length instead.
    #[arg(long)]
    target_len: Option<usize>,
}

impl TargetArgs {
    fn target(&self, vocab: usize, seed: u64) -> Result<Vec<usize>> {
        match (&self.target, self.target_len) {
            (Some(t), _) => parse_target(t),
            (None, Some(len)) => Ok(random_tokens(len, vocab, seed)),
            (None, None) => bail!("one of --target or --target-len is required"),
        }
    }
}

#[derive(Args, Debug)]
struct GenGrammarArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[command(flatten)]
    grammar: GrammarArgs,
    #[arg(long, value_enum, default_value_t = Family::Dense)]
    family: Family,
    /// Output prefix; writes PREFIX.json and PREFIX.bin.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenInstanceArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[arg(long, default_value_t = 4)]
    target_len: usize,
    #[arg(long, default_value_t = 10)]
    vocab: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Algo {
    Vanilla,
    /// E model, rank-space pass.
    E,
    ENaive,
    ERank,
    /// E model, pure rank-space recursion.
    EPure,
    P,
}

#[derive(Args, Debug)]
struct InsideArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[command(flatten)]
    grammar: GrammarArgs,
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long, value_enum, default_value_t = Algo::Vanilla)]
    model: Algo,
    /// Grammar family to generate; defaults to the one `--model` runs on.
    /// With `--model vanilla`, E and P grammars are composed to dense form.
    #[arg(long, value_enum)]
    family: Option<Family>,
    /// Constraint mask (vanilla only).
    #[arg(long, value_enum, default_value_t = MaskArg::None)]
    mask: MaskArg,
    #[arg(long)]
    renormalize: bool,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[command(flatten)]
    grammar: GrammarArgs,
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long, value_enum, default_value_t = Family::Dense)]
    family: Family,
    #[arg(long, value_enum, default_value_t = MaskArg::None)]
    mask: MaskArg,
    #[arg(long)]
    renormalize: bool,
    #[arg(long, default_value_t = 1)]
    count: usize,
}

#[derive(Args, Debug)]
struct PrSolveArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[command(flatten)]
    grammar: GrammarArgs,
    #[command(flatten)]
    target: TargetArgs,
    /// Use the built-in tight instance for `--seed` instead of flags.
    #[arg(long)]
    tight: bool,
    #[arg(long, value_enum, default_value_t = Family::Dense)]
    family: Family,
    #[arg(long, value_enum, default_value_t = MaskArg::None)]
    mask: MaskArg,
    /// Alignment bound per source node.
    #[arg(long, default_value_t = 1.0)]
    u: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Add the KL term instead of subtracting it.
    #[arg(long)]
    add_kl: bool,
    /// Source node whose alignments are boosted before solving.
    #[arg(long)]
    boost_node: Option<usize>,
    /// Log boost per alignment to `--boost-node`.
    #[arg(long, default_value_t = 3.0)]
    boost: f64,
}

#[derive(Args, Debug)]
struct RewardTableArgs {
    #[arg(long, default_value_t = 16)]
    max_d: u32,
    #[arg(long, hide = true)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [8usize, 12, 16, 24, 32])]
    lengths: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = ["vanilla".to_string(), "e-naive".into(), "e-rank".into(), "p".into()])]
    models: Vec<String>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Memory budget for the pre-flight check, in MiB.
    #[arg(long, default_value_t = 2048)]
    budget_mb: u64,
    /// Divide the low-rank symbol counts by this factor.
    #[arg(long, default_value_t = 1)]
    lowrank_scale: usize,
    #[arg(long, default_value_t = 5000)]
    vocab: usize,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, hide = true)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ScopeArg {
    Inside,
    Rank,
    PModel,
    Rewards,
    Pr,
    Sampling,
    All,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = ScopeArg::All)]
    scope: ScopeArg,
    /// Instances per property.
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    /// Perturb one factor entry before the decomposition checks.
    #[arg(long)]
    corrupt: bool,
    /// Samples per instance for the sampling suite.
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    #[arg(long, hide = true)]
    config: Option<PathBuf>,
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_gen_grammar(a: GenGrammarArgs) -> Result<()> {
    let tree = a.tree.tree()?;
    let tables = generate(&a.grammar, a.family, &tree, a.tree.seed)?;
    let header = write_tables(&a.out, &tables, &tree)?;
    print_json(&serde_json::to_value(header)?)
}

fn cmd_gen_instance(a: GenInstanceArgs) -> Result<()> {
    let tree = a.tree.tree()?;
    let target = random_tokens(a.target_len, a.vocab, a.tree.seed);
    print_json(&json!({
        "tree": tree.render(),
        "num_leaves": tree.num_leaves(),
        "spans": tree.nodes(),
        "root": tree.root(),
        "target": target,
        "vocab": a.vocab,
        "seed": a.tree.seed,
    }))
}

fn cmd_inside(a: InsideArgs) -> Result<()> {
    let tree = a.tree.tree()?;
    let seed = a.tree.seed;
    let family = a.family.unwrap_or(match a.model {
        Algo::Vanilla => Family::Dense,
        Algo::P => Family::P,
        _ => Family::E,
    });
    let tables = generate(&a.grammar, family, &tree, seed)?;
    let vocab = match &tables {
        GrammarTables::Dense(t) => t.cfg.vocab_size,
        GrammarTables::E(_, f) => f.cfg.vocab_size,
        GrammarTables::P(_, f) => f.cfg.vocab_size,
    };
    let target = a.target.target(vocab, seed)?;
    if a.mask != MaskArg::None && a.model != Algo::Vanilla {
        bail!("--mask applies to --model vanilla only");
    }
    let log_z = match (a.model, tables) {
        (Algo::Vanilla, t) => inside_vanilla(&apply_mask(dense_of(t)?, &tree, a.mask, a.renormalize)?, &tree, &target)?,
        (Algo::E | Algo::ERank, GrammarTables::E(u, f)) => inside_e_rank(&f, &u, &tree, &target)?,
        (Algo::ENaive, GrammarTables::E(u, f)) => inside_e_naive(&f, &u, &tree, &target)?,
        (Algo::EPure, GrammarTables::E(u, f)) => inside_e_rank_with(&f, &u, &tree, &target, RankMode::PureRank)?,
        (Algo::P, GrammarTables::P(u, f)) => inside_p(&f, &u, &tree, &target)?,
        (m, t) => bail!("--model {m:?} cannot run on a {:?} grammar", t.model()),
    };
    print_json(&json!({
        "model": format!("{:?}", a.model).to_lowercase(),
        "family": format!("{family:?}").to_lowercase(),
        "tree": tree.render(),
        "target": target,
        "log_z": log_z,
    }))
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let tree = a.tree.tree()?;
    let seed = a.tree.seed;
    let table = apply_mask(dense_of(generate(&a.grammar, a.family, &tree, seed)?)?, &tree, a.mask, a.renormalize)?;
    let target = a.target.target(table.cfg.vocab_size, seed)?;
    let samples = sample_target_trees(&table, &tree, &target, a.count, seed)?;
    print_json(&json!({
        "tree": tree.render(),
        "target": target,
        "log_z": inside_vanilla(&table, &tree, &target)?,
        "samples": samples,
    }))
}

fn cmd_pr_solve(a: PrSolveArgs) -> Result<()> {
    let seed = a.tree.seed;
    let (tree, table, target) = if a.tight {
        let (inst, _) = tight_coverage_instance(seed)?;
        (inst.tree, inst.table, inst.target)
    } else {
        let tree = a.tree.tree()?;
        let mut table = apply_mask(dense_of(generate(&a.grammar, a.family, &tree, seed)?)?, &tree, a.mask, false)?;
        if let Some(node) = a.boost_node {
            if node >= tree.num_nodes() {
                bail!("--boost-node {node} out of range for {} nodes", tree.num_nodes());
            }
            table.boost_alignment(node, a.boost);
        }
        let target = a.target.target(table.cfg.vocab_size, seed)?;
        (tree, table, target)
    };
    let cfg = CoverageConfig {
        gamma: a.gamma,
        step: a.step,
        max_iters: a.max_iters,
        tol: a.tol,
        combination: if a.add_kl { KlCombination::Add } else { KlCombination::Penalize },
        ..CoverageConfig::uniform(a.u, table.nodes)
    };
    let obj = pr_objective(&table, &tree, &target, &cfg)?;
    print_json(&json!({
        "tree": tree.render(),
        "target": target,
        "u": a.u,
        "xi": cfg.xi,
        "lambda": obj.state.lambda,
        "expected_counts": obj.state.expected_features,
        "dual_value": obj.state.dual_value,
        "converged": obj.state.converged,
        "iterations": obj.state.iterations,
        "grad_norm": obj.state.grad_norm,
        "trajectory": obj.state.trajectory,
        "log_likelihood": obj.log_likelihood,
        "kl": obj.kl,
        "gamma": a.gamma,
        "combination": cfg.combination,
        "combined": obj.combined,
    }))
}

fn cmd_reward_table(a: RewardTableArgs) -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "d,zeta")?;
    for (d, z) in reward_values(a.max_d)? {
        writeln!(out, "{d},{z:.12}")?;
    }
    writeln!(out, "inf,0")?;
    Ok(())
}

fn cmd_benchmark(a: BenchmarkArgs) -> Result<()> {
    let models = a.models.iter().map(|m| m.parse::<BenchModel>()).collect::<qcfg::Result<Vec<_>>>()?;
    let cfg = BenchConfig {
        lengths: a.lengths,
        models,
        repeats: a.repeats,
        seed: a.seed,
        memory_budget: a.budget_mb << 20,
        lowrank_scale: a.lowrank_scale,
        vocab: a.vocab,
        ..BenchConfig::default()
    };
    let records = run_benchmark(&cfg, |r| match (&r.skipped, r.time_s) {
        (Some(why), _) => eprintln!("{:>8} x={:<3} skipped: {why}", r.model.name(), r.length),
        (None, Some(t)) => eprintln!("{:>8} x={:<3} {t:.4}s", r.model.name(), r.length),
        _ => {}
    })?;
    match a.out {
        Some(path) => write_csv(&records, fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?)?,
        None => write_csv(&records, io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<bool> {
    let scope = match a.scope {
        ScopeArg::Inside => VerifyScope::Inside,
        ScopeArg::Rank => VerifyScope::Rank,
        ScopeArg::PModel => VerifyScope::PModel,
        ScopeArg::Rewards => VerifyScope::Rewards,
        ScopeArg::Pr => VerifyScope::Pr,
        ScopeArg::Sampling => VerifyScope::Sampling,
        ScopeArg::All => VerifyScope::All,
    };
    let opts = VerifyOptions {
        seeds: a.seeds,
        base_seed: a.base_seed,
        corrupt: a.corrupt,
        sample_count: a.samples,
        ..VerifyOptions::default()
    };
    let report = run_verify(scope, &opts);
    print_json(&serde_json::to_value(&report)?)?;
    Ok(report.ok)
}

/// Expands `--config FILE` into flags placed right after the subcommand, so
/// explicit flags (which come later) override them.
fn expand_config(mut argv: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = argv.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(argv);
    };
    let path = if let Some(p) = argv[pos].strip_prefix("--config=") {
        let p = p.to_string();
        argv.remove(pos);
        p
    } else {
        if pos + 1 >= argv.len() {
            bail!("--config needs a file path");
        }
        argv.remove(pos);
        argv.remove(pos)
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let mut flags = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{path}:{}: expected key=value", lineno + 1);
        };
        let (k, v) = (k.trim().trim_start_matches("--").replace('_', "-"), v.trim());
        match v {
            "true" => flags.push(format!("--{k}")),
            "false" => {}
            _ => {
                flags.push(format!("--{k}"));
                flags.push(v.to_string());
            }
        }
    }
    let sub = argv.iter().skip(1).position(|a| !a.starts_with('-')).map(|i| i + 2).unwrap_or(argv.len());
    let sub = sub.min(argv.len());
    argv.splice(sub..sub, flags);
    Ok(argv)
}

fn run() -> Result<bool> {
    let argv = expand_config(std::env::args().collect())?;
    let cli = Cli::parse_from(argv);
    match cli.cmd {
        Cmd::GenGrammar(a) => cmd_gen_grammar(a)?,
        Cmd::GenInstance(a) => cmd_gen_instance(a)?,
        Cmd::Inside(a) => cmd_inside(a)?,
        Cmd::Sample(a) => cmd_sample(a)?,
        Cmd::PrSolve(a) => cmd_pr_solve(a)?,
        Cmd::RewardTable(a) => cmd_reward_table(a)?,
        Cmd::Benchmark(a) => cmd_benchmark(a)?,
        Cmd::Verify(a) => return cmd_verify(a),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

//! Synthetic runtime-scaling benchmark: for each length `x`, a random source
//! tree with `x` leaves and a random target of length `x` are generated, the
//! grammar is parameterized, and the inside pass is timed.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::alloc;
use crate::error::{Error, Result};
use crate::fixtures::random_tokens;
use crate::grammar::{
    count_rules, parameterize_dense, parameterize_e, parameterize_p, parameterize_unary, EmbeddingParams, ModelKind,
    SymbolConfig,
};
use crate::inference::{DenseWeights, EWeights, PWeights, RankMode};
use crate::tree::random_binary_tree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchModel {
    Vanilla,
    ENaive,
    ERank,
    P,
}

impl BenchModel {
    pub const ALL: [BenchModel; 4] = [BenchModel::Vanilla, BenchModel::ENaive, BenchModel::ERank, BenchModel::P];

    pub fn name(self) -> &'static str {
        match self {
            BenchModel::Vanilla => "vanilla",
            BenchModel::ENaive => "e-naive",
            BenchModel::ERank => "e-rank",
            BenchModel::P => "p",
        }
    }

    pub fn kind(self) -> ModelKind {
        match self {
            BenchModel::Vanilla => ModelKind::Vanilla,
            BenchModel::ENaive | BenchModel::ERank => ModelKind::E,
            BenchModel::P => ModelKind::P,
        }
    }
}

impl fmt::Display for BenchModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BenchModel::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown benchmark model '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub lengths: Vec<usize>,
    pub models: Vec<BenchModel>,
    /// `(|NT|, |PT|)` for the vanilla model.
    pub vanilla_symbols: (usize, usize),
    /// `(|NT|, |PT|, |R|)` for the low-rank models.
    pub lowrank_symbols: (usize, usize, usize),
    /// Divides the low-rank symbol counts.
    pub lowrank_scale: usize,
    pub vocab: usize,
    pub embedding_dim: usize,
    pub repeats: usize,
    pub seed: u64,
    pub memory_budget: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            lengths: vec![8, 12, 16, 24, 32],
            models: BenchModel::ALL.to_vec(),
            vanilla_symbols: (8, 8),
            lowrank_symbols: (50, 50, 200),
            lowrank_scale: 1,
            vocab: 5000,
            embedding_dim: 16,
            repeats: 3,
            seed: 0,
            memory_budget: 2 << 30,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lengths.is_empty() || self.lengths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("lengths must be non-empty and strictly ascending".into()));
        }
        if self.lengths[0] < 2 {
            return Err(Error::InvalidConfig("lengths must be at least 2".into()));
        }
        if self.repeats < 3 {
            return Err(Error::InvalidConfig("repeats must be at least 3".into()));
        }
        if self.lowrank_scale == 0 || self.embedding_dim == 0 {
            return Err(Error::InvalidConfig("lowrank_scale and embedding_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn symbols(&self, model: BenchModel) -> SymbolConfig {
        match model {
            BenchModel::Vanilla => SymbolConfig::new(self.vanilla_symbols.0, self.vanilla_symbols.1, self.vocab, 0),
            _ => {
                let (nt, pt, r) = self.lowrank_symbols;
                let s = self.lowrank_scale;
                SymbolConfig::new((nt / s).max(1), (pt / s).max(1), self.vocab, (r / s).max(1))
            }
        }
    }
}

/// Bytes for the parameter tables (log copy plus the linear copy made by the
/// inside pass) and the chart, for source and target length `x`.
pub fn memory_estimate(cfg: &SymbolConfig, model: BenchModel, x: usize) -> u64 {
    let n = (2 * x - 1) as u64;
    let (nt, pt, v, r) = (
        cfg.num_nonterminals as u64,
        cfg.num_preterminals as u64,
        cfg.vocab_size as u64,
        cfg.num_ranks as u64,
    );
    let spans = ((x + 1) * (x + 1)) as u64;
    let unary = nt * n + pt * n * v;
    let (factors, cell) = match model {
        BenchModel::Vanilla => (count_rules(cfg, n, ModelKind::Vanilla) as u64, nt * n),
        BenchModel::ENaive | BenchModel::ERank => {
            (nt * n * r + 2 * r * (nt + pt) * n, nt * n + 2 * r)
        }
        BenchModel::P => (nt * n * r + r * n * n * n + 2 * r * n * (nt + pt), nt * n + 2 * r * n),
    };
    let scratch = match model {
        BenchModel::P => r * n * n,
        _ => 0,
    };
    8 * (unary + 2 * factors + spans * cell + scratch)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRecord {
    pub model: BenchModel,
    pub length: usize,
    /// Median wall time of the inside pass; `None` when skipped.
    pub time_s: Option<f64>,
    /// Allocator peak over generation and inference, when the tracking
    /// allocator is installed.
    pub mem_bytes: Option<u64>,
    pub estimate_bytes: u64,
    pub slope: Option<f64>,
    pub log_z: Option<f64>,
    pub skipped: Option<String>,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Instance seed for `(seed, length)`; every model sees the same tree and target.
fn instance_seed(seed: u64, x: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(x as u64)
}

fn run_point(cfg: &BenchConfig, model: BenchModel, x: usize) -> Result<(f64, f64, Option<u64>)> {
    let sym = cfg.symbols(model);
    let seed = instance_seed(cfg.seed, x);
    let base = alloc::reset_peak();
    let tree = random_binary_tree(x, seed)?;
    let target = random_tokens(x, cfg.vocab, seed);
    let params = EmbeddingParams::random(&sym, tree.num_nodes(), cfg.embedding_dim, seed, 0.5);
    let mut times = Vec::with_capacity(cfg.repeats);
    let mut log_z = 0.0;
    match model {
        BenchModel::Vanilla => {
            let table = parameterize_dense(&sym, &tree, &params)?;
            let w = DenseWeights::new(&table);
            for _ in 0..cfg.repeats {
                let t0 = Instant::now();
                log_z = w.log_z(&tree, &target)?;
                times.push(t0.elapsed().as_secs_f64());
            }
        }
        BenchModel::ENaive | BenchModel::ERank => {
            let unary = parameterize_unary(&sym, &tree, &params)?;
            let f = parameterize_e(&sym, &tree, &params)?;
            let w = EWeights::new(&f, &unary)?;
            for _ in 0..cfg.repeats {
                let t0 = Instant::now();
                log_z = if model == BenchModel::ENaive {
                    w.log_z_naive(&tree, &target)?
                } else {
                    w.log_z_rank(&tree, &target, RankMode::Projection)?
                };
                times.push(t0.elapsed().as_secs_f64());
            }
        }
        BenchModel::P => {
            let unary = parameterize_unary(&sym, &tree, &params)?;
            let f = parameterize_p(&sym, &tree, &params)?;
            let w = PWeights::new(&f, &unary)?;
            for _ in 0..cfg.repeats {
                let t0 = Instant::now();
                log_z = w.log_z(&tree, &target)?;
                times.push(t0.elapsed().as_secs_f64());
            }
        }
    }
    let mem = alloc::is_installed().then(|| (alloc::peak_bytes().saturating_sub(base)) as u64);
    Ok((median(times), log_z, mem))
}

/// Runs every `(model, length)` point, skipping points whose pre-flight
/// memory estimate exceeds the budget, and fills in per-model slopes.
pub fn run_benchmark(cfg: &BenchConfig, mut progress: impl FnMut(&BenchRecord)) -> Result<Vec<BenchRecord>> {
    cfg.validate()?;
    let mut records = Vec::new();
    for &model in &cfg.models {
        for &x in &cfg.lengths {
            let sym = cfg.symbols(model);
            let estimate = memory_estimate(&sym, model, x);
            let mut rec = BenchRecord {
                model,
                length: x,
                time_s: None,
                mem_bytes: None,
                estimate_bytes: estimate,
                slope: None,
                log_z: None,
                skipped: None,
            };
            if estimate > cfg.memory_budget {
                let e = Error::OverBudget {
                    model: model.name().into(),
                    length: x,
                    needed: estimate,
                    budget: cfg.memory_budget,
                };
                rec.skipped = Some(e.to_string());
            } else {
                let (t, z, mem) = run_point(cfg, model, x)?;
                rec.time_s = Some(t);
                rec.log_z = Some(z);
                rec.mem_bytes = mem;
            }
            progress(&rec);
            records.push(rec);
        }
    }
    for &model in &cfg.models {
        let pts: Vec<(f64, f64)> = records
            .iter()
            .filter(|r| r.model == model)
            .filter_map(|r| r.time_s.map(|t| (r.length as f64, t)))
            .collect();
        let slope = loglog_slope(&pts);
        records.iter_mut().filter(|r| r.model == model).for_each(|r| r.slope = slope);
    }
    Ok(records)
}

/// CSV with header `model,length,time_s,mem_bytes,slope`; skipped points
/// leave `time_s` and `mem_bytes` empty.
pub fn write_csv<W: Write>(records: &[BenchRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["model", "length", "time_s", "mem_bytes", "slope"]).map_err(io)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in records {
        w.write_record([
            r.model.name().to_string(),
            r.length.to_string(),
            opt(r.time_s.map(|t| format!("{t:.6}"))),
            opt(r.mem_bytes.map(|m| m.to_string())),
            opt(r.slope.map(|s| format!("{s:.4}"))),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Rule counts are ordered `E < P < vanilla` for the configured symbols.
pub fn rule_counts_ordered(cfg: &BenchConfig, x: usize) -> bool {
    let s = (2 * x - 1) as u64;
    let low = cfg.symbols(BenchModel::P);
    let van = cfg.symbols(BenchModel::Vanilla);
    count_rules(&low, s, ModelKind::E) < count_rules(&low, s, ModelKind::P)
        && count_rules(&low, s, ModelKind::P) < count_rules(&van, s, ModelKind::Vanilla)
}

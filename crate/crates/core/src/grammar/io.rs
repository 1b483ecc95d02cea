//! On-disk grammar tables: a JSON header plus a flat little-endian float64
//! payload. Arrays are laid out back to back in header order; `-inf` is
//! stored as its IEEE bit pattern.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FactorTablesE, FactorTablesP, ModelKind, QcfgRuleTable, SymbolConfig, UnaryRules};
use crate::error::{Error, Result};
use crate::tree::SourceTree;

pub const FORMAT_NAME: &str = "qcfg-tables";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in elements from the start of the payload.
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableHeader {
    pub format: String,
    pub version: u32,
    pub model: ModelKind,
    pub symbols: SymbolConfig,
    pub nodes: usize,
    pub tree: String,
    pub tree_sha256: String,
    pub dtype: String,
    pub arrays: Vec<ArrayEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GrammarTables {
    Dense(QcfgRuleTable),
    E(UnaryRules, FactorTablesE),
    P(UnaryRules, FactorTablesP),
}

impl GrammarTables {
    pub fn model(&self) -> ModelKind {
        match self {
            GrammarTables::Dense(_) => ModelKind::Vanilla,
            GrammarTables::E(..) => ModelKind::E,
            GrammarTables::P(..) => ModelKind::P,
        }
    }

    fn cfg_nodes(&self) -> (SymbolConfig, usize) {
        match self {
            GrammarTables::Dense(t) => (t.cfg, t.nodes),
            GrammarTables::E(_, f) => (f.cfg, f.nodes),
            GrammarTables::P(_, f) => (f.cfg, f.nodes),
        }
    }

    fn arrays(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let (cfg, n) = self.cfg_nodes();
        let d = cfg.dims(n);
        fn unary<'b>(d: &crate::grammar::Dims, u: &'b UnaryRules) -> Vec<(&'static str, Vec<usize>, &'b [f64])> {
            vec![
                ("start", vec![d.nt, d.nodes], u.start.as_slice()),
                ("terminal", vec![d.pt, d.nodes, d.vocab], u.terminal.as_slice()),
            ]
        }
        match self {
            GrammarTables::Dense(t) => {
                let mut v = unary(&d, &t.unary);
                v.push(("binary", vec![d.nt, n, d.syms(), n, d.syms(), n], t.binary.as_slice()));
                v
            }
            GrammarTables::E(u, f) => {
                let mut v = unary(&d, u);
                v.push(("head", vec![d.nt, n, d.rank], f.head.as_slice()));
                v.push(("left", vec![d.rank, d.syms(), n], f.left.as_slice()));
                v.push(("right", vec![d.rank, d.syms(), n], f.right.as_slice()));
                v
            }
            GrammarTables::P(u, f) => {
                let mut v = unary(&d, u);
                v.push(("head", vec![d.nt, n, d.rank], f.head.as_slice()));
                v.push(("triple", vec![d.rank, n, n, n], f.triple.as_slice()));
                v.push(("left_sym", vec![d.rank, n, d.syms()], f.left_sym.as_slice()));
                v.push(("right_sym", vec![d.rank, n, d.syms()], f.right_sym.as_slice()));
                v
            }
        }
    }
}

pub fn tree_hash(tree: &SourceTree) -> String {
    hex::encode(Sha256::digest(tree.structure_key().as_bytes()))
}

pub fn encode(tables: &GrammarTables, tree: &SourceTree) -> Result<(TableHeader, Vec<u8>)> {
    let (cfg, n) = tables.cfg_nodes();
    if n != tree.num_nodes() {
        return Err(Error::DimensionMismatch(format!("tables have {n} nodes, tree has {}", tree.num_nodes())));
    }
    let mut entries = Vec::new();
    let mut payload = Vec::new();
    let mut offset = 0;
    for (name, shape, data) in tables.arrays() {
        entries.push(ArrayEntry { name: name.to_string(), shape, offset, len: data.len() });
        offset += data.len();
        payload.reserve(data.len() * 8);
        for x in data {
            payload.extend_from_slice(&x.to_le_bytes());
        }
    }
    let header = TableHeader {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        model: tables.model(),
        symbols: cfg,
        nodes: n,
        tree: tree.render(),
        tree_sha256: tree_hash(tree),
        dtype: "float64-le".into(),
        arrays: entries,
    };
    Ok((header, payload))
}

pub fn decode(header: &TableHeader, payload: &[u8]) -> Result<GrammarTables> {
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format {} v{}", header.format, header.version)));
    }
    if !payload.len().is_multiple_of(8) {
        return Err(Error::Format("payload length is not a multiple of 8".into()));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let get = |name: &str| -> Result<Vec<f64>> {
        let e = header
            .arrays
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Format(format!("missing array '{name}'")))?;
        values
            .get(e.offset..e.offset + e.len)
            .map(|s| s.to_vec())
            .ok_or_else(|| Error::Format(format!("array '{name}' runs past the payload")))
    };
    let unary = UnaryRules { start: get("start")?, terminal: get("terminal")? };
    let (cfg, n) = (header.symbols, header.nodes);
    Ok(match header.model {
        ModelKind::Vanilla => GrammarTables::Dense(QcfgRuleTable::new(cfg, n, unary, get("binary")?)?),
        ModelKind::E => GrammarTables::E(unary, FactorTablesE::new(cfg, n, get("head")?, get("left")?, get("right")?)?),
        ModelKind::P => GrammarTables::P(
            unary,
            FactorTablesP::new(cfg, n, get("head")?, get("triple")?, get("left_sym")?, get("right_sym")?)?,
        ),
    })
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `<prefix>.json` and `<prefix>.bin`.
pub fn write_tables(prefix: &Path, tables: &GrammarTables, tree: &SourceTree) -> Result<TableHeader> {
    let (header, payload) = encode(tables, tree)?;
    fs::write(with_ext(prefix, ".json"), serde_json::to_string_pretty(&header)?)?;
    fs::write(with_ext(prefix, ".bin"), payload)?;
    Ok(header)
}

pub fn read_tables(prefix: &Path) -> Result<(TableHeader, GrammarTables)> {
    let header: TableHeader = serde_json::from_str(&fs::read_to_string(with_ext(prefix, ".json"))?)?;
    let payload = fs::read(with_ext(prefix, ".bin"))?;
    let tables = decode(&header, &payload)?;
    Ok((header, tables))
}

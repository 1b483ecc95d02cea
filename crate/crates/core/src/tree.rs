//! Binary source trees as sets of spans, plus the downward node distance that
//! every hierarchy constraint is built on.
//!
//! Node identity is positional: nodes are sorted by span start, then span
//! end, and grammar tables index source nodes by that order.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start < end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

/// Downward edge count between two nodes; `Infinite` when the second node is
/// not in the first node's subtree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Distance {
    Finite(u32),
    Infinite,
}

impl Distance {
    pub fn is_finite(self) -> bool {
        matches!(self, Distance::Finite(_))
    }

    pub fn finite(self) -> Option<u32> {
        match self {
            Distance::Finite(d) => Some(d),
            Distance::Infinite => None,
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Finite(d) => write!(f, "{d}"),
            Distance::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SourceTree {
    num_leaves: usize,
    nodes: Vec<Span>,
    parent: Vec<Option<usize>>,
    children: Vec<Option<(usize, usize)>>,
    #[serde(skip)]
    root: usize,
    #[serde(skip)]
    tokens: Vec<String>,
    #[serde(skip)]
    dist: Vec<Distance>,
}

impl SourceTree {
    /// Builds a tree from its span set. Spans must form a full binary
    /// bracketing of `[0, num_leaves)`.
    pub fn from_spans(num_leaves: usize, spans: &[Span], tokens: Vec<String>) -> Result<Self> {
        if num_leaves == 0 {
            return Err(Error::EmptyTree);
        }
        let mut nodes = spans.to_vec();
        nodes.sort();
        nodes.dedup();
        if nodes.len() != 2 * num_leaves - 1 || nodes.len() != spans.len() {
            return Err(Error::MalformedTree {
                pos: 0,
                msg: format!("{} distinct spans for {} leaves", nodes.len(), num_leaves),
            });
        }
        let index_of = |s: Span| nodes.binary_search(&s).ok();
        let root = index_of(Span::new(0, num_leaves)).ok_or_else(|| Error::MalformedTree {
            pos: 0,
            msg: "no root span covering the sequence".into(),
        })?;

        let n = nodes.len();
        let mut parent = vec![None; n];
        let mut children = vec![None; n];
        for (idx, span) in nodes.iter().enumerate() {
            if span.len() == 1 {
                continue;
            }
            // the left child is the longest proper span sharing our start
            let left = nodes
                .iter()
                .enumerate()
                .filter(|(_, s)| s.start == span.start && s.end < span.end)
                .max_by_key(|(_, s)| s.end)
                .map(|(i, _)| i);
            let left = left.ok_or_else(|| Error::MalformedTree {
                pos: 0,
                msg: format!("span [{},{}) has no left child", span.start, span.end),
            })?;
            let right = index_of(Span::new(nodes[left].end, span.end)).ok_or_else(|| {
                Error::MalformedTree {
                    pos: 0,
                    msg: format!("span [{},{}) has no right child", span.start, span.end),
                }
            })?;
            children[idx] = Some((left, right));
            for c in [left, right] {
                if parent[c].is_some() {
                    return Err(Error::MalformedTree { pos: 0, msg: "node with two parents".into() });
                }
                parent[c] = Some(idx);
            }
        }
        if parent.iter().enumerate().any(|(i, p)| p.is_none() && i != root) {
            return Err(Error::MalformedTree { pos: 0, msg: "disconnected span".into() });
        }

        let tokens = if tokens.len() == num_leaves {
            tokens
        } else {
            (0..num_leaves).map(|i| format!("w{i}")).collect()
        };
        let mut tree = SourceTree { num_leaves, nodes, parent, children, root, tokens, dist: Vec::new() };
        tree.dist = tree.distance_matrix();
        Ok(tree)
    }

    fn distance_matrix(&self) -> Vec<Distance> {
        let n = self.nodes.len();
        let mut dist = vec![Distance::Infinite; n * n];
        for desc in 0..n {
            let mut cur = Some(desc);
            let mut steps = 0u32;
            while let Some(c) = cur {
                dist[c * n + desc] = Distance::Finite(steps);
                steps += 1;
                cur = self.parent[c];
            }
        }
        dist
    }

    pub fn num_leaves(&self) -> usize {
        self.num_leaves
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Span] {
        &self.nodes
    }

    pub fn span(&self, node: usize) -> Span {
        self.nodes[node]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        self.children[node]
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.children[node].is_none()
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.is_leaf(i))
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| !self.is_leaf(i))
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    fn check(&self, index: usize) -> Result<()> {
        if index < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { index, len: self.nodes.len() })
        }
    }

    /// Edge count of the downward path `ancestor -> descendant`.
    pub fn node_distance(&self, ancestor: usize, descendant: usize) -> Result<Distance> {
        self.check(ancestor)?;
        self.check(descendant)?;
        Ok(self.distance(ancestor, descendant))
    }

    /// Unchecked variant of [`node_distance`](Self::node_distance).
    #[inline]
    pub fn distance(&self, ancestor: usize, descendant: usize) -> Distance {
        self.dist[ancestor * self.nodes.len() + descendant]
    }

    /// `max(d(i, j), d(i, k))` for a rule `A[i] -> B[j] C[k]`.
    pub fn rule_distance(&self, i: usize, j: usize, k: usize) -> Result<Distance> {
        self.check(i)?;
        self.check(j)?;
        self.check(k)?;
        Ok(self.rule_distance_unchecked(i, j, k))
    }

    #[inline]
    pub fn rule_distance_unchecked(&self, i: usize, j: usize, k: usize) -> Distance {
        self.distance(i, j).max(self.distance(i, k))
    }

    /// Canonical bracketing, e.g. `((a b) c)`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_node(self.root, &mut out);
        out
    }

    fn render_node(&self, node: usize, out: &mut String) {
        match self.children[node] {
            None => out.push_str(&self.tokens[self.nodes[node].start]),
            Some((l, r)) => {
                out.push('(');
                self.render_node(l, out);
                out.push(' ');
                self.render_node(r, out);
                out.push(')');
            }
        }
    }

    /// Structural fingerprint (spans only) used in serialized grammar headers.
    pub fn structure_key(&self) -> String {
        self.nodes.iter().map(|s| format!("{}-{}", s.start, s.end)).collect::<Vec<_>>().join(",")
    }
}

impl fmt::Display for SourceTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug)]
enum Tok {
    Open,
    Close,
    Word(String),
}

fn tokenize(text: &str) -> Vec<(usize, Tok)> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, ch)) = chars.peek() {
        match ch {
            '(' => {
                out.push((pos, Tok::Open));
                chars.next();
            }
            ')' => {
                out.push((pos, Tok::Close));
                chars.next();
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let mut word = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c == '(' || c == ')' || c.is_whitespace() {
                        break;
                    }
                    word.push(c);
                    chars.next();
                }
                out.push((pos, Tok::Word(word)));
            }
        }
    }
    out
}

struct BracketParser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end_pos: usize,
    spans: Vec<Span>,
    words: Vec<String>,
}

impl BracketParser {
    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|t| t.0).unwrap_or(self.end_pos)
    }

    fn node(&mut self) -> Result<Span> {
        let pos = self.pos();
        match self.toks.get(self.at) {
            None => Err(Error::MalformedTree { pos, msg: "unexpected end of input".into() }),
            Some((_, Tok::Close)) => Err(Error::MalformedTree { pos, msg: "unexpected ')'".into() }),
            Some((_, Tok::Word(w))) => {
                let start = self.words.len();
                self.words.push(w.clone());
                self.at += 1;
                let span = Span::new(start, start + 1);
                self.spans.push(span);
                Ok(span)
            }
            Some((_, Tok::Open)) => {
                self.at += 1;
                let mut kids = Vec::new();
                loop {
                    match self.toks.get(self.at) {
                        Some((_, Tok::Close)) => {
                            self.at += 1;
                            break;
                        }
                        None => {
                            return Err(Error::MalformedTree {
                                pos: self.end_pos,
                                msg: format!("unclosed '(' opened at byte {pos}"),
                            })
                        }
                        _ => kids.push(self.node()?),
                    }
                }
                if kids.len() != 2 {
                    return Err(Error::NonBinaryNode { pos, arity: kids.len() });
                }
                let span = Span::new(kids[0].start, kids[1].end);
                self.spans.push(span);
                Ok(span)
            }
        }
    }
}

/// Parses a whitespace-separated binary bracketing such as `((a b) c)`.
pub fn parse_bracketed(text: &str, num_leaves: usize) -> Result<SourceTree> {
    let mut p = BracketParser {
        toks: tokenize(text),
        at: 0,
        end_pos: text.len(),
        spans: Vec::new(),
        words: Vec::new(),
    };
    p.node()?;
    if p.at != p.toks.len() {
        return Err(Error::MalformedTree { pos: p.pos(), msg: "trailing input after tree".into() });
    }
    if p.words.len() != num_leaves {
        return Err(Error::LeafCountMismatch { expected: num_leaves, found: p.words.len(), pos: text.len() });
    }
    let words = std::mem::take(&mut p.words);
    SourceTree::from_spans(num_leaves, &p.spans, words)
}

/// Samples a bracketing by drawing a uniform split point at every span.
pub fn random_binary_tree(num_leaves: usize, seed: u64) -> Result<SourceTree> {
    if num_leaves == 0 {
        return Err(Error::EmptyTree);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spans = Vec::with_capacity(2 * num_leaves - 1);
    let mut stack = vec![Span::new(0, num_leaves)];
    while let Some(s) = stack.pop() {
        spans.push(s);
        if s.len() > 1 {
            let mid = rng.random_range(s.start + 1..s.end);
            stack.push(Span::new(s.start, mid));
            stack.push(Span::new(mid, s.end));
        }
    }
    SourceTree::from_spans(num_leaves, &spans, Vec::new())
}

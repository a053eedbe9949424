//! The seed bank random di-graph on `Z x [N]`.
//!
//! Every vertex `(g, l)` has exactly one outgoing edge: either to its parent
//! `(g - J, U)` or, in the extended graph, to one of the mutation sources
//! `D1` / `D2`. Random graphs are generated lazily one generation at a time.
//! The weight vector of generation `h` and the edge of vertex `(g, l)` are
//! drawn from streams keyed by `(seed, h)` and `(seed, g, l)`, so extending a
//! span in either direction never changes edges that already exist.

use crate::model::{CanningsLaw, MutationRates, SeedBankLaw, Weights};
use crate::rng;
use rand::Rng;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vertex {
    pub generation: i64,
    /// Label in `1..=N`.
    pub label: u32,
}

impl Vertex {
    pub fn new(generation: i64, label: u32) -> Self {
        Vertex { generation, label }
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.generation, self.label)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeTarget {
    Parent(Vertex),
    /// Source of type-a mutations.
    Sink1,
    /// Source of type-A mutations.
    Sink2,
}

impl EdgeTarget {
    pub fn parent(&self) -> Option<Vertex> {
        match self {
            EdgeTarget::Parent(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_sink(&self) -> bool {
        !matches!(self, EdgeTarget::Parent(_))
    }
}

impl fmt::Display for EdgeTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeTarget::Parent(v) => write!(f, "{v}"),
            EdgeTarget::Sink1 => write!(f, "D1"),
            EdgeTarget::Sink2 => write!(f, "D2"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("span exhausted at vertex {0}")]
    SpanExhausted(Vertex),
    #[error("empty graph")]
    Empty,
    #[error("vertex without edge: {0}")]
    VertexWithoutEdge(Vertex),
    #[error("duplicate edge for vertex {0}")]
    DuplicateEdge(Vertex),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid edge {0}")]
    InvalidEdge(String),
    #[error("fixture graphs cannot be extended")]
    Fixed,
}

#[derive(Clone, Debug)]
struct Generator {
    law: CanningsLaw,
    mu: SeedBankLaw,
    mutation: MutationRates,
    seed: u64,
}

/// A finite span of generations of the (extended) seed bank di-graph.
#[derive(Clone, Debug)]
pub struct DiGraphWindow {
    n: usize,
    m: usize,
    span: Option<(i64, i64)>,
    edges: BTreeMap<i64, Vec<EdgeTarget>>,
    weights: BTreeMap<i64, Weights>,
    generator: Option<Generator>,
}

impl DiGraphWindow {
    /// An empty random graph; generations are added with
    /// [`extend_backward`](Self::extend_backward) and
    /// [`extend_forward`](Self::extend_forward).
    pub fn random(law: CanningsLaw, mu: SeedBankLaw, mutation: MutationRates, seed: u64) -> Self {
        DiGraphWindow {
            n: law.n(),
            m: mu.m(),
            span: None,
            edges: BTreeMap::new(),
            weights: BTreeMap::new(),
            generator: Some(Generator { law, mu, mutation, seed }),
        }
    }

    /// Random graph covering generations `lo..=hi`.
    pub fn random_span(
        law: CanningsLaw,
        mu: SeedBankLaw,
        mutation: MutationRates,
        seed: u64,
        lo: i64,
        hi: i64,
    ) -> Self {
        let mut g = DiGraphWindow::random(law, mu, mutation, seed);
        g.extend_to(lo, hi).expect("random graph");
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Generations `(lo, hi)` whose vertices carry edges.
    pub fn span(&self) -> Option<(i64, i64)> {
        self.span
    }

    pub fn is_empty(&self) -> bool {
        self.span.is_none()
    }

    /// Cached weight vector of generation `h`, if it has been drawn.
    pub fn weights(&self, h: i64) -> Option<&Weights> {
        self.weights.get(&h)
    }

    /// Make every vertex of generations `upto..=hi` carry an edge, where `hi`
    /// is the current top of the span (0 for an empty graph).
    pub fn extend_backward(&mut self, upto: i64) -> Result<(), GraphError> {
        let hi = self.span.map_or(0, |s| s.1);
        let lo = self.span.map_or(upto, |s| s.0.min(upto));
        self.extend_to(lo.min(hi), hi)
    }

    /// Make every vertex of generations `lo..=upto` carry an edge, where `lo`
    /// is the current bottom of the span (0 for an empty graph).
    pub fn extend_forward(&mut self, upto: i64) -> Result<(), GraphError> {
        let lo = self.span.map_or(0, |s| s.0);
        let hi = self.span.map_or(upto, |s| s.1.max(upto));
        self.extend_to(lo, hi.max(lo))
    }

    /// Cover generations `lo..=hi` (plus the existing span).
    pub fn extend_to(&mut self, lo: i64, hi: i64) -> Result<(), GraphError> {
        if self.generator.is_none() {
            return Err(GraphError::Fixed);
        }
        let (lo, hi) = match self.span {
            Some((a, b)) => (lo.min(a), hi.max(b)),
            None => (lo, hi),
        };
        for g in lo..=hi {
            if !self.edges.contains_key(&g) {
                self.generate(g);
            }
        }
        self.span = Some((lo, hi));
        Ok(())
    }

    fn ensure_weights(&mut self, h: i64) {
        if self.weights.contains_key(&h) {
            return;
        }
        let gen = self.generator.as_ref().expect("random graph");
        let mut r = rng::stream(gen.seed, &[rng::tag::WEIGHTS, h as u64]);
        let w = gen.law.sample_weights(&mut r);
        self.weights.insert(h, w);
    }

    fn generate(&mut self, g: i64) {
        let m = self.m as i64;
        for h in (g - m)..g {
            self.ensure_weights(h);
        }
        let gen = self.generator.as_ref().expect("random graph");
        let (u1, u2) = (gen.mutation.u1, gen.mutation.u2);
        let mut row = Vec::with_capacity(self.n);
        for label in 1..=self.n as u32 {
            let mut r = rng::stream(gen.seed, &[rng::tag::VERTEX, g as u64, label as u64]);
            let k: f64 = r.random();
            let target = if k < u1 {
                EdgeTarget::Sink1
            } else if k < u1 + u2 {
                EdgeTarget::Sink2
            } else {
                let j = gen.mu.sample_jump(&mut r) as i64;
                let u = self.weights[&(g - j)].sample_label(&mut r);
                EdgeTarget::Parent(Vertex::new(g - j, u as u32 + 1))
            };
            row.push(target);
        }
        self.edges.insert(g, row);
    }

    /// The outgoing edge of `v`.
    pub fn edge(&self, v: Vertex) -> Result<EdgeTarget, GraphError> {
        if self.span.is_none() {
            return Err(GraphError::Empty);
        }
        if v.label == 0 || v.label as usize > self.n {
            return Err(GraphError::InvalidEdge(format!("label out of range at {v}")));
        }
        self.edges
            .get(&v.generation)
            .map(|row| row[v.label as usize - 1])
            .ok_or(GraphError::SpanExhausted(v))
    }

    /// Iterate the parent map `depth` times from `v`, stopping at a sink.
    pub fn ancestor_chain(&self, v: Vertex, depth: usize) -> Result<Vec<EdgeTarget>, GraphError> {
        let mut out = Vec::with_capacity(depth);
        let mut cur = v;
        for _ in 0..depth {
            let e = self.edge(cur)?;
            out.push(e);
            match e {
                EdgeTarget::Parent(p) => cur = p,
                _ => break,
            }
        }
        Ok(out)
    }

    /// Build a graph from an explicit edge list. The span is the range of
    /// source generations and every vertex in it needs exactly one edge.
    pub fn from_edges(edges: &[(Vertex, EdgeTarget)], n: usize, m: usize) -> Result<Self, GraphError> {
        let mut g = DiGraphWindow {
            n,
            m,
            span: None,
            edges: BTreeMap::new(),
            weights: BTreeMap::new(),
            generator: None,
        };
        if edges.is_empty() {
            return Ok(g);
        }
        let lo = edges.iter().map(|e| e.0.generation).min().expect("nonempty");
        let hi = edges.iter().map(|e| e.0.generation).max().expect("nonempty");
        let mut slots: BTreeMap<i64, Vec<Option<EdgeTarget>>> = (lo..=hi).map(|h| (h, vec![None; n])).collect();
        for &(v, t) in edges {
            if v.label == 0 || v.label as usize > n {
                return Err(GraphError::InvalidEdge(format!("label out of range at {v}")));
            }
            if let EdgeTarget::Parent(p) = t {
                let gap = v.generation - p.generation;
                if gap < 1 || gap > m as i64 || p.label == 0 || p.label as usize > n {
                    return Err(GraphError::InvalidEdge(format!("{v} -> {p}")));
                }
            }
            let slot = &mut slots.get_mut(&v.generation).expect("in span")[v.label as usize - 1];
            if slot.is_some() {
                return Err(GraphError::DuplicateEdge(v));
            }
            *slot = Some(t);
        }
        for (h, row) in slots {
            let mut full = Vec::with_capacity(n);
            for (l, t) in row.into_iter().enumerate() {
                full.push(t.ok_or(GraphError::VertexWithoutEdge(Vertex::new(h, l as u32 + 1)))?);
            }
            g.edges.insert(h, full);
        }
        g.span = Some((lo, hi));
        Ok(g)
    }

    /// All edges in span order.
    pub fn edge_list(&self) -> Vec<(Vertex, EdgeTarget)> {
        let mut out = Vec::new();
        for (&h, row) in &self.edges {
            for (l, t) in row.iter().enumerate() {
                out.push((Vertex::new(h, l as u32 + 1), *t));
            }
        }
        out
    }

    /// Serialise in the fixture format.
    pub fn to_fixture(&self) -> String {
        let mut s = String::new();
        for (v, t) in self.edge_list() {
            let rhs = match t {
                EdgeTarget::Parent(p) => format!("{} {}", p.generation, p.label),
                EdgeTarget::Sink1 => "D1".to_string(),
                EdgeTarget::Sink2 => "D2".to_string(),
            };
            s.push_str(&format!("{} {} -> {}\n", v.generation, v.label, rhs));
        }
        s
    }

    /// Graphviz rendering (intended for small spans).
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph seedbank {\n  rankdir=BT;\n");
        for (v, t) in self.edge_list() {
            let rhs = match t {
                EdgeTarget::Parent(p) => format!("\"{}\"", p),
                EdgeTarget::Sink1 => "\"D1\"".into(),
                EdgeTarget::Sink2 => "\"D2\"".into(),
            };
            s.push_str(&format!("  \"{}\" -> {};\n", v, rhs));
        }
        s.push_str("}\n");
        s
    }
}

fn parse_int<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, GraphError> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| GraphError::Parse { line, msg: format!("expected integer {what}") })
}

/// Parse the fixture format: one edge per line, `g label -> g' label'` or
/// `g label -> D1|D2`. Blank lines and `#` comments are ignored.
pub fn parse_fixture(text: &str) -> Result<Vec<(Vertex, EdgeTarget)>, GraphError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (lhs, rhs) = body
            .split_once("->")
            .ok_or_else(|| GraphError::Parse { line, msg: "missing '->'".into() })?;
        let mut l = lhs.split_whitespace();
        let g: i64 = parse_int(l.next(), line, "generation")?;
        let lab: u32 = parse_int(l.next(), line, "label")?;
        if l.next().is_some() {
            return Err(GraphError::Parse { line, msg: "trailing tokens before '->'".into() });
        }
        let rhs = rhs.trim();
        let target = match rhs {
            "D1" => EdgeTarget::Sink1,
            "D2" => EdgeTarget::Sink2,
            _ => {
                let mut r = rhs.split_whitespace();
                let pg: i64 = parse_int(r.next(), line, "parent generation")?;
                let pl: u32 = parse_int(r.next(), line, "parent label")?;
                if r.next().is_some() {
                    return Err(GraphError::Parse { line, msg: "trailing tokens after target".into() });
                }
                EdgeTarget::Parent(Vertex::new(pg, pl))
            }
        };
        out.push((Vertex::new(g, lab), target));
    }
    Ok(out)
}

/// Parse and validate a fixture.
pub fn load_fixture(text: &str, n: usize, m: usize) -> Result<DiGraphWindow, GraphError> {
    DiGraphWindow::from_edges(&parse_fixture(text)?, n, m)
}

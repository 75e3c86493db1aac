use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GeneralizedGraph, GraphError};

/// Alternating node and edge types `t1 -[r1]-> t2 -[r2]-> ... -[rq]-> t(q+1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypedPath {
    node_types: Vec<String>,
    edge_types: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{message} at column {column}\n  {input}\n  {caret}", caret = caret(*.column))]
pub struct TypedPathParseError {
    pub message: String,
    /// 1-based character column of the offending position.
    pub column: usize,
    pub input: String,
}

fn caret(column: usize) -> String {
    format!("{}^", " ".repeat(column.saturating_sub(1)))
}

impl TypedPath {
    pub fn new(node_types: Vec<String>, edge_types: Vec<String>) -> Result<Self, String> {
        if edge_types.is_empty() {
            return Err("typed path needs at least one edge type".into());
        }
        if node_types.len() != edge_types.len() + 1 {
            return Err(format!(
                "typed path with {} edge types needs {} node types, got {}",
                edge_types.len(),
                edge_types.len() + 1,
                node_types.len()
            ));
        }
        Ok(Self { node_types, edge_types })
    }

    pub fn node_types(&self) -> &[String] {
        &self.node_types
    }

    pub fn edge_types(&self) -> &[String] {
        &self.edge_types
    }

    /// Number of hops.
    pub fn len(&self) -> usize {
        self.edge_types.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn source_type(&self) -> &str {
        &self.node_types[0]
    }

    pub fn target_type(&self) -> &str {
        self.node_types.last().expect("at least two node types")
    }
}

impl fmt::Display for TypedPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.node_types[0])?;
        for (r, t) in self.edge_types.iter().zip(&self.node_types[1..]) {
            write!(f, "-[{r}]->{t}")?;
        }
        Ok(())
    }
}

fn is_type_char(c: char) -> bool {
    !c.is_whitespace() && !matches!(c, '-' | '[' | ']' | '>')
}

struct Cursor<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    input: &'a str,
}

impl Cursor<'_> {
    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|(_, c)| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn error(&self, message: impl Into<String>) -> TypedPathParseError {
        TypedPathParseError { message: message.into(), column: self.pos + 1, input: self.input.to_string() }
    }

    fn expect(&mut self, lit: char) -> Result<(), TypedPathParseError> {
        self.skip_ws();
        match self.chars.get(self.pos) {
            Some(&(_, c)) if c == lit => {
                self.pos += 1;
                Ok(())
            }
            Some(&(_, c)) => Err(self.error(format!("expected '{lit}', found '{c}'"))),
            None => Err(self.error(format!("expected '{lit}', found end of input"))),
        }
    }

    fn label(&mut self) -> Result<String, TypedPathParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.chars.get(self.pos).is_some_and(|&(_, c)| is_type_char(c)) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(match self.chars.get(self.pos) {
                Some(&(_, c)) => self.error(format!("expected type label, found '{c}'")),
                None => self.error("expected type label, found end of input"),
            });
        }
        Ok(self.chars[start..self.pos].iter().map(|&(_, c)| c).collect())
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.chars.len()
    }
}

impl FromStr for TypedPath {
    type Err = TypedPathParseError;

    /// Grammar: `TYPE (-[TYPE]-> TYPE)+`, whitespace-insensitive.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut cur = Cursor { chars: s.char_indices().collect(), pos: 0, input: s };
        let mut nodes = vec![cur.label()?];
        let mut edges = Vec::new();
        loop {
            if cur.at_end() {
                break;
            }
            cur.expect('-')?;
            cur.expect('[')?;
            edges.push(cur.label()?);
            cur.expect(']')?;
            cur.expect('-')?;
            cur.expect('>')?;
            nodes.push(cur.label()?);
        }
        if edges.is_empty() {
            return Err(cur.error("typed path needs at least one '-[TYPE]->' step"));
        }
        Ok(TypedPath { node_types: nodes, edge_types: edges })
    }
}

/// A concrete directed path: `nodes.len() == edges.len() + 1`, indices into the graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathInstance {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
}

impl PathInstance {
    pub fn source(&self) -> usize {
        self.nodes[0]
    }

    pub fn target(&self) -> usize {
        *self.nodes.last().expect("non-empty path")
    }

    pub fn node_ids<'g>(&self, g: &'g GeneralizedGraph) -> Vec<&'g str> {
        self.nodes.iter().map(|&n| g.node_id(n)).collect()
    }

    pub fn edge_ids<'g>(&self, g: &'g GeneralizedGraph) -> Vec<&'g str> {
        self.edges.iter().map(|&e| g.edge_id(e)).collect()
    }
}

/// Every directed path realizing `t`: node `i` carries `t.node_types[i]` among
/// its types, edge `i` carries `t.edge_types[i]` and runs from node `i` to
/// node `i+1`. An edge is used at most once per path; nodes may repeat.
/// Instances come back sorted.
pub fn paths_matching(g: &GeneralizedGraph, t: &TypedPath) -> Result<Vec<PathInstance>, GraphError> {
    g.require_binary()?;
    let mut out = Vec::new();
    let mut nodes = Vec::with_capacity(t.len() + 1);
    let mut edges = Vec::with_capacity(t.len());
    for start in 0..g.node_count() {
        if g.node_has_type(start, t.source_type()) {
            nodes.push(start);
            extend(g, t, &mut nodes, &mut edges, &mut out);
            nodes.pop();
        }
    }
    out.sort();
    Ok(out)
}

fn extend(
    g: &GeneralizedGraph,
    t: &TypedPath,
    nodes: &mut Vec<usize>,
    edges: &mut Vec<usize>,
    out: &mut Vec<PathInstance>,
) {
    let hop = edges.len();
    if hop == t.len() {
        out.push(PathInstance { nodes: nodes.clone(), edges: edges.clone() });
        return;
    }
    let here = *nodes.last().expect("path has a start node");
    for &e in g.outgoing_edges(here) {
        if !g.edge_has_type(e, &t.edge_types[hop]) || edges.contains(&e) {
            continue;
        }
        let next = g.incidence(e)[1];
        if !g.node_has_type(next, &t.node_types[hop + 1]) {
            continue;
        }
        nodes.push(next);
        edges.push(e);
        extend(g, t, nodes, edges, out);
        edges.pop();
        nodes.pop();
    }
}

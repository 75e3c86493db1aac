//! JSON Lines persistence. One element per line:
//!
//! ```text
//! nodes: {"id": str, "types": [str], "props": {str: [str]}}
//! edges: {"id": str, "types": [str], "incidence": [str, ...], "props": {str: [str]}}
//! ```
//!
//! `types` and `props` are optional on input. The writers always emit every key,
//! in the order above, with elements sorted by id.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GeneralizedGraph, GraphBuilder, GraphError, Properties, TypeSet, RESERVED_KEYS};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: String,
    #[serde(default)]
    types: Vec<String>,
    #[serde(default)]
    props: Properties,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    id: String,
    #[serde(default)]
    types: Vec<String>,
    incidence: Vec<String>,
    #[serde(default)]
    props: Properties,
}

fn load_error(source_name: &str, line: usize, message: impl Into<String>) -> GraphError {
    GraphError::Load { source_name: source_name.to_string(), line, message: message.into() }
}

fn records<'a, T, R>(reader: R, source_name: &'a str) -> impl Iterator<Item = Result<(usize, T), GraphError>> + 'a
where
    T: for<'de> Deserialize<'de> + 'a,
    R: BufRead + 'a,
{
    reader.lines().enumerate().filter_map(move |(i, line)| {
        let line_no = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(load_error(source_name, line_no, e.to_string()))),
        };
        if line.trim().is_empty() {
            return None;
        }
        Some(
            serde_json::from_str::<T>(&line)
                .map(|r| (line_no, r))
                .map_err(|e| load_error(source_name, line_no, format!("malformed record: {e}"))),
        )
    })
}

fn check_keys(source_name: &str, line: usize, props: &Properties) -> Result<(), GraphError> {
    match RESERVED_KEYS.iter().find(|k| props.contains_key(**k)) {
        Some(k) => Err(load_error(source_name, line, format!("reserved property key {k}"))),
        None => Ok(()),
    }
}

/// Loads a graph from two line-delimited streams. Every validation error
/// carries the offending line number.
pub fn load_graph<N, E>(nodes: N, edges: E) -> Result<GeneralizedGraph, GraphError>
where
    N: BufRead,
    E: BufRead,
{
    load_named(nodes, "nodes", edges, "edges")
}

fn load_named<N, E>(nodes: N, node_src: &str, edges: E, edge_src: &str) -> Result<GeneralizedGraph, GraphError>
where
    N: BufRead,
    E: BufRead,
{
    let mut builder = GraphBuilder::new();
    let mut seen: HashMap<String, usize> = HashMap::new();

    for rec in records::<NodeRecord, _>(nodes, node_src) {
        let (line, r) = rec?;
        check_keys(node_src, line, &r.props)?;
        if let Some(first) = seen.insert(r.id.clone(), line) {
            return Err(load_error(node_src, line, format!("duplicate element id {} (first at line {first})", r.id)));
        }
        builder.push_node(r.id, r.types.into_iter().collect::<TypeSet>(), r.props);
    }

    let mut edge_seen: HashMap<String, usize> = HashMap::new();
    for rec in records::<EdgeRecord, _>(edges, edge_src) {
        let (line, r) = rec?;
        check_keys(edge_src, line, &r.props)?;
        if seen.contains_key(&r.id) || edge_seen.insert(r.id.clone(), line).is_some() {
            return Err(load_error(edge_src, line, format!("duplicate element id {}", r.id)));
        }
        if r.incidence.len() < 2 {
            return Err(load_error(
                edge_src,
                line,
                format!("edge {} has arity {}, expected at least 2", r.id, r.incidence.len()),
            ));
        }
        if let Some(missing) = r.incidence.iter().find(|n| !seen.contains_key(*n)) {
            return Err(load_error(edge_src, line, format!("unknown node {missing}")));
        }
        builder.push_edge(r.id, r.types.into_iter().collect(), r.incidence, r.props);
    }

    builder.build()
}

pub fn load_graph_files(nodes: &Path, edges: &Path) -> Result<GeneralizedGraph, GraphError> {
    let nf = BufReader::new(File::open(nodes)?);
    let ef = BufReader::new(File::open(edges)?);
    load_named(nf, &nodes.display().to_string(), ef, &edges.display().to_string())
}

pub fn write_nodes<W: Write>(g: &GeneralizedGraph, mut out: W) -> Result<(), GraphError> {
    for i in 0..g.node_count() {
        let rec = NodeRecord {
            id: g.node_id(i).to_string(),
            types: g.node_types(i).map(|t| t.iter().cloned().collect()).unwrap_or_default(),
            props: g.node_props(i).clone(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_edges<W: Write>(g: &GeneralizedGraph, mut out: W) -> Result<(), GraphError> {
    for e in 0..g.edge_count() {
        let rec = EdgeRecord {
            id: g.edge_id(e).to_string(),
            types: g.edge_types(e).map(|t| t.iter().cloned().collect()).unwrap_or_default(),
            incidence: g.incidence(e).iter().map(|&n| g.node_id(n).to_string()).collect(),
            props: g.edge_props(e).clone(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_graph_files(g: &GeneralizedGraph, nodes: &Path, edges: &Path) -> Result<(), GraphError> {
    let mut nw = BufWriter::new(File::create(nodes)?);
    write_nodes(g, &mut nw)?;
    nw.flush()?;
    let mut ew = BufWriter::new(File::create(edges)?);
    write_edges(g, &mut ew)?;
    ew.flush()?;
    Ok(())
}

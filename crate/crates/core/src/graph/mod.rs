//! In-memory generalized graph: nodes and edges are both first-class elements,
//! edges connect an ordered tuple of nodes (arity >= 2), every element may carry
//! multi-valued string properties and a set of type labels.
//!
//! Types are kept apart from the property map so that they can never leak into
//! the embedding pipeline, which only ever sees neighbors and property tokens.

mod io;
mod paths;
mod synthetic;

pub use io::{load_graph, load_graph_files, write_edges, write_graph_files, write_nodes};
pub use paths::{paths_matching, PathInstance, TypedPath, TypedPathParseError};
pub use synthetic::{generate_synthetic, synthetic_node_id, EdgeRule, NodeTypeCount, PropertyRule, SyntheticSpec};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

pub type TypeSet = BTreeSet<String>;
pub type Properties = BTreeMap<String, Vec<String>>;

/// Property keys that are reserved for the type and incidence relations.
pub const RESERVED_KEYS: [&str; 2] = ["tau", "gamma"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("duplicate element id {0}")]
    DuplicateId(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("unknown element {0}")]
    UnknownElement(String),
    #[error("edge {edge} has arity {arity}, expected at least 2")]
    ArityTooSmall { edge: String, arity: usize },
    #[error("edge {edge} has arity {arity}, operation requires binary edges")]
    NonBinary { edge: String, arity: usize },
    #[error("reserved property key {key} on element {element}")]
    ReservedKey { element: String, key: String },
    #[error("{source_name} line {line}: {message}")]
    Load { source_name: String, line: usize, message: String },
    #[error("synthetic spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// `std::io::Error` is neither `Clone` nor `PartialEq`; keep the rendered message.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct IoError(pub String);

impl From<std::io::Error> for GraphError {
    fn from(e: std::io::Error) -> Self {
        GraphError::Io(IoError(e.to_string()))
    }
}

/// Reference to either a node or an edge by dense index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementRef {
    Node(usize),
    Edge(usize),
}

#[derive(Debug, Clone, PartialEq)]
struct Element {
    id: String,
    types: TypeSet,
    props: Properties,
}

/// Immutable generalized graph. Element indices are dense and follow the
/// ascending order of ids, so the same input always yields the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedGraph {
    nodes: Vec<Element>,
    edges: Vec<Element>,
    incidence: Vec<Vec<usize>>,
    node_index: HashMap<String, usize>,
    edge_index: HashMap<String, usize>,
    /// Sorted, deduplicated co-incident nodes, direction ignored.
    adjacency: Vec<Vec<usize>>,
    /// Sorted, deduplicated incident edges.
    incident: Vec<Vec<usize>>,
    /// Binary edges leaving each node (incidence[0] == node), sorted.
    outgoing: Vec<Vec<usize>>,
}

/// Accumulates elements in any order and validates them on `build`.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Element>,
    edges: Vec<(Element, Vec<String>)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node<I, S>(&mut self, id: &str, types: I) -> &mut Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.node_with_props(id, types, Properties::new())
    }

    pub fn node_with_props<I, S>(&mut self, id: &str, types: I, props: Properties) -> &mut Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.nodes.push(Element { id: id.to_string(), types: types.into_iter().map(Into::into).collect(), props });
        self
    }

    pub fn edge<I, S>(&mut self, id: &str, types: I, incidence: &[&str]) -> &mut Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.edge_with_props(id, types, incidence, Properties::new())
    }

    pub fn edge_with_props<I, S>(&mut self, id: &str, types: I, incidence: &[&str], props: Properties) -> &mut Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.edges.push((
            Element { id: id.to_string(), types: types.into_iter().map(Into::into).collect(), props },
            incidence.iter().map(|s| s.to_string()).collect(),
        ));
        self
    }

    pub(crate) fn push_node(&mut self, id: String, types: TypeSet, props: Properties) {
        self.nodes.push(Element { id, types, props });
    }

    pub(crate) fn push_edge(&mut self, id: String, types: TypeSet, incidence: Vec<String>, props: Properties) {
        self.edges.push((Element { id, types, props }, incidence));
    }

    pub fn build(self) -> Result<GeneralizedGraph, GraphError> {
        let mut nodes = self.nodes;
        let mut edges = self.edges;
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        edges.sort_by(|a, b| a.0.id.cmp(&b.0.id));

        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            check_reserved(n)?;
            if node_index.insert(n.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateId(n.id.clone()));
            }
        }
        let mut edge_index = HashMap::with_capacity(edges.len());
        let mut incidence = Vec::with_capacity(edges.len());
        for (i, (e, inc)) in edges.iter().enumerate() {
            check_reserved(e)?;
            if node_index.contains_key(&e.id) || edge_index.insert(e.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateId(e.id.clone()));
            }
            if inc.len() < 2 {
                return Err(GraphError::ArityTooSmall { edge: e.id.clone(), arity: inc.len() });
            }
            let tuple = inc
                .iter()
                .map(|n| node_index.get(n).copied().ok_or_else(|| GraphError::UnknownNode(n.clone())))
                .collect::<Result<Vec<_>, _>>()?;
            incidence.push(tuple);
        }

        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut incident = vec![Vec::new(); nodes.len()];
        let mut outgoing = vec![Vec::new(); nodes.len()];
        for (e, tuple) in incidence.iter().enumerate() {
            for (i, &a) in tuple.iter().enumerate() {
                incident[a].push(e);
                for (j, &b) in tuple.iter().enumerate() {
                    if i != j {
                        adjacency[a].push(b);
                    }
                }
            }
            if tuple.len() == 2 {
                outgoing[tuple[0]].push(e);
            }
        }
        for list in adjacency.iter_mut().chain(incident.iter_mut()).chain(outgoing.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }

        Ok(GeneralizedGraph {
            nodes,
            edges: edges.into_iter().map(|(e, _)| e).collect(),
            incidence,
            node_index,
            edge_index,
            adjacency,
            incident,
            outgoing,
        })
    }
}

fn check_reserved(e: &Element) -> Result<(), GraphError> {
    for key in RESERVED_KEYS {
        if e.props.contains_key(key) {
            return Err(GraphError::ReservedKey { element: e.id.clone(), key: key.to_string() });
        }
    }
    Ok(())
}

/// Renders a property as the token shared with the embedding vocabulary.
pub fn property_token(key: &str, value: &str) -> String {
    format!("{key}={value}")
}

impl GeneralizedGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_id(&self, i: usize) -> &str {
        &self.nodes[i].id
    }

    pub fn edge_id(&self, e: usize) -> &str {
        &self.edges[e].id
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.id.as_str())
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = &str> {
        self.edges.iter().map(|e| e.id.as_str())
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edge_index.get(id).copied()
    }

    pub fn element(&self, id: &str) -> Option<ElementRef> {
        self.node_index(id).map(ElementRef::Node).or_else(|| self.edge_index(id).map(ElementRef::Edge))
    }

    fn require_node(&self, id: &str) -> Result<usize, GraphError> {
        self.node_index(id).ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    /// Type labels of a node; `None` when the node is untyped.
    pub fn node_types(&self, i: usize) -> Option<&TypeSet> {
        Some(&self.nodes[i].types).filter(|t| !t.is_empty())
    }

    pub fn edge_types(&self, e: usize) -> Option<&TypeSet> {
        Some(&self.edges[e].types).filter(|t| !t.is_empty())
    }

    pub fn node_has_type(&self, i: usize, label: &str) -> bool {
        self.nodes[i].types.contains(label)
    }

    pub fn edge_has_type(&self, e: usize, label: &str) -> bool {
        self.edges[e].types.contains(label)
    }

    pub fn node_props(&self, i: usize) -> &Properties {
        &self.nodes[i].props
    }

    pub fn edge_props(&self, e: usize) -> &Properties {
        &self.edges[e].props
    }

    pub fn incidence(&self, e: usize) -> &[usize] {
        &self.incidence[e]
    }

    pub fn is_binary(&self) -> bool {
        self.incidence.iter().all(|t| t.len() == 2)
    }

    /// Endpoints `(source, target)` of a binary edge.
    pub fn endpoints(&self, e: usize) -> Result<(usize, usize), GraphError> {
        match self.incidence[e].as_slice() {
            &[s, t] => Ok((s, t)),
            other => Err(GraphError::NonBinary { edge: self.edges[e].id.clone(), arity: other.len() }),
        }
    }

    pub(crate) fn require_binary(&self) -> Result<(), GraphError> {
        for e in 0..self.edges.len() {
            self.endpoints(e)?;
        }
        Ok(())
    }

    pub fn neighbor_indices(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn incident_edges(&self, i: usize) -> &[usize] {
        &self.incident[i]
    }

    pub(crate) fn outgoing_edges(&self, i: usize) -> &[usize] {
        &self.outgoing[i]
    }

    /// All nodes co-incident with `id` through any edge, direction and edge
    /// type ignored. The node itself is included only through a self-loop.
    pub fn neighbors(&self, id: &str) -> Result<BTreeSet<&str>, GraphError> {
        let i = self.require_node(id)?;
        Ok(self.adjacency[i].iter().map(|&j| self.node_id(j)).collect())
    }

    /// Property values of a node or edge as `key=value` tokens, with multiplicity.
    pub fn property_tokens(&self, id: &str) -> Result<Vec<String>, GraphError> {
        let props = match self.element(id) {
            Some(ElementRef::Node(i)) => &self.nodes[i].props,
            Some(ElementRef::Edge(e)) => &self.edges[e].props,
            None => return Err(GraphError::UnknownElement(id.to_string())),
        };
        Ok(tokens_of(props))
    }

    pub(crate) fn node_property_tokens(&self, i: usize) -> Vec<String> {
        tokens_of(&self.nodes[i].props)
    }

    /// Incident-edge count plus property-value count.
    pub fn semantic_richness(&self, id: &str) -> Result<usize, GraphError> {
        let i = self.require_node(id)?;
        Ok(self.richness_of(i))
    }

    pub(crate) fn richness_of(&self, i: usize) -> usize {
        self.incident[i].len() + property_value_count(&self.nodes[i].props)
    }

    /// Copy of the graph without the given edges. Node set, types and
    /// properties are untouched.
    pub fn without_edges(&self, removed: &BTreeSet<usize>) -> GeneralizedGraph {
        let mut b = GraphBuilder::new();
        for n in &self.nodes {
            b.push_node(n.id.clone(), n.types.clone(), n.props.clone());
        }
        for (e, el) in self.edges.iter().enumerate() {
            if removed.contains(&e) {
                continue;
            }
            let inc = self.incidence[e].iter().map(|&n| self.node_id(n).to_string()).collect();
            b.push_edge(el.id.clone(), el.types.clone(), inc, el.props.clone());
        }
        b.build().expect("subgraph of a valid graph is valid")
    }

    /// Copy of the graph with node type sets replaced by `f(index, current)`.
    pub fn with_node_types<F>(&self, mut f: F) -> GeneralizedGraph
    where
        F: FnMut(usize, &TypeSet) -> TypeSet,
    {
        let mut g = self.clone();
        for (i, n) in g.nodes.iter_mut().enumerate() {
            n.types = f(i, &n.types);
        }
        g
    }

    /// Sorted node type labels across the graph.
    pub fn node_type_labels(&self) -> BTreeSet<&str> {
        self.nodes.iter().flat_map(|n| n.types.iter().map(String::as_str)).collect()
    }

    pub fn edge_type_labels(&self) -> BTreeSet<&str> {
        self.edges.iter().flat_map(|e| e.types.iter().map(String::as_str)).collect()
    }
}

fn tokens_of(props: &Properties) -> Vec<String> {
    props.iter().flat_map(|(k, vs)| vs.iter().map(move |v| property_token(k, v))).collect()
}

fn property_value_count(props: &Properties) -> usize {
    props.values().map(Vec::len).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn props(pairs: &[(&str, &[&str])]) -> Properties {
        pairs.iter().map(|(k, vs)| (k.to_string(), vs.iter().map(|v| v.to_string()).collect())).collect()
    }

    fn star() -> GeneralizedGraph {
        let mut b = GraphBuilder::new();
        b.node("c", ["Hub"]).node("l1", ["Leaf"]).node("l2", ["Leaf"]).node("l3", ["Leaf"]);
        b.node("iso", Vec::<String>::new());
        b.edge("e1", ["r"], &["c", "l1"]).edge("e2", ["r"], &["l2", "c"]).edge("e3", ["s"], &["c", "l3"]);
        b.build().unwrap()
    }

    #[test]
    fn minimal_graph_counts() {
        let mut b = GraphBuilder::new();
        b.node("a", ["A"]).node("b", ["B"]).edge("e1", ["r"], &["a", "b"]);
        let g = b.build().unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn unknown_incidence_node_is_rejected() {
        let mut b = GraphBuilder::new();
        b.node("a", ["A"]).edge("e1", ["r"], &["a", "z"]);
        let err = b.build().unwrap_err();
        assert_eq!(err, GraphError::UnknownNode("z".into()));
        assert_eq!(err.to_string(), "unknown node z");
    }

    #[test]
    fn duplicate_ids_are_rejected_across_kinds() {
        let mut b = GraphBuilder::new();
        b.node("a", ["A"]).node("a", ["B"]);
        assert_eq!(b.build().unwrap_err(), GraphError::DuplicateId("a".into()));

        let mut b = GraphBuilder::new();
        b.node("a", ["A"]).node("b", ["A"]).edge("a", ["r"], &["a", "b"]);
        assert_eq!(b.build().unwrap_err(), GraphError::DuplicateId("a".into()));
    }

    #[test]
    fn reserved_keys_never_enter_properties() {
        let mut b = GraphBuilder::new();
        b.node_with_props("a", ["A"], props(&[("tau", &["X"])]));
        assert!(matches!(b.build(), Err(GraphError::ReservedKey { .. })));
    }

    #[test]
    fn unary_edges_are_rejected() {
        let mut b = GraphBuilder::new();
        b.node("a", ["A"]).edge("e", ["r"], &["a"]);
        assert!(matches!(b.build(), Err(GraphError::ArityTooSmall { arity: 1, .. })));
    }

    #[test]
    fn star_center_neighbors_are_the_leaves() {
        let g = star();
        let n: Vec<_> = g.neighbors("c").unwrap().into_iter().collect();
        assert_eq!(n, vec!["l1", "l2", "l3"]);
        assert!(g.neighbors("iso").unwrap().is_empty());
        assert_eq!(g.neighbors("nope"), Err(GraphError::UnknownNode("nope".into())));
    }

    #[test]
    fn self_loop_makes_node_its_own_neighbor() {
        let mut b = GraphBuilder::new();
        b.node("a", ["A"]).edge("loop", ["r"], &["a", "a"]);
        let g = b.build().unwrap();
        // enumerate incidences directly
        let mut expected = BTreeSet::new();
        for e in 0..g.edge_count() {
            let inc = g.incidence(e);
            for (i, &x) in inc.iter().enumerate() {
                for (j, &y) in inc.iter().enumerate() {
                    if i != j && g.node_id(x) == "a" {
                        expected.insert(g.node_id(y));
                    }
                }
            }
        }
        assert_eq!(g.neighbors("a").unwrap(), expected);
        assert_eq!(expected.into_iter().collect::<Vec<_>>(), vec!["a"]);
        assert_eq!(g.semantic_richness("a").unwrap(), 1);
    }

    #[test]
    fn hyperedge_neighbors_cover_all_members() {
        let mut b = GraphBuilder::new();
        b.node("a", ["A"]).node("b", ["A"]).node("c", ["A"]);
        b.edge("h", ["r"], &["a", "b", "c"]);
        let g = b.build().unwrap();
        assert_eq!(g.neighbors("b").unwrap().into_iter().collect::<Vec<_>>(), vec!["a", "c"]);
        assert!(!g.is_binary());
        assert!(matches!(g.endpoints(0), Err(GraphError::NonBinary { arity: 3, .. })));
    }

    #[test]
    fn property_tokens_are_namespaced_multisets() {
        let mut b = GraphBuilder::new();
        b.node_with_props("a", ["A"], props(&[("lang", &["es"]), ("year", &["1990"])]));
        b.node_with_props("b", ["A"], props(&[("tag", &["x", "x"])]));
        b.node("c", ["A"]);
        b.edge_with_props("e", ["r"], &["a", "b"], props(&[("w", &["1"])]));
        let g = b.build().unwrap();
        assert_eq!(g.property_tokens("a").unwrap(), vec!["lang=es", "year=1990"]);
        assert_eq!(g.property_tokens("b").unwrap(), vec!["tag=x", "tag=x"]);
        assert!(g.property_tokens("c").unwrap().is_empty());
        assert_eq!(g.property_tokens("e").unwrap(), vec!["w=1"]);
        assert_eq!(g.property_tokens("zz"), Err(GraphError::UnknownElement("zz".into())));
    }

    #[test]
    fn richness_is_edges_plus_property_values() {
        let mut b = GraphBuilder::new();
        b.node_with_props("n", ["A"], props(&[("k", &["1", "2"])]));
        b.node("x", ["A"]).node("y", ["A"]).node("z", ["A"]).node("iso", ["A"]);
        b.edge("e1", ["r"], &["n", "x"]).edge("e2", ["r"], &["y", "n"]).edge("e3", ["r"], &["n", "z"]);
        let g = b.build().unwrap();
        assert_eq!(g.semantic_richness("n").unwrap(), 5);
        assert_eq!(g.semantic_richness("iso").unwrap(), 0);
    }

    #[test]
    fn empty_type_set_reads_as_absent() {
        let g = star();
        let iso = g.node_index("iso").unwrap();
        assert_eq!(g.node_types(iso), None);
        let c = g.node_index("c").unwrap();
        assert!(g.node_types(c).unwrap().contains("Hub"));
    }

    #[test]
    fn input_order_does_not_change_the_graph() {
        let mut a = GraphBuilder::new();
        a.node("x", ["A"]).node("y", ["B"]).edge("e2", ["s"], &["y", "x"]).edge("e1", ["r"], &["x", "y"]);
        let mut b = GraphBuilder::new();
        b.edge("e1", ["r"], &["x", "y"]).node("y", ["B"]).edge("e2", ["s"], &["y", "x"]).node("x", ["A"]);
        assert_eq!(a.build().unwrap(), b.build().unwrap());
    }

    #[test]
    fn removing_edges_keeps_nodes() {
        let g = star();
        let removed: BTreeSet<usize> = [g.edge_index("e1").unwrap()].into();
        let h = g.without_edges(&removed);
        assert_eq!(h.node_count(), g.node_count());
        assert_eq!(h.edge_count(), 2);
        assert!(h.edge_index("e1").is_none());
    }
}

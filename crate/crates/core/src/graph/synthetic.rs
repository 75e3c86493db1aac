//! Seeded generator for typed test graphs.
//!
//! Each edge rule draws its source uniformly from the source type population.
//! With `blocks == 1` the target is uniform over the target type population.
//! With more blocks, every node is assigned block `index % blocks` and the
//! target is taken from the source's block with probability `affinity`
//! (planted partition), which gives entity-retrieval queries something to find.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GeneralizedGraph, GraphBuilder, GraphError, Properties, TypeSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTypeCount {
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRule {
    pub source: String,
    pub edge_type: String,
    pub target: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyRule {
    pub node_type: String,
    pub key: String,
    /// Number of distinct values `v0..v{n-1}` the key can take.
    pub vocabulary: usize,
    pub per_node: usize,
    /// Value follows the node's block (`v{block % vocabulary}`) with
    /// probability `affinity`, otherwise uniform.
    #[serde(default)]
    pub by_block: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub node_types: Vec<NodeTypeCount>,
    #[serde(default)]
    pub edge_rules: Vec<EdgeRule>,
    #[serde(default)]
    pub property_rules: Vec<PropertyRule>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    #[serde(default = "default_affinity")]
    pub affinity: f64,
}

fn default_blocks() -> usize {
    1
}

fn default_affinity() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            node_types: Vec::new(),
            edge_rules: Vec::new(),
            property_rules: Vec::new(),
            seed,
            blocks: 1,
            affinity: 1.0,
        }
    }

    pub fn node_type(mut self, label: &str, count: usize) -> Self {
        self.node_types.push(NodeTypeCount { label: label.into(), count });
        self
    }

    pub fn edge_rule(mut self, source: &str, edge_type: &str, target: &str, count: usize) -> Self {
        self.edge_rules.push(EdgeRule {
            source: source.into(),
            edge_type: edge_type.into(),
            target: target.into(),
            count,
        });
        self
    }

    pub fn property_rule(mut self, node_type: &str, key: &str, vocabulary: usize, per_node: usize) -> Self {
        self.property_rules.push(PropertyRule {
            node_type: node_type.into(),
            key: key.into(),
            vocabulary,
            per_node,
            by_block: false,
        });
        self
    }

    /// Single-valued property that marks the node's block.
    pub fn block_property_rule(mut self, node_type: &str, key: &str, vocabulary: usize) -> Self {
        self.property_rules.push(PropertyRule {
            node_type: node_type.into(),
            key: key.into(),
            vocabulary,
            per_node: 1,
            by_block: true,
        });
        self
    }

    pub fn planted(mut self, blocks: usize, affinity: f64) -> Self {
        self.blocks = blocks;
        self.affinity = affinity;
        self
    }

    fn validate(&self) -> Result<(), GraphError> {
        let err = |m: String| Err(GraphError::Spec(m));
        let mut declared = HashMap::new();
        for nt in &self.node_types {
            if declared.insert(nt.label.as_str(), nt.count).is_some() {
                return err(format!("node type {} declared twice", nt.label));
            }
        }
        for r in &self.edge_rules {
            for t in [&r.source, &r.target] {
                match declared.get(t.as_str()) {
                    None => return err(format!("edge rule {} references undeclared type {t}", r.edge_type)),
                    Some(0) if r.count > 0 => {
                        return err(format!("edge rule {} draws from empty type {t}", r.edge_type))
                    }
                    _ => {}
                }
            }
        }
        for p in &self.property_rules {
            if !declared.contains_key(p.node_type.as_str()) {
                return err(format!("property rule {} references undeclared type {}", p.key, p.node_type));
            }
            if p.per_node > 0 && p.vocabulary == 0 {
                return err(format!("property rule {} has an empty vocabulary", p.key));
            }
        }
        if self.blocks == 0 {
            return err("blocks must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.affinity) {
            return err(format!("affinity {} outside [0, 1]", self.affinity));
        }
        Ok(())
    }
}

/// Node id for the `i`-th node of a type.
pub fn synthetic_node_id(label: &str, i: usize) -> String {
    format!("{label}:{i}")
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<GeneralizedGraph, GraphError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = GraphBuilder::new();

    // population[label] = ids; by_block[label][block] = ids
    let mut population: HashMap<&str, Vec<String>> = HashMap::new();
    let mut by_block: HashMap<&str, Vec<Vec<String>>> = HashMap::new();
    let mut props: BTreeMap<String, Properties> = BTreeMap::new();

    for nt in &spec.node_types {
        let ids: Vec<String> = (0..nt.count).map(|i| synthetic_node_id(&nt.label, i)).collect();
        let mut blocks = vec![Vec::new(); spec.blocks];
        for (i, id) in ids.iter().enumerate() {
            blocks[i % spec.blocks].push(id.clone());
            props.insert(id.clone(), Properties::new());
        }
        population.insert(&nt.label, ids);
        by_block.insert(&nt.label, blocks);
    }

    for rule in &spec.property_rules {
        for (i, id) in population[rule.node_type.as_str()].iter().enumerate() {
            let values = props.get_mut(id).expect("declared node").entry(rule.key.clone()).or_default();
            for _ in 0..rule.per_node {
                let v = if rule.by_block && rng.random_bool(spec.affinity) {
                    (i % spec.blocks) % rule.vocabulary
                } else {
                    rng.random_range(0..rule.vocabulary)
                };
                values.push(format!("v{v}"));
            }
        }
    }

    for nt in &spec.node_types {
        for id in &population[nt.label.as_str()] {
            let types: TypeSet = [nt.label.clone()].into();
            b.push_node(id.clone(), types, props.remove(id).unwrap_or_default());
        }
    }

    let total: usize = spec.edge_rules.iter().map(|r| r.count).sum();
    let width = total.max(1).to_string().len();
    let mut next = 0usize;
    for rule in &spec.edge_rules {
        let sources = &population[rule.source.as_str()];
        let targets = &population[rule.target.as_str()];
        let target_blocks = &by_block[rule.target.as_str()];
        for _ in 0..rule.count {
            let s = rng.random_range(0..sources.len());
            let block = s % spec.blocks;
            let t = if spec.blocks > 1 && !target_blocks[block].is_empty() && rng.random_bool(spec.affinity) {
                let pool = &target_blocks[block];
                &pool[rng.random_range(0..pool.len())]
            } else {
                &targets[rng.random_range(0..targets.len())]
            };
            let id = format!("e{next:0width$}");
            next += 1;
            b.push_edge(id, [rule.edge_type.clone()].into(), vec![sources[s].clone(), t.clone()], Properties::new());
        }
    }

    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::write_edges;
    use crate::graph::write_nodes;

    fn serialize(g: &GeneralizedGraph) -> Vec<u8> {
        let mut buf = Vec::new();
        write_nodes(g, &mut buf).unwrap();
        write_edges(g, &mut buf).unwrap();
        buf
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = SyntheticSpec::new(7)
            .node_type("A", 20)
            .node_type("B", 20)
            .edge_rule("A", "r", "B", 60)
            .property_rule("A", "color", 4, 2)
            .planted(4, 0.8);
        let a = serialize(&generate_synthetic(&spec).unwrap());
        let b = serialize(&generate_synthetic(&spec).unwrap());
        assert_eq!(a, b);
        let other = serialize(&generate_synthetic(&SyntheticSpec { seed: 8, ..spec }).unwrap());
        assert_ne!(a, other);
    }

    #[test]
    fn counts_follow_the_spec() {
        let spec = SyntheticSpec::new(1).node_type("A", 50).node_type("B", 50).edge_rule("A", "r", "B", 200);
        let g = generate_synthetic(&spec).unwrap();
        assert_eq!(g.node_count(), 100);
        assert_eq!(g.edge_count(), 200);
    }

    #[test]
    fn planted_cross_type_fraction_is_one() {
        let spec = SyntheticSpec::new(3).node_type("X", 30).node_type("Y", 30).edge_rule("X", "r", "Y", 300);
        let g = generate_synthetic(&spec).unwrap();
        let cross = (0..g.edge_count())
            .filter(|&e| {
                let (s, t) = g.endpoints(e).unwrap();
                g.node_has_type(s, "X") && g.node_has_type(t, "Y")
            })
            .count();
        assert_eq!(cross as f64 / g.edge_count() as f64, 1.0);
    }

    #[test]
    fn full_affinity_keeps_edges_inside_blocks() {
        let spec =
            SyntheticSpec::new(5).node_type("X", 40).node_type("Y", 40).edge_rule("X", "r", "Y", 400).planted(4, 1.0);
        let g = generate_synthetic(&spec).unwrap();
        let block = |id: &str| id.split(':').nth(1).unwrap().parse::<usize>().unwrap() % 4;
        for e in 0..g.edge_count() {
            let (s, t) = g.endpoints(e).unwrap();
            assert_eq!(block(g.node_id(s)), block(g.node_id(t)));
        }
    }

    #[test]
    fn property_rules_populate_values() {
        let spec = SyntheticSpec::new(2).node_type("A", 5).property_rule("A", "k", 3, 2);
        let g = generate_synthetic(&spec).unwrap();
        for i in 0..g.node_count() {
            let tokens = g.node_property_tokens(i);
            assert_eq!(tokens.len(), 2);
            assert!(tokens.iter().all(|t| ["k=v0", "k=v1", "k=v2"].contains(&t.as_str())));
        }
    }

    #[test]
    fn block_properties_follow_the_block() {
        let spec = SyntheticSpec::new(2).node_type("A", 12).block_property_rule("A", "zone", 4).planted(4, 1.0);
        let g = generate_synthetic(&spec).unwrap();
        for i in 0..12 {
            let id = synthetic_node_id("A", i);
            assert_eq!(g.property_tokens(&id).unwrap(), [format!("zone=v{}", i % 4)]);
        }
    }

    #[test]
    fn undeclared_types_are_rejected() {
        let spec = SyntheticSpec::new(0).node_type("A", 5).edge_rule("A", "r", "Q", 3);
        assert!(matches!(generate_synthetic(&spec), Err(GraphError::Spec(m)) if m.contains("undeclared type Q")));
        let spec = SyntheticSpec::new(0).node_type("A", 5).property_rule("Z", "k", 2, 1);
        assert!(matches!(generate_synthetic(&spec), Err(GraphError::Spec(_))));
    }
}

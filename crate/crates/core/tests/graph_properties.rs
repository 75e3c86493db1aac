use std::collections::BTreeSet;

use ggembed::graph::{
    load_graph, paths_matching, write_edges, write_nodes, GeneralizedGraph, GraphBuilder, Properties, TypeSet,
    TypedPath,
};
use proptest::collection::{btree_map, vec};
use proptest::prelude::*;
use proptest::sample::subsequence;

#[derive(Debug, Clone)]
struct Spec {
    nodes: Vec<(TypeSet, Properties)>,
    edges: Vec<(Vec<usize>, TypeSet, Properties)>,
}

fn labels(pool: &'static [&'static str]) -> impl Strategy<Value = TypeSet> {
    subsequence(pool.to_vec(), 0..=pool.len()).prop_map(|v| v.into_iter().map(String::from).collect())
}

fn props() -> impl Strategy<Value = Properties> {
    let key = prop_oneof![Just("k".to_string()), Just("name".to_string()), Just("x y".to_string())];
    btree_map(key, vec("[a-z\"\\\\ é=]{0,4}", 1..3), 0..3)
}

fn spec(max_arity: usize, max_edges: usize) -> impl Strategy<Value = Spec> {
    (1usize..=12).prop_flat_map(move |n| {
        let nodes = vec((labels(&["A", "B", "C"]), props()), n);
        let edges = vec((vec(0..n, 2..=max_arity), labels(&["r", "s"]), props()), 0..max_edges);
        (nodes, edges).prop_map(|(nodes, edges)| Spec { nodes, edges })
    })
}

fn build(s: &Spec) -> GeneralizedGraph {
    let mut b = GraphBuilder::new();
    for (i, (types, props)) in s.nodes.iter().enumerate() {
        b.node_with_props(&format!("n{i}"), types.iter().cloned(), props.clone());
    }
    for (j, (inc, types, props)) in s.edges.iter().enumerate() {
        let ids: Vec<String> = inc.iter().map(|i| format!("n{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        b.edge_with_props(&format!("e{j:02}"), types.iter().cloned(), &refs, props.clone());
    }
    b.build().unwrap()
}

/// Every sequence of distinct edges that chains source to target and fits the
/// type pattern, by exhaustive enumeration.
fn brute_force_paths(g: &GeneralizedGraph, t: &TypedPath) -> Vec<(Vec<usize>, Vec<usize>)> {
    let q = t.edge_types().len();
    let m = g.edge_count();
    let mut found = Vec::new();
    if m == 0 {
        return found;
    }
    let mut seq = vec![0usize; q];
    'outer: loop {
        let distinct = seq.iter().collect::<BTreeSet<_>>().len() == q;
        if distinct {
            let mut nodes = vec![g.incidence(seq[0])[0]];
            let mut ok = true;
            for (h, &e) in seq.iter().enumerate() {
                let inc = g.incidence(e);
                ok &= inc[0] == nodes[h] && g.edge_has_type(e, &t.edge_types()[h]);
                nodes.push(inc[1]);
            }
            ok &= nodes.iter().zip(t.node_types()).all(|(&n, ty)| g.node_has_type(n, ty));
            if ok {
                found.push((nodes, seq.clone()));
            }
        }
        for slot in (0..q).rev() {
            seq[slot] += 1;
            if seq[slot] < m {
                continue 'outer;
            }
            seq[slot] = 0;
        }
        break;
    }
    found.sort();
    found
}

fn typed_path() -> impl Strategy<Value = TypedPath> {
    let node = prop_oneof![Just("A"), Just("B"), Just("C")];
    let edge = prop_oneof![Just("r"), Just("s")];
    (node.clone(), vec((edge, node), 1..=3)).prop_map(|(first, hops)| {
        let mut text = first.to_string();
        for (e, n) in hops {
            text.push_str(&format!("-[{e}]->{n}"));
        }
        text.parse().unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn serialize_then_load_is_identity(s in spec(4, 12)) {
        let g = build(&s);
        let (mut nodes, mut edges) = (Vec::new(), Vec::new());
        write_nodes(&g, &mut nodes).unwrap();
        write_edges(&g, &mut edges).unwrap();
        prop_assert_eq!(load_graph(&nodes[..], &edges[..]).unwrap(), g);
    }

    #[test]
    fn neighbors_are_symmetric(s in spec(4, 20)) {
        let g = build(&s);
        for a in g.node_ids() {
            for b in g.neighbors(a).unwrap() {
                prop_assert!(g.neighbors(b).unwrap().contains(a));
            }
        }
    }

    #[test]
    fn richness_counts_each_edge_at_both_ends(s in spec(2, 20)) {
        let s = Spec { edges: s.edges.into_iter().filter(|(inc, _, _)| inc[0] != inc[1]).collect(), ..s };
        let g = build(&s);
        let richness: usize = g.node_ids().map(|id| g.semantic_richness(id).unwrap()).sum();
        let props: usize = (0..g.node_count()).map(|i| g.node_props(i).values().map(Vec::len).sum::<usize>()).sum();
        prop_assert_eq!(richness - props, 2 * g.edge_count());
    }

    #[test]
    fn path_matching_agrees_with_enumeration(s in spec(2, 16), t in typed_path()) {
        let g = build(&s);
        let found: Vec<(Vec<usize>, Vec<usize>)> =
            paths_matching(&g, &t).unwrap().into_iter().map(|p| (p.nodes, p.edges)).collect();
        prop_assert_eq!(found, brute_force_paths(&g, &t));
    }
}

#[test]
fn diamond_has_two_paths() {
    let mut b = GraphBuilder::new();
    b.node("a", ["A"]).node("b1", ["B"]).node("b2", ["B"]).node("c", ["C"]);
    b.edge("x1", ["r"], &["a", "b1"]).edge("x2", ["r"], &["a", "b2"]);
    b.edge("y1", ["s"], &["b1", "c"]).edge("y2", ["s"], &["b2", "c"]);
    let g = b.build().unwrap();
    let t: TypedPath = "A-[r]->B-[s]->C".parse().unwrap();
    let found = paths_matching(&g, &t).unwrap();
    assert_eq!(found.len(), 2);
    assert_eq!(found.iter().map(|p| p.edge_ids(&g)).collect::<Vec<_>>(), [["x1", "y1"], ["x2", "y2"]]);
    assert_eq!(brute_force_paths(&g, &t).len(), 2);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ggembed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ggembed")).args(args).output().expect("run ggembed")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new(nodes: &str, edges: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("nodes.jsonl"), nodes).unwrap();
        fs::write(dir.path().join("edges.jsonl"), edges).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn graph_args(&self) -> Vec<String> {
        vec!["--nodes".into(), self.arg("nodes.jsonl"), "--edges".into(), self.arg("edges.jsonl")]
    }

    fn run(&self, head: &[&str], tail: &[&str]) -> Output {
        let graph = self.graph_args();
        let mut args: Vec<&str> = head.to_vec();
        args.extend(graph.iter().map(String::as_str));
        args.extend(tail);
        ggembed(&args)
    }
}

const TWO_NODES: (&str, &str) = (
    "{\"id\":\"a\",\"types\":[\"A\"]}\n{\"id\":\"b\",\"types\":[\"B\"]}\n",
    "{\"id\":\"e\",\"types\":[\"r\"],\"incidence\":[\"a\",\"b\"]}\n",
);

/// A path of typed nodes, all of type `N`, each with one property.
fn chain(n: usize) -> Fixture {
    let nodes: String = (0..n)
        .map(|i| format!("{{\"id\":\"n{i}\",\"types\":[\"N\"],\"props\":{{\"k\":[\"v{}\"]}}}}\n", i % 3))
        .collect();
    let edges: String = (1..n)
        .map(|i| format!("{{\"id\":\"e{i}\",\"types\":[\"r\"],\"incidence\":[\"n{}\",\"n{i}\"]}}\n", i - 1))
        .collect();
    Fixture::new(&nodes, &edges)
}

#[test]
fn import_prints_counts_and_histograms() {
    let f = Fixture::new(TWO_NODES.0, TWO_NODES.1);
    let o = f.run(&["import"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("nodes=2 edges=1\n"));
    assert!(text.contains("node_types {A:1, B:1}"));
    assert!(text.contains("richness {1:2}"));
}

#[test]
fn malformed_line_is_reported_with_its_number() {
    let mut nodes = String::new();
    for i in 0..6 {
        nodes.push_str(&format!("{{\"id\":\"n{i}\"}}\n"));
    }
    nodes.push_str("{\"id\": \"n6\", oops}\n");
    let f = Fixture::new(&nodes, "");
    let o = f.run(&["import"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 7"), "{}", stderr(&o));
}

#[test]
fn dangling_incidence_is_a_data_error() {
    let f = Fixture::new(TWO_NODES.0, "{\"id\":\"e\",\"incidence\":[\"a\",\"z\"]}\n");
    let o = f.run(&["import"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown node z"));
}

#[test]
fn usage_errors_exit_with_1() {
    let f = chain(5);
    let out = f.arg("out");
    assert_eq!(f.run(&["eval", "--task", "typed-path"], &["--out", &out]).status.code(), Some(1));
    let bad = f.run(&["eval", "--task", "typed-path", "--path", "N-[r->N"], &["--out", &out]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains('^'));
    assert_eq!(f.run(&["eval", "--task", "bogus"], &[]).status.code(), Some(1));
    assert_eq!(f.run(&["embed"], &["--out", &out, "--k", "2"]).status.code(), Some(1));
    assert_eq!(ggembed(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(ggembed(&["import", "--nodes", "/nonexistent", "--edges", "/nonexistent"]).status.code(), Some(1));
    assert_eq!(ggembed(&["--help"]).status.code(), Some(0));
}

#[test]
fn embed_writes_consistent_artifacts_and_replays() {
    let f = chain(12);
    let out = f.arg("run1");
    let o = f.run(&["embed"], &["--out", &out, "--dim", "6", "--pairs", "3000", "--seed", "4", "--deterministic"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let tsv = fs::read_to_string(f.path("run1/embedding.tsv")).unwrap();
    let mut lines = tsv.lines();
    let header = lines.next().unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(header, format!("#dim=6 count={}", rows.len()));
    // 12 node ids plus the three property tokens
    assert_eq!(rows.len(), 15);
    assert!(rows.iter().all(|r| r.split('\t').count() == 7));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(f.path("run1/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["n_pairs"], 3000);
    assert_eq!(manifest["dim"], 6);
    assert_eq!(manifest["window"], 3);
    assert!(manifest["wall_time_secs"].as_f64().unwrap() >= 0.0);
    assert!(f.path("run1/model.bin").is_file());

    let config = f.arg("run1/config.toml");
    let replay = ggembed(&["embed", "--config", &config, "--out", &f.arg("run2")]);
    assert!(replay.status.success(), "{}", stderr(&replay));
    assert_eq!(fs::read(f.path("run2/embedding.tsv")).unwrap(), tsv.as_bytes());
}

#[test]
fn node_types_on_a_single_type_graph_is_perfect() {
    let f = chain(30);
    let o = f.run(&["eval", "--task", "node-types"], &["--out", &f.arg("eval"), "--dim", "4", "--pairs", "2000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "task=node-types mean=1.000 std=0.000 n=10");
    for file in ["report.json", "report.txt", "confusion.csv", "repetitions.tsv"] {
        assert!(f.path("eval").join(file).is_file(), "{file}");
    }
}

#[test]
fn eval_can_reuse_a_checkpoint() {
    let f = chain(30);
    let o = f.run(&["embed"], &["--out", &f.arg("run"), "--dim", "4", "--pairs", "2000"]);
    assert!(o.status.success());
    let o = f.run(
        &["eval", "--task", "typed-path", "--path", "N -[r]-> N"],
        &["--out", &f.arg("eval"), "--embedding", &f.arg("run/model.bin")],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("task=typed-path mean="));
    assert!(stdout(&o).contains(" n=1 "));
}

#[test]
fn entity_retrieval_reports_exclusions() {
    let f = chain(40);
    let o = f.run(
        &["eval", "--task", "entity-retrieval"],
        &["--out", &f.arg("eval"), "--dim", "4", "--pairs", "3000", "--reps", "2"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.starts_with("task=entity-retrieval mean="), "{line}");
    assert!(line.contains(" n=2 ") && line.contains("excluded="), "{line}");
}

#[test]
fn synth_writes_a_loadable_graph() {
    let spec = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/planted.toml");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let o = ggembed(&["synth", "--spec", &spec.display().to_string(), "--out", &out.display().to_string()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "nodes=300 edges=1500");
    let nodes = out.join("nodes.jsonl").display().to_string();
    let edges = out.join("edges.jsonl").display().to_string();
    let o = ggembed(&["import", "--nodes", &nodes, "--edges", &edges]);
    assert!(stdout(&o).contains("node_types {A:100, B:100, C:100}"));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use igcheck_core::builders::{build_game_graph, GameMode, Instance};
use igcheck_core::eval::eval;
use igcheck_core::logic::parse;
use igcheck_core::properties;
use serde_json::Value;
use tempfile::TempDir;

const PD: &str = r#"{"kind":"game","strategies":[["C","D"],["C","D"]],
 "utilities":{"1":{"C,C":3,"C,D":0,"D,C":5,"D,D":1},"2":{"C,C":3,"C,D":5,"D,C":0,"D,D":1}}}"#;

const PENNIES: &str = r#"{"strategies":[["H","T"],["H","T"]],
 "utilities":{"1":{"H,H":1,"H,T":-1,"T,H":-1,"T,T":1},"2":{"H,H":-1,"H,T":1,"T,H":1,"T,T":-1}}}"#;

const SWAP: &str = r#"{"n":2,"items":["h1","h2"],"housing":true,"initial":["h1","h2"],"bundle_utils":[[0,1],[1,0]]}"#;

const VOTING: &str = r#"{"n":3,"m":3,"k":1,"rule":"plurality-top-k","voter_utils":[[3,2,1],[1,3,2],[2,1,3]]}"#;

fn igcheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_igcheck"))
        .args(args)
        .env_remove("IGCHECK_GUARD_NODES")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn build(dir: &TempDir, instance: &str, name: &str, extra: &[&str]) -> PathBuf {
    let input = write(dir, &format!("{name}.instance.json"), instance);
    let out = dir.path().join(format!("{name}.graph.json"));
    let mut args = vec!["build-graph", "--input", s(&input), "--out", s(&out)];
    args.extend_from_slice(extra);
    let o = igcheck(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn graph_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn builds_game_and_housing_graphs() {
    let dir = TempDir::new().unwrap();
    let pd = graph_json(&build(&dir, PD, "pd", &[]));
    assert_eq!(pd["nodes"].as_array().unwrap().len(), 4);
    assert_eq!(pd["edges"].as_array().unwrap().len(), 4);
    let swap = graph_json(&build(&dir, SWAP, "swap", &[]));
    assert_eq!(swap["nodes"].as_array().unwrap().len(), 2);
    assert_eq!(swap["edges"].as_array().unwrap().len(), 1);
}

#[test]
fn build_output_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "v.json", VOTING);
    let a = igcheck(&["build-graph", "--input", s(&input)]);
    let b = igcheck(&["build-graph", "--input", s(&input)]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn node_guard_and_force() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "v.json", VOTING);
    let run = |extra: &[&str]| {
        let mut args = vec!["build-graph", "--input", s(&input)];
        args.extend_from_slice(extra);
        Command::new(env!("CARGO_BIN_EXE_igcheck"))
            .args(&args)
            .env("IGCHECK_GUARD_NODES", "100")
            .output()
            .unwrap()
    };
    let refused = run(&[]);
    assert_eq!(refused.status.code(), Some(2));
    assert!(stderr(&refused).contains("216 nodes"), "{}", stderr(&refused));
    assert!(run(&["--force"]).status.success());
}

#[test]
fn schema_errors_carry_a_pointer() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "bad.json", r#"{"n":1,"m":2,"k":1,"rule":"approval","voter_utils":[[1,0]]}"#);
    let o = igcheck(&["build-graph", "--input", s(&input)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/rule"), "{}", stderr(&o));
}

#[test]
fn exit_codes_follow_the_verdict() {
    let dir = TempDir::new().unwrap();
    let pd = build(&dir, PD, "pd", &[]);
    let pennies = build(&dir, PENNIES, "pennies", &[]);

    let o = igcheck(&["check", "--input", s(&pd), "--prop", "acyclic"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["value"], Value::Bool(true));

    let o = igcheck(&["check", "--input", s(&pennies), "--prop", "sink"]);
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["kind"], "node-set");
    assert!(v["value"].as_array().unwrap().is_empty());

    let o = igcheck(&["check", "--input", s(&pd), "--formula", "Q(x)"]);
    assert_eq!(o.status.code(), Some(2));
    let o = igcheck(&["check", "--input", s(&pd), "--formula", "lfp S,x. (!S(x)) @ u"]);
    assert_eq!(o.status.code(), Some(2));
    let o = igcheck(&["check", "--input", s(&pd), "--prop", "k-fip"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains('k'));
}

#[test]
fn file_round_trip_matches_in_process_evaluation() {
    let dir = TempDir::new().unwrap();
    let pd = build(&dir, PD, "pd", &["--mode", "coalition:2"]);
    let Instance::Game(game) = Instance::from_json(PD).unwrap() else { panic!() };
    let g = build_game_graph(&game, GameMode::Coalition(2)).unwrap();
    for (name, k) in [("sink", None), ("weakly-acyclic", None), ("k-fip", Some("2")), ("sink-k", Some("2"))] {
        let mut args = vec!["check", "--input", s(&pd), "--prop", name];
        if let Some(k) = k {
            args.extend(["--k", k]);
        }
        let o = igcheck(&args);
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        let args = properties::PropertyArgs {
            k: k.map(|k| k.parse().unwrap()),
            ..Default::default()
        };
        let want = eval(&g, &properties::property(name, &args).unwrap()).unwrap();
        assert_eq!(v["value"], want.to_json()["value"], "{name}");
        assert_eq!(o.status.code(), Some(if want.holds() { 0 } else { 1 }));
    }
}

#[test]
fn formula_files_and_labels() {
    let dir = TempDir::new().unwrap();
    let pd = build(&dir, PD, "pd", &[]);
    let file = write(&dir, "q.mlfp", "# Nash profiles\nnash(x) := all y. !E(x,y)\nnash(v) & ex w. E(w,v)\n");
    let o = igcheck(&["check", "--input", s(&pd), "--formula-file", s(&file)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["labels"], serde_json::json!([["D", "D"]]));
}

#[test]
fn props_emit_parses_back() {
    let listed = stdout(&igcheck(&["props", "list"]));
    assert!(listed.lines().count() >= 10);
    for (name, extra) in [
        ("weakly-acyclic", vec![]),
        ("k-fip", vec!["--k", "2", "--n", "3", "--literal"]),
        ("special", vec!["--k", "2"]),
        ("phi-reachable", vec!["--phi", "P(v)", "--k", "2"]),
    ] {
        let mut args = vec!["props", "emit", name];
        args.extend(extra);
        let o = igcheck(&args);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        parse(stdout(&o).trim()).unwrap();
    }
    assert_eq!(igcheck(&["props", "emit", "nope"]).status.code(), Some(2));
}

#[test]
fn oracle_diff_agrees_on_built_graphs() {
    let dir = TempDir::new().unwrap();
    for (name, instance, extra) in [
        ("pd", PD, vec!["--mode", "coalition:2"]),
        ("pennies", PENNIES, vec![]),
        ("swap", SWAP, vec![]),
        ("voting", VOTING, vec![]),
    ] {
        let graph = build(&dir, instance, name, &extra);
        let inst = write(&dir, &format!("{name}.json"), instance);
        let report = dir.path().join(format!("{name}.report.json"));
        let o = igcheck(&["oracle-diff", "--input", s(&graph), "--instance", s(&inst), "--report", s(&report)]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stdout(&o));
        assert!(!stdout(&o).contains("DIFF"));
        let r = graph_json(&report);
        assert!(r["per_k"].is_array());
    }
}

#[test]
fn oracle_diff_on_hand_written_graphs() {
    let dir = TempDir::new().unwrap();
    let g = write(
        &dir,
        "g.json",
        r#"{"n":1,"nodes":[["a"],["b"],["c"]],"edges":[[0,[1],1],[1,[1],0],[1,[1],2]],"atoms":{}}"#,
    );
    let o = igcheck(&["oracle-diff", "--input", s(&g)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    // edge target out of range
    let bad = write(&dir, "bad.json", r#"{"n":1,"nodes":[["a"]],"edges":[[0,[1],4]],"atoms":{}}"#);
    assert_eq!(igcheck(&["oracle-diff", "--input", s(&bad)]).status.code(), Some(2));
}

#[test]
fn bench_prints_one_row_per_size() {
    let o = igcheck(&["bench", "--sizes", "16,64,256", "--seed", "5", "--repeats", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "nodes,edges,seconds,lfp_stages");
    assert_eq!(lines.len(), 4);
    for line in &lines[1..] {
        let cols: Vec<&str> = line.split(',').collect();
        let nodes: usize = cols[0].parse().unwrap();
        let stages: usize = cols[3].parse().unwrap();
        assert!(stages <= nodes + 1);
    }
    let again = stdout(&igcheck(&["bench", "--sizes", "16,64,256", "--seed", "5", "--repeats", "1"]));
    let edges = |t: &str| t.lines().map(|l| l.split(',').nth(1).unwrap().to_string()).collect::<Vec<_>>();
    assert_eq!(edges(&text), edges(&again));
    assert_eq!(igcheck(&["bench", "--sizes", "64,16"]).status.code(), Some(2));
}

mod common;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use common::{bin, fixtures};
use hyperretro::search::PathwayStatus;
use hyperretro_cli::routes::{without_metadata, RouteDocument};

const TARGET: &str = "CC(=O)Nc1ccc(O)cc1";

fn hyperretro(args: &[&str]) -> Output {
    Command::new(bin()).args(args).env_remove("RUST_LOG").output().expect("binary runs")
}

fn e2e(name: &str) -> String {
    fixtures().join("e2e").join(name).to_str().unwrap().to_owned()
}

fn read_doc(path: &Path) -> RouteDocument {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn plan_writes_routes_graph_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("routes.json");
    let graph = dir.path().join("graph.json");
    let trace = dir.path().join("trace.jsonl");
    let o = hyperretro(&[
        "plan",
        TARGET,
        "--models",
        &e2e("models.toml"),
        "--stock",
        &e2e("stock.smi"),
        "--out",
        out.to_str().unwrap(),
        "--graph",
        graph.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = String::from_utf8(o.stdout).unwrap();
    assert!(summary.contains("1 solved"), "{summary}");

    let doc = read_doc(&out);
    assert_eq!(doc.target, TARGET);
    assert_eq!(doc.config["beams"], 10);
    assert_eq!(doc.config["max_steps"], 6);
    assert_eq!(doc.metadata.tool, "hyperretro-cli");
    let ranks: Vec<usize> = doc.routes.iter().map(|r| r.rank).collect();
    assert_eq!(ranks, (1..=doc.routes.len()).collect::<Vec<_>>());
    assert!(doc.routes.windows(2).all(|w| w[0].score >= w[1].score));

    let trace = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(trace.lines().count(), 6, "one record per retro candidate");
    for line in trace.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["verdict"], "auto");
        assert_eq!(v["fate"], "attached");
    }

    let snapshot: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&graph).unwrap()).unwrap();
    assert_eq!(snapshot["nodes"].as_array().unwrap().len(), 12);
    assert_eq!(snapshot["arcs"].as_array().unwrap().len(), 6);
}

#[test]
fn no_route_exits_3() {
    let o = hyperretro(&["plan", TARGET, "--models", &e2e("models.toml"), "--stock", &e2e("stock_missing_phenol.smi")]);
    assert_eq!(o.status.code(), Some(3));
    let doc: RouteDocument = serde_json::from_slice(&o.stdout).unwrap();
    assert!(doc.routes.iter().all(|r| r.status != PathwayStatus::Solved));
    // The summary goes to stderr when routes go to stdout.
    assert!(String::from_utf8_lossy(&o.stderr).contains("0 solved"));
}

#[test]
fn stock_files_are_unioned() {
    let dir = tempfile::tempdir().unwrap();
    let extra = dir.path().join("phenol.smi");
    std::fs::write(&extra, "# extra\nOc1ccccc1\n").unwrap();
    let o = hyperretro(&[
        "plan",
        TARGET,
        "--models",
        &e2e("models.toml"),
        "--stock",
        &e2e("stock_missing_phenol.smi"),
        "--stock",
        extra.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn max_steps_limits_routes() {
    let o = hyperretro(&["plan", TARGET, "--models", &e2e("models.toml"), "--stock", &e2e("stock.smi"), "--max-steps", "2"]);
    assert_eq!(o.status.code(), Some(3));
    let doc: RouteDocument = serde_json::from_slice(&o.stdout).unwrap();
    assert!(doc.routes.iter().any(|r| r.status == PathwayStatus::MaxSteps));
    assert!(doc.routes.iter().all(|r| r.n_steps <= 2));
}

#[test]
fn config_file_and_environment_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!("models = {:?}\nstock = [{:?}]\nmax-steps = 2\nbeams = 3\n", e2e("models.toml"), e2e("stock.smi")),
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();

    // Config alone: two steps are not enough.
    let o = hyperretro(&["plan", TARGET, "--config", cfg]);
    assert_eq!(o.status.code(), Some(3));
    let doc: RouteDocument = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc.config["beams"], 3);

    // The environment beats the file.
    let o = Command::new(bin()).args(["plan", TARGET, "--config", cfg]).env("HYPERRETRO_MAX_STEPS", "3").output().unwrap();
    assert_eq!(o.status.code(), Some(0));

    // The command line beats both.
    let o = Command::new(bin())
        .args(["plan", TARGET, "--config", cfg, "--max-steps", "2"])
        .env("HYPERRETRO_MAX_STEPS", "3")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "transport = \"toy\"\n").unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["plan".into(), TARGET.into(), "--stock".into(), e2e("stock.smi")],
        vec!["plan".into(), TARGET.into(), "--models".into(), bad.to_str().unwrap().into(), "--stock".into(), e2e("stock.smi")],
        vec!["plan".into(), TARGET.into(), "--models".into(), e2e("models.toml")],
        vec!["plan".into(), "C(".into(), "--models".into(), e2e("models.toml"), "--stock".into(), e2e("stock.smi")],
        vec![
            "plan".into(),
            TARGET.into(),
            "--models".into(),
            e2e("models.toml"),
            "--stock".into(),
            e2e("stock.smi"),
            "--retro-beams".into(),
            "51".into(),
        ],
        vec![
            "plan".into(),
            TARGET.into(),
            "--models".into(),
            e2e("models.toml"),
            "--stock".into(),
            e2e("stock.smi"),
            "--gap".into(),
            "0.7".into(),
        ],
        vec!["plan".into(), TARGET.into(), "--bogus".into()],
        vec!["mock-serve".into(), "--templates".into(), bad.to_str().unwrap().into()],
    ];
    for args in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = hyperretro(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

fn spawn_stdio_server(templates: &str) -> Child {
    Command::new(bin())
        .args(["mock-serve", "--templates", templates, "--max-in-flight", "4"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap()
}

#[test]
fn mock_serve_matches_golden_responses() {
    let golden = fixtures().join("golden");
    let requests = std::fs::read_to_string(golden.join("mock_serve_requests.jsonl")).unwrap();
    let mut child = spawn_stdio_server(&e2e("templates.json"));
    child.stdin.take().unwrap().write_all(requests.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    // Workers may answer out of order; ids make the set comparable.
    let mut got: Vec<&str> = std::str::from_utf8(&out.stdout).unwrap().lines().collect();
    got.sort_unstable();
    let want = std::fs::read_to_string(golden.join("mock_serve_responses.jsonl")).unwrap();
    assert_eq!(got, want.lines().collect::<Vec<_>>());
}

#[test]
fn subprocess_and_http_gateways_match_in_process_models() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["--stock", &e2e("stock.smi"), "--threads", "8"].map(str::to_owned);
    let plan = |manifest: &Path| {
        let mut args = vec!["plan".to_owned(), TARGET.to_owned(), "--models".to_owned(), manifest.to_str().unwrap().to_owned()];
        args.extend(base.iter().cloned());
        let o = Command::new(bin()).args(&args).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        without_metadata(std::str::from_utf8(&o.stdout).unwrap()).unwrap()
    };
    let local = plan(Path::new(&e2e("models.toml")));

    let sub = dir.path().join("sub.toml");
    std::fs::write(
        &sub,
        format!(
            "transport = \"subprocess\"\ncommand = [{:?}, \"mock-serve\", \"--templates\", {:?}]\nmax_in_flight = 16\n",
            bin().to_str().unwrap(),
            e2e("templates.json")
        ),
    )
    .unwrap();
    assert_eq!(plan(&sub), local);

    let mut server = Command::new(bin())
        .args(["mock-serve", "--transport", "http", "--addr", "127.0.0.1:0", "--templates", &e2e("templates.json")])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect("address banner").to_owned();
    let http = dir.path().join("http.toml");
    std::fs::write(&http, format!("transport = \"http\"\nendpoint = {url:?}\nremote_complexity = true\n")).unwrap();
    let remote = plan(&http);
    server.kill().unwrap();
    server.wait().unwrap();
    assert_eq!(remote, local);
}

#[test]
fn eval_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let test = dir.path().join("test.txt");
    std::fs::write(
        &test,
        "# targets\nCC(=O)Nc1ccc(O)cc1\n{\"target\": \"Nc1ccc(O)cc1\", \"precursors\": \"O=[N+]([O-])c1ccc(O)cc1\"}\nO=[N+]([O-])c1ccc(O)cc1\nCCCC\n",
    )
    .unwrap();
    let out = dir.path().join("report.json");
    let csv = dir.path().join("hist.csv");
    let audit = dir.path().join("audit.jsonl");
    let o = hyperretro(&[
        "eval",
        "--test",
        test.to_str().unwrap(),
        "--models",
        &e2e("models.toml"),
        "--out",
        out.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--audit",
        audit.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("RT") && table.contains("1/JSD"), "{table}");

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    // Six suggestions, all round-trip; "CCCC" has none and is uncovered.
    assert_eq!(report["n_suggestions"], 6);
    assert_eq!(report["round_trip"], 100.0);
    assert_eq!(report["coverage"], 75.0);
    assert_eq!(report["invalid_smiles"], 0.0);
    assert_eq!(std::fs::read_to_string(&audit).unwrap().lines().count(), 6);
    assert!(std::fs::read_to_string(&csv).unwrap().lines().count() > 1);
}

#[test]
fn eval_without_suggestions_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let test = dir.path().join("test.txt");
    std::fs::write(&test, "CCCC\nOCCO\n").unwrap();
    let o = hyperretro(&["eval", "--test", test.to_str().unwrap(), "--models", &e2e("models.toml")]);
    assert_eq!(o.status.code(), Some(4));
    let o = hyperretro(&["eval", "--test", test.to_str().unwrap(), "--models", &e2e("models.toml"), "--log-base", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn export_highlights_a_saved_route() {
    let dir = tempfile::tempdir().unwrap();
    let routes = dir.path().join("routes.json");
    let graph = dir.path().join("graph.json");
    let o = hyperretro(&[
        "plan",
        TARGET,
        "--models",
        &e2e("models.toml"),
        "--stock",
        &e2e("stock.smi"),
        "--out",
        routes.to_str().unwrap(),
        "--graph",
        graph.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let doc = read_doc(&routes);
    let solved = doc.routes.iter().find(|r| r.status == PathwayStatus::Solved).unwrap();

    let rank = solved.rank.to_string();
    let o = hyperretro(&["export", "--graph", graph.to_str().unwrap(), "--routes", routes.to_str().unwrap(), "--rank", &rank]);
    assert_eq!(o.status.code(), Some(0));
    let dot = String::from_utf8(o.stdout).unwrap();
    assert!(dot.starts_with("digraph"));
    for step in &solved.steps {
        assert!(dot.contains(&format!("{} -> ", step.arc)), "{dot}");
        assert!(dot.contains(&format!("{} [shape=square", step.arc)));
    }
    assert_eq!(dot.matches("[color=red]").count(), 3);

    let o = hyperretro(&["export", "--graph", graph.to_str().unwrap(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim_end(), std::fs::read_to_string(&graph).unwrap().trim_end());

    let o = hyperretro(&["export", "--graph", graph.to_str().unwrap(), "--routes", routes.to_str().unwrap(), "--rank", "99"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plan_dot_output_highlights_the_best_route() {
    let o = hyperretro(&["plan", TARGET, "--models", &e2e("models.toml"), "--stock", &e2e("stock.smi"), "--format", "dot"]);
    assert_eq!(o.status.code(), Some(0));
    let dot = String::from_utf8(o.stdout).unwrap();
    assert!(dot.starts_with("digraph hypergraph"));
    assert!(dot.contains("fillcolor=palegreen"));
    assert!(dot.contains("style=dashed"), "reagent edge for [Pd]");
}

//! Behavioral tests for the command line interface: exit codes, staged
//! runs versus the combined pipeline, query I/O, and overrides.

mod common;

use std::fs;

use common::{fixture_copy, flavograph, flavograph_stdin, pipelined_fixture};

#[test]
fn version_flag_prints_name_and_version() {
    let run = flavograph(&["--version"]);
    assert_eq!(run.code, 0);
    assert!(run.stdout.starts_with("flavograph "));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let run = flavograph(&["frobnicate"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("Usage"), "stderr: {}", run.stderr);
}

#[test]
fn missing_config_is_a_usage_error() {
    let run = flavograph(&["pipeline", "run"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("config"), "stderr: {}", run.stderr);
}

#[test]
fn unreadable_config_is_a_usage_error() {
    let run = flavograph(&["pipeline", "run", "-c", "/nonexistent/config.json"]);
    assert_eq!(run.code, 2);
}

#[test]
fn pipeline_run_produces_the_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let (_fixtures, out) = pipelined_fixture(tmp.path());
    for name in ["graph_nodes.csv", "graph_edges.csv", "ontology.ttl", "findings.tsv"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
}

#[test]
fn staged_subcommands_match_the_combined_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let (fixtures, out) = pipelined_fixture(tmp.path());
    let combined_ttl = fs::read(out.join("ontology.ttl")).unwrap();
    let combined_nodes = fs::read(out.join("graph_nodes.csv")).unwrap();
    let combined_findings = fs::read(out.join("findings.tsv")).unwrap();

    let tmp2 = tempfile::tempdir().unwrap();
    let fixtures2 = fixture_copy(tmp2.path());
    fs::copy(fixtures.join("config.json"), fixtures2.join("config.json")).unwrap();
    let config = fixtures2.join("config.json");
    let config = config.to_str().unwrap();
    for stage in [
        vec!["ingest"],
        vec!["normalize"],
        vec!["map"],
        vec!["graph", "build"],
        vec!["template", "emit"],
        vec!["owl", "build"],
        vec!["validate"],
    ] {
        let mut args = stage.clone();
        args.extend(["-c", config]);
        let run = flavograph(&args);
        assert_eq!(run.code, 0, "stage {stage:?} failed: {}", run.stderr);
    }
    let out2 = tmp2.path().join("out");
    assert_eq!(fs::read(out2.join("ontology.ttl")).unwrap(), combined_ttl);
    assert_eq!(fs::read(out2.join("graph_nodes.csv")).unwrap(), combined_nodes);
    assert_eq!(fs::read(out2.join("findings.tsv")).unwrap(), combined_findings);
}

#[test]
fn graph_export_prints_the_export_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let (fixtures, out) = pipelined_fixture(tmp.path());
    let config = fixtures.join("config.json");
    let run =
        flavograph(&["graph", "export", "--what", "nodes", "-c", config.to_str().unwrap()]);
    assert_eq!(run.code, 0);
    assert_eq!(run.stdout, fs::read_to_string(out.join("graph_nodes.csv")).unwrap());
    let run =
        flavograph(&["graph", "export", "--what", "edges", "-c", config.to_str().unwrap()]);
    assert_eq!(run.stdout, fs::read_to_string(out.join("graph_edges.csv")).unwrap());
}

#[test]
fn query_reads_one_query_per_stdin_line() {
    let tmp = tempfile::tempdir().unwrap();
    let (fixtures, _out) = pipelined_fixture(tmp.path());
    let config = fixtures.join("config.json");
    let run = flavograph_stdin(
        &["query", "-c", config.to_str().unwrap()],
        "FOODS IN GROUP \"Beverages\"\n\nDISEASES OF FLAVONOID \"Myricetin\"\n",
    );
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    assert_eq!(
        run.stdout,
        "food\nTea, black, brewed\ndisease\ncardio-vascular disease\n"
    );
}

#[test]
fn query_syntax_error_aborts_with_column() {
    let tmp = tempfile::tempdir().unwrap();
    let (fixtures, _out) = pipelined_fixture(tmp.path());
    let config = fixtures.join("config.json");
    let run = flavograph(&["query", "-c", config.to_str().unwrap(), "-e", "FOODS GROUP \"X\""]);
    assert_eq!(run.code, 1);
    assert!(run.stderr.contains("column 7"), "stderr: {}", run.stderr);
    assert_eq!(run.stdout, "");
}

#[test]
fn query_on_unknown_label_warns_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let (fixtures, _out) = pipelined_fixture(tmp.path());
    let config = fixtures.join("config.json");
    let run = flavograph(&[
        "query",
        "-c",
        config.to_str().unwrap(),
        "-e",
        "FOODS IN GROUP \"Cereals\"",
    ]);
    assert_eq!(run.code, 0);
    assert_eq!(run.stdout, "food\n");
    assert!(run.stderr.contains("warning"), "stderr: {}", run.stderr);
}

#[test]
fn config_comes_from_the_environment_when_not_passed() {
    let tmp = tempfile::tempdir().unwrap();
    let (fixtures, _out) = pipelined_fixture(tmp.path());
    let config = fixtures.join("config.json");
    let output = std::process::Command::new(common::BIN)
        .args(["query", "-e", "FOODS IN GROUP \"Beverages\""])
        .env("FLAVOGRAPH_CONFIG", config.as_os_str())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert_eq!(String::from_utf8(output.stdout).unwrap(), "food\nTea, black, brewed\n");
}

#[test]
fn output_dir_flag_overrides_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let fixtures = fixture_copy(tmp.path());
    let config = fixtures.join("config.json");
    let elsewhere = tmp.path().join("elsewhere");
    let run = flavograph(&[
        "pipeline",
        "run",
        "-c",
        config.to_str().unwrap(),
        "--output-dir",
        elsewhere.to_str().unwrap(),
    ]);
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    assert!(elsewhere.join("ontology.ttl").exists());
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn validate_direct_mode_needs_no_config() {
    let tmp = tempfile::tempdir().unwrap();
    let (_fixtures, out) = pipelined_fixture(tmp.path());
    let nodes = out.join("graph_nodes.csv");
    let edges = out.join("graph_edges.csv");
    let run = flavograph(&[
        "validate",
        "--nodes",
        nodes.to_str().unwrap(),
        "--edges",
        edges.to_str().unwrap(),
    ]);
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    assert!(run.stdout.starts_with("code\tseverity\tsubject\tmessage\n"));
}

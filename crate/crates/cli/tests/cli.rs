use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TWO_BY_TWO: &str = r#"{"attributes": [{"name": "A", "domain_size": 2}, {"name": "B", "domain_size": 2}, {"name": "C", "domain_size": 2}],
 "relations": [{"schema": ["A", "B"], "tuples": [[0, 0, 1], [1, 0, 1]]},
               {"schema": ["B", "C"], "tuples": [[0, 0, 1], [0, 1, 1]]}]}"#;

const PATH3: &str = r#"{"attributes": [{"name": "A", "domain_size": 2}, {"name": "B", "domain_size": 2}, {"name": "C", "domain_size": 2}, {"name": "D", "domain_size": 2}],
 "relations": [{"schema": ["A", "B"], "tuples": [[0, 0, 1], [1, 1, 2]]},
               {"schema": ["B", "C"], "tuples": [[0, 0, 1], [1, 1, 1]]},
               {"schema": ["C", "D"], "tuples": [[0, 1, 1], [1, 0, 3]]}]}"#;

fn dpjoin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpjoin"))
        .args(args)
        .env_remove("DPJOIN_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = dpjoin(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_manifests_match_construction_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&[&str], u64); 3] = [
        (&["--gen", "lb2", "--n", "9", "--delta", "3"], 27),
        (&["--gen", "staircase", "--sqrt-n", "4"], 30),
        (&["--gen", "gap", "--k", "8"], 112),
    ];
    for (i, (flags, want)) in cases.iter().enumerate() {
        let out = dir.path().join(format!("g{i}.json"));
        let mut args = vec!["generate", "-o", out.to_str().unwrap()];
        args.extend_from_slice(flags);
        ok(&args);
        let m = json(&dir.path().join(format!("g{i}.manifest.json")));
        assert_eq!(m["count"], *want);
    }
    assert_eq!(json(&dir.path().join("g0.manifest.json"))["ls"], 3);
}

#[test]
fn generate_then_verify_reproduces_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("m.json");
    let manifest = dir.path().join("m.manifest.json");
    let flags = [
        "generate", "-o", inst.to_str().unwrap(), "--gen", "multi-lb", "--n", "6", "--delta", "8", "--relations", "3",
        "--beta", "0.3",
    ];
    ok(&flags);
    let out = dpjoin(&["verify", inst.to_str().unwrap(), "--beta", "0.3", "--manifest", manifest.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&ok(&["verify", inst.to_str().unwrap(), "--beta", "0.3", "--json"])).unwrap();
    let m = json(&manifest);
    for key in ["n", "count", "ls", "beta", "rs"] {
        assert_eq!(v[key], m[key], "{key}");
    }
    // A different β must be reported as a mismatch.
    let bad = dpjoin(&["verify", inst.to_str().unwrap(), "--beta", "0.9", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn verify_prints_all_fields_and_forest() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "i.json", TWO_BY_TWO);
    let text = ok(&["verify", &p]);
    for line in ["n: 4", "count: 4", "ls: 2", "rs(beta=0.5): ", "hierarchical: yes", "B {1,2}\n  A {1}\n  C {2}\n"] {
        assert!(text.contains(line), "missing {line:?} in\n{text}");
    }
    let p = write(dir.path(), "p.json", PATH3);
    assert!(ok(&["verify", &p]).contains("hierarchical: no"));
}

#[test]
fn malformed_json_is_a_parse_error_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.json", "{\"attributes\": [\n  {\"name\": \"A\",, }\n]}");
    let out = dpjoin(&["verify", &p]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn release_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "i.json", TWO_BY_TWO);
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        ok(&[
            "release", "--instance", &p, "--pipeline", "two_table", "--seeds", "7,8", "--family-size", "16",
            "-o", out.to_str().unwrap(),
        ]);
        let files: Vec<Vec<u8>> = ["synthetic.csv", "report.json", "errors.csv"]
            .iter()
            .map(|f| fs::read(out.join(f)).unwrap())
            .collect();
        let mut config = json(&out.join("config.json"));
        config["output"] = serde_json::Value::Null;
        outputs.push((files, config));
    }
    assert_eq!(outputs[0], outputs[1]);
    let outputs: Vec<Vec<Vec<u8>>> = outputs.into_iter().map(|(f, _)| f).collect();
    let errors = String::from_utf8(outputs[0][2].clone()).unwrap();
    assert_eq!(errors.lines().count(), 3);
    let synth = String::from_utf8(outputs[0][0].clone()).unwrap();
    assert_eq!(synth.lines().next(), Some("A,B,C,mass"));
}

#[test]
fn run_directory_holds_replayable_config() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    ok(&[
        "release", "--gen", "staircase", "--sqrt-n", "3", "--pipeline", "unif_two_table", "--epsilon", "2",
        "--seeds", "3", "-o", first.to_str().unwrap(),
    ]);
    let config = json(&first.join("config.json"));
    assert_eq!(config["pipeline"], "unif_two_table");
    assert_eq!(config["epsilon"], 2.0);
    assert_eq!(config["input"]["generator"]["gen"], "staircase");

    // Replaying the stored config through the environment variable reproduces the run.
    let second = dir.path().join("second");
    let out = Command::new(env!("CARGO_BIN_EXE_dpjoin"))
        .args(["release", "-o", second.to_str().unwrap()])
        .env("DPJOIN_CONFIG", first.join("config.json"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["synthetic.csv", "report.json", "errors.csv"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn multi_table_report_carries_beta() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.json", PATH3);
    let out = dir.path().join("o");
    ok(&[
        "release", "--instance", &p, "--pipeline", "multi_table", "--epsilon", "1", "--privacy-delta", "0.01",
        "-o", out.to_str().unwrap(),
    ]);
    let r = json(&out.join("report.json"));
    let lambda = (1.0f64 / 0.01).ln();
    assert!((r["beta"].as_f64().unwrap() - 1.0 / lambda).abs() < 1e-12);
    assert_eq!(r["pipeline"], "multi_table");
}

#[test]
fn error_classes_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let path3 = write(dir.path(), "p.json", PATH3);
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    let code = |args: &[&str]| dpjoin(args).status.code();
    assert_eq!(code(&["release", "--instance", &path3, "--pipeline", "unif_hierarchical", "-o", o]), Some(5));
    assert_eq!(code(&["release", "--instance", &path3, "--pipeline", "two_table", "-o", o]), Some(4));
    assert_eq!(
        code(&["release", "--instance", &path3, "--pipeline", "multi_table", "--dense-cap", "4", "-o", o]),
        Some(3)
    );
    assert_eq!(code(&["release", "--instance", &path3, "--epsilon=-1", "-o", o]), Some(1));
    assert_eq!(code(&["generate", "--gen", "gap", "--k", "16", "-o", o]), Some(1));
}

use std::path::Path;
use std::process::{Command, Output};

fn eae(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eae")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn rams_line(i: usize) -> String {
    serde_json::json!({
        "doc_key": format!("doc{i}"),
        "sentences": [["Militia", "attacked", format!("convoy{i}"), "."]],
        "evt_triggers": [[1, 1, [["conflict.attack.n/a", 1.0]]]],
        "gold_evt_links": [[[1, 1], [0, 0], "evt089arg01attacker"]],
    })
    .to_string()
}

/// Three-document corpus and a mock config whose default reply names the attacker.
fn workspace(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let corpus: Vec<String> = (0..3).map(rams_line).collect();
    std::fs::write(dir.path().join("test.jsonl"), corpus.join("\n")).unwrap();
    std::fs::write(dir.path().join("script.json"), r#"{"default": "Final Answers:\nAttacker: \"Militia\""}"#).unwrap();
    let config = format!(
        r#"output_dir = "out"
{extra}
[dataset]
name = "RAMS"
path = "test.jsonl"

[sampling]
n = 3

[prompt]
strategy = "cot"
token_budget = {{ max_tokens = 8192, reserve_for_completion = 512 }}

[mock]
script = "script.json"

[cache]
dir = "cache"
"#
    );
    std::fs::write(dir.path().join("exp.toml"), config).unwrap();
    dir
}

#[test]
fn run_score_report_cache() {
    let dir = workspace("");
    let p = dir.path();
    let out = eae(p, &["run", "--config", "exp.toml"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("Arg-C F1 100.00"), "{}", stdout(&out));

    let out = eae(p, &["score", "--pred", "out/predictions.jsonl", "--gold", "out/gold.jsonl", "--mode", "head"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let json_end = text.find("\n\n").unwrap();
    let report: serde_json::Value = serde_json::from_str(&text[..json_end]).unwrap();
    assert_eq!(report["counts_c"]["tp"], 3);
    assert_eq!(report["match_mode"], "head_word");
    assert!(text.contains("| Arg-I | 100.00 | 100.00 | 100.00 | 3 | 0 | 0 |"), "{text}");

    let out = eae(p, &["report", "--runs", "out", "--format", "csv", "--baselines", "builtin"]);
    assert!(out.status.success());
    let csv = stdout(&out);
    assert!(csv.starts_with("Model,Strategy,Match mode,RAMS Arg-I,RAMS Arg-C"), "{csv}");
    assert!(csv.contains("\r\nmock,cot,exact_normalized,100.00,100.00,"), "{csv}");

    let out = eae(p, &["report", "--runs", "out"]);
    assert!(stdout(&out).starts_with("Match mode: exact_normalized"));

    let out = eae(p, &["cache", "stats", "--config", "exp.toml"]);
    assert!(stdout(&out).contains("3 entries"), "{}", stdout(&out));
    let out = eae(p, &["cache", "clear", "--dir", "cache"]);
    assert!(stdout(&out).contains("removed 3 entries"), "{}", stdout(&out));
    let out = eae(p, &["cache", "stats", "--dir", "cache"]);
    assert!(stdout(&out).contains("0 entries"), "{}", stdout(&out));
}

#[test]
fn plan_lists_requests() {
    let dir = workspace("");
    let out = eae(dir.path(), &["plan", "--config", "exp.toml", "--json"]);
    assert!(out.status.success());
    let lines: Vec<serde_json::Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["key"].as_str().unwrap().len(), 64);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn exit_codes() {
    let dir = workspace("");
    std::fs::write(dir.path().join("bad.toml"), "output_dir = 3\n").unwrap();
    assert_eq!(eae(dir.path(), &["run", "--config", "bad.toml"]).status.code(), Some(2));
    assert_eq!(eae(dir.path(), &["run", "--config", "missing.toml"]).status.code(), Some(2));

    let capped = workspace("[cost_caps]\nmax_requests = 1\n");
    assert_eq!(eae(capped.path(), &["run", "--config", "exp.toml"]).status.code(), Some(3));

    std::fs::remove_file(dir.path().join("test.jsonl")).unwrap();
    assert_eq!(eae(dir.path(), &["run", "--config", "exp.toml"]).status.code(), Some(4));

    let out = eae(dir.path(), &["score", "--pred", "nope.jsonl", "--gold", "nope.jsonl"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn lenient_flag_skips_bad_records() {
    let dir = workspace("");
    let path = dir.path().join("test.jsonl");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("\n{\"doc_key\": \"broken\"}\n");
    std::fs::write(&path, text).unwrap();
    assert_eq!(eae(dir.path(), &["run", "--config", "exp.toml"]).status.code(), Some(4));
    let out = eae(dir.path(), &["run", "--config", "exp.toml", "--lenient"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

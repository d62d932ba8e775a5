//! End-to-end checks of the `dropguard` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").join(name)
}

fn dropguard(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dropguard")).args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn structured(files: &[PathBuf]) -> serde_json::Value {
    let mut args = vec!["check", "--format", "structured"];
    args.extend(files.iter().map(|p| path_str(p)));
    let out = dropguard(&args);
    serde_json::from_slice(&out.stdout).expect("structured output is JSON")
}

#[test]
fn clean_fixture_exits_zero() {
    let clean = corpus("clean.smir");
    let out = dropguard(&["check", path_str(&clean)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let json = structured(&[clean]);
    assert_eq!(json["totals"], serde_json::json!({}));
}

#[test]
fn diagnostics_exit_one() {
    let out = dropguard(&["check", path_str(&corpus("pattern2.smir"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("error[DF]"));
}

#[test]
fn denied_kind_exits_one() {
    let out = dropguard(&["check", "--deny", "DF", path_str(&corpus("pattern4.smir"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn parse_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.smir");
    std::fs::write(&bad, "fn f() -> () { bb0: { goto -> bb4; } }").unwrap();
    let out = dropguard(&["check", path_str(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bb4 does not exist"));
    let missing = dir.path().join("missing.smir");
    assert_eq!(dropguard(&["check", path_str(&missing)]).status.code(), Some(2));
}

#[test]
fn zero_threshold_is_rejected() {
    let out = dropguard(&["check", "--path-threshold", "0", path_str(&corpus("clean.smir"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pattern_totals() {
    let files: Vec<PathBuf> = (1..=7).map(|i| corpus(&format!("pattern{i}.smir"))).collect();
    let json = structured(&files);
    assert_eq!(json["totals"], serde_json::json!({"UAF": 3, "DF": 2, "IMA": 2}));
}

#[test]
fn structured_fields() {
    let json = structured(&[corpus("box_unwind.smir")]);
    assert_eq!(json["tool"], "dropguard");
    let f = &json["functions"][0];
    for key in ["file", "name", "flags", "path_count", "fallback", "stable", "diagnostics"] {
        assert!(f.get(key).is_some(), "missing {key}");
    }
    let d = &f["diagnostics"][0];
    assert_eq!(d["kind"], "DF");
    assert_eq!(d["block"], 7);
    assert_eq!(d["statement"], "term");
    assert_eq!(d["place"], "_1");
    assert_eq!(d["on_unwind_path"], true);
    assert!(d["span"]["line"].as_u64().unwrap() >= 1);
    assert!(d["witness_path"].as_array().unwrap().contains(&serde_json::json!(6)));
}

#[test]
fn text_and_structured_agree() {
    let file = corpus("genvec.smir");
    let text = String::from_utf8(dropguard(&["check", path_str(&file)]).stdout).unwrap();
    let json = structured(&[file]);
    let mut from_json: Vec<String> = json["functions"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|f| f["diagnostics"].as_array().unwrap().clone())
        .map(|d| format!("{} {} bb{}", d["kind"].as_str().unwrap(), d["function"].as_str().unwrap(), d["block"]))
        .collect();
    let mut from_text: Vec<String> = text
        .lines()
        .filter_map(|l| {
            let kind = l.split("error[").nth(1)?.split(']').next()?;
            let func = l.split(" in `").nth(1)?.split('`').next()?;
            let block = l.split("(bb").nth(1)?.split(',').next()?;
            Some(format!("{kind} {func} bb{block}"))
        })
        .collect();
    from_json.sort();
    from_text.sort();
    assert_eq!(from_json, from_text);
    assert_eq!(from_json.len(), 3);
}

#[test]
fn dump_paths_lists_paths() {
    let out = dropguard(&["check", "--dump-paths", path_str(&corpus("switch_chain.smir"))]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.trim_start().starts_with('[')).count(), 3);
}

#[test]
fn dump_aliases_shows_partition() {
    let out = dropguard(&["check", "--dump-aliases", "p1", path_str(&corpus("pattern1.smir"))]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("aliases of `p1`"), "{text}");
}

#[test]
fn thread_cap_does_not_change_output() {
    let files = [corpus("genvec.smir"), corpus("pattern1.smir"), corpus("recursion.smir")];
    let mut args = vec!["check", "--format", "structured"];
    args.extend(files.iter().map(|p| path_str(p)));
    let one = Command::new(env!("CARGO_BIN_EXE_dropguard")).env("DROPGUARD_THREADS", "1").args(&args).output().unwrap();
    let many = Command::new(env!("CARGO_BIN_EXE_dropguard")).env("DROPGUARD_THREADS", "8").args(&args).output().unwrap();
    assert_eq!(one.stdout, many.stdout);
}

#[test]
fn exec_reports_events() {
    let file = corpus("box_unwind.smir");
    let ok = dropguard(&["exec", path_str(&file), "--entry", "parse"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let panicked = dropguard(&["exec", path_str(&file), "--entry", "parse", "--panic-at", "bb2:term"]);
    assert_eq!(panicked.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&panicked.stdout).contains("DF"));
}

#[test]
fn exec_needs_branch_labels() {
    let out = dropguard(&["exec", path_str(&corpus("loop_no_renewal.smir")), "--entry", "no_renew"]);
    assert_eq!(out.status.code(), Some(2));
    let out = dropguard(&[
        "exec",
        path_str(&corpus("loop_no_renewal.smir")),
        "--entry",
        "no_renew",
        "--branches",
        "otherwise,0",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn corpus_command_passes_bundled_fixtures() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus");
    let out = dropguard(&["corpus", path_str(&dir)]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(!text.contains("FAIL"));
}

#[test]
fn corpus_command_reports_stale_and_malformed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("stale.smir"), "fn a() -> () {\n bb0: { return; } // EXPECT DF @ bb0\n}\n").unwrap();
    let out = dropguard(&["corpus", "--no-confirm", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("- missing DF"));
    std::fs::write(dir.path().join("broken.smir"), "fn a() -> () {\n // EXPECT DF bb0\n}\n").unwrap();
    assert_eq!(dropguard(&["corpus", path_str(dir.path())]).status.code(), Some(2));
}

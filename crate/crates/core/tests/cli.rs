use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic")
}

fn krvqr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_krvqr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = krvqr(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn generate_into(tmp: &Path, name: &str) -> PathBuf {
    let out = tmp.join(name);
    ok(&fixture_dir(), &["generate", "--config", "generate.toml", "--seed", "7", "--out", out.to_str().unwrap()]);
    out
}

#[test]
fn committed_fixture_matches_generator() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["fixture", "--out", "fx"]);
    for f in ["scenes.json", "kb.jsonl", "generate.toml"] {
        let fresh = std::fs::read(tmp.path().join("fx").join(f)).unwrap();
        let committed = std::fs::read(fixture_dir().join(f)).unwrap();
        assert!(fresh == committed, "{f} is out of date; rerun `krvqr fixture --out fixtures/synthetic`");
    }
}

#[test]
fn oracle_answers_worked_example() {
    let out = ok(&fixture_dir(), &["oracle", "--program", "(Qar_I girl holds)", "--image", "img1"]);
    assert_eq!(out, "hotdog\n");
}

#[test]
fn generate_is_byte_identical_and_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let a = generate_into(tmp.path(), "a.jsonl");
    let b = generate_into(tmp.path(), "b.jsonl");
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());

    let d = krvqr::dataset::Dataset::load(&a).unwrap();
    assert_eq!(d.to_jsonl(), text);
    for p in &d.pairs {
        let again: krvqr::program::Program = p.program.to_string().parse().unwrap();
        assert_eq!(again, p.program);
    }
    let out = ok(&fixture_dir(), &["oracle", "--dataset", a.to_str().unwrap()]);
    assert_eq!(out, format!("{0} of {0} answers reproduced\n", d.len()));

    let other = tmp.path().join("c.jsonl");
    ok(&fixture_dir(), &["generate", "--config", "generate.toml", "--seed", "8", "--out", other.to_str().unwrap()]);
    assert_ne!(text, std::fs::read_to_string(&other).unwrap());
}

#[test]
fn stats_csv_and_reference() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate_into(tmp.path(), "d.jsonl");
    let csv = tmp.path().join("t.csv");
    let out = ok(tmp.path(), &["stats", "--data", data.to_str().unwrap(), "--csv", csv.to_str().unwrap(), "--reference"]);
    let json_end = out.find("\n}\n").unwrap() + 3;
    let report: serde_json::Value = serde_json::from_str(&out[..json_end]).unwrap();
    let d = krvqr::dataset::Dataset::load(&data).unwrap();
    assert_eq!(report["total"].as_u64().unwrap() as usize, d.len());
    assert!(out[json_end..].contains("13561"));
    let csv = std::fs::read_to_string(csv).unwrap();
    assert_eq!(csv.lines().count(), 8);
    let total: usize = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, d.len());
}

#[test]
fn score_all_correct_is_hundred() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate_into(tmp.path(), "d.jsonl");
    let d = krvqr::dataset::Dataset::load(&data).unwrap();
    let preds: std::collections::BTreeMap<String, String> = d.pairs.iter().map(|p| (p.id.clone(), p.answer.clone())).collect();
    let pred_path = tmp.path().join("p.jsonl");
    std::fs::write(&pred_path, krvqr::evaluation::predictions_to_jsonl(&preds)).unwrap();
    let json = tmp.path().join("r.json");
    let out = ok(
        tmp.path(),
        &["score", "--predictions", pred_path.to_str().unwrap(), "--data", data.to_str().unwrap(), "--json", json.to_str().unwrap()],
    );
    assert!(out.lines().any(|l| l.starts_with("overall") && l.ends_with("100.00")), "{out}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(report["overall"].as_f64(), Some(100.0));
}

#[test]
fn baseline_then_score() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate_into(tmp.path(), "d.jsonl");
    let preds = tmp.path().join("b.jsonl");
    ok(tmp.path(), &["baseline", "--data", data.to_str().unwrap(), "--out", preds.to_str().unwrap()]);
    let out = ok(
        tmp.path(),
        &["score", "--predictions", preds.to_str().unwrap(), "--data", data.to_str().unwrap(), "--split", "test"],
    );
    assert!(out.contains("missing predictions: 0"), "{out}");
}

#[test]
fn split_reassigns_by_image() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate_into(tmp.path(), "d.jsonl");
    let out_path = tmp.path().join("s.jsonl");
    let out = ok(
        tmp.path(),
        &["split", "--data", data.to_str().unwrap(), "--out", out_path.to_str().unwrap(), "--ratios", "0.5,0.3,0.2", "--seed", "3"],
    );
    assert_eq!(out, "images per split: train 25 val 15 test 10\n");
}

#[test]
fn embedding_train_and_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let kb = krvqr::synth::functional_kb(30, 3, 40, 2);
    std::fs::write(tmp.path().join("kb.jsonl"), krvqr::graph::kb_to_jsonl(kb.triplets())).unwrap();
    ok(tmp.path(), &["embed-train", "--out", "emb.txt", "--dim", "16", "--epochs", "60", "--seed", "1"]);
    let out = ok(tmp.path(), &["embed-eval", "--embedding", "emb.txt", "--kb", "kb.jsonl"]);
    let r: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(r["triplets"], 40);
    assert!(r["hits_at_1"].as_f64().unwrap() >= 0.9, "{out}");
}

#[test]
fn retrieve_prints_facts() {
    let out = ok(&fixture_dir(), &["retrieve", "--question", "what is the umbrella used for?", "--k", "3"]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("nouns: umbrella"));
    let facts: Vec<serde_json::Value> = lines.map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(facts.len(), 3);
    assert!(facts.iter().all(|f| f["head"] == "umbrella" || f["tail"] == "umbrella"));
}

#[test]
fn import_and_merge() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixture_dir();
    let out = ok(
        tmp.path(),
        &[
            "import",
            "--scenes",
            fx.join("scenes.json").to_str().unwrap(),
            "--kb",
            fx.join("kb.jsonl").to_str().unwrap(),
            "--out-dir",
            "clean",
        ],
    );
    let r: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(r["kb_triplets"], 300);
    assert_eq!(r["images"]["imported"], 50);
    let clean = tmp.path().join("clean");
    ok(&clean, &["merge", "--out", "graphs.jsonl"]);
    let graphs = std::fs::read_to_string(clean.join("graphs.jsonl")).unwrap();
    assert_eq!(graphs.lines().count(), 50);
}

#[test]
fn exit_codes() {
    let fx = fixture_dir();
    let usage = krvqr(&fx, &["oracle", "--no-such-flag"]);
    assert_eq!(usage.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&usage.stderr).contains("--no-such-flag"));
    assert_eq!(krvqr(&fx, &["split", "--data", "x", "--out", "y", "--ratios", "1,2"]).status.code(), Some(2));

    let missing = krvqr(&fx, &["stats", "--data", "does-not-exist.jsonl"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("does-not-exist.jsonl"));

    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\":\"x\"}\n").unwrap();
    let out = krvqr(&fx, &["stats", "--data", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.jsonl:1"));

    let bad_prog = krvqr(&fx, &["oracle", "--program", "(Qxx_I a b)", "--image", "img1"]);
    assert_eq!(bad_prog.status.code(), Some(1));
    let threads = Command::new(env!("CARGO_BIN_EXE_krvqr"))
        .current_dir(&fx)
        .args(["oracle", "--program", "(Qar_I girl holds)", "--image", "img1"])
        .env("KRVQR_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(1));
}

#[test]
fn help_lists_every_subcommand() {
    let out = ok(&fixture_dir(), &["--help"]);
    for cmd in ["import", "merge", "generate", "stats", "split", "oracle", "embed-train", "embed-eval", "retrieve", "baseline", "score"] {
        assert!(out.contains(cmd), "{cmd} missing from help");
    }
    let gen = ok(&fixture_dir(), &["generate", "--help"]);
    for flag in ["--scenes", "--kb", "--config", "--seed", "--phrases", "--out", "--report"] {
        assert!(gen.contains(flag), "{flag} missing");
    }
}

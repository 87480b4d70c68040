//! The `tt` binary end to end on a tiny run.

use std::fs;
use std::path::Path;
use std::process::Command;

fn tt(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_tt")).current_dir(dir).args(args).output().unwrap();
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(out.status.success(), "tt {args:?} failed:\n{stderr}");
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json_lines(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

const RUN: &str = r#"
seed = 1
data = "train.jsonl"
out = "m.ckpt"
log = "train.log"

[model]
d_model = 16
ffn_dim = 32
layers = 4
heads = 2
joint_dim = 16
label_mode = { kind = "bigram" }
menu = ["[0] x 4", "[0] x 2 + [2] x 2"]

[train]
steps = 6
batch_size = 4
"#;

#[test]
fn generate_train_decode_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tt(d, &["gen-data", "--n", "12", "--seed", "3", "--out", "train.jsonl"]);
    tt(d, &["gen-data", "--n", "4", "--seed", "4", "--out", "dev.jsonl", "--prefix", "dev-", "--late-evidence"]);
    fs::write(d.join("run.toml"), RUN).unwrap();
    tt(d, &["train", "--config", "run.toml"]);
    assert_eq!(json_lines(&d.join("train.log")).len(), 6);

    tt(d, &["decode", "--model", "m.ckpt", "--data", "dev.jsonl", "--out", "dec.jsonl"]);
    let dec = json_lines(&d.join("dec.jsonl"));
    assert_eq!(dec.len(), 4);
    assert_eq!(dec[0]["id"], "dev-00000");

    tt(d, &["decode", "--model", "m.ckpt", "--data", "dev.jsonl", "--context", "[0] x 4", "--beam", "3", "--out", "beam.jsonl"]);
    tt(d, &["stream", "--model", "m.ckpt", "--data", "dev.jsonl", "--step", "3", "--out", "stream.jsonl"]);
    // streaming the default configuration reproduces the offline decode
    let text = |v: &[serde_json::Value]| v.iter().map(|r| r["text"].clone()).collect::<Vec<_>>();
    assert_eq!(text(&json_lines(&d.join("stream.jsonl"))), text(&dec));

    for schedule in ["sequential", "concurrent"] {
        let out = format!("y-{schedule}.jsonl");
        tt(
            d,
            &[
                "y-decode", "--model", "m.ckpt", "--data", "dev.jsonl", "--low", "[0] x 4", "--high",
                "[0] x 2 + [2] x 2", "--shared", "2", "--step", "2", "--schedule", schedule, "--out", &out,
            ],
        );
    }
    let finals = |name: &str| {
        json_lines(&d.join(name)).into_iter().filter(|r| r.get("flush_frames").is_some()).map(|r| r["text"].clone()).collect::<Vec<_>>()
    };
    assert_eq!(finals("y-sequential.jsonl"), finals("y-concurrent.jsonl"));
    assert_eq!(finals("y-sequential.jsonl"), text(&dec));

    tt(d, &["align", "--model", "m.ckpt", "--data", "dev.jsonl", "--out", "al.jsonl"]);
    assert_eq!(json_lines(&d.join("al.jsonl")).len(), 4);

    let table = tt(
        d,
        &[
            "eval", "--model", "m.ckpt", "--data", "dev.jsonl", "--context", "[0] x 4", "--context", "[full] x 4",
            "--reference", "m.ckpt", "--out", "eval.jsonl",
        ],
    );
    assert!(table.contains("alignment delay") && table.contains("full"), "{table}");
    let rows = json_lines(&d.join("eval.jsonl"));
    assert_eq!(rows[0]["lookahead_ms"], 0.0);
    assert!(rows[1]["lookahead_ms"].is_null());
}

#[test]
fn bench_writes_one_row_per_mode_and_step() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tt(d, &["bench", "--seconds", "1", "--repeats", "1", "--steps", "1,8", "--left", "8", "--out", "b.jsonl"]);
    let rows = json_lines(&d.join("b.jsonl"));
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r["rtf"].as_f64().unwrap() > 0.0));
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), "data = \"x.jsonl\"\nout = \"m.ckpt\"\n[train]\nmode = \"constrained\"\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tt")).current_dir(d).args(["train", "--config", "run.toml"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("reference"));
    let out = Command::new(env!("CARGO_BIN_EXE_tt")).current_dir(d).args(["decode", "--model", "none.ckpt", "--data", "x.jsonl"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("none.ckpt"));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const TRAIN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/planted_train.csv");
const TEST: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/planted_test.csv");

fn amct(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amct"))
        .current_dir(dir)
        .env_remove("AMCT_SEED")
        .args(args)
        .output()
        .expect("spawn amct")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = amct(dir, args);
    assert!(
        out.status.success(),
        "amct {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        let w = Work {
            dir: tempfile::tempdir().unwrap(),
        };
        ok(
            w.path(),
            &["build-vocab", "--data", TRAIN, "--out", "vocab.json"],
        );
        w
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn file(&self, name: &str) -> PathBuf {
        self.path().join(name)
    }

    fn write(&self, name: &str, text: &str) {
        fs::write(self.file(name), text).unwrap();
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.file(name)).unwrap()
    }

    fn train(&self, out: &str, extra: &[&str]) {
        let mut args = vec![
            "train",
            "--data",
            TRAIN,
            "--vocab",
            "vocab.json",
            "--eval-data",
            TEST,
            "--epochs",
            "3",
            "--out",
            out,
        ];
        args.extend_from_slice(extra);
        ok(self.path(), &args);
    }

    fn log(&self, ckpt: &str) -> Vec<Value> {
        self.read(&format!("{ckpt}.log.jsonl"))
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }

    fn check(&self, kind: &str, file: &str) {
        ok(self.path(), &["check", "--kind", kind, file]);
    }
}

#[test]
fn build_vocab_on_toy_csv() {
    let w = Work::new();
    w.write("toy.csv", "smiles,y\nC1CCCCC1O,1\nCCO,0\nCCO,1\n");
    let stdout = ok(
        w.path(),
        &[
            "build-vocab",
            "--data",
            "toy.csv",
            "--out",
            "toy.json",
            "--top",
            "2",
        ],
    );
    assert!(stdout.starts_with("motifs: 3\n"), "{stdout}");
    let v: Value = serde_json::from_str(&w.read("toy.json")).unwrap();
    let entries = v["entries"].as_array().unwrap();
    let keys: Vec<(&str, u64)> = entries
        .iter()
        .map(|e| (e["key"].as_str().unwrap(), e["count"].as_u64().unwrap()))
        .collect();
    assert_eq!(
        keys,
        [
            ("C.C.C.C.C.C|0-1,0-2,1-3,2-4,3-5,4-5", 1),
            ("C.O|0-1", 3),
            ("C.C|0-1", 2)
        ]
    );
    w.check("vocab", "toy.json");
}

#[test]
fn input_errors_exit_2() {
    let w = Work::new();
    w.write("empty.csv", "");
    let out = amct(
        w.path(),
        &["build-vocab", "--data", "empty.csv", "--out", "x.json"],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty corpus"));

    w.write("bad.csv", "smiles,y\nCC,1\nC1CC,1\n");
    let out = amct(
        w.path(),
        &["build-vocab", "--data", "bad.csv", "--out", "x.json"],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    assert!(!w.file("x.json").exists());
}

#[test]
fn train_then_eval_reproduces_logged_metric() {
    let w = Work::new();
    w.train("model.ckpt", &[]);
    let log = w.log("model.ckpt");
    assert_eq!(log.len(), 3);
    let logged = log.last().unwrap()["eval_metric"].as_f64().unwrap();
    let stdout = ok(
        w.path(),
        &[
            "eval",
            "--ckpt",
            "model.ckpt",
            "--data",
            TEST,
            "--out",
            "eval.json",
        ],
    );
    let report: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(
        report["report"]["mean"].as_f64().unwrap().to_bits(),
        logged.to_bits()
    );
    assert_eq!(stdout, w.read("eval.json"));
    w.check("eval", "eval.json");
    w.check("log", "model.ckpt.log.jsonl");
    w.check("manifest", "model.ckpt.manifest.json");

    let manifest: Value = serde_json::from_str(&w.read("model.ckpt.manifest.json")).unwrap();
    let outputs: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(outputs, ["model.ckpt", "model.ckpt.log.jsonl"]);
}

#[test]
fn ablate_no_closs_zeroes_contrastive_component() {
    let w = Work::new();
    w.train("a.ckpt", &["--ablate", "no-closs"]);
    let log = w.log("a.ckpt");
    assert!(log.iter().all(|r| r["contrastive"].as_f64() == Some(0.0)));
    assert!(log.iter().all(|r| r["align"].as_f64().unwrap() > 0.0));

    w.train("p.ckpt", &["--ablate", "no-paware"]);
    assert!(w
        .log("p.ckpt")
        .iter()
        .all(|r| r["sup_o"].as_f64() == Some(0.0)));
    // The no-paware checkpoint predicts through the readout head.
    ok(w.path(), &["eval", "--ckpt", "p.ckpt", "--data", TEST]);
}

#[test]
fn sweep_emits_nine_rows() {
    let w = Work::new();
    ok(
        w.path(),
        &[
            "sweep",
            "--data",
            TRAIN,
            "--vocab",
            "vocab.json",
            "--eval-data",
            TEST,
            "--epochs",
            "1",
            "--grid-a",
            "0,0.1,1",
            "--grid-b",
            "0,0.1,1",
            "--out",
            "sweep.csv",
        ],
    );
    let text = w.read("sweep.csv");
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("lambda_a,lambda_b,metric_mean,metric_std")
    );
    assert_eq!(lines.count(), 9);
    w.check("sweep", "sweep.csv");
    w.check("manifest", "sweep.csv.manifest.json");
}

#[test]
fn explain_reports_and_flags() {
    let w = Work::new();
    w.train("m.ckpt", &[]);
    w.write(
        "mols.csv",
        "smiles,planted\nO,0\nc1ccncc1CCO,1\nC1CCCCC1OC,0\n",
    );
    ok(
        w.path(),
        &[
            "explain", "--ckpt", "m.ckpt", "--data", "mols.csv", "--alpha", "0", "--out",
            "all.json",
        ],
    );
    let report: Value = serde_json::from_str(&w.read("all.json")).unwrap();
    let molecules = report["molecules"].as_array().unwrap();
    assert_eq!(molecules.len(), 3);
    for m in molecules {
        for motif in m["properties"][0]["motifs"].as_array().unwrap() {
            assert_eq!(motif["selected"], Value::Bool(true));
            assert!(motif["atom_indices"]
                .as_array()
                .is_some_and(|a| !a.is_empty()));
        }
    }
    // A single-motif molecule is degenerate with weight 1.
    let single = &molecules[0]["properties"][0];
    assert_eq!(single["degenerate"], Value::Bool(true));
    assert_eq!(single["motifs"][0]["weight"].as_f64(), Some(1.0));
    assert_eq!(report["manifest"].as_str(), Some("all.json.manifest.json"));
    w.check("explain", "all.json");
    w.check("explain-csv", "all.csv");
    w.check("manifest", "all.json.manifest.json");

    let csv = w.read("all.csv");
    assert!(csv.starts_with("molecule_id,property,motif_id,weight\n"));
    // One row per motif: O, pyridine plus three bonds, cyclohexane plus two bonds.
    assert_eq!(csv.lines().count(), 1 + 8);
}

#[test]
fn vocabulary_mismatch_exits_3() {
    let w = Work::new();
    w.train("m.ckpt", &[]);
    w.write("other.csv", "smiles,y\nCCO,1\nCCN,0\n");
    ok(
        w.path(),
        &["build-vocab", "--data", "other.csv", "--out", "other.json"],
    );
    for cmd in ["eval", "explain"] {
        let mut args = vec![
            cmd,
            "--ckpt",
            "m.ckpt",
            "--data",
            TEST,
            "--vocab",
            "other.json",
        ];
        if cmd == "explain" {
            args.extend(["--out", "x.json"]);
        }
        let out = amct(w.path(), &args);
        assert_eq!(
            code(&out),
            3,
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn divergence_exits_4() {
    let w = Work::new();
    let out = amct(
        w.path(),
        &[
            "train",
            "--data",
            TRAIN,
            "--vocab",
            "vocab.json",
            "--epochs",
            "2",
            "--lr",
            "1e300",
            "--out",
            "d.ckpt",
        ],
    );
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!w.file("d.ckpt").exists());
}

#[test]
fn commands_are_idempotent() {
    let w = Work::new();
    let vocab = w.read("vocab.json");
    ok(
        w.path(),
        &["build-vocab", "--data", TRAIN, "--out", "vocab.json"],
    );
    assert_eq!(vocab, w.read("vocab.json"));

    let snapshot = |w: &Work| -> Vec<Vec<u8>> {
        ["m.ckpt", "m.ckpt.log.jsonl", "e.json", "e.csv", "eval.json"]
            .iter()
            .map(|f| fs::read(w.file(f)).unwrap())
            .collect()
    };
    let run = |w: &Work| {
        w.train("m.ckpt", &[]);
        ok(
            w.path(),
            &[
                "explain", "--ckpt", "m.ckpt", "--data", TEST, "--out", "e.json",
            ],
        );
        ok(
            w.path(),
            &[
                "eval",
                "--ckpt",
                "m.ckpt",
                "--data",
                TEST,
                "--out",
                "eval.json",
            ],
        );
    };
    run(&w);
    let first = snapshot(&w);
    let manifest = |w: &Work| -> Value {
        let mut m: Value = serde_json::from_str(&w.read("m.ckpt.manifest.json")).unwrap();
        m.as_object_mut().unwrap().remove("created_unix");
        m
    };
    let m1 = manifest(&w);
    run(&w);
    assert_eq!(first, snapshot(&w));
    assert_eq!(m1, manifest(&w));
}

#[test]
fn config_precedence_and_seed_env() {
    let w = Work::new();
    w.write("cfg.json", r#"{"epochs": 4, "seed": 9, "lambda_b": 0.5}"#);
    let out = Command::new(env!("CARGO_BIN_EXE_amct"))
        .current_dir(w.path())
        .env("AMCT_SEED", "5")
        .args([
            "train",
            "--data",
            TRAIN,
            "--vocab",
            "vocab.json",
            "--config",
            "cfg.json",
            "--epochs",
            "2",
            "--out",
            "m.ckpt",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("config: defaults < cfg.json"), "{stderr}");
    assert_eq!(w.log("m.ckpt").len(), 2);
    let manifest: Value = serde_json::from_str(&w.read("m.ckpt.manifest.json")).unwrap();
    assert_eq!(manifest["seed"].as_u64(), Some(5));
    assert_eq!(manifest["config"]["lambda_b"].as_f64(), Some(0.5));
    assert_eq!(manifest["config"]["epochs"].as_u64(), Some(2));

    w.write("typo.json", r#"{"epocs": 4}"#);
    let out = amct(
        w.path(),
        &[
            "train",
            "--data",
            TRAIN,
            "--vocab",
            "vocab.json",
            "--config",
            "typo.json",
            "--out",
            "t.ckpt",
        ],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn check_rejects_malformed_outputs() {
    let w = Work::new();
    w.write("bad.jsonl", "{\"epoch\":1,\"total\":1.0}\n");
    assert_eq!(
        code(&amct(w.path(), &["check", "--kind", "log", "bad.jsonl"])),
        2
    );
    w.write(
        "bad.csv",
        "lambda_a,lambda_b,metric_mean,metric_std\n0.1,x,0.5,0\n",
    );
    assert_eq!(
        code(&amct(w.path(), &["check", "--kind", "sweep", "bad.csv"])),
        2
    );
}

#[test]
fn synth_writes_bundled_data() {
    let w = Work::new();
    ok(w.path(), &["synth", "--out-dir", "data"]);
    assert_eq!(
        w.read("data/planted_train.csv"),
        fs::read_to_string(TRAIN).unwrap()
    );
    assert_eq!(
        w.read("data/planted_test.csv"),
        fs::read_to_string(TEST).unwrap()
    );
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kgmono::datalog::Signature;
use kgmono::gnn::{Activation, AggBudget, Layer, Matrix, MaxSumGnn, MessageDirection};
use kgmono::scoring::{Dense, ScoringFunction, ScoringParams};
use kgmono::transform::Model;

fn kgmono(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgmono")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// One layer: U1 copied through A, P1-neighbours aggregated through B.
fn model(budget: AggBudget, scoring: ScoringParams, threshold: f64) -> Model {
    let sig = Signature::new(&["U1"], &["P1", "P2"]).unwrap();
    let layer = Layer {
        a: Matrix::from_rows(&[vec![1.0]]),
        b: vec![Matrix::from_rows(&[vec![1.0]]), Matrix::zeros(1, 1)],
        bias: vec![0.0],
        activation: Activation::Relu,
        budget,
    };
    let gnn = MaxSumGnn::new(vec![layer], MessageDirection::AgainstEdges).unwrap();
    let scoring = ScoringFunction { dim: 1, threshold, params: scoring };
    Model::new(sig, gnn, scoring).unwrap()
}

fn distmult() -> ScoringParams {
    ScoringParams::Distmult { relations: vec![vec![1.0], vec![1.0]] }
}

fn write_split(dir: &Path) {
    let mut train = String::new();
    for i in 0..12 {
        train += &format!("a{i}\tP1\tb{i}\n");
        train += &format!("b{i}\tP2\ta{}\n", (i + 1) % 12);
    }
    fs::write(dir.join("train.txt"), train).unwrap();
    fs::write(dir.join("valid.txt"), "a0\tP1\tb0\nb3\tP2\ta4\n").unwrap();
    fs::write(dir.join("test.txt"), "a5\tP1\tb5\nb7\tP2\ta8\n").unwrap();
}

#[test]
fn unsound_rule_gives_witness_and_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    model(AggBudget::MAX, distmult(), 1.0).save(&m).unwrap();
    let rules = dir.path().join("r.dl");
    fs::write(&rules, "U1(x), U1(y) -> P2(x,y)\nP1(x,y) -> P2(x,y)   # no U1\n").unwrap();
    let o = kgmono(&["check-rule", "--model", m.to_str().unwrap(), "--rules", rules.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["verdict"], "sound");
    assert_eq!(lines[1]["verdict"], "unsound");
    assert!(lines[1]["witness"]["head"].as_str().unwrap().starts_with("P2("));
    assert!(stderr(&o).contains("\"model_hash\""));
}

#[test]
fn equiv_program_rejects_nam_with_sum() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    let nam = ScoringParams::Nam {
        relations: vec![vec![1.0], vec![1.0]],
        layers: vec![
            Dense { w: Matrix::from_rows(&[vec![1.0, 1.0]]), bias: vec![0.0] },
            Dense { w: Matrix::identity(1), bias: vec![0.0] },
            Dense { w: Matrix::identity(1), bias: vec![0.0] },
        ],
    };
    model(AggBudget::SUM, nam, 1.0).save(&m).unwrap();
    let o = kgmono(&["equiv-program", "--model", m.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("bilinear"), "{}", stderr(&o));
}

#[test]
fn equiv_program_for_max_model() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    model(AggBudget::MAX, distmult(), 1.0).save(&m).unwrap();
    let out = dir.path().join("p.dl");
    let o = kgmono(&["equiv-program", "--model", m.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out).unwrap();
    assert!(text.starts_with("# model "));
    assert!(text.lines().any(|l| l == "U1(x), U1(y) -> P1(x,y)"), "{text}");
}

#[test]
fn train_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    write_split(dir.path());
    let run = |out: &str| {
        let out = dir.path().join(out);
        let o = kgmono(&[
            "train",
            "--data-dir",
            dir.path().to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "7",
            "--epochs",
            "15",
            "--dims",
            "4",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let metrics: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert!(metrics["accuracy"].as_f64().unwrap() <= 1.0);
        fs::read(out).unwrap()
    };
    assert_eq!(run("m1.json"), run("m2.json"));
    let m = dir.path().join("m1.json");
    let o = kgmono(&["eval", "--model", m.to_str().unwrap(), "--data-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn exit_codes() {
    assert_eq!(kgmono(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(kgmono(&["check-rule", "--model"]).status.code(), Some(1));
    assert_eq!(kgmono(&["--help"]).status.code(), Some(0));
    let missing = kgmono(&["capacity", "--model", "/nonexistent/m.json"]);
    assert_eq!(missing.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    model(AggBudget::MAX, distmult(), 1.0).save(&m).unwrap();
    let big = kgmono(&["extract", "--model", m.to_str().unwrap(), "--space", "flat2", "--cap", "100"]);
    assert_eq!(big.status.code(), Some(3));
}

#[test]
fn extract_and_capacity_reports() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    model(AggBudget::SUM, distmult(), 2.0).save(&m).unwrap();
    let o = kgmono(&["extract", "--model", m.to_str().unwrap(), "--space", "flat1", "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let header = text.lines().next().unwrap();
    assert!(header.contains("space flat1,published,size=20"), "{header}");
    let o = kgmono(&["capacity", "--model", m.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!stdout(&o).is_empty());
}

#[test]
fn inject_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.tsv");
    fs::write(&data, "a\tR1\tb\nb\tR1\tc\n").unwrap();
    let rules = dir.path().join("r.dl");
    fs::write(&rules, "R1(x,y) -> R2(x,y)\n").unwrap();
    let o = kgmono(&["inject", "--data", data.to_str().unwrap(), "--rules", rules.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("a\tR2\tb") && out.contains("b\tR2\tc"), "{out}");
    let o = kgmono(&["encode-dump", "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("# vertices 3 colours 1"));
}

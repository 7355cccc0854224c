use std::path::PathBuf;
use std::process::{Command, Output};

fn tvhsd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tvhsd")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Fixture {
            dir: tempfile::tempdir().unwrap(),
        };
        let out = tvhsd(&[
            "gen-synth", "--out", &f.s("data"), "--samples", "60", "--classes", "3", "--text-dim", "5",
            "--image-dim", "4", "--separation", "4", "--length-noise", "0.5", "--seed", "3",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        f.config("config.json", r#"{"epochs": 3, "batch_size": 8, "lr": 0.01, "detector": {"align_dim": 8, "state_size": 4, "se_reduction": 2}}"#);
        f
    }

    fn p(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.p(name).to_string_lossy().into_owned()
    }

    fn config(&self, name: &str, body: &str) {
        std::fs::write(self.p(name), body).unwrap();
    }

    fn train(&self, config: &str, out: &str) -> Output {
        tvhsd(&["train", "--data", &self.s("data"), "--config", &self.s(config), "--out", &self.s(out), "--seed", "1"])
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&tvhsd(&[])), 2);
    assert_eq!(code(&tvhsd(&["train", "--data", "x"])), 2);
    assert_eq!(code(&tvhsd(&["train", "--data", "x", "--config", "c", "--out", "o", "--loss", "hinge"])), 2);
    let f = Fixture::new();
    assert!(f.train("config.json", "model.json").status.success());
    let out = tvhsd(&["eval", "--data", &f.s("data"), "--model", &f.s("model.json"), "--length-bins", "20,10"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn data_and_format_errors_exit_3() {
    let f = Fixture::new();
    let missing = tvhsd(&["train", "--data", &f.s("nope"), "--config", &f.s("config.json"), "--out", &f.s("m.json")]);
    assert_eq!(code(&missing), 3);

    f.config("bad.json", r#"{"epochs": 2, "learning_rate": 0.1}"#);
    let out = f.train("bad.json", "m.json");
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));

    f.config("dims.json", r#"{"detector": {"text_dim": 99}}"#);
    assert_eq!(code(&f.train("dims.json", "m.json")), 3);

    std::fs::write(f.p("data").join("embeddings.bin"), [0u8; 10]).unwrap();
    let out = f.train("config.json", "m.json");
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bytes"));
}

#[test]
fn numerical_failure_exits_4() {
    let f = Fixture::new();
    f.config("wild.json", r#"{"epochs": 5, "lr": 1e300, "detector": {"align_dim": 8, "state_size": 4, "se_reduction": 2}}"#);
    let out = f.train("wild.json", "m.json");
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("epoch") && msg.contains("batch"), "{msg}");
}

#[test]
fn predict_writes_one_row_per_sample() {
    let f = Fixture::new();
    assert!(f.train("config.json", "model.json").status.success());
    let out = tvhsd(&["predict", "--data", &f.s("data"), "--model", &f.s("model.json"), "--out", &f.s("pred.csv")]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_path(f.p("pred.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["id", "pred_label", "uncertainty", "p_0", "p_1", "p_2"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 60);
    for r in &rows {
        let p: f64 = (3..6).map(|i| r[i].parse::<f64>().unwrap()).sum();
        assert!((p - 1.0).abs() < 1e-12);
        let u: f64 = r[2].parse().unwrap();
        assert!(u > 0.0 && u <= 1.0);
    }
}

#[test]
fn eval_and_xval_reports() {
    let f = Fixture::new();
    assert!(f.train("config.json", "model.json").status.success());
    let out = tvhsd(&["eval", "--data", &f.s("data"), "--model", &f.s("model.json")]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["metrics"]["n"], 60);
    assert!(v.get("length_bins").is_none());

    let out = tvhsd(&[
        "xval", "--data", &f.s("data"), "--config", &f.s("config.json"), "--folds", "3", "--seed", "5",
        "--out", &f.s("report.json"), "--sequential",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(f.p("report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["k"], 3);
    assert_eq!(v["folds"].as_array().unwrap().len(), 3);
    // every float carries 17 significant digits: d.dddddddddddddddde±x
    let mean = text.lines().find(|l| l.contains("\"mean_uncertainty\"")).unwrap();
    let number = mean.split(':').nth(1).unwrap().trim().trim_end_matches(',');
    let mantissa = number.split('e').next().unwrap().trim_start_matches('-');
    assert_eq!(mantissa.len(), 18, "{number}");
}

#[test]
fn modality_flag_is_saved_with_the_model() {
    let f = Fixture::new();
    let out = tvhsd(&[
        "train", "--data", &f.s("data"), "--config", &f.s("config.json"), "--out", &f.s("m.json"),
        "--modality", "text_only", "--loss", "ce",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(f.p("m.json")).unwrap()).unwrap();
    assert_eq!(v["modality_mode"], "text_only");
}

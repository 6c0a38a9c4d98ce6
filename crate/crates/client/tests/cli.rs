use std::path::Path;
use std::process::Command;

fn reaas(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_reaas")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let shape = "4x4x1";
    for (name, count, seed) in [("pre.bin", "120", "1"), ("train.bin", "60", "2"), ("test.bin", "12", "3")] {
        reaas(&["gen-data", "--out", s(&p(name)), "--count", count, "--shape", shape, "--classes", "3", "--seed", seed]);
    }
    let pre = reaas(&[
        "pretrain", "--data", s(&p("pre.bin")), "--out", s(&p("enc.bin")), "--hidden", "16,8", "--epochs", "3",
        "--batch", "16",
    ]);
    let pre: serde_json::Value = serde_json::from_str(&pre).unwrap();
    assert!(pre["lipschitz_bound"].as_f64().unwrap() > 0.0);

    let enc = p("enc.bin");
    let run = |cmd: &str, data: &Path, extra: &[&str]| -> serde_json::Value {
        let mut args = vec![cmd, "--data", s(data), "--shape", shape, "--encoder", s(&enc)];
        args.extend(extra);
        serde_json::from_str(&reaas(&args)).unwrap()
    };
    let trained = run(
        "train-downstream",
        &p("train.bin"),
        &["--out", s(&p("g.bin")), "--hidden", "16", "--epochs", "3", "--batch", "16"],
    );
    assert_eq!(trained["queries_per_training_input"].as_f64(), Some(1.0));

    let summary = run("certify", &p("test.bin"), &["--classifier", s(&p("g.bin")), "--out", s(&p("report.json"))]);
    assert_eq!(summary["inputs"].as_u64(), Some(12));
    let qpt = summary["queries_per_testing_input"].as_f64().unwrap();
    assert!((1.0..=2.0).contains(&qpt));

    reaas(&["report", "--report", s(&p("report.json")), "--out-dir", s(&p("out"))]);
    for f in ["summary.json", "ledger.json", "curve.csv", "certificates.csv"] {
        assert!(p("out").join(f).exists(), "{f}");
    }
    let certs = std::fs::read_to_string(p("out").join("certificates.csv")).unwrap();
    assert_eq!(certs.lines().count(), 13);
}

#[test]
fn missing_service_is_an_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_reaas"))
        .args(["certify", "--data", "x", "--shape", "2x2x1", "--classifier", "y", "--out", "z"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

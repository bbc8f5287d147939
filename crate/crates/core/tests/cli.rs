use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cvbench::certifier::{alpha_grid, synthesize_dataset};
use cvbench::schemes::{optimal_mp_gain, ChannelModel};
use serde_json::Value;

fn cvbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvbench")).args(args).output().unwrap()
}

fn json_of(out: &Output) -> Value {
    assert!(
        out.status.code().is_some_and(|c| c <= 1),
        "status {:?}, stderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn num(v: &Value, key: &str) -> f64 {
    v["result"][key].as_f64().unwrap_or_else(|| panic!("{key} in {v}"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cvbench-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write_dataset(model: &ChannelModel, lambda: f64, seed: u64, path: &Path) {
    let alphas = alpha_grid(lambda, 8).unwrap();
    let ds = synthesize_dataset(&model.to_gaussian().unwrap(), &alphas, 5000, lambda, seed).unwrap();
    std::fs::write(path, ds.to_csv()).unwrap();
}

#[test]
fn bound_examples() {
    let v = json_of(&cvbench(&["bound", "--eta", "1", "--lambda", "0"]));
    assert_eq!(num(&v, "classical_bound"), 0.5);
    assert_eq!(num(&v, "quadrature_threshold"), 1.0);
    assert!(v["result"]["quantum_amp_bound"].is_null());
    assert_eq!(v["tool"], "cvbench");
    assert_eq!(v["seed"], 0);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));

    let v = json_of(&cvbench(&["bound", "--eta", "0.5", "--lambda", "0"]));
    assert!((num(&v, "classical_bound") - 2.0 / 3.0).abs() < 1e-15);

    let v = json_of(&cvbench(&["bound", "--eta", "2", "--lambda", "0"]));
    assert!((num(&v, "classical_bound") - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(num(&v, "quantum_amp_bound"), 0.5);

    let v = json_of(&cvbench(&["bound", "--eta", "1", "--lambda", "0.5", "--n-copies", "4"]));
    assert!(v["result"]["quadrature_threshold"].is_null());
}

#[test]
fn bad_parameters_are_usage_errors() {
    for args in [
        &["bound", "--eta", "-1", "--lambda", "0"][..],
        &["bound", "--eta", "1"],
        &["bound", "--eta", "1", "--lambda", "nan"],
        &["frobnicate"],
        &["bound", "--eta", "1", "--lambda", "0", "--tolerance", "0"],
    ] {
        let out = cvbench(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty());
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn simulate_examples() {
    let v = json_of(&cvbench(&[
        "simulate",
        "--channel",
        r#"{"type":"canonical_b1"}"#,
        "--eta",
        "1",
        "--lambda",
        "0.2",
    ]));
    assert!((num(&v, "average_fidelity") - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);

    let g = optimal_mp_gain(1.0, 0.2).to_string();
    let channel = format!(r#"{{"type":"heterodyne_mp","g":{g}}}"#);
    let v = json_of(&cvbench(&[
        "simulate",
        "--channel",
        &channel,
        "--eta",
        "1",
        "--lambda",
        "0.2",
        "--engine",
        "both",
    ]));
    assert!((num(&v, "average_fidelity") - 1.2 / 2.2).abs() < 1e-12);
    assert!(num(&v, "engine_difference") < 1e-6);
    assert!(v["result"]["fock"]["error_estimate"].as_f64().unwrap() < 1e-6);

    let path = scratch("loss.json");
    std::fs::write(&path, r#"{"type":"pure_loss","T":0.5}"#).unwrap();
    let v = json_of(&cvbench(&[
        "simulate",
        "--channel",
        path.to_str().unwrap(),
        "--eta",
        "0.5",
        "--lambda",
        "0.1",
    ]));
    assert!((num(&v, "average_fidelity") - 1.0).abs() < 1e-12);
}

#[test]
fn simulate_flat_prior_uses_limits() {
    let v = json_of(&cvbench(&[
        "simulate",
        "--channel",
        r#"{"type":"heterodyne_mp","g":1}"#,
        "--eta",
        "1",
        "--lambda",
        "0",
    ]));
    assert!((num(&v, "average_fidelity") - 0.5).abs() < 1e-15);
    assert!(v["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn simulate_rejects_non_cp_channels() {
    let raw = r#"{"K":[[2,0],[0,2]],"M":[[0.1,0],[0,0.1]],"disp":[0,0]}"#;
    let out = cvbench(&["simulate", "--channel", raw, "--eta", "4", "--lambda", "0.5"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("completely positive"));

    // raw channels have no Fock realization
    let raw = r#"{"K":[[1,0],[0,1]],"M":[[0.5,0],[0,0.5]],"disp":[0,0]}"#;
    let out = cvbench(&[
        "simulate",
        "--channel",
        raw,
        "--eta",
        "1",
        "--lambda",
        "0.5",
        "--engine",
        "fock",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn engine_disagreement_exits_5() {
    // A cutoff of 6 cannot hold the ensemble; the Fock value drifts from the closed form.
    let out = cvbench(&[
        "simulate",
        "--channel",
        r#"{"type":"pure_loss","T":0.5}"#,
        "--eta",
        "0.5",
        "--lambda",
        "0.5",
        "--engine",
        "both",
        "--cutoff",
        "6",
        "--tolerance",
        "1e-9",
    ]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
}

#[test]
fn certify_verdicts_and_exit_codes() {
    let lambda = 0.1;
    let loss = scratch("loss.csv");
    write_dataset(&ChannelModel::PureLoss { t: 0.6 }, lambda, 1, &loss);
    let out = cvbench(&[
        "certify",
        "--csv",
        loss.to_str().unwrap(),
        "--eta",
        "0.6",
        "--lambda",
        "0.1",
        "--bootstrap",
        "200",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["result"]["verdict"], "QUANTUM_DOMAIN");
    let digest = v["result"]["input_sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    assert_eq!(v["config"]["bootstrap"], 200);

    let mp = scratch("mp.csv");
    write_dataset(
        &ChannelModel::HeterodyneMp {
            g: optimal_mp_gain(0.6, lambda),
        },
        lambda,
        2,
        &mp,
    );
    let out = cvbench(&[
        "certify",
        "--csv",
        mp.to_str().unwrap(),
        "--eta",
        "0.6",
        "--lambda",
        "0.1",
        "--bootstrap",
        "200",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_of(&out)["result"]["verdict"], "NOT_CERTIFIED");

    let out = cvbench(&[
        "certify",
        "--csv",
        mp.to_str().unwrap(),
        "--lambda",
        "0.1",
        "--method",
        "fidelity",
        "--bootstrap",
        "200",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_of(&out)["result"]["eta_source"], "estimated");
}

#[test]
fn malformed_csv_exits_4_with_line() {
    let bad = scratch("bad.csv");
    std::fs::write(&bad, "alpha_re,alpha_im,quad_label,value\n1,0,plus,0.3\n1,0,,0.2\n").unwrap();
    let out_file = scratch("never.json");
    let out = cvbench(&[
        "certify",
        "--csv",
        bad.to_str().unwrap(),
        "--lambda",
        "0.1",
        "--out",
        out_file.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(!out_file.exists());
}

#[test]
fn sweep_examples() {
    let out = cvbench(&[
        "sweep",
        "--grid",
        r#"{"eta":{"start":0.1,"stop":2,"num":20},"lambda":[0,0.5]}"#,
        "--format",
        "json",
    ]);
    let v = json_of(&out);
    let rows = v["result"].as_array().unwrap();
    assert_eq!(rows.len(), 40);
    for lambda in [0.0, 0.5] {
        let column: Vec<f64> = rows
            .iter()
            .filter(|r| r["lambda"].as_f64() == Some(lambda))
            .map(|r| r["classical_bound"].as_f64().unwrap())
            .collect();
        assert_eq!(column.len(), 20);
        assert!(column.windows(2).all(|w| w[1] < w[0]));
    }

    let out = cvbench(&[
        "sweep",
        "--grid",
        r#"{"eta":[1],"lambda":[0.2],"g":{"start":0,"stop":2,"num":2401}}"#,
        "--format",
        "json",
    ]);
    let v = json_of(&out);
    let best = v["result"]
        .as_array()
        .unwrap()
        .iter()
        .max_by(|a, b| a["f_mp"].as_f64().unwrap().total_cmp(&b["f_mp"].as_f64().unwrap()))
        .unwrap()
        .clone();
    assert!((best["g"].as_f64().unwrap() - 1.0 / 1.2).abs() < 1e-3, "{best}");

    let out = cvbench(&[
        "sweep",
        "--grid",
        r#"{"eta":[0.5],"lambda":[0],"ntilde":[0.3,0.5,0.7]}"#,
        "--format",
        "json",
    ]);
    let v = json_of(&out);
    let margins: Vec<f64> = v["result"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["detection_margin"].as_f64().unwrap())
        .collect();
    assert!(
        margins[0] > 0.0 && margins[1].abs() < 1e-15 && margins[2] < 0.0,
        "{margins:?}"
    );
}

#[test]
fn sweep_csv_layout() {
    let out = cvbench(&["sweep", "--grid", r#"{"eta":[0.5,1],"lambda":[0.25]}"#, "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# cvbench") && lines[0].contains("seed=7"));
    assert!(lines[1].starts_with("# config="));
    assert_eq!(lines[2], "eta,lambda,classical_bound,quadrature_threshold");
    assert_eq!(lines.len(), 5);
    let first: Vec<f64> = lines[3].split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(first[2], 1.25 / 1.75);
}

#[test]
fn oversized_sweep_is_refused() {
    let out = cvbench(&[
        "sweep",
        "--grid",
        r#"{"eta":{"start":0.1,"stop":2,"num":2000},"lambda":{"start":0,"stop":1,"num":1000}}"#,
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("split"));
}

#[test]
fn proofcheck_examples() {
    let out = cvbench(&["proofcheck", "--trials", "40"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json_of(&out)["result"]["pass"], true);

    let out = cvbench(&["proofcheck", "--trials", "40", "--self-test-corrupt"]);
    assert_eq!(out.status.code(), Some(1));
    let v = json_of(&out);
    assert_eq!(v["result"]["pass"], false);
    assert!(v["result"]["saturation"]["lemma"]["worst"].is_object());

    let out = cvbench(&["proofcheck", "--p", "2", "--replica", "--trials", "20"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json_of(&out)["result"]["replica"].as_array().unwrap().len(), 3);
}

#[test]
fn outputs_are_reproducible_and_atomic() {
    let csv = scratch("repro.csv");
    write_dataset(&ChannelModel::PureLoss { t: 0.6 }, 0.2, 3, &csv);
    let (a, b) = (scratch("a.json"), scratch("b.json"));
    for out in [&a, &b] {
        let o = cvbench(&[
            "certify",
            "--csv",
            csv.to_str().unwrap(),
            "--lambda",
            "0.2",
            "--bootstrap",
            "100",
            "--seed",
            "5",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        assert!(o.stdout.is_empty());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let v: Value = serde_json::from_slice(&std::fs::read(&a).unwrap()).unwrap();
    assert_eq!(v["seed"], 5);
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    assert_eq!(
        keys,
        ["tool", "version", "command", "seed", "config", "result", "warnings"]
    );
}

#[test]
fn config_file_is_merged_under_flags() {
    let cfg = scratch("cfg.json");
    std::fs::write(&cfg, r#"{"eta": 2, "lambda": 0, "seed": 9, "format": "csv"}"#).unwrap();
    let out = cvbench(&["bound", "--config", cfg.to_str().unwrap(), "--eta", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("seed=9"));
    let header: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
    let data: Vec<&str> = text.lines().nth(3).unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "classical_bound").unwrap();
    assert_eq!(data[col], "0.5", "{text}");

    std::fs::write(&cfg, r#"{"eta": 2, "lambda": 0, "colour": "blue"}"#).unwrap();
    let out = cvbench(&["bound", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

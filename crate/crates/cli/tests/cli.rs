use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn flowlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowlab")).args(args).env("FLOWLAB_OUT", out).output().expect("spawn flowlab")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const KASNER: &str = r#"{
  "id": "kasner-short",
  "kind": "bianchi",
  "t1": 100.0,
  "init": {"type": "model", "t0": 1.0, "model": {"kind": "kasner", "p": [0.6666666666666666, 0.6666666666666666, -0.3333333333333333]}}
}"#;

#[test]
fn malformed_json_exits_2_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("out");
    let f = write(tmp.path(), "bad.json", "{\"id\": \"x\", \"kind\": ");
    let o = flowlab(&["run", &f], &root);
    assert_eq!(o.status.code(), Some(2));
    assert!(!root.exists());
    let f = write(tmp.path(), "neg.json", r#"{"id": "x", "kind": "model-verify", "tol": -1}"#);
    assert_eq!(flowlab(&["run", &f], &root).status.code(), Some(2));
    assert!(!root.exists());
}

#[test]
fn model_verify_scenario_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("out");
    let f = write(tmp.path(), "zoo.json", r#"{"id": "zoo", "kind": "model-verify"}"#);
    let o = flowlab(&["run", &f], &root);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let rep: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("zoo/report.json")).unwrap()).unwrap();
    let models = rep["report"]["models"].as_array().unwrap();
    assert_eq!(models.len(), 6);
    for m in models {
        for key in ["hamiltonian", "momentum", "gauge", "vacuum_residual"] {
            if let Some(v) = m.get(key) {
                assert!(v.as_f64().unwrap() < 1e-8, "{m}");
            }
        }
    }
    assert!(root.join("zoo/scenario.json").exists());
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("zoo/meta.json")).unwrap()).unwrap();
    assert!(meta["version"].is_string() && meta["wall_clock_seconds"].is_number());
    let csv = fs::read_to_string(root.join("zoo/series/fm_volume_milne.csv")).unwrap();
    assert!(csv.starts_with("t,value,residual\n"));
}

#[test]
fn verify_models_reports_injected_fault() {
    let tmp = tempfile::tempdir().unwrap();
    let o = flowlab(&["verify-models", "--out", tmp.path().to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(!text.contains("FAIL"), "{text}");
    let o = flowlab(&["verify-models", "--models", "milne", "--fault", "milne-sign"], tmp.path());
    assert_ne!(o.status.code(), Some(0));
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("milne") && l.contains("curvature")).unwrap();
    assert!(line.ends_with("FAIL"), "{line}");
    let o = flowlab(&["verify-models", "--models", ""], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3_with_partial_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("out");
    let text = KASNER.replace("\"t1\": 100.0,", "\"t1\": 100.0, \"evolve\": {\"max_steps\": 5},");
    let f = write(tmp.path(), "k.json", &text);
    let o = flowlab(&["run", &f], &root);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    let rep: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("kasner-short/report.json")).unwrap()).unwrap();
    assert!(rep["error"].as_str().unwrap().contains("step budget"));
    assert!(rep["report"]["last_good_state"].is_object());
    assert!(rep["report"]["initial_state"].is_object());
}

#[test]
fn reruns_are_bitwise_identical_and_compare_clean() {
    let tmp = tempfile::tempdir().unwrap();
    let pert = r#"{
      "id": "viii-perturbed", "kind": "classify", "t1": 300.0, "seed": 11,
      "init": {"type": "milnor", "lambda": [-1, 1, 1], "scale_factors": [1, 1.3, 0.7],
               "shear": [1, -2, 1], "t0": 1.0, "perturb": {"amplitude": 0.05}}
    }"#;
    let f = write(tmp.path(), "sweep.json", &format!("[{KASNER}, {pert}]"));
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for d in [&a, &b] {
        let o = flowlab(&["sweep", &f, "--threads", "2"], d);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    }
    for id in ["kasner-short", "viii-perturbed"] {
        for file in ["series/fm_volume.csv", "report.json"] {
            assert_eq!(fs::read(a.join(id).join(file)).unwrap(), fs::read(b.join(id).join(file)).unwrap());
        }
    }
    let summary = fs::read_to_string(a.join("summary.json")).unwrap();
    assert!(summary.find("kasner-short").unwrap() < summary.find("viii-perturbed").unwrap());

    let o = flowlab(&["compare", a.to_str().unwrap(), b.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("no differences"));

    // a different seed moves the perturbed run outside a tight budget but not a loose one
    let o = flowlab(&["sweep", &f, "--seed", "12"], &c);
    assert_eq!(o.status.code(), Some(0));
    let pa = a.join("viii-perturbed/series/fm_volume.csv");
    let pc = c.join("viii-perturbed/series/fm_volume.csv");
    let tight = flowlab(&["compare", pa.to_str().unwrap(), pc.to_str().unwrap(), "--tol", "1e-12"], tmp.path());
    assert_eq!(tight.status.code(), Some(1));
    let loose = flowlab(&["compare", pa.to_str().unwrap(), pc.to_str().unwrap(), "--tol", "1.0"], tmp.path());
    assert_eq!(loose.status.code(), Some(0), "{}", stdout(&loose));

    let mismatched = flowlab(
        &["compare", a.join("kasner-short").to_str().unwrap(), a.join("viii-perturbed").to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(mismatched.status.code(), Some(2));
}

#[test]
fn subcommands_retarget_bianchi_files() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("out");
    let f = write(tmp.path(), "k.json", KASNER);
    let o = flowlab(&["classify", &f], &root);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("type=TypeIII"));
    let o = flowlab(&["reduced-volume", &f], &root);
    assert_eq!(o.status.code(), Some(0));
    assert!(root.join("kasner-short/series/reduced_volume.csv").exists());
    // Kasner is type III, so blowdown refuses without --force
    let o = flowlab(&["blowdown", &f], &root);
    assert_eq!(o.status.code(), Some(3));
    let o = flowlab(&["gowdy", &f], &root);
    assert_eq!(o.status.code(), Some(2));
}

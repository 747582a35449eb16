use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rotbox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotbox"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn field(text: &str, key: &str) -> f64 {
    let line = text
        .lines()
        .find(|l| l.starts_with(key))
        .unwrap_or_else(|| panic!("no {key} in {text}"));
    line[key.len()..].trim().parse().unwrap()
}

fn micro() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/eval/micro")
}

#[test]
fn iou_examples() {
    let o = rotbox(&[
        "iou",
        "--mode",
        "rot",
        "--g",
        "0,0,2,2,0",
        "--d",
        "0,0,2,2,0.785398",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!((field(&stdout(&o), "iou ") - std::f64::consts::FRAC_1_SQRT_2).abs() < 5e-6);

    let o = rotbox(&["iou", "--g", "1,2,3,1,0.4", "--d", "1,2,3,1,0.4"]);
    assert!((field(&stdout(&o), "iou ") - 1.0).abs() < 1e-12);

    let o = rotbox(&[
        "iou", "--mode", "aa", "--g", "0,0,1,1", "--d", "2,0,3,1", "--json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["iou"], 0.0);
    assert!(v["giou"].as_f64().unwrap() < 0.0);
    for key in ["mode", "iou", "giou", "intersection", "union"] {
        assert!(v.get(key).is_some(), "{key}");
    }

    let o = rotbox(&[
        "iou",
        "--mode",
        "3d",
        "--g",
        "0,0,0,1,1,1,0",
        "--d",
        "0,0,0.5,1,1,1,0",
        "--json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["iou"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn iou_usage_errors() {
    let o = rotbox(&["iou", "--g", "0,0,2,2,0", "--d", "0,0,abc,2,0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("\"abc\""), "{}", stderr(&o));

    let o = rotbox(&[
        "iou",
        "--mode",
        "3d",
        "--g",
        "0,0,2,2,0",
        "--d",
        "0,0,2,2,0",
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = rotbox(&["iou", "--g", "0,0,2,2,0", "--d", "0,0,2,2,0", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));

    // well-formed but invalid box
    let o = rotbox(&["iou", "--g", "0,0,-2,2,0", "--d", "0,0,2,2,0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn grad_check_runs_and_is_deterministic() {
    let a = rotbox(&["grad-check", "--pairs", "1000", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert!(stdout(&a).contains("PASS"));
    let b = rotbox(&["grad-check", "--pairs", "1000", "--seed", "7"]);
    assert_eq!(a.stdout, b.stdout);

    let o = rotbox(&[
        "grad-check",
        "--pairs",
        "50",
        "--seed",
        "1",
        "--mode",
        "3d",
        "--loss",
        "giou",
        "--json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["pairs"], 50);
    assert!(v["max_rel_error"].as_f64().unwrap() <= 1e-4);

    assert_eq!(
        rotbox(&["grad-check", "--pairs", "0"]).status.code(),
        Some(2)
    );
    // an absurd tolerance must fail the run with status 1
    let o = rotbox(&["grad-check", "--pairs", "20", "--tol", "1e-30"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_micro_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let m = micro();
    for mode in ["bev", "3d", "2d"] {
        let o = rotbox(&[
            "eval",
            "--gt",
            m.join("gt").to_str().unwrap(),
            "--det",
            m.join("det").to_str().unwrap(),
            "--mode",
            mode,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("54.55"));
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        for e in v["ap"].as_array().unwrap() {
            let expected = if e["difficulty"] == "Hard" {
                100.0 * 7.5 / 11.0
            } else {
                100.0 * 6.0 / 11.0
            };
            assert_eq!(e["ap"].as_f64().unwrap(), expected, "{mode} {e}");
            for key in ["class", "difficulty", "threshold", "ap"] {
                assert!(e.get(key).is_some());
            }
        }
        assert!(v["map"]
            .as_array()
            .unwrap()
            .iter()
            .all(|e| e.get("map").is_some()));
    }
}

#[test]
fn eval_identity_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let det = dir.path().join("det");
    fs::create_dir(&det).unwrap();
    for entry in fs::read_dir(micro().join("gt")).unwrap() {
        let p = entry.unwrap().path();
        let text: String = fs::read_to_string(&p)
            .unwrap()
            .lines()
            .map(|l| format!("{l} 1.0\n"))
            .collect();
        fs::write(det.join(p.file_name().unwrap()), text).unwrap();
    }
    let o = rotbox(&[
        "eval",
        "--gt",
        micro().join("gt").to_str().unwrap(),
        "--det",
        det.to_str().unwrap(),
        "--interp",
        "40",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    let rows: Vec<&str> = table
        .lines()
        .filter(|l| {
            ["easy", "moderate", "hard"]
                .iter()
                .any(|d| l.starts_with(d))
        })
        .collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert_eq!(
            r.split_whitespace().skip(1).collect::<Vec<_>>(),
            vec!["100.00"; 4],
            "{r}"
        );
    }
}

#[test]
fn eval_errors() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt");
    fs::create_dir(&gt).unwrap();
    fs::write(
        gt.join("000007.txt"),
        "Car 0.00 0 0.00 1 2 3 4 1.5 1.6 3.9 0 1.7 20 0\nCar 0.00 zero\n",
    )
    .unwrap();
    let o = rotbox(&[
        "eval",
        "--gt",
        gt.to_str().unwrap(),
        "--det",
        gt.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("000007.txt:2:"), "{}", stderr(&o));

    let o = rotbox(&[
        "eval",
        "--gt",
        "/nonexistent/gt",
        "--det",
        gt.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/gt"));
}

fn csv_iou(csv: &str) -> Vec<f64> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn fit_demo_examples() {
    let o = rotbox(&["fit-demo", "--loss", "iou", "--init", "overlap"]);
    assert!(o.status.success());
    let csv = stdout(&o);
    assert_eq!(
        csv.lines().next(),
        Some("step,loss_value,eval_iou,cx,cy,w,l,yaw")
    );
    let ious = csv_iou(&csv);
    assert_eq!(ious.len(), 501);
    assert!(ious.iter().any(|&v| v >= 0.99));

    let o = rotbox(&["fit-demo", "--loss", "iou", "--init", "disjoint"]);
    assert!(csv_iou(&stdout(&o)).iter().all(|&v| v == 0.0));

    let o = rotbox(&[
        "fit-demo", "--loss", "giou", "--init", "disjoint", "--steps", "2000",
    ]);
    assert!(csv_iou(&stdout(&o)).iter().any(|&v| v > 0.0));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fit.cfg");
    let out = dir.path().join("trace.csv");
    fs::write(
        &cfg,
        format!("loss = l1\nsteps = 40\nout = {}\n", out.display()),
    )
    .unwrap();
    let o = rotbox(&[
        "--config",
        cfg.to_str().unwrap(),
        "fit-demo",
        "--steps",
        "5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 7);
    let direct = rotbox(&["fit-demo", "--loss", "l1", "--steps", "5"]);
    assert_eq!(stdout(&direct), csv);

    fs::write(&cfg, "colour = blue\n").unwrap();
    let o = rotbox(&["fit-demo", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[domain]
lx = 4.0
ly = 2.0
lz = 1.0
t_end = 0.2

[goldak]
x0 = 1.0
y0 = 1.0
a_f = 1.0
a_r = 1.0
b = 1.0
c = 1.0
f_f = 1.0
f_r = 1.0

[sampling]
n_boundary = 120
n_domain = 90
n_initial = 10
n_source = 20
dt = 0.05

[network]
depth = 2
width = 8

[training]
adam_epochs = 4
lbfgs_epochs = 1
lbfgs_max_iter = 3
lbfgs_max_eval = 4
weight_period = 2

[probes]
points = [[1.0, 1.0, 1.0], [3.0, 1.0, 1.0]]
"#;

fn arcpinn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arcpinn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("ARCPINN_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY).unwrap();
    path.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn flux_reports_energy_closure() {
    let text = ok(&arcpinn(&["flux", "--point", "0,3,4,0"]));
    let value = |key: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(key)).unwrap();
        line.rsplit(' ').next().unwrap().parse().unwrap()
    };
    let input = value("eta * P");
    assert_eq!(input, 2.205e12);
    assert!((value("half-space integral") - input).abs() < 1e-12 * input);
    assert!((value("q(0, 3, 4, 0)") - 4.003e10).abs() < 1e7);
}

#[test]
fn sample_writes_every_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("pts.csv");
    ok(&arcpinn(&["sample", "--config", &cfg, "--out", s(&out)]));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x,y,z,t,label,face");
    assert_eq!(text.lines().count(), 1 + 120 + 90 + 10);
}

#[test]
fn oracle_compared_with_itself_passes_any_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let grid = dir.path().join("oracle.csv");
    ok(&arcpinn(&[
        "oracle", "--config", &cfg, "--preset", "custom", "--spacing", "0.5", "--dt", "0.05", "--interval", "0.05", "--out", s(&grid),
    ]));
    let report = dir.path().join("cmp");
    let text = ok(&arcpinn(&[
        "compare", "--config", &cfg, "--pred", s(&grid), "--reference", s(&grid), "--threshold", "1e-9", "--out", s(&report),
        "--profile-times", "0.1,0.2",
    ]));
    assert!(text.contains("PASS"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["relative_l2"], 0.0);
    assert!(report.join("probes_ref.csv").exists());
    assert!(report.join("path_pred_t0.20.csv").exists());

    // a 1% hotter field fails a 0.5% threshold with exit status 1
    let hot = dir.path().join("hot.csv");
    let body: String = std::fs::read_to_string(&grid)
        .unwrap()
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 0 {
                return format!("{l}\n");
            }
            let mut cols: Vec<String> = l.split(',').map(str::to_string).collect();
            let t: f64 = cols[4].parse().unwrap();
            cols[4] = (t * 1.01).to_string();
            cols.join(",") + "\n"
        })
        .collect();
    std::fs::write(&hot, body).unwrap();
    let out = arcpinn(&[
        "compare", "--config", &cfg, "--pred", s(&hot), "--reference", s(&grid), "--threshold", "0.005", "--out", s(&report),
        "--profile-times", "0.1",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn oracle_vtk_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let vtk = dir.path().join("field");
    ok(&arcpinn(&[
        "oracle", "--config", &cfg, "--preset", "custom", "--spacing", "0.5", "--dt", "0.05", "--format", "vtk", "--out", s(&vtk),
    ]));
    let first = std::fs::read_to_string(vtk.join("field_0000.vtk")).unwrap();
    assert!(first.contains("DIMENSIONS 9 5 3\n"));
}

#[test]
fn train_predict_compare_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let run_a = dir.path().join("a");
    let run_b = dir.path().join("b");
    ok(&arcpinn(&["train", "--config", &cfg, "--precision", "f64", "--threads", "1", "--out", s(&run_a)]));
    ok(&arcpinn(&["train", "--config", &cfg, "--precision", "f64", "--threads", "2", "--out", s(&run_b)]));
    for file in ["model.ckpt", "train.log"] {
        assert_eq!(std::fs::read(run_a.join(file)).unwrap(), std::fs::read(run_b.join(file)).unwrap(), "{file}");
    }
    let log = std::fs::read_to_string(run_a.join("train.log")).unwrap();
    assert_eq!(log.lines().count(), 1 + 4 + 1);

    let ckpt = run_a.join("model.ckpt");
    let grid = dir.path().join("oracle.csv");
    ok(&arcpinn(&[
        "oracle", "--config", &cfg, "--preset", "custom", "--spacing", "0.5", "--dt", "0.05", "--interval", "0.05", "--out", s(&grid),
    ]));
    let pred = dir.path().join("pred.csv");
    ok(&arcpinn(&["predict", "--checkpoint", s(&ckpt), "--lattice", s(&grid), "--out", s(&pred)]));
    let a = std::fs::read_to_string(&pred).unwrap();
    assert_eq!(a.lines().count(), std::fs::read_to_string(&grid).unwrap().lines().count());

    let pts = dir.path().join("pts.csv");
    std::fs::write(&pts, "x,y,z,t\n1,1,1,0\n2,1,0.5,0.1\n").unwrap();
    let table = dir.path().join("table.csv");
    ok(&arcpinn(&["predict", "--checkpoint", s(&ckpt), "--points", s(&pts), "--out", s(&table)]));
    let rows: Vec<String> = std::fs::read_to_string(&table).unwrap().lines().map(str::to_string).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1], "1,1,1,0,25");

    let out = arcpinn(&[
        "compare", "--config", &cfg, "--checkpoint", s(&ckpt), "--reference", s(&grid), "--threshold", "1e-9", "--out",
        s(&dir.path().join("cmp")), "--profile-times", "0.1",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_inputs_exit_with_status_two() {
    let out = arcpinn(&["sample", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[domain]\nlx = -1.0\n").unwrap();
    let out = arcpinn(&["flux", "--config", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("domain.lx"));
}

#[test]
fn flux_slice_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("flux.csv");
    ok(&arcpinn(&["flux", "--time", "1.0", "--slice-z", "4", "--spacing", "0.5", "--out", s(&out)]));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x,y,z,t,q");
    assert_eq!(text.lines().count(), 1 + 81 * 13);
    let peak = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert!((peak - 4.003e10).abs() < 1e7, "{peak}");
    let bad = arcpinn(&["flux", "--slice-z", "9", "--out", s(&out)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn train_overrides_paths_and_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let ckpt = dir.path().join("elsewhere.ckpt");
    let log = dir.path().join("elsewhere.log");
    ok(&arcpinn(&[
        "train", "--config", &cfg, "--out", s(&dir.path().join("run")), "--checkpoint-out", s(&ckpt), "--log", s(&log),
        "--adam-epochs", "2", "--lbfgs-epochs", "0",
    ]));
    assert!(ckpt.exists());
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 1 + 2);
}

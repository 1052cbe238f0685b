use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
[campaign]
name = "cli-test"
seed = 5
scenario = "simultaneous"
transports = ["tcp", "udp"]

[hub]
name = "PC0"

[[node]]
name = "Inverter01"
source_id = 1
x_m = 100.0

[node.link]
target_loss = 0.05

[[node]]
name = "Inverter02"
source_id = 2
x_m = -150.0

[plan]
count = 60
override_range = true
d1_period_s = 0.01
d2_period_s = 0.012
d3_period_s = 0.014

[probe]
count = 20

[throughput]
duration_s = 1.0
"#;

fn gridbench(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gridbench"));
    cmd.args(args).env_remove("GRIDBENCH_SEED");
    if let Some(s) = env_seed {
        cmd.env("GRIDBENCH_SEED", s);
    }
    cmd.output().expect("spawn gridbench")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("campaign.toml");
    fs::write(&path, text).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn paper() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../campaigns/paper.toml")
        .display()
        .to_string()
}

#[test]
fn run_writes_reports_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = gridbench(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["summary.txt", "ledgers.csv", "throughput.csv", "rtt.csv", "report.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert!(!out.join("trace.csv").exists());
    assert_eq!(stdout(&o), fs::read_to_string(out.join("summary.txt")).unwrap());
    assert!(stdout(&o).contains("seed 5, backend virtual, scenario simultaneous"));
}

#[test]
fn seed_precedence_flag_then_env_then_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let seed_line = |o: &Output| stdout(o).lines().nth(1).unwrap().to_owned();

    let o = gridbench(&["run", cfg, "--out", out, "--phases", "a"], Some("99"));
    assert!(seed_line(&o).starts_with("seed 99,"), "{}", seed_line(&o));
    let o = gridbench(&["run", cfg, "--out", out, "--phases", "a", "--seed", "7"], Some("99"));
    assert!(seed_line(&o).starts_with("seed 7,"), "{}", seed_line(&o));
    let o = gridbench(&["run", cfg, "--out", out, "--phases", "a"], None);
    assert!(seed_line(&o).starts_with("seed 5,"), "{}", seed_line(&o));

    let o = gridbench(&["run", cfg, "--out", out], Some("many"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("GRIDBENCH_SEED"));
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = gridbench(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], Some("31"));
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["summary.txt", "ledgers.csv", "throughput.csv", "rtt.csv", "report.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn phases_and_extras() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = gridbench(
        &["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--phases", "t,e", "--extras"],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("coverage.csv").is_file());
    assert!(out.join("trace.csv").is_file());
    let ledgers = fs::read_to_string(out.join("ledgers.csv")).unwrap();
    assert_eq!(ledgers.lines().count(), 1, "no application phase, header only");
    let rtt = fs::read_to_string(out.join("rtt.csv")).unwrap();
    assert_eq!(rtt.lines().count(), 1 + 2 * 20);

    let o = gridbench(&["run", cfg.to_str().unwrap(), "--phases", "x"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn violated_threshold_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[thresholds]\nmax_udp_loss_pct = 0.0\n");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = gridbench(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--phases", "a"], None);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("threshold violated"));
    assert!(stdout(&o).contains("FAIL"));
    assert!(out.join("report.json").is_file(), "reports are written even on violation");
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("seed = 5", "seed = 5\ncolour = \"red\""));
    let o = gridbench(&["run", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));

    let o = gridbench(&["run", "/nonexistent/campaign.toml"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn coverage_raster_from_paper_config() {
    let dir = tempfile::tempdir().unwrap();
    let raster = dir.path().join("raster.csv");
    let o = gridbench(&["coverage", &paper(), "--out", raster.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&raster).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x_m,y_m,sinr_db,class"));
    let cells = lines.count();
    let dims: Vec<usize> = stderr(&o)
        .split_whitespace()
        .take(3)
        .filter_map(|t| t.parse().ok())
        .collect();
    assert_eq!(dims.len(), 2, "{}", stderr(&o));
    assert_eq!(cells, dims[0] * dims[1]);
    assert_eq!(stdout(&o).lines().count(), 5);
    assert!(stdout(&o).contains("Inverter03"));
}

#[test]
fn validate_metrics_flags_inconsistent_rows() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    fs::write(&good, "t_s,rssi_dbm,rsrp_dbm,rsrq_db,sinr_db\n0,-70,-95,-5,12\n1,-71,-96,-5.2,\n").unwrap();
    let o = gridbench(&["validate-metrics", good.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t_s,rssi_dbm,rsrp_dbm,rsrq_db\n0,-70,-95,-5\n1,-70,-60,-5\n").unwrap();
    let o = gridbench(&["validate-metrics", bad.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    let report = stdout(&o);
    assert!(report.contains("row 1") && report.contains("RSRP exceeds RSSI"), "{report}");

    let broken = dir.path().join("broken.csv");
    fs::write(&broken, "t_s,rssi\n0,-70\n").unwrap();
    let o = gridbench(&["validate-metrics", broken.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

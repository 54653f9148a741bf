use std::path::{Path, PathBuf};
use std::process::Command as Process;

use randcurv_cli::config::ExperimentConfig;
use randcurv_cli::{execute, Command};
use serde_json::Value;

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn small(name: &str, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&config_dir().join(name)).unwrap();
    cfg.run.out = out.to_path_buf();
    cfg.run.n_samples = cfg.run.n_samples.min(500);
    if cfg.grid.points.is_some_and(|p| p > 1024) {
        cfg.grid.points = Some(512);
        cfg.grid.refine_points = cfg.grid.refine_points.map(|_| 1024);
    }
    if cfg.grid.depth.is_some() {
        cfg.grid.depth = Some(3);
    }
    cfg
}

fn binary() -> Process {
    let mut p = Process::new(env!("CARGO_BIN_EXE_randcurv"));
    p.env_remove("RANDCURV_SEED");
    p
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

struct Csv {
    meta: Vec<(String, String)>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn parse_csv(path: &Path) -> Csv {
    let text = std::fs::read_to_string(path).unwrap();
    let mut meta = Vec::new();
    let mut lines = text.lines();
    let mut header = None;
    for line in lines.by_ref() {
        match line.strip_prefix("# ") {
            Some(m) => {
                if let Some((k, v)) = m.split_once(" = ") {
                    meta.push((k.to_string(), v.to_string()));
                }
            }
            None => {
                header = Some(line.split(',').map(String::from).collect::<Vec<_>>());
                break;
            }
        }
    }
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    Csv { meta, header: header.expect("header line"), rows }
}

fn expected_columns(command: Command) -> &'static [&'static str] {
    match command {
        Command::Sample => &["index", "x1", "x2", "x3", "weight", "f", "h", "reference", "curvature"],
        Command::P2 => &[
            "a", "inv_a", "estimate", "se", "hits", "n", "prediction", "ratio", "lower", "upper",
            "ln_lower", "ln_upper", "upper_valid", "refined_points", "refined_estimate",
            "refinement_delta", "disagreements",
        ],
        Command::Euler => &["u", "mean", "se", "predicted", "z"],
        Command::Linf => &[
            "a", "u", "u_over_a", "estimate", "se", "hits", "n", "ln_estimate", "asymptote",
            "ratio", "refined_points", "refined_estimate", "refinement_delta", "flags",
        ],
        Command::Heat => &["T", "sigma_v2", "small_t", "ratio_small", "large_t", "ratio_large", "levels_used"],
        Command::Bounds => &["kind", "case", "quantity", "value"],
        Command::Qsign => &[
            "a", "lower", "upper", "ln_lower", "ln_upper", "a2_ln_lower", "a2_ln_upper", "limit",
            "drift_lower", "drift_upper",
        ],
    }
}

const ALL: [(Command, &str); 7] = [
    (Command::Sample, "sphere_sample.toml"),
    (Command::P2, "sphere_p2.toml"),
    (Command::Euler, "sphere_euler.toml"),
    (Command::Linf, "torus_linf.toml"),
    (Command::Heat, "sphere_heat.toml"),
    (Command::Bounds, "bounds.toml"),
    (Command::Qsign, "s4_qsign.toml"),
];

#[test]
fn artifacts_follow_the_schema() {
    let tmp = tempfile::tempdir().unwrap();
    for (cmd, name) in ALL {
        let dir = tmp.path().join(cmd.name());
        let cfg = small(name, &dir);
        let hash = cfg.hash();
        let record = execute(cmd, cfg).unwrap();
        let json = summary(&dir);
        assert_eq!(json["command"], cmd.name());
        assert_eq!(json["config_hash"], hash.as_str());
        assert!(json["rows"].as_array().is_some_and(|r| !r.is_empty()), "{}", cmd.name());
        assert!(json["timestamp"].is_u64());
        assert_eq!(record.artifacts.len(), json["artifacts"].as_array().unwrap().len());
        for path in &record.artifacts {
            let csv = parse_csv(path);
            assert_eq!(csv.meta[0].0, "config_hash");
            assert_eq!(csv.meta[0].1, hash);
            assert_eq!(csv.header, expected_columns(cmd), "{}", path.display());
            assert!(!csv.rows.is_empty());
            for row in &csv.rows {
                assert_eq!(row.len(), csv.header.len(), "{}", path.display());
            }
            let first = std::fs::read_to_string(path).unwrap();
            assert_eq!(first.lines().next().unwrap(), format!("# randcurv {}", cmd.name()));
        }
    }
}

#[test]
fn seed_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let config = config_dir().join("sphere_sample.toml");
    let seed_of = |args: &[&str], env: Option<&str>, out: &str| {
        let dir = tmp.path().join(out);
        let mut p = binary();
        p.args(["sample", "--config"]).arg(&config).arg("--out").arg(&dir).args(args);
        if let Some(e) = env {
            p.env("RANDCURV_SEED", e);
        }
        let status = p.output().unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        summary(&dir)["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(&[], None, "file"), 7);
    assert_eq!(seed_of(&[], Some("9"), "env"), 9);
    assert_eq!(seed_of(&["--seed", "11"], Some("9"), "flag"), 11);
}

#[test]
fn zero_amplitude_keeps_the_reference() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small("sphere_sample.toml", tmp.path());
    cfg.sample.as_mut().unwrap().amplitude = 0.0;
    let record = execute(Command::Sample, cfg).unwrap();
    let csv = parse_csv(&record.artifacts[0]);
    let col = |name: &str| csv.header.iter().position(|h| h == name).unwrap();
    let (r, c) = (col("reference"), col("curvature"));
    for row in &csv.rows {
        assert_eq!(row[r], row[c]);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let dir = tmp.path().join(run);
        let status = binary()
            .args(["euler", "--config"])
            .arg(config_dir().join("sphere_euler.toml"))
            .arg("--out")
            .arg(&dir)
            .args(["--workers", "2"])
            .output()
            .unwrap();
        assert!(status.status.success());
        outputs.push(std::fs::read(dir.join("euler.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn empty_amplitude_grid_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    let text = std::fs::read_to_string(config_dir().join("sphere_p2.toml")).unwrap();
    let bad = text.replace(
        "amplitudes = [0.4, 0.3333333333333333, 0.2857142857142857]",
        "amplitudes = []",
    );
    assert_ne!(bad, text);
    std::fs::write(&path, bad).unwrap();
    let out = binary().arg("p2").arg("--config").arg(&path).arg("--out").arg(tmp.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("amplitudes"));
    assert!(!tmp.path().join("summary.json").exists());
}

#[test]
fn bounds_reproduce_kappa_for_n4() {
    let tmp = tempfile::tempdir().unwrap();
    let record = execute(Command::Bounds, small("bounds.toml", tmp.path())).unwrap();
    let kappa = record
        .rows
        .iter()
        .find(|r| r["kind"] == "nd_positive" && r["quantity"] == "kappa" && r["case"].as_str().unwrap().starts_with("n=4 "))
        .unwrap();
    assert!((kappa["value"].as_f64().unwrap() - 1.5).abs() < 1e-15);
}

#[test]
fn workers_flag_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let out = binary()
        .args(["bounds", "--config"])
        .arg(config_dir().join("bounds.toml"))
        .arg("--out")
        .arg(tmp.path())
        .args(["--workers", "0"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

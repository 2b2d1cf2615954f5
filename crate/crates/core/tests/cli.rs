use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn l2frac(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_l2frac"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("L2FRAC_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_dirs(root: &Path, prefix: &str) -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(prefix))
        .collect();
    dirs.sort();
    dirs
}

#[test]
fn mesh_reports_k_and_writes_nodes() {
    let tmp = TempDir::new().unwrap();
    let o = l2frac(tmp.path(), &["mesh", "--T", "1", "--M", "64", "--r", "3", "--modified", "--alpha", "0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("K: 7"), "{text}");
    let dirs = run_dirs(tmp.path(), "mesh-");
    assert_eq!(dirs.len(), 1);
    let nodes = fs::read_to_string(dirs[0].join("mesh.txt")).unwrap();
    let values: Vec<f64> = nodes
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.trim().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 65);
    assert_eq!(values[0], 0.0);
    assert!((values[64] - 1.0).abs() < 1e-15);
    assert!(dirs[0].join("config.json").exists());
}

#[test]
fn certify_passes_on_modified_mesh_and_fails_on_plain_graded() {
    let tmp = TempDir::new().unwrap();
    let ok = l2frac(
        tmp.path(),
        &["certify", "--M", "128", "--r", "3", "--modified", "--alpha", "0.5", "--verify-inverse"],
    );
    assert_eq!(ok.status.code(), Some(0), "{}{}", stdout(&ok), String::from_utf8_lossy(&ok.stderr));
    let dir = &run_dirs(tmp.path(), "certify-")[0];
    let cert: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["passed"], true);
    // the shift lives in the mesh; the standard operator freezes beta only at j = 1
    assert_eq!(cert["K"], 1);
    assert_eq!(cert["verified_inverse_nonneg"], true);

    let bad = l2frac(tmp.path(), &["certify", "--M", "128", "--r", "3", "--alpha", "0.5"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(l2frac(tmp.path(), &["certify", "--M", "16", "--alpha", "1.5"]).status.code(), Some(2));
    assert_eq!(l2frac(tmp.path(), &["mesh", "--M", "0"]).status.code(), Some(2));
    assert_eq!(l2frac(tmp.path(), &["solve", "--preset", "nope", "--M", "8"]).status.code(), Some(2));
    assert_eq!(l2frac(tmp.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn solve_talpha_reports_small_error() {
    let tmp = TempDir::new().unwrap();
    let o = l2frac(tmp.path(), &["solve", "--preset", "talpha", "--alpha", "0.5", "--M", "256", "--r", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = &run_dirs(tmp.path(), "solve-")[0];
    let csv = fs::read_to_string(dir.join("solution.csv")).unwrap();
    assert!(csv.starts_with("# l2frac v1"));
    let last = csv.lines().last().unwrap();
    let err: f64 = last.split(',').last().unwrap().trim().parse().unwrap();
    assert!(err.abs() < 1e-5, "{last}");
}

#[test]
fn solve_sinx_writes_field_snapshot() {
    let tmp = TempDir::new().unwrap();
    let o = l2frac(
        tmp.path(),
        &["solve", "--preset", "sinx", "--alpha", "0.5", "--M", "64", "--r", "3", "--N", "31", "--grid-exact"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = &run_dirs(tmp.path(), "solve-")[0];
    assert!(dir.join("final.csv").exists());
    assert!(dir.join("errors.csv").exists());
}

#[test]
fn table_config_file_and_flag_override() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("campaign.toml");
    fs::write(&cfg, "alphas = [0.5]\ngradings = [\"1\", \"3-a\"]\nsteps = [32, 64]\nmetric = \"at-final\"\n").unwrap();
    let o = l2frac(tmp.path(), &["table", "--config", cfg.to_str().unwrap(), "--M", "32,64,128"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = &run_dirs(tmp.path(), "table-")[0];
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("table.json")).unwrap()).unwrap();
    let rows = json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["cells"].as_array().unwrap().len(), 3);
    let csv = fs::read_to_string(dir.join("table.csv")).unwrap();
    assert!(csv.starts_with("# l2frac-table v1"));

    fs::write(&cfg, "alphas = [0.5]\nbogus = 1\n").unwrap();
    let bad = l2frac(tmp.path(), &["table", "--config", cfg.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn published_preset_with_reduced_steps_matches_reference_digits() {
    let tmp = TempDir::new().unwrap();
    let o = l2frac(
        tmp.path(),
        &["table", "--paper", "errors-at-1", "--alpha", "0.5", "--r", "1", "--M", "32,128,512"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for want in ["4.557e-3", "1.141e-3", "2.852e-4"] {
        assert!(text.contains(want), "missing {want} in\n{text}");
    }
}

#[test]
fn single_thread_output_is_identical() {
    let args = ["table", "--alpha", "0.3,0.7", "--r", "1,3-a", "--M", "32,64,128"];
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let mut one = vec!["--threads", "1"];
    one.extend_from_slice(&args);
    assert_eq!(l2frac(a.path(), &one).status.code(), Some(0));
    assert_eq!(l2frac(b.path(), &args).status.code(), Some(0));
    let read = |root: &Path| fs::read(run_dirs(root, "table-")[0].join("table.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    let name = |root: &Path| run_dirs(root, "table-")[0].file_name().unwrap().to_owned();
    assert_eq!(name(a.path()), name(b.path()));
}

#[test]
fn out_dir_env_is_honoured() {
    let tmp = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_l2frac"))
        .args(["mesh", "--M", "8", "--r", "2"])
        .env("L2FRAC_OUT_DIR", tmp.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(run_dirs(tmp.path(), "mesh-").len(), 1);
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

const BASE: &str = r#"
preset = "iii"
seed = 7

[problem]
p = 2.0
q = 4.0
a = { profile = "gaussian", amplitude = 1.0, width = 1.0 }
b = { profile = "gaussian", amplitude = 1.0, width = 1.0 }

[domain]
geometry = "radial"
dim = 3
r_trunc = 8.0
resolution = 200
"#;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

fn nehari(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nehari")).args(args).output().unwrap()
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    nehari(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, acc);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                acc.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(root, root, &mut acc);
    acc
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap()
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn solve_writes_hashed_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let out = tmp.path().join("out");
    let o = run("solve", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let m = manifest(&out);
    assert_eq!(m["command"], "solve");
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config_sha256"], hex(&fs::read(&cfg).unwrap()));
    let files = m["files"].as_array().unwrap();
    let listed: Vec<&str> = files.iter().map(|f| f["path"].as_str().unwrap()).collect();
    for expected in ["u1.csv", "u2.csv", "u3.csv", "solve_report.json", "plot/solutions.csv", "plot/solutions.axes.json"] {
        assert!(listed.contains(&expected), "{expected} missing from manifest");
    }
    for f in files {
        let bytes = fs::read(out.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), hex(&bytes));
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, bytes.len());
    }
    let on_disk: Vec<String> = tree(&out).into_keys().filter(|k| k != "manifest.json").collect();
    assert_eq!(on_disk.len(), files.len());
}

#[test]
fn outputs_are_byte_identical_across_runs_and_workers() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&run("verify", &cfg, &a, &["--workers", "1"])), 0);
    assert_eq!(code(&run("verify", &cfg, &b, &["--workers", "4"])), 0);
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn seed_flag_changes_randomised_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&run("verify", &cfg, &a, &[])), 0);
    assert_eq!(code(&run("verify", &cfg, &b, &["--seed", "8"])), 0);
    assert_eq!(manifest(&b)["seed"], 8);
    assert_ne!(fs::read(a.join("check_report.json")).unwrap(), fs::read(b.join("check_report.json")).unwrap());
}

#[test]
fn verify_passes_every_check() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let out = tmp.path().join("out");
    let o = run("verify", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = fs::read_to_string(out.join("check_report.txt")).unwrap();
    assert!(!report.contains("FAIL"), "{report}");
    assert!(report.contains("u3 nodal domains"));
}

#[test]
fn run_executes_config_tasks() {
    let tmp = TempDir::new().unwrap();
    let body = BASE.replace("seed = 7", "seed = 7\ntasks = [\"eigen\", \"solve\"]");
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("out");
    assert_eq!(code(&run("run", &cfg, &out, &[])), 0);
    assert!(out.join("eigen.json").exists());
    assert!(out.join("u3.csv").exists());
    assert!(!out.join("check_report.json").exists());
}

#[test]
fn lambda_above_principal_eigenvalue_exits_2() {
    let tmp = TempDir::new().unwrap();
    let body = BASE.replace("preset = \"iii\"", "").replace("p = 2.0", "p = 2.0\nlambda = 50.0");
    let cfg = write_config(tmp.path(), &body);
    let o = run("solve", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("(A,λ)"), "{}", stderr(&o));
    assert_eq!(manifest(&tmp.path().join("out"))["exit_code"], 2);
}

#[test]
fn supercritical_exponent_exits_1() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &BASE.replace("q = 4.0", "q = 6.5"));
    let o = run("solve", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn malformed_config_exits_1() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "[problem\np = ");
    assert_eq!(code(&run("solve", &cfg, &tmp.path().join("out"), &[])), 1);
    let cfg = write_config(tmp.path(), &format!("{BASE}\n[extra]\nkey = 1\n"));
    assert_eq!(code(&run("solve", &cfg, &tmp.path().join("out"), &[])), 1);
}

#[test]
fn preset_conflicting_lambda_exits_1() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &BASE.replace("p = 2.0", "p = 2.0\nlambda = 0.5"));
    assert_eq!(code(&run("solve", &cfg, &tmp.path().join("out"), &[])), 1);
}

#[test]
fn zero_workers_exits_1() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    assert_eq!(code(&run("solve", &cfg, &tmp.path().join("out"), &["--workers", "0"])), 1);
}

#[test]
fn empty_sweep_exits_1() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let o = run("sweep", &cfg, &tmp.path().join("out"), &["--param", "r_trunc", "--values", ""]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let cfg = write_config(tmp.path(), &format!("{BASE}\n[sweep]\nparameter = \"lambda\"\nvalues = []\n"));
    let o = run("sweep", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn iteration_cap_exits_3() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{BASE}\n[solver]\nmax_iter = 2\nseed_budget = 1\n"));
    let o = run("solve", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(tmp.path().join("out/solve_report.json").exists());
}

#[test]
fn unattainable_tolerance_exits_4() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{BASE}\n[verify]\nresidual_tolerance = 1e-30\n"));
    let out = tmp.path().join("out");
    let o = run("verify", &cfg, &out, &[]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(fs::read_to_string(out.join("check_report.txt")).unwrap().contains("FAIL"));
}

#[test]
fn truncation_sweep_lowers_principal_eigenvalue() {
    let tmp = TempDir::new().unwrap();
    let body = BASE.replace(
        "a = { profile = \"gaussian\", amplitude = 1.0, width = 1.0 }",
        "a = { profile = \"constant\", amplitude = 1.0 }",
    );
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("out");
    let o = run("sweep", &cfg, &out, &["--param", "r_trunc", "--values", "5,10,20", "--workers", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let lam = csv_column(&out.join("sweep.csv"), "lambda_a");
    assert_eq!(lam.len(), 3);
    assert!(lam[0] > lam[1] && lam[1] > lam[2], "{lam:?}");
    assert_eq!(csv_column(&out.join("sweep.csv"), "value"), vec![5.0, 10.0, 20.0]);
}

#[test]
fn resolution_sweep_shrinks_interface_coupling() {
    let tmp = TempDir::new().unwrap();
    let body = BASE.replace("r_trunc = 8.0", "r_trunc = 10.0");
    let cfg = write_config(tmp.path(), &format!("{body}\n[sweep]\nparameter = \"resolution\"\nvalues = [501, 1001, 2001]\n"));
    let out = tmp.path().join("out");
    let o = run("sweep", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let coupling = csv_column(&out.join("sweep.csv"), "coupling_bound");
    assert!(coupling[0] > coupling[1] && coupling[1] > coupling[2], "{coupling:?}");
    assert!(out.join("plot/sweep.axes.json").exists());
}

#[test]
fn cartesian_geometry_verifies() {
    let tmp = TempDir::new().unwrap();
    let body = BASE
        .replace("geometry = \"radial\"\ndim = 3", "geometry = \"cartesian\"")
        .replace("r_trunc = 8.0", "r_trunc = 4.0")
        .replace("resolution = 200", "resolution = 32")
        .replace("p = 2.0", "p = 1.8");
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("out");
    let o = run("run", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let axes: serde_json::Value = serde_json::from_slice(&fs::read(out.join("plot/solutions.axes.json")).unwrap()).unwrap();
    assert_eq!(axes["kind"], "grid_2d");
}

#[test]
fn shipped_presets_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["preset_i.toml", "preset_ii.toml", "preset_iii.toml"] {
        let tmp = TempDir::new().unwrap();
        let o = run("eigen", &root.join(name), tmp.path(), &[]);
        assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
    }
}

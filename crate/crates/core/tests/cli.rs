use std::fs;
use std::path::Path;

use irsbim_core::cli::{run, BOUND_HEADER, COMPARE_HEADER, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, SWEEP_HEADER};

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn irsbim(args: &[&str]) -> i32 {
    run(std::iter::once("irsbim").chain(args.iter().copied()))
}

const SMALL: &str = r#"
schema_version = 1
name = "small"
[modulation]
scheme = "s1"
order = 4
n2 = 16
[channel]
n_r = 4
[sim]
trials = 200
sweep = "k_db"
grid = [0, 10]
"#;

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(irsbim(&["validate", "--config", &write_config(dir.path(), "ok.toml", "schema_version = 1\n")]), EXIT_OK);
    let wide = write_config(dir.path(), "d1.toml", "schema_version = 1\n[geometry]\nirs1_spacing_m = 0.004\n");
    assert_eq!(irsbim(&["validate", "--config", &wide]), EXIT_VALIDATION);
    let near = write_config(dir.path(), "near.toml", "schema_version = 1\n[geometry]\ndistance_m = 10.0\n");
    assert_eq!(irsbim(&["validate", "--config", &near]), EXIT_VALIDATION);
    let broken = write_config(dir.path(), "bad.toml", "schema_version = 1\n[channel\n");
    assert_eq!(irsbim(&["validate", "--config", &broken]), EXIT_VALIDATION);
    assert_eq!(irsbim(&["validate", "--preset", "fig6"]), EXIT_OK);
    assert_eq!(irsbim(&["validate"]), EXIT_VALIDATION);
    assert_eq!(irsbim(&["frobnicate"]), EXIT_RUNTIME);
}

#[test]
fn sweep_writes_one_csv_per_curve_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        assert_eq!(irsbim(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--plot", "--workers", "2"]), EXIT_OK);
    }
    for f in ["small_small_ml.csv", "small_small_cs.csv", "small_sweep.svg", "manifest.json"] {
        let a = fs::read(out1.join(f)).unwrap();
        assert_eq!(a, fs::read(out2.join(f)).unwrap(), "{f} differs between reruns");
    }
    let ml = fs::read_to_string(out1.join("small_small_ml.csv")).unwrap();
    let lines: Vec<&str> = ml.lines().collect();
    assert_eq!(lines[0], SWEEP_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("k_db,0,ml,s1,"));
    assert!(lines[2].starts_with("k_db,10,ml,s1,"));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out1.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["trials"], 200);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn seed_and_trial_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(irsbim(&["sweep", "--config", &cfg, "--out", a.to_str().unwrap(), "--seed", "9", "--trials", "50"]), EXIT_OK);
    assert_eq!(irsbim(&["sweep", "--config", &cfg, "--out", b.to_str().unwrap(), "--trials", "50"]), EXIT_OK);
    let ra = fs::read_to_string(a.join("small_small_ml.csv")).unwrap();
    assert!(ra.lines().nth(1).unwrap().ends_with(",50"));
    assert_ne!(ra, fs::read_to_string(b.join("small_small_ml.csv")).unwrap());
}

#[test]
fn empty_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "e.toml", "schema_version = 1\n[sim]\ngrid = []\n");
    assert_eq!(irsbim(&["sweep", "--config", &cfg, "--out", dir.path().to_str().unwrap()]), EXIT_VALIDATION);
}

#[test]
fn bound_paths() {
    let dir = tempfile::tempdir().unwrap();
    let s1 = write_config(
        dir.path(),
        "s1.toml",
        "schema_version = 1\nname = \"b1\"\n[modulation]\nscheme = \"s1\"\norder = 4\nn2 = 16\n[sim]\ngrid = [5]\n",
    );
    let out = dir.path().join("o1");
    assert_eq!(irsbim(&["bound", "--config", &s1, "--out", out.to_str().unwrap()]), EXIT_OK);
    let text = fs::read_to_string(out.join("b1_b1_bound.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], BOUND_HEADER);
    let f: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(f[4], "64");
    assert_eq!(f[5], (64 * 63).to_string());
    assert_eq!(f[6], "closed_form");
    assert_eq!(f[3].parse::<f64>().unwrap(), 0.0);

    let s2 = write_config(
        dir.path(),
        "s2.toml",
        "schema_version = 1\nname = \"b2\"\n[modulation]\nscheme = \"s2\"\nn_t = 2\norder = 16\nn2 = 64\n[bound]\npair_samples = 256\n[sim]\ngrid = [5]\n",
    );
    let out = dir.path().join("o2");
    assert_eq!(irsbim(&["bound", "--config", &s2, "--out", out.to_str().unwrap()]), EXIT_OK);
    let text = fs::read_to_string(out.join("b2_b2_bound.csv")).unwrap();
    let f: Vec<String> = text.lines().nth(1).unwrap().split(',').map(String::from).collect();
    assert_eq!(f[4], "16384");
    assert_eq!(f[6], "closed_form_subsampled");
    assert!(f[3].parse::<f64>().unwrap() > 0.0);

    let s3 = write_config(
        dir.path(),
        "s3.toml",
        "schema_version = 1\nname = \"b3\"\n[modulation]\nscheme = \"s3\"\norder = 4\nn2 = 16\nn3 = 4\n[bound]\nn_samples = 100\n[sim]\ngrid = [5]\n",
    );
    let out = dir.path().join("o3");
    assert_eq!(irsbim(&["bound", "--config", &s3, "--out", out.to_str().unwrap()]), EXIT_OK);
    let text = fs::read_to_string(out.join("b3_b3_bound.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().ends_with(",sampled"));
}

#[test]
fn compare_adds_bound_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "schema_version = 1\nname = \"c\"\n[modulation]\norder = 4\nn2 = 16\n[detector]\ndetector = \"ml\"\n[sim]\ntrials = 100\ngrid = [0, 8]\n",
    );
    let out = dir.path().join("o");
    assert_eq!(irsbim(&["compare", "--config", &cfg, "--out", out.to_str().unwrap(), "--plot"]), EXIT_OK);
    let text = fs::read_to_string(out.join("c_c_ml.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), COMPARE_HEADER);
    for line in text.lines().skip(1) {
        let f: Vec<f64> = line.split(',').skip(4).map(|x| x.parse().unwrap()).collect();
        assert!(f[3] > 0.0 && f[3] <= 1.0);
    }
    let svg = fs::read_to_string(out.join("c_compare.svg")).unwrap();
    assert!(svg.contains("c UB"));
}

#[test]
fn presets_print() {
    assert_eq!(irsbim(&["preset", "fig5"]), EXIT_OK);
    assert_eq!(irsbim(&["preset", "fig1"]), EXIT_VALIDATION);
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use faer::Mat;
use koopman_stitch::dictionary::Dictionary;
use koopman_stitch::edmd::KoopmanModel;
use koopman_stitch::equivariance::GroupAction;
use koopman_stitch::io::write_json;
use koopman_stitch::stitching::{StitchedModel, SubspacePredicate};
use serde_json::Value;
use tempfile::TempDir;

fn koopman(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_koopman"))
        .args(args)
        .env_remove("KOOPMAN_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = koopman(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn csv_files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|f| f.extension().is_some_and(|x| x == "csv"))
        .collect();
    v.sort();
    v
}

fn data_rows(file: &Path) -> usize {
    fs::read_to_string(file).unwrap().lines().count() - 1
}

fn json(file: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(file).unwrap()).unwrap()
}

fn simulate(dir: &Path, preset: &str) {
    ok(&["simulate", "--preset", preset, "--out", p(dir)]);
}

#[test]
fn simulate_toggle_defaults() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), "toggle_switch");
    let files = csv_files(tmp.path());
    assert_eq!(files.len(), 81);
    assert!(files.iter().all(|f| data_rows(f) == 21));
    let manifest = json(&tmp.path().join("manifest.json"));
    assert_eq!(manifest["files"].as_array().unwrap().len(), 81);
    assert_eq!(manifest["preset"], "toggle_switch");
}

#[test]
fn simulate_small_grid() {
    let tmp = TempDir::new().unwrap();
    ok(&["simulate", "--preset", "toggle_switch", "--counts", "2,2", "--n-steps", "1", "--out", p(tmp.path())]);
    let files = csv_files(tmp.path());
    assert_eq!(files.len(), 4);
    assert!(files.iter().all(|f| data_rows(f) == 2));
}

#[test]
fn flags_override_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"preset": "bilinear_quadratic", "n_steps": 3, "grid": {"lo": [0, 0], "hi": [1, 1], "counts": [2, 2]}}"#).unwrap();
    let a = tmp.path().join("a");
    ok(&["--config", p(&cfg), "simulate", "--out", p(&a)]);
    assert!(csv_files(&a).iter().all(|f| data_rows(f) == 4));
    let b = tmp.path().join("b");
    ok(&["--config", p(&cfg), "simulate", "--n-steps", "1", "--out", p(&b)]);
    assert!(csv_files(&b).iter().all(|f| data_rows(f) == 2));
}

#[test]
fn unknown_preset_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = koopman(&["simulate", "--preset", "lorenz", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lorenz"));
    assert_eq!(koopman(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn fit_dmd_and_rbf_models() {
    let tmp = TempDir::new().unwrap();
    let traj = tmp.path().join("traj");
    simulate(&traj, "toggle_switch");
    let dmd = tmp.path().join("dmd.json");
    ok(&["fit", "--trajectories", p(&traj), "--dictionary", "identity", "--out", p(&dmd)]);
    let m = KoopmanModel::read_json(&dmd).unwrap();
    assert_eq!((m.k_matrix.nrows(), m.k_matrix.ncols()), (2, 2));

    let rbf = tmp.path().join("rbf.json");
    ok(&["fit", "--trajectories", p(&traj), "--out", p(&rbf)]);
    let v = json(&rbf);
    assert_eq!(v["dictionary"]["kind"], "rbf");
    assert_eq!(v["dictionary"]["n_obs"], 30);
    assert!(v["fit_residual"].as_f64().unwrap() >= 0.0);
    let m = KoopmanModel::read_json(&rbf).unwrap();
    assert_eq!(m.k_matrix.nrows(), 30);

    let spec = tmp.path().join("spec.json");
    ok(&["spectrum", "--model", p(&rbf), "--out", p(&spec)]);
    assert_eq!(json(&spec)["unit_census"], 2);
}

#[test]
fn bilinear_spectrum_has_three_unit_eigenvalues() {
    let tmp = TempDir::new().unwrap();
    let traj = tmp.path().join("traj");
    simulate(&traj, "bilinear_quadratic");
    let model = tmp.path().join("m.json");
    ok(&["fit", "--trajectories", p(&traj), "--out", p(&model)]);
    let spec = tmp.path().join("spec.json");
    ok(&["spectrum", "--model", p(&model), "--out", p(&spec)]);
    assert_eq!(json(&spec)["unit_census"], 3);
}

#[test]
fn mismatched_dimensions_are_rejected() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("a.csv"), "t,x1,x2\n0,1,2\n1,3,4\n").unwrap();
    fs::write(tmp.path().join("b.csv"), "t,x1,x2,x3\n0,1,2,3\n1,3,4,5\n").unwrap();
    let out = koopman(&["fit", "--trajectories", p(tmp.path()), "--dictionary", "identity", "--out", p(&tmp.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn spectrum_of_diagonal_fixture() {
    let tmp = TempDir::new().unwrap();
    let k = Mat::from_fn(2, 2, |i, j| if i != j { 0.0 } else if i == 0 { 1.0 } else { 0.5 });
    let model = tmp.path().join("diag.json");
    KoopmanModel::from_matrix(k, Dictionary::identity(2), "fixture", 1.0).unwrap().write_json(&model).unwrap();
    let spec = tmp.path().join("spec.json");
    ok(&["spectrum", "--model", p(&model), "--out", p(&spec)]);
    let v = json(&spec);
    assert_eq!(v["unit_census"], 1);
    assert_eq!(v["eigenvalues"], serde_json::json!([[1.0, 0.0], [0.5, 0.0]]));

    let modes = tmp.path().join("kmd.json");
    ok(&["kmd", "--model", p(&model), "--x0", "2,-3", "--out", p(&modes)]);
    let w = &json(&modes)["initial_weights"];
    assert_eq!(w[0][0].as_f64().unwrap().abs(), 2.0);
    assert_eq!(w[1][0].as_f64().unwrap().abs(), 3.0);

    let pred = tmp.path().join("pred.csv");
    ok(&["predict", "--model", p(&model), "--x0", "2,-3", "--n-steps", "2", "--states", "--out", p(&pred)]);
    let text = fs::read_to_string(&pred).unwrap();
    let last: Vec<f64> = text.lines().last().unwrap().split(',').skip(1).map(|s| s.parse().unwrap()).collect();
    assert_eq!(last, vec![2.0, -0.75]);

    let grid = tmp.path().join("phi.csv");
    ok(&["eigfun", "--model", p(&model), "--index", "0", "--lo", "-1,-1", "--hi", "1,1", "--counts", "3,3", "--out", p(&grid)]);
    assert_eq!(data_rows(&grid), 9);
}

#[test]
fn seed_from_environment_matches_flag() {
    let tmp = TempDir::new().unwrap();
    let traj = tmp.path().join("traj");
    simulate(&traj, "toggle_switch");
    let fit = |name: &str, env: Option<&str>, flag: Option<&str>| {
        let path = tmp.path().join(name);
        let mut c = Command::new(env!("CARGO_BIN_EXE_koopman"));
        c.env_remove("KOOPMAN_SEED");
        if let Some(s) = env {
            c.env("KOOPMAN_SEED", s);
        }
        if let Some(s) = flag {
            c.args(["--seed", s]);
        }
        let out = c.args(["fit", "--trajectories", p(&traj), "--out", p(&path)]).output().unwrap();
        assert!(out.status.success());
        fs::read(&path).unwrap()
    };
    let env3 = fit("env3.json", Some("3"), None);
    let flag3 = fit("flag3.json", None, Some("3"));
    let flag_wins = fit("both.json", Some("5"), Some("3"));
    let env4 = fit("env4.json", Some("4"), None);
    assert_eq!(env3, flag3);
    assert_eq!(env3, flag_wins);
    assert_ne!(env3, env4);
}

#[test]
fn stitch_local_fits() {
    let tmp = TempDir::new().unwrap();
    let traj = tmp.path().join("traj");
    simulate(&traj, "toggle_switch");
    let [r, l] = SubspacePredicate::toggle_pair();
    let (pr, pl) = (tmp.path().join("right.json"), tmp.path().join("left.json"));
    write_json(&pr, &r).unwrap();
    write_json(&pl, &l).unwrap();
    let (mr, ml) = (tmp.path().join("m_right.json"), tmp.path().join("m_left.json"));
    ok(&["fit", "--trajectories", p(&traj), "--region", p(&pr), "--tag", "M_right", "--out", p(&mr)]);
    ok(&["fit", "--trajectories", p(&traj), "--region", p(&pl), "--tag", "M_left", "--out", p(&ml)]);
    let out = tmp.path().join("stitched.json");
    let report = tmp.path().join("report.json");
    ok(&[
        "stitch", "--model", p(&mr), "--model", p(&ml), "--predicate", p(&pr), "--predicate", p(&pl),
        "--lo", "0,0", "--hi", "4,4", "--out", p(&out), "--report", p(&report),
    ]);
    let s = StitchedModel::read_json(&out).unwrap();
    assert_eq!(s.k_s.nrows(), 60);
    assert_eq!(s.block_sizes, vec![30, 30]);
    assert!(json(&report)["spectrum_union_gap"].as_f64().unwrap() < 1e-10);
}

#[test]
fn transport_reference_bilinear_operator() {
    let tmp = TempDir::new().unwrap();
    // reference matrices act on column vectors; the row convention stores the transpose
    let k_right = [[0.9782, 0.0253], [0.7755, -0.0955]];
    let k = Mat::from_fn(2, 2, |i, j| k_right[j][i]);
    let model = tmp.path().join("right.json");
    KoopmanModel::from_matrix(k, Dictionary::identity(2), "M_right", 1.0).unwrap().write_json(&model).unwrap();
    let action = tmp.path().join("reflect.json");
    write_json(&action, &GroupAction::reflect_axis(0, 2)).unwrap();
    let [r, l] = SubspacePredicate::bilinear_pair();
    let (pr, pl) = (tmp.path().join("pr.json"), tmp.path().join("pl.json"));
    write_json(&pr, &r).unwrap();
    write_json(&pl, &l).unwrap();
    let out = tmp.path().join("global.json");
    ok(&[
        "transport", "--model", p(&model), "--action", p(&action), "--predicate", p(&pr), "--predicate", p(&pl),
        "--lo", "-3,-1", "--hi", "3,3", "--out", p(&out),
    ]);
    let s = StitchedModel::read_json(&out).unwrap();
    let left = &s.blocks[1].model.k_matrix;
    let expected = [[0.9782, -0.0253], [-0.7755, -0.0955]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((left[(j, i)] - expected[i][j]).abs() < 5e-5);
        }
    }
}

#[test]
fn conjugate_report() {
    let tmp = TempDir::new().unwrap();
    ok(&["conjugate", "--out", p(tmp.path())]);
    let v = json(&tmp.path().join("conjugacy_report.json"));
    assert!(v["operator_gap"].as_f64().unwrap() <= 1e-10);
    assert_eq!(v["conjugacy"]["holds"], true);
    assert!(tmp.path().join("model_theta.json").exists());
    assert!(tmp.path().join("model_psi.json").exists());
}

#[test]
fn update_check_decisions() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"preset": "toggle_switch", "grid": {"lo": [0, 2], "hi": [1, 4], "counts": [4, 4]}}"#).unwrap();
    let own = tmp.path().join("own");
    ok(&["--config", p(&cfg), "simulate", "--out", p(&own)]);
    let other = tmp.path().join("other");
    ok(&["simulate", "--preset", "toggle_switch", "--lo", "2,0", "--hi", "4,1", "--counts", "4,4", "--out", p(&other)]);
    let model = tmp.path().join("m.json");
    ok(&["fit", "--trajectories", p(&own), "--prepend-state", "--out", p(&model)]);
    let same = tmp.path().join("same.json");
    ok(&["update-check", "--model", p(&model), "--reference", p(&own), "--new", p(&own), "--out", p(&same)]);
    assert_eq!(json(&same)["decision"], "reuse");
    let cross = tmp.path().join("cross.json");
    ok(&["update-check", "--model", p(&model), "--reference", p(&own), "--new", p(&other), "--out", p(&cross)]);
    assert_eq!(json(&cross)["decision"], "refit");
}

#[test]
fn repro_writes_case_artifacts() {
    let tmp = TempDir::new().unwrap();
    ok(&["repro", "bilinear", "--out", p(tmp.path())]);
    let dir = tmp.path().join("bilinear");
    for f in ["model_global.json", "spectrum_global.json", "model_stitched.json", "model_dmd_transported.json", "summary.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    assert_eq!(json(&dir.join("spectrum_global.json"))["unit_census"], 3);
    assert_eq!(csv_files(&dir).len(), 3);
}

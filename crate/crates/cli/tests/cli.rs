use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ctxbo(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxbo"))
        .args(args)
        .env("CTXBO_OUTPUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(String::from).collect()
}

const LEARN_1D: &str = r#"{"evaluator": {"analytic_benchmark": {"id": "quadratic_1d"}}, "j_max": 3, "k_max": 4, "seed": 11}"#;

#[test]
fn learn_writes_model_log_and_checkpoints_under_env_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.json", LEARN_1D);
    let out = tmp.path().join("out");
    let res = ctxbo(&["learn", &cfg], &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(rows(&out.join("run_log.csv")).len(), 12);
    for j in 1..=3 {
        assert!(out.join(format!("checkpoints/iter_{j:03}.json")).exists());
    }
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["run_config"]["seed"], 11);
    assert_eq!(model["iterations"], 3);
}

#[test]
fn learn_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.json", LEARN_1D);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(ctxbo(&["learn", &cfg], &a).status.success());
    assert!(ctxbo(&["learn", &cfg], &b).status.success());
    for f in ["run_log.csv", "model.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_errors_exit_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let zero = write(tmp.path(), "zero.json", &LEARN_1D.replace("\"j_max\": 3", "\"j_max\": 0"));
    let res = ctxbo(&["learn", &zero], &out);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("j_max"));
    assert!(!out.exists());
    let bad = write(tmp.path(), "bad.json", "{\"evaluator\": ");
    assert_eq!(ctxbo(&["learn", &bad], &out).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn missing_files_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let missing = tmp.path().join("nope.json");
    assert_eq!(ctxbo(&["learn", missing.to_str().unwrap()], &out).status.code(), Some(4));
    assert_eq!(ctxbo(&["heatmap", missing.to_str().unwrap()], &out).status.code(), Some(4));
    let spec = write(
        tmp.path(),
        "spec.json",
        &format!(
            r#"{{"controllers": [{{"adaptive": {{"name": "a", "model": {missing:?}}}}}, {{"fixed": {{"name": "f", "z": [0, 0]}}}}],
                "episodes": 1, "seed": 0}}"#
        ),
    );
    let res = ctxbo(&["compare", &spec], &out);
    assert_eq!(res.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&res.stderr).contains("nope.json"));
}

#[test]
fn heatmap_grid_of_two_has_corner_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "run.json",
        r#"{"evaluator": {"analytic_benchmark": {"id": "linear_2d"}}, "j_max": 2, "k_max": 3, "seed": 1}"#,
    );
    let out = tmp.path().join("out");
    assert!(ctxbo(&["learn", &cfg], &out).status.success());
    let maps = tmp.path().join("maps");
    let res = ctxbo(&["heatmap", out.join("model.json").to_str().unwrap(), "--grid", "2"], &maps);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for d in 0..2 {
        let r = rows(&maps.join(format!("heatmap_z{d}.csv")));
        assert_eq!(r.len(), 4);
        let corners: Vec<String> = r.iter().map(|l| l.rsplitn(2, ',').nth(1).unwrap().to_string()).collect();
        assert_eq!(corners, ["-1,-1", "-1,1", "1,-1", "1,1"]);
    }
    assert_eq!(rows(&maps.join("sampled_contexts.csv")).len(), 2);
    assert_eq!(
        ctxbo(&["heatmap", out.join("model.json").to_str().unwrap(), "--grid", "1"], &maps).status.code(),
        Some(2)
    );
}

#[test]
fn simulate_and_compare_cav_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "sim.json",
        r#"{"evaluator": {"cav_sim": {}}, "j_max": 1, "k_max": 1, "seed": 0}"#,
    );
    let out = tmp.path().join("sim");
    let res = ctxbo(&["simulate", &cfg, "--z", "-1", "0", "--theta", "0.5", "-0.5", "--seed", "3"], &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,p1,v1,a1,p2,v2,a2\n"));

    let spec = write(
        tmp.path(),
        "spec.json",
        r#"{"controllers": [{"fixed": {"name": "one", "z": [-1, 0]}}, {"fixed": {"name": "two", "z": [-1, 0]}}],
            "episodes": 2, "seed": 5}"#,
    );
    let out = tmp.path().join("cmp");
    let res = ctxbo(&["compare", &spec], &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = rows(&out.join("comparison.csv"));
    assert_eq!(table.len(), 2);
    assert_eq!(table[0].strip_prefix("one"), table[1].strip_prefix("two"));
    assert_eq!(fs::read(out.join("manifest_one.csv")).unwrap(), fs::read(out.join("manifest_two.csv")).unwrap());
}

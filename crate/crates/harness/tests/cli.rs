use std::path::Path;
use std::process::{Command, Output};

fn pie(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pie"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PIE_OUT_DIR")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

const CONFIG: &str = r#"
k = 4
n = 2000
grid_size = 49
alpha_levels = [0.05, 0.1]
seeds = [3, 4]

[model]
family = "poisson-gamma"

[data]
theta0 = 2.5

[chain]
t_total = 4000

[[functionals]]
coordinate = 0
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_report_and_refuses_to_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let out = pie(&["run", "--config", &cfg, "--out", "rep"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["quantiles.csv", "intervals.csv", "metrics.json"] {
        assert!(tmp.path().join("rep").join(name).exists(), "{name}");
    }
    assert!(!tmp.path().join("rep/timings.json").exists());

    let again = pie(&["run", "--config", &cfg, "--out", "rep"], tmp.path());
    assert_eq!(code(&again), 3);
    assert!(String::from_utf8_lossy(&again.stderr).contains("refusing to overwrite"));

    let forced = pie(&["run", "--config", &cfg, "--out", "rep", "--overwrite", "--timings"], tmp.path());
    assert_eq!(code(&forced), 0);
    assert!(tmp.path().join("rep/timings.json").exists());

    let report = pie(&["report", "--dir", "rep"], tmp.path());
    assert_eq!(code(&report), 0);
    let text = String::from_utf8_lossy(&report.stdout);
    // header plus 2 seeds × 2 levels
    assert_eq!(text.lines().count(), 5);
    assert!(text.contains("theta0"));
}

#[test]
fn worker_count_does_not_change_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    for (dir, workers) in [("one", "1"), ("eight", "8")] {
        let out = pie(
            &["run", "--config", &cfg, "--out", dir, "--workers", workers, "--sampler", "metropolis"],
            tmp.path(),
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["quantiles.csv", "intervals.csv", "metrics.json"] {
        let a = std::fs::read(tmp.path().join("one").join(name)).unwrap();
        let b = std::fs::read(tmp.path().join("eight").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn out_dir_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let out = Command::new(env!("CARGO_BIN_EXE_pie"))
        .args(["run", "--config", &cfg])
        .current_dir(tmp.path())
        .env("PIE_OUT_DIR", tmp.path().join("from-env"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(tmp.path().join("from-env/metrics.json").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_key = write_config(tmp.path(), &format!("{CONFIG}\nunknown_key = 1\n"));
    assert_eq!(code(&pie(&["run", "--config", &bad_key], tmp.path())), 2);

    let bad_k = write_config(tmp.path(), &CONFIG.replace("k = 4", "k = 0"));
    assert_eq!(code(&pie(&["run", "--config", &bad_k], tmp.path())), 2);

    let missing = pie(&["run", "--config", "nope.toml"], tmp.path());
    assert_eq!(code(&missing), 3);
}

#[test]
fn simulate_then_run_on_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = pie(
        &["simulate", "--family", "normal-linear-nig", "--n", "600", "--p", "3", "--seed", "2", "--out", "lin.csv"],
        tmp.path(),
    );
    assert_eq!(code(&sim), 0, "{}", String::from_utf8_lossy(&sim.stderr));
    let header = std::fs::read_to_string(tmp.path().join("lin.csv")).unwrap();
    assert!(header.starts_with("y,x1,x2,x3"));

    let cfg = write_config(
        tmp.path(),
        r#"
        k = 3
        grid_size = 19
        [model]
        family = "normal-linear-nig"
        [data]
        path = "lin.csv"
        [chain]
        t_total = 2000
        [[functionals]]
        coordinate = 0
        [[functionals]]
        name = "noise"
        coordinate = 3
        "#,
    );
    let out = pie(&["run", "--config", &cfg, "--out", "rep", "--mode", "consensus"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("rep/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["mode"], "consensus");
    assert_eq!(metrics["cells"].as_array().unwrap().len(), 2);
    assert_eq!(metrics["cells"][1]["functional"], "noise");
}

#[test]
fn malformed_csv_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.csv"), "y\n1\nnot-a-number\n").unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
        k = 1
        [model]
        family = "poisson-gamma"
        [data]
        path = "bad.csv"
        [[functionals]]
        coordinate = 0
        "#,
    );
    let out = pie(&["run", "--config", &cfg, "--out", "rep"], tmp.path());
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn combine_and_metrics_commands() {
    let tmp = tempfile::tempdir().unwrap();
    for (j, shift) in [0.0, 1.0].iter().enumerate() {
        let rows: String = (0..200).map(|i| format!("{}\n", shift + i as f64 / 200.0)).collect();
        std::fs::write(tmp.path().join(format!("s{j}.csv")), format!("theta\n{rows}")).unwrap();
    }
    let out = pie(
        &["combine", "--draws", "s0.csv", "s1.csv", "--grid-size", "9", "--out", "pie.csv"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(tmp.path().join("pie.csv")).unwrap();
    // u = 0.5 picks order statistic 100 of each shard: (0.495 + 1.495) / 2
    let median: f64 = table
        .lines()
        .find_map(|l| l.strip_prefix("0.5,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((median - 0.995).abs() < 1e-12, "{table}");

    let shifted: String = table
        .lines()
        .skip(1)
        .map(|l| {
            let (u, v) = l.split_once(',').unwrap();
            format!("{u},{}\n", v.parse::<f64>().unwrap() + 0.25)
        })
        .collect();
    std::fs::write(tmp.path().join("shifted.csv"), format!("u,value\n{shifted}")).unwrap();
    let out = pie(&["metrics", "--tables", "pie.csv", "shifted.csv"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["w2"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    assert!((v["quantile_gap"].as_f64().unwrap() - 0.25).abs() < 1e-12);

    let out = pie(&["metrics", "--sizes", "100,1000,10000", "--w2", "0.1,0.01,0.001"], tmp.path());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["rate_slope"].as_f64().unwrap() + 1.0).abs() < 1e-12);

    let out = pie(&["metrics", "--sizes", "100,1000"], tmp.path());
    assert_eq!(code(&out), 2);
}

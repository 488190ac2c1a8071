use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_excite")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn run_config(cmd: &str, config: &str, dir: &Path, extra: &[&str]) -> (Output, PathBuf) {
    fs::create_dir_all(dir).unwrap();
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (run(&args), out)
}

fn records(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

const SPRING: &str = r#"
seed = 1

[model]
name = "spring_damper"
horizon = 10.0
step = 0.01
"#;

fn sensitivity_config(engine: &str) -> String {
    format!("{SPRING}\n{engine}\n[signal]\nkind = \"sinusoid\"\nparams = [1.0, 0.5, 0.0]\n")
}

fn optimize_config(q: &str, extra: &str, iters: usize) -> String {
    format!(
        "{SPRING}
[engine]
kind = \"intrusive\"

[signal]
kind = \"sinusoid\"
bounds = [[0.0, 1.0], [0.0, 5.0], [0.0, 6.283185307179586]]

[weights]
q = {q}

[optimize]
max_iter = {iters}
{extra}"
    )
}

#[test]
fn intrusive_sensitivity_writes_nonnegative_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config("sensitivity", &sensitivity_config("[engine]\nkind = \"intrusive\""), dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = records(&out.join("sensitivity.csv"));
    assert_eq!(header, ["t", "output", "parameter", "S", "S_min", "dS", "SU"]);
    assert_eq!(rows.len(), 2 * 1001);
    assert!(rows.iter().any(|r| r[2] == "c") && rows.iter().any(|r| r[2] == "d"));
    assert!(rows.iter().all(|r| num(&r[3]) >= 0.0 && num(&r[5]) >= 0.0 && num(&r[5]) <= num(&r[3])));
    let (_, impact) = records(&out.join("impact.csv"));
    assert_eq!(impact.len(), 2);
    assert!(impact.iter().all(|r| num(&r[2]) > 0.0));
    let meta = fs::read_to_string(out.join("impact.csv.meta")).unwrap();
    for key in ["created = ", "config_sha256 = ", "seed = 1", "version = "] {
        assert!(meta.contains(key), "{meta}");
    }
}

#[test]
fn transport_engine_agrees_with_intrusive_indices() {
    let dir = tempfile::tempdir().unwrap();
    let (a, out_a) = run_config(
        "sensitivity",
        &sensitivity_config("[engine]\nkind = \"intrusive\"\nstride = 10"),
        &dir.path().join("a"),
        &[],
    );
    let (b, out_b) = run_config(
        "sensitivity",
        &sensitivity_config("[engine]\nkind = \"transport\"\nsamples = 1000\nstride = 10"),
        &dir.path().join("b"),
        &[],
    );
    assert!(a.status.success() && b.status.success());
    let (_, su_rows) = records(&out_a.join("sensitivity.csv"));
    let (header, ot_rows) = records(&out_b.join("sensitivity.csv"));
    assert_eq!(header, ["t", "parameter", "xi_B", "iota_B", "iota_S", "S_unnormalized"]);
    let su: HashMap<(String, String), f64> = su_rows
        .iter()
        .filter(|r| !r[6].is_empty())
        .map(|r| ((r[0].clone(), r[2].clone()), num(&r[6])))
        .collect();
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for r in &ot_rows {
        if let Some(v) = su.get(&(r[0].clone(), r[1].clone())) {
            worst = worst.max((num(&r[4]) - v).abs());
            compared += 1;
        }
    }
    assert!(compared > 150);
    // median error of the 10-sample estimator in the convergence study is about 0.3
    assert!(worst < 0.3, "{worst}");
}

#[test]
fn invalid_configs_exit_with_code_two_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("negative", sensitivity_config("[engine]\nkind = \"transport\"\nsamples = -5")),
        ("unknown_key", sensitivity_config("[engine]\nkind = \"intrusive\"\ncolour = 3")),
        ("unknown_model", sensitivity_config("[engine]\nkind = \"intrusive\"").replace("spring_damper", "pendulum")),
        ("no_lpv", sensitivity_config("[engine]\nkind = \"intrusive\"").replace("spring_damper", "single_track_nl")),
        ("bad_step", sensitivity_config("[engine]\nkind = \"intrusive\"").replace("step = 0.01", "step = 0.03")),
        ("no_signal", format!("{SPRING}\n[engine]\nkind = \"intrusive\"\n")),
    ];
    for (name, cfg) in cases {
        let (o, out) = run_config("sensitivity", &cfg, &dir.path().join(name), &[]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "{name} wrote output");
    }
    let o = run(&["sensitivity", "--config", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    // RK4 is unstable at this step, so the surrogate blows up
    let cfg = sensitivity_config("[engine]\nkind = \"intrusive\"")
        .replace("horizon = 10.0", "horizon = 1000.0")
        .replace("step = 0.01", "step = 10.0");
    let (o, out) = run_config("sensitivity", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn optimize_spring_constant_task_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = optimize_config("[1.0, 0.0]", "", 60);
    let (a, out_a) = run_config("optimize", &cfg, &dir.path().join("a"), &[]);
    let (b, out_b) = run_config("optimize", &cfg, &dir.path().join("b"), &[]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(b.status.success());
    let bytes_a = fs::read(out_a.join("optimum.csv")).unwrap();
    assert_eq!(bytes_a, fs::read(out_b.join("optimum.csv")).unwrap());
    let (header, rows) = records(&out_a.join("optimum.csv"));
    assert_eq!(header, ["u0", "f", "phase", "J", "J_penalized", "feasible"]);
    assert!((num(&rows[0][0]) - 1.0).abs() <= 0.01);
    assert!(num(&rows[0][1]) <= 0.05);
    let (_, trace) = records(&out_a.join("trace.csv"));
    let best: Vec<f64> = trace.iter().map(|r| num(&r[1])).collect();
    assert!(best.windows(2).all(|w| w[1] >= w[0]));
    let (_, signal) = records(&out_a.join("signal.csv"));
    assert_eq!(signal.len(), 1001);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = optimize_config("[1.0, 0.0]", "refine = false", 2);
    let (o, out) = run_config("optimize", &cfg, dir.path(), &["--seed", "99", "--threads", "1"]);
    assert!(o.status.success());
    assert!(fs::read_to_string(out.join("optimum.csv.meta")).unwrap().contains("seed = 99"));
}

#[test]
fn zero_amplitude_bound_gives_zero_signal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = optimize_config("[1.0, 0.0]", "", 30) + "\n[admissible]\nu_max = 0.0\n";
    let (o, out) = run_config("optimize", &cfg, dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = records(&out.join("optimum.csv"));
    assert_eq!(rows[0][5], "true");
    let (_, signal) = records(&out.join("signal.csv"));
    assert!(signal.iter().all(|r| num(&r[1]) == 0.0));
}

fn identify_config(noise: f64, datasets: &str) -> String {
    format!(
        "{SPRING}
[engine]
kind = \"intrusive\"

[signal]
kind = \"sinusoid\"

[identify]
truth = [2.0, 1.0]
start = [1.9, 1.05]
bounds = [[1.0, 3.0], [0.5, 2.0]]
noise_std = {noise}
{datasets}"
    )
}

const TWO_DATASETS: &str = r#"
[[identify.datasets]]
label = "a"
params = [1.0, 0.002, 1.59]

[[identify.datasets]]
label = "b"
params = [1.0, 0.35, 2.31]
"#;

#[test]
fn zero_noise_identification_recovers_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config("identify", &identify_config(0.0, TWO_DATASETS), dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = records(&out.join("estimates.csv"));
    assert_eq!(header, ["dataset", "total_time", "c_mean", "c_std", "d_mean", "d_std"]);
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["a", "b", "combined"]);
    for r in &rows {
        assert!((num(&r[2]) - 2.0).abs() < 1e-4 && (num(&r[4]) - 1.0).abs() < 1e-4);
        assert!(num(&r[3]) < 1e-5 && num(&r[5]) < 1e-5);
    }
    assert_eq!(num(&rows[2][1]), 20.0);
}

#[test]
fn noisy_identification_orders_uncertainties_by_task() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config("identify", &identify_config(0.0837, TWO_DATASETS), dir.path(), &[]);
    assert!(o.status.success());
    let (_, rows) = records(&out.join("estimates.csv"));
    let sd = |r: &Vec<String>| (num(&r[3]), num(&r[5]));
    let (a, b, ab) = (sd(&rows[0]), sd(&rows[1]), sd(&rows[2]));
    assert!(a.0 < a.1, "task a should pin the spring constant");
    assert!(b.1 < b.0, "task b should pin the damping");
    assert!(ab.0 <= 1.3 * a.0.min(b.0) && ab.1 <= 1.3 * a.1.min(b.1));
}

fn rank_config(signals: &str) -> String {
    format!(
        "{SPRING}
[engine]
kind = \"intrusive\"

[signal]
kind = \"sinusoid\"

[rank]
sort_by = \"d\"
{signals}"
    )
}

#[test]
fn ranking_of_zero_and_duplicate_signals() {
    let dir = tempfile::tempdir().unwrap();
    let signals = r#"
[[rank.signals]]
label = "zero"
params = [0.0, 0.5, 0.0]

[[rank.signals]]
label = "slow"
params = [1.0, 0.05, 0.0]

[[rank.signals]]
label = "fast_1"
params = [1.0, 0.5, 0.0]

[[rank.signals]]
label = "fast_2"
params = [1.0, 0.5, 0.0]
"#;
    let (o, out) = run_config("rank", &rank_config(signals), dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = records(&out.join("ranking.csv"));
    assert_eq!(header, ["signal", "c", "d", "admissible"]);
    let by_label: HashMap<&str, &Vec<String>> = rows.iter().map(|r| (r[0].as_str(), r)).collect();
    assert_eq!(num(&by_label["zero"][1]), 0.0);
    assert_eq!(num(&by_label["zero"][2]), 0.0);
    assert_eq!(by_label["fast_1"][1..], by_label["fast_2"][1..]);
    let d: Vec<f64> = rows.iter().map(|r| num(&r[2])).collect();
    assert!(d.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(num(&rows.last().unwrap()[2]), 0.0);
}

#[test]
fn rank_rejects_unknown_sort_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = rank_config("[[rank.signals]]\nlabel = \"x\"\nparams = [1.0, 0.5, 0.0]\n").replace("sort_by = \"d\"", "sort_by = \"mass\"");
    let (o, _) = run_config("rank", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn surrogate_export_round_trips_header() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config("surrogate", &format!("{SPRING}\n[engine]\nkind = \"intrusive\"\n"), dir.path(), &[]);
    assert!(o.status.success());
    let text = fs::read_to_string(out.join("surrogate.txt")).unwrap();
    assert!(text.starts_with("# excite surrogate v1\ndims 1 1 1 10 2 3\n"));
}

#[test]
fn example_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.parse::<toml::Table>().is_ok(), "{}", path.display());
        n += 1;
    }
    assert!(n >= 5);
}

use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use bstable::measure::normalize_lambda;
use bstable::rng::replica_seed;
use bstable::sim::{read_atoms_csv, simulate_population};
use bstable::{Alpha, Caps, LambdaSpec, Window};

fn bstable(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bstable"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn wright_at_zero_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = bstable(&["analytic", "wright", "--rho", "1", "--beta", "1", "--z", "0"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "1");
}

#[test]
fn c_alpha_for_alpha_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = bstable(&["analytic", "c-alpha", "--alpha", "1"], dir.path());
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!((v - (-2.0f64).exp()).abs() < 1e-15);
}

#[test]
fn tiny_window_dumps_only_the_root() {
    let dir = tempfile::tempdir().unwrap();
    let o = bstable(&["simulate", "--seed", "1", "--x-max", "1e-9", "--out", "run"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("run/atoms.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2, "{csv}");
    assert!(lines[1].starts_with("0,0,,"), "{}", lines[1]);
}

#[test]
fn dump_round_trips_the_simulated_atoms() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--seed", "11", "--replicas", "3", "--alpha", "1.5", "--t-max", "1.5", "--x-max", "1.2"];
    let o = bstable(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let f = fs::File::open(dir.path().join("atoms.csv")).unwrap();
    let dumped = read_atoms_csv(BufReader::new(f)).unwrap();
    assert_eq!(dumped.len(), 3);
    let model = normalize_lambda(&LambdaSpec::single(vec![1.0]).unwrap(), Alpha::new(1.5).unwrap());
    let window = Window::new(1.5, 1.2).unwrap();
    for (r, atoms) in dumped {
        let pop = simulate_population(&model, window, replica_seed(11, r), Caps::default());
        assert_eq!(atoms, pop.atoms);
    }
}

#[test]
fn mean_cdf_report_references_wright_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = bstable(
        &["experiment", "verify_mean_cdf", "--seed", "3", "--replicas", "2000", "--out", "rep"],
        dir.path(),
    );
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("verify_mean_cdf: PASS"));
    let json = fs::read_to_string(dir.path().join("rep/verify_mean_cdf.json")).unwrap();
    assert!(json.contains("2.2795853"), "{json}");
    let csv = fs::read_to_string(dir.path().join("rep/verify_mean_cdf_replicas.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2001);
}

fn without_runtime(s: &str) -> String {
    s.lines().filter(|l| !l.contains("runtime_seconds")).collect::<Vec<_>>().join("\n")
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = bstable(
            &["experiment", "many_to_one", "--seed", "5", "--replicas", "500", "--n-list", "1,2", "--out", out],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stdout(&o));
    }
    for file in ["many_to_one.json", "many_to_one_replicas.csv"] {
        let a = fs::read_to_string(dir.path().join("a").join(file)).unwrap();
        let b = fs::read_to_string(dir.path().join("b").join(file)).unwrap();
        assert_eq!(without_runtime(&a), without_runtime(&b), "{file}");
    }
    let o = bstable(
        &["--threads", "1", "experiment", "many_to_one", "--seed", "5", "--replicas", "500", "--n-list", "1,2", "--out", "c"],
        dir.path(),
    );
    assert!(o.status.success());
    let a = fs::read_to_string(dir.path().join("a/many_to_one_replicas.csv")).unwrap();
    let c = fs::read_to_string(dir.path().join("c/many_to_one_replicas.csv")).unwrap();
    assert_eq!(a, c);
}

#[test]
fn config_file_drives_an_experiment() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        r#"
seed = 2
replicas = 3000
output = "from_config"

[model]
alpha = 1.0
[[model.entries]]
weight = 1
offsets = [1.0]

[experiment]
name = "verify_mean_cdf"
[experiment.params]
x = 0.5
"#,
    )
    .unwrap();
    let o = bstable(&["experiment", "--config", "run.toml"], dir.path());
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let json = fs::read_to_string(dir.path().join("from_config/verify_mean_cdf.json")).unwrap();
    assert!(json.contains("\"seed\": 2"));
}

#[test]
fn seed_is_mandatory() {
    let dir = tempfile::tempdir().unwrap();
    let o = bstable(&["experiment", "verify_mean_cdf", "--replicas", "10"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bstable(&["experiment", "no_such_thing", "--seed", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_flag_values_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = bstable(&["analytic", "wright", "--rho", "-1", "--beta", "1", "--z", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = bstable(&["simulate", "--seed", "1", "--alpha", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infeasible_window_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = bstable(&["simulate", "--seed", "1", "--t-max", "50", "--x-max", "50", "--max-atoms", "1000"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(!dir.path().join("atoms.csv").exists());
}

#[test]
fn failing_check_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    // at n=2 the median of z_n/n^2 still sits far above 3 e^{-2}
    let o = bstable(
        &["experiment", "min_position", "--seed", "1", "--replicas", "200", "--n-list", "2", "--x-max", "30"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("min_position: FAIL"));
}

#[test]
fn lists_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let o = bstable(&["list-experiments"], dir.path());
    let s = stdout(&o);
    for name in ["verify_mean_cdf", "verify_t2_window", "convex_hull", "structural_invariants"] {
        assert!(s.contains(name), "{s}");
    }
}

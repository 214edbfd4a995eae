use std::path::Path;
use std::process::{Command, Output};

fn dpdhsic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpdhsic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn generate(dir: &Path, name: &str, extra: &[&str]) -> String {
    let out = path(dir, name);
    let mut args = vec!["generate", "--out", &out];
    args.extend_from_slice(extra);
    let o = dpdhsic(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    out
}

#[test]
fn missing_data_flag_is_a_usage_error() {
    let o = dpdhsic(&["test", "--test", "dpdhsic", "--epsilon", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--data"));
}

#[test]
fn help_exits_cleanly() {
    let o = dpdhsic(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("simulate"));
}

#[test]
fn noiseless_product_dependence_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(
        dir.path(),
        "x.csv",
        &[
            "--generator",
            "product-dependence",
            "--n",
            "500",
            "--sigma",
            "0",
            "--seed",
            "3",
        ],
    );
    let o = dpdhsic(&[
        "test",
        "--data",
        &data,
        "--groups",
        "1,1,1",
        "--test",
        "dpdhsic",
        "--epsilon",
        "1",
        "--seed",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "REJECT\n");
}

#[test]
fn identical_rows_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let file = path(dir.path(), "same.csv");
    let mut text = String::from("g0_0,g1_0\n");
    for _ in 0..40 {
        text += "1.5,-2\n";
    }
    std::fs::write(&file, text).unwrap();
    // the median heuristic has nothing to work with
    let o = dpdhsic(&["test", "--data", &file, "--test", "dpdhsic", "--epsilon", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let mut accepts = 0;
    for seed in 0..20 {
        let s = seed.to_string();
        let o = dpdhsic(&[
            "test",
            "--data",
            &file,
            "--test",
            "dpdhsic",
            "--epsilon",
            "1",
            "--bandwidth",
            "1,1",
            "--seed",
            &s,
        ]);
        assert_eq!(o.status.code(), Some(0));
        accepts += usize::from(stdout(&o) == "ACCEPT\n");
    }
    assert!(accepts >= 16, "{accepts} of 20 accepted");
}

#[test]
fn output_is_reproducible_and_internals_are_labelled() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(
        dir.path(),
        "x.csv",
        &["--generator", "null-gaussian", "--n", "60", "--d", "3"],
    );
    let args = [
        "test",
        "--data",
        &data,
        "--test",
        "mdphsic",
        "--epsilon",
        "0.5",
        "--seed",
        "9",
        "--unsafe-internals",
    ];
    let a = dpdhsic(&args);
    let b = dpdhsic(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let second = text.lines().nth(1).unwrap();
    assert!(second.starts_with("NOT-DP p_value="), "{second}");
    let plain = dpdhsic(&args[..args.len() - 1]);
    assert_eq!(stdout(&plain).lines().count(), 1);
}

#[test]
fn groups_flag_must_match_header() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(
        dir.path(),
        "x.csv",
        &[
            "--generator",
            "toeplitz",
            "--n",
            "30",
            "--d",
            "4",
            "--rho",
            "0.3",
            "--groups",
            "2",
        ],
    );
    let header = std::fs::read_to_string(&data)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(header, "g0_0,g0_1,g1_0,g1_1");
    let o = dpdhsic(&[
        "test",
        "--data",
        &data,
        "--groups",
        "1,3",
        "--test",
        "tot",
        "--epsilon",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn u_statistic_guard_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(
        dir.path(),
        "x.csv",
        &["--generator", "null-gaussian", "--n", "30", "--d", "3"],
    );
    let o = dpdhsic(&["test", "--data", &data, "--test", "dpdhsic-u", "--epsilon", "1"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("21"), "{}", stderr(&o));
}

#[test]
fn io_errors_exit_with_3() {
    let o = dpdhsic(&[
        "test",
        "--data",
        "/nonexistent/x.csv",
        "--test",
        "dpdhsic",
        "--epsilon",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn dag_check_modes_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(
        dir.path(),
        "sem.csv",
        &["--generator", "sem-chain", "--n", "150", "--d", "3", "--seed", "4"],
    );
    let dag = path(dir.path(), "chain.dag");
    std::fs::write(&dag, "0:\n1: 0\n2: 1\n").unwrap();
    let o = dpdhsic(&[
        "dag-check",
        "--data",
        &data,
        "--dag",
        &dag,
        "--epsilon",
        "1",
        "--B",
        "99",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(["REJECT\n", "ACCEPT\n"].contains(&stdout(&o).as_str()));

    let o = dpdhsic(&[
        "dag-check",
        "--data",
        &data,
        "--dag",
        &dag,
        "--epsilon",
        "1",
        "--B",
        "99",
        "--reps",
        "40",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o);
    assert!(
        line.starts_with("rejection_rate=") && line.contains("reps=40"),
        "{line}"
    );

    let missing = path(dir.path(), "none.dag");
    let o = dpdhsic(&["dag-check", "--data", &data, "--dag", &missing, "--epsilon", "1"]);
    assert_eq!(o.status.code(), Some(3));

    let cyclic = path(dir.path(), "cyclic.dag");
    std::fs::write(&cyclic, "0: 2\n1: 0\n2: 1\n").unwrap();
    let o = dpdhsic(&["dag-check", "--data", &data, "--dag", &cyclic, "--epsilon", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cycle"));
}

#[test]
fn audit_modes() {
    let o = dpdhsic(&[
        "audit",
        "--mode",
        "sensitivity",
        "--d",
        "2",
        "--n",
        "20",
        "--draws",
        "50",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(
        text.lines().any(|l| l.starts_with("violation") && l.ends_with("no")),
        "{text}"
    );

    let o = dpdhsic(&["audit", "--mode", "epsilon", "--draws", "300", "--epsilon", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("upper_95"));

    let o = dpdhsic(&["audit", "--mode", "sensitivity", "--draws", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_reports_schema_errors_by_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = path(dir.path(), "bad.json");
    let out = path(dir.path(), "out.csv");
    std::fs::write(
        &cfg,
        r#"{"generator": {"kind": "null-gaussian", "n": 20, "d": 2, "sigma": 1},
            "tests": ["dpdhsic"], "grid": {"param": "n", "values": [20]},
            "replications": 2, "seed": 1}"#,
    )
    .unwrap();
    let o = dpdhsic(&["simulate", "--config", &cfg, "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/generator/sigma"), "{}", stderr(&o));

    std::fs::write(&cfg, "{\"generator\": ").unwrap();
    let o = dpdhsic(&["simulate", "--config", &cfg, "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bundled_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["sim1.json", "sim1_eps.json", "sim2_eps.json"] {
        let spec = dpdhsic::harness::read_spec_file(&root.join(name)).unwrap();
        assert_eq!(spec.tests.len(), 4, "{name}");
        assert_eq!((spec.alpha, spec.resamples, spec.delta), (0.05, 200, 0.0));
    }
    let sim1 = dpdhsic::harness::read_spec_file(&root.join("sim1.json")).unwrap();
    assert_eq!(sim1.grid.values.len(), 10);
    assert_eq!(sim1.generator.d(), 3);
}

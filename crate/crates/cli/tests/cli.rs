use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jnplus"))
}

fn example() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/example_1d_l2.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn gen(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut args = vec!["gen", "--out", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn seminorm_on_worked_example() {
    let out = run(&["seminorm", "--input", example().to_str().unwrap(), "--p", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["weight"]["exact"], "5/2");
    assert_eq!(v["witness"].as_array().unwrap().len(), 3);
}

#[test]
fn theorem_on_constant_is_vacuous_pass() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen(dir.path(), "c.bin", &["--kind", "constant", "--value", "3", "--n", "2", "-L", "3"]);
    let out = run(&["verify", "theorem", "--input", g.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["pass"], true);
    let records = v["entries"][0]["result"]["records"].as_array().unwrap();
    assert!(records.iter().all(|r| r["e_grid"]["exact"] == "0" && r["dist"]["exact"] == "0"));
}

#[test]
fn oracle_size_bound() {
    let dir = tempfile::tempdir().unwrap();
    let small = gen(dir.path(), "a.json", &["--kind", "uniform-random", "--n", "1", "-L", "3"]);
    assert_eq!(run(&["oracle", "--input", small.to_str().unwrap()]).status.code(), Some(0));
    let mid = gen(dir.path(), "b.json", &["--kind", "uniform-random", "--n", "2", "-L", "2"]);
    assert_eq!(run(&["oracle", "--input", mid.to_str().unwrap()]).status.code(), Some(0));
    let big = gen(dir.path(), "c.json", &["--kind", "uniform-random", "--n", "2", "-L", "3"]);
    let out = run(&["oracle", "--input", big.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("enumeration bound"));
}

#[test]
fn generation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--kind", "dyadic-martingale", "--n", "2", "-L", "3", "--seed", "5"];
    let a = gen(dir.path(), "a.bin", &args);
    let b = gen(dir.path(), "b.bin", &args);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn reports_are_byte_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.json");
    let four = dir.path().join("four.json");
    for (out, jobs) in [(&one, "1"), (&four, "4")] {
        let o = run(&[
            "verify", "good-lambda", "--manifest", "pinned", "--jobs", jobs, "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&one).unwrap(), std::fs::read(&four).unwrap());
}

#[test]
fn usage_and_input_errors_exit_two() {
    let e = example();
    let e = e.to_str().unwrap();
    let cases: [&[&str]; 5] = [
        &["seminorm", "--input", "/nonexistent/grid.bin"],
        &["seminorm", "--input", e, "--p", "1"],
        &["verify", "good-lambda", "--input", e, "--b", "1/2"],
        &["decompose", "--input", e, "--lambda", "0"],
        &["maximal", "--input", e, "--mode", "fixed:zero"],
    ];
    for args in cases {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let msg = String::from_utf8_lossy(&out.stderr);
        let flag = args.iter().find(|a| a.starts_with("--") && msg.contains(*a));
        assert!(flag.is_some(), "{args:?}: {msg}");
    }
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn decompose_and_maximal_csv() {
    let dir = tempfile::tempdir().unwrap();
    let e = example();
    let csv = dir.path().join("m.csv");
    let out = run(&[
        "maximal", "--input", e.to_str().unwrap(), "--csv", csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 5);
    let values: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(values, ["2.0", "2.0", "4.0", "0.0"]);

    let out = run(&["decompose", "--input", e.to_str().unwrap(), "--lambda", "1/2,3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["levels"].as_array().unwrap().len(), 2);

    let tcsv = dir.path().join("t.csv");
    let out = run(&[
        "verify", "theorem", "--input", e.to_str().unwrap(), "--csv", tcsv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let header = std::fs::read_to_string(&tcsv).unwrap();
    assert!(header.starts_with("entry,lambda,E_grid,E_aug,dist,bound,pass"));
}

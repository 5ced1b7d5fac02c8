use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn occplan(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_occplan"))
        .args(args)
        .current_dir(cwd)
        .env_remove("OCCPLAN_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn gen_plan_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    let out = occplan(&["gen", "lead-braking", "--seed", "5", "--out", "sc"], cwd);
    assert!(out.status.success(), "{}", stderr(&out));
    let scenario = cwd.join("sc/lead-braking-0005.json");
    assert!(scenario.is_file());
    assert!(cwd.join("sc/lead-braking-0005.occupancy.bin").is_file());

    let out = occplan(
        &[
            "plan",
            "sc/lead-braking-0005.json",
            "--out",
            "res",
            "--plot",
            "--weights",
            "safety=6",
            "progress=0.2",
        ],
        cwd,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("lead-braking-0005"));
    let record = cwd.join("res/lead-braking-0005.plan.json");
    let svg = fs::read_to_string(cwd.join("res/lead-braking-0005.plan.svg")).unwrap();
    assert!(svg.starts_with("<svg"));

    let plan: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&record).unwrap()).unwrap();
    let out = occplan(
        &[
            "eval",
            "sc/lead-braking-0005.json",
            "res/lead-braking-0005.plan.json",
        ],
        cwd,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let eval: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(eval["refined"], plan["metrics"]);
    assert_eq!(eval["initial"], plan["initial_metrics"]);
    assert_eq!(eval["refined"]["collision_rate"], 0.0);
}

#[test]
fn out_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_occplan"))
        .args(["gen", "empty", "--seed", "2", "--count", "2"])
        .current_dir(dir.path())
        .env("OCCPLAN_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("from-env/empty-0002.json").is_file());
    assert!(dir.path().join("from-env/empty-0003.json").is_file());
}

#[test]
fn bench_keeps_input_order_and_reports_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    for (archetype, seed) in [("red-light", "1"), ("empty", "4")] {
        let out = occplan(&["gen", archetype, "--seed", seed, "--out", "sc"], cwd);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let out = occplan(&["bench", "sc", "--out", "b", "--jobs", "2"], cwd);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("planned 2 of 2"));
    let report = fs::read_to_string(cwd.join("b/bench.txt")).unwrap();
    assert!(report.contains("refined") && report.contains("red-light"));

    let mut reader = csv::Reader::from_path(cwd.join("b/bench.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    assert_eq!(&headers[0], "scenario");
    let names: Vec<String> = reader
        .records()
        .map(|r| r.unwrap()[0].to_string())
        .collect();
    assert_eq!(names, ["empty-0004", "red-light-0001"]);

    // A broken file fails the run but the good scenarios still land in the CSV.
    fs::write(cwd.join("sc/zz-broken.json"), "{}").unwrap();
    let out = occplan(&["bench", "sc", "--out", "b2"], cwd);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(
        err.contains("zz-broken.json") && err.contains("load stage"),
        "{err}"
    );
    let rows = csv::Reader::from_path(cwd.join("b2/bench.csv"))
        .unwrap()
        .records()
        .count();
    assert_eq!(rows, 2);
    let report = fs::read_to_string(cwd.join("b2/bench.txt")).unwrap();
    assert!(report.contains("failed: ") && report.contains("zz-broken.json"));
}

#[test]
fn errors_name_the_failing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = occplan(&["plan", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with("error: load stage"), "{err}");
    assert!(err.contains("missing.json"), "{err}");

    let out = occplan(&["plan", "x.json", "-w", "speed=3"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("unknown cost term"));

    let out = occplan(&["gen", "unicorn"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("unknown archetype"));

    let out = occplan(&["bench"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

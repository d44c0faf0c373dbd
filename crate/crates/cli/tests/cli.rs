use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anchor-sim"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn path(p: PathBuf) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn generated_scenario_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path().join("out"));
    let o = bin(&[
        "run",
        "--gen-seed",
        "3",
        "--counts",
        "1,1,1,1,2",
        "--trials",
        "2",
        "--intervals",
        "2",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "results.csv",
        "trace.csv",
        "summary.csv",
        "allocation.json",
        "manifest.json",
    ] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
    let results = std::fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    // header + 2 trials x 3 methods x 2 intervals x 1 target
    assert_eq!(results.lines().count(), 13);
    assert!(results.starts_with("trial,method,interval,target,err_x"));
}

#[test]
fn runs_are_reproducible_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("desk3.toml");
    let run = |name: &str, jobs: &str| {
        let out = path(dir.path().join(name));
        let o = bin(&[
            "run",
            "--scenario",
            &sc,
            "--trials",
            "3",
            "--intervals",
            "2",
            "--seed",
            "5",
            "--jobs",
            jobs,
            "--out",
            &out,
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    run("a", "1");
    run("b", "4");
    let manifest = path(dir.path().join("a/manifest.json"));
    let out = path(dir.path().join("c"));
    assert_eq!(
        code(&bin(&["run", "--manifest", &manifest, "--out", &out])),
        0
    );
    for f in ["results.csv", "trace.csv", "summary.csv", "allocation.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(
            a,
            std::fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
        assert_eq!(
            a,
            std::fs::read(dir.path().join("c").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn bad_method_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path().join("o"));
    let o = bin(&[
        "run",
        "--scenario",
        &scenario("desk3.toml"),
        "--methods",
        "anchor,greedy",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn unreachable_threshold_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("desk3.toml")).unwrap();
    let text = text.replacen(
        "tier = \"macro\"\n",
        "tier = \"macro\"\nthroughput_threshold = 1000.0\n",
        1,
    );
    let sc = dir.path().join("hard.toml");
    std::fs::write(&sc, text).unwrap();
    let out = path(dir.path().join("o"));
    let o = bin(&[
        "run",
        "--scenario",
        &path(sc),
        "--trials",
        "1",
        "--intervals",
        "1",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_scenario_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path().join("o"));
    let o = bin(&[
        "run",
        "--scenario",
        &path(dir.path().join("nope.toml")),
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn verify_fast_passes_and_catches_a_broken_gradient() {
    let o = bin(&["verify", "fast"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .filter(|l| l.starts_with("PASS"))
            .count()
            == 4
    );
    let o = bin(&["verify", "fast", "--corrupt-gradient"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL analytic gradient"));
}

#[test]
fn gen_writes_a_loadable_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let f = path(dir.path().join("s.toml"));
    assert_eq!(
        code(&bin(&[
            "gen",
            "--gen-seed",
            "9",
            "--counts",
            "1,1,0,2,3",
            "--out",
            &f
        ])),
        0
    );
    let out = path(dir.path().join("o"));
    let o = bin(&[
        "run",
        "--scenario",
        &f,
        "--methods",
        "uniform",
        "--trials",
        "1",
        "--intervals",
        "1",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

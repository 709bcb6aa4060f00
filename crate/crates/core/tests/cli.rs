use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_quadruped-rql"));
    cmd.env_remove("QUADRUPED_RQL_OUT");
    cmd
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/configs"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn shipped_configs_validate() {
    for name in ["default.toml", "standing.toml"] {
        let o = run(&["validate", configs().join(name).to_str().unwrap()]);
        assert!(o.status.success(), "{name}: {}", stdout(&o));
    }
}

#[test]
fn invalid_values_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    for (body, needle) in [
        ("[robot]\nmu = -0.1\n", "robot.mu"),
        ("[gait]\nduty = 0.4\n", "gait.duty"),
        ("[gait]\nbogus = 1\n", "bogus"),
    ] {
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, body).unwrap();
        let o = run(&["validate", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2));
        let all = stdout(&o) + &String::from_utf8_lossy(&o.stderr);
        assert!(all.contains(needle), "{all}");
    }
    let o = run(&["validate", dir.path().join("missing.toml").to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn zero_horizon_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "--horizon", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_is_deterministic_and_echoes_its_config() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&[
            "run", "--controller", "mpc", "--horizon", "5", "--seed", "1", "--duration", "2",
            "--out", d.path().to_str().unwrap(),
        ]);
        assert!(o.status.success());
        assert!(stdout(&o).contains("accumulated cost"));
    }
    let name = "mpc_N5_seed1.csv";
    assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
    let echoed = std::fs::read_to_string(a.path().join("config.toml")).unwrap();
    assert!(echoed.contains("horizon = 5"));
    assert!(echoed.contains("duration = 2.0"));
}

#[test]
fn standing_run_prints_zero_cost() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["run", "--config", configs().join("standing.toml").to_str().unwrap()])
        .env("QUADRUPED_RQL_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).contains("accumulated cost 0.000000e0"), "{}", stdout(&o));
    assert!(dir.path().join("mpc_N5_seed0.csv").exists());
}

#[test]
fn sweep_writes_ordered_summary_and_resummarizes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = ["sweep", "--horizons", "2,1", "--modes", "rql,mpc", "--seeds", "1", "--duration", "1", "--out", out];
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let cells: Vec<&str> = summary.lines().skip(1).map(|l| &l[..l.find(',').unwrap() + 2]).collect();
    assert_eq!(cells, ["mpc,1", "rql,1", "mpc,2", "rql,2"]);

    let o = run(&[&args[..], &["--resummarize"]].concat());
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(dir.path().join("summary.csv")).unwrap(), summary);
}

#[test]
fn single_cell_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["sweep", "--horizons", "3", "--modes", "mpc", "--seeds", "1", "--duration", "1", "--out", out]);
    assert!(o.status.success());
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
}

#[test]
fn sweep_resumes_from_existing_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = ["sweep", "--horizons", "2", "--modes", "mpc", "--seeds", "1", "--duration", "1", "--out", out];
    assert!(run(&args).status.success());
    let episode = dir.path().join("mpc_N2_seed0.csv");
    let before = std::fs::metadata(&episode).unwrap().modified().unwrap();
    assert!(run(&args).status.success());
    assert_eq!(std::fs::metadata(&episode).unwrap().modified().unwrap(), before);
}

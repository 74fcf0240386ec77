use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rewardloop"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &str = r#"
iterations = 2
candidates = 2
ppo_iterations = 10
seed = 3

[ppo]
num_envs = 4
steps_per_env = 64
minibatch = 128
epochs = 2
hidden = [16, 16]

[eval]
seeds = [0]
commands = [0.5]
"#;

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("cfg.toml");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "iterations = 1\nbogus = 2\n");
    let o = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(tmp.path().join("r")).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    let o = bin().args(["run", "--frobnicate"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_stop_resume_report_and_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let run = tmp.path().join("run");
    let o = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&run).args(["--stop-after", "0"]).output().unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let o = bin().arg("run").arg("--resume").arg(&run).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("2/2 iterations recorded"));

    let o = bin().arg("report").arg(&run).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("Best: iteration"));
    assert!(run.join("report/iterations.csv").exists());

    let o = bin().args(["eval", "--stage", "gazebo", "--policy"]).arg(run.join("best/policy.json")).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("gazebo_like: 15 episodes"), "{text}");
    assert!(text.contains("| gazebo "));

    fs::write(run.join("iter_000/feedback.txt"), "edited").unwrap();
    let o = bin().arg("run").arg("--resume").arg(&run).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("iter_000/feedback.txt"));
}

#[test]
fn gen_dry_run_uses_the_mock() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "candidates = 3\n");
    let o = bin().args(["gen", "--dry-run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("prompt "));
    assert_eq!(text.matches("--- candidate").count(), 3);
    assert!(text.contains("requested 3"));
}

#[test]
fn gradcheck_passes() {
    let o = bin().args(["gradcheck", "--batches", "2"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("PASS"));
}

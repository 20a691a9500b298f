use std::path::Path;
use std::process::{Command, Output};

fn dmfrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmfrl"))
        .args(args)
        .env_remove("DMFRL_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const TINY: &str = "env=push-base-1\nreward=mgr\nepisodes=4\neval_every=2\neval_episodes=3\nagent.train_steps=2\nagent.batch_size=16\n";

fn train_tiny(dir: &Path, name: &str, seed: &str) -> String {
    let cfg = write_config(dir, "tiny.cfg", TINY);
    let out = dir.join(name).to_string_lossy().into_owned();
    let o = dmfrl(&["train", "--config", &cfg, "--seed", seed, "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn help_lists_subcommands() {
    let o = dmfrl(&["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for cmd in ["train", "fuse", "evaluate", "benchmark"] {
        assert!(text.contains(cmd), "missing {cmd} in help");
    }
}

#[test]
fn version_prints() {
    let o = dmfrl(&["--version"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn train_writes_checkpoint_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.cfg", TINY);
    let ckpt = dir.path().join("a.ckpt");
    let metrics = dir.path().join("m.csv");
    let o = dmfrl(&[
        "train",
        "--config",
        &cfg,
        "--seed",
        "3",
        "--out",
        ckpt.to_str().unwrap(),
        "--metrics",
        metrics.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(ckpt.exists());
    let csv = std::fs::read_to_string(&metrics).unwrap();
    assert!(csv.starts_with("seed,episode,success_rate,avg_return,wall_time_s"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn seed_from_environment_matches_flag() {
    let dir = tempfile::tempdir().unwrap();
    let by_flag = train_tiny(dir.path(), "flag.ckpt", "11");
    let cfg = write_config(dir.path(), "tiny.cfg", TINY);
    let by_env = dir.path().join("env.ckpt");
    let o = Command::new(env!("CARGO_BIN_EXE_dmfrl"))
        .args(["train", "--config", &cfg, "--out", by_env.to_str().unwrap()])
        .env("DMFRL_SEED", "11")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(by_flag).unwrap(), std::fs::read(by_env).unwrap());
}

#[test]
fn fuse_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let a = train_tiny(dir.path(), "a.ckpt", "1");
    let b = train_tiny(dir.path(), "b.ckpt", "2");
    let fused = dir.path().join("f.ckpt");
    let o = dmfrl(&["fuse", "--inputs", &a, &b, "--out", fused.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = dmfrl(&[
        "evaluate",
        "--ckpt",
        fused.to_str().unwrap(),
        "--env",
        "push-env-1",
        "--episodes",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.starts_with("success_rate=") && line.contains("avg_return="), "{line}");
}

#[test]
fn fuse_needs_two_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = train_tiny(dir.path(), "a.ckpt", "1");
    let o = dmfrl(&["fuse", "--inputs", &a, "--out", "x.ckpt"]);
    assert!(!o.status.success());
}

#[test]
fn corrupt_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, b"not a checkpoint").unwrap();
    let o = dmfrl(&["evaluate", "--ckpt", bad.to_str().unwrap(), "--env", "push-env-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error:"), "{}", stderr(&o));
}

#[test]
fn unknown_environment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let a = train_tiny(dir.path(), "a.ckpt", "1");
    let o = dmfrl(&["evaluate", "--ckpt", &a, "--env", "push-env-9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("push-env-9"));
}

#[test]
fn bad_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "env=push-env-1\nagent.gama=0.9\n");
    let o = dmfrl(&["train", "--config", &cfg, "--out", "x.ckpt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("agent.gama"));
}

#[test]
fn benchmark_runs_tiny_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bench.cfg",
        "env=push-env-1\nepisodes=2\neval_every=1\neval_episodes=2\nseeds=0,1\nagent.train_steps=1\nagent.batch_size=8\n\
         benchmark.cells=dmf2/mgr,tfs/sparse\nbenchmark.primitive_envs=push-base-1,push-base-2\nbenchmark.primitive_episodes=2\nbenchmark.checkpoints=1,2\n",
    );
    let out = dir.path().join("out");
    let o = dmfrl(&["benchmark", "--config", &cfg, "--out-dir", out.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("summary.csv").exists());
    assert!(out.join("primitives").join("push-base-1.ckpt").exists());
    let runs = std::fs::read_dir(out.join("runs")).unwrap().count();
    assert_eq!(runs, 4);
    assert!(stdout(&o).contains("dmf2"));
}

//! End-to-end runs of the `swarm-alloc` binary.

use std::path::Path;
use std::process::{Command, Output};

const DESK: [&str; 8] = [
    "--set",
    "n_robots=6",
    "--set",
    "n_tasks=2",
    "--set",
    "alpha_max=3",
    "--set",
    "max_steps=60",
];

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swarm-alloc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn with_desk<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(&DESK);
    v
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_scenarios_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&with_desk(&["gen-scenarios", "--count", "100", "--seed", "7", "--out", path(out)]));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let ma = std::fs::read(a.join("scenarios.json")).unwrap();
    assert_eq!(ma, std::fs::read(b.join("scenarios.json")).unwrap());
    let set = swarm_alloc::harness::ScenarioSet::from_json(std::str::from_utf8(&ma).unwrap()).unwrap();
    assert_eq!(set.scenarios.len(), 100);
}

#[test]
fn zero_episode_training_writes_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&with_desk(&[
        "train",
        "--episodes",
        "0",
        "--seed",
        "4",
        "--set",
        "hidden_dims=8",
        "--out",
        path(dir.path()),
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    let actor = swarm_alloc::nn::load_params(&dir.path().join("actor.ckpt")).unwrap();
    let mut cfg = swarm_alloc::Config::default();
    for kv in ["n_robots=6", "n_tasks=2", "alpha_max=3", "max_steps=60", "hidden_dims=8"] {
        let (k, v) = kv.split_once('=').unwrap();
        cfg.set(k, v).unwrap();
    }
    let init = swarm_alloc::maddpg::Networks::init(&cfg.world, &cfg.trainer, 4).unwrap();
    assert_eq!(actor.values, init.actor.values);
    let curve = std::fs::read_to_string(dir.path().join("training_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1);
}

#[test]
fn train_eval_replay_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let train_out = d.join("train");
    let o = run(&with_desk(&[
        "train",
        "--episodes",
        "3",
        "--no-timing",
        "--set",
        "hidden_dims=8",
        "--set",
        "batch_size=8",
        "--out",
        path(&train_out),
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = train_out.join("actor.ckpt");

    let scen = d.join("scen");
    assert!(run(&with_desk(&["gen-scenarios", "--count", "4", "--out", path(&scen)])).status.success());
    let manifest = scen.join("scenarios.json");

    let eval_out = d.join("eval");
    let o = run(&[
        "eval",
        "--scenarios",
        path(&manifest),
        "--checkpoint",
        path(&ckpt),
        "--out",
        path(&eval_out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = std::fs::read_to_string(eval_out.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("scenario_id,policy,total_utility,natu_raw,natu,natc,winner"));
    assert_eq!(lines.count(), 12);
    assert!(std::fs::read_to_string(eval_out.join("summary.txt")).unwrap().contains("greedy"));

    let replay_out = d.join("replay");
    let o = run(&[
        "replay",
        "--scenarios",
        path(&manifest),
        "--scenario-id",
        "1",
        "--policy",
        "lia_maddpg",
        "--checkpoint",
        path(&ckpt),
        "--out",
        path(&replay_out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = std::fs::read_to_string(replay_out.join("trace.jsonl")).unwrap();
    assert!(trace.lines().count() >= 2);
    for line in trace.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }

    let plot_out = d.join("plot");
    let o = run(&[
        "plot-data",
        "--curve",
        path(&train_out.join("training_curve.csv")),
        "--window",
        "2",
        "--out",
        path(&plot_out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let series = std::fs::read_to_string(plot_out.join("mean_utility.csv")).unwrap();
    assert_eq!(series.lines().count(), 4);
    for name in ["normalized_utility", "critic_loss", "epsilon"] {
        assert!(plot_out.join(format!("{name}.csv")).exists());
    }
}

#[test]
fn failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.ckpt");

    let o = run(&with_desk(&["eval", "--count", "1", "--checkpoint", path(&missing), "--out", path(dir.path())]));
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("missing.ckpt"));

    let o = run(&["eval", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["eval", "--set", "n_robots=0", "--policies", "greedy"]);
    assert_eq!(o.status.code(), Some(3));

    let o = run(&["eval", "--policies", "auction", "--count", "1"]);
    assert_eq!(o.status.code(), Some(3));

    let garbage = dir.path().join("garbage.ckpt");
    std::fs::write(&garbage, b"not a checkpoint").unwrap();
    let o = run(&with_desk(&["eval", "--count", "1", "--checkpoint", path(&garbage), "--out", path(dir.path())]));
    assert_eq!(o.status.code(), Some(5));

    let o = run(&with_desk(&["eval", "--count", "1", "--policies", "lia_maddpg"]));
    assert_eq!(o.status.code(), Some(5));

    let o = run(&["train", "--set", "gamma=nan-ish"]);
    assert_eq!(o.status.code(), Some(3));
}

use std::path::Path;
use std::process::Command;

use dqn_lambda::cli::{read_manifest, EXIT_CONFIG, EXIT_IO};
use dqn_lambda::config::{Preset, RunConfig};

const SHORT_CHAIN: &str = r#"
seeds = [0, 1, 2]
[env]
name = "chain"
length = 6
[estimator]
mode = "fixed"
lambda = 0.8
[train]
total_steps = 6000
replay_start = 1000
epsilon_anneal_steps = 2000
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dqn-lambda"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn train_writes_one_directory_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "short.toml", SHORT_CHAIN);
    let out = dir.path().join("out");
    let status = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let original = RunConfig::load(&cfg, Preset::Desk).unwrap();
    for seed in 0..3u64 {
        let run = out.join("short").join(format!("seed-{seed}"));
        for f in ["episode.csv", "refresh.csv", "manifest.json"] {
            assert!(run.join(f).is_file(), "{f} missing for seed {seed}");
        }
        let manifest = read_manifest(&run.join("manifest.json")).unwrap();
        assert_eq!(manifest.seed, seed);
        assert_eq!(manifest.env_steps, 6000);
        assert_eq!(
            manifest.config,
            RunConfig {
                seeds: vec![seed],
                ..original.clone()
            }
        );
        let echoed = manifest.config.to_toml_string().unwrap();
        assert_eq!(
            RunConfig::from_toml_str(&echoed, Preset::AtariRatios).unwrap(),
            manifest.config
        );
    }
}

#[test]
fn output_root_from_environment_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "envout.toml", SHORT_CHAIN);
    let root = dir.path().join("from-env");
    let status = bin()
        .args(["train", "--seeds", "7", "--config"])
        .arg(&cfg)
        .env("DQN_LAMBDA_OUT", &root)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(root.join("envout/seed-7/episode.csv").is_file());
    assert!(!root.join("envout/seed-0").exists());
}

#[test]
fn same_seed_gives_identical_episode_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "det.toml", SHORT_CHAIN);
    let mut files = Vec::new();
    for out in ["a", "b"] {
        let out = dir.path().join(out);
        let status = bin()
            .args(["train", "--seeds", "5", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        files.push(std::fs::read(out.join("det/seed-5/episode.csv")).unwrap());
    }
    assert!(!files[0].is_empty());
    assert_eq!(files[0], files[1]);
}

#[test]
fn config_errors_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("noenv.toml", "seeds = [0]\n", "available environments"),
        (
            "unknown.toml",
            "[env]\nname = \"chain\"\n[train]\nfoo = 1\n",
            "unknown field",
        ),
        (
            "sizing.toml",
            "[env]\nname = \"chain\"\n[train]\ncache_size = 1000\n",
            "sizing identity",
        ),
    ];
    for (name, text, needle) in cases {
        let cfg = write(dir.path(), name, text);
        let out = bin()
            .args(["train", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(EXIT_CONFIG), "{name}");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains(needle), "{name}: {stderr}");
    }
    let out = bin()
        .args(["train", "--config", "/nonexistent/run.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn compare_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let lam = write(dir.path(), "lam.toml", SHORT_CHAIN);
    let zero = write(
        dir.path(),
        "zero.toml",
        &SHORT_CHAIN.replace("lambda = 0.8", "lambda = 0.0"),
    );
    let out = dir.path().join("cmp");
    let status = bin()
        .args(["compare", "--seeds", "0,1", "--config"])
        .arg(&lam)
        .arg("--config")
        .arg(&zero)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.contains("lam,2,") && summary.contains("zero,2,"));

    let svg = dir.path().join("curves.svg");
    let status = bin()
        .arg("plot")
        .arg(out.join("comparison.csv"))
        .arg("--out")
        .arg(&svg)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.contains("lam (n=2)") && text.contains("zero (n=2)"));

    let status = bin()
        .arg("plot")
        .arg(out.join("lam/seed-0/episode.csv"))
        .arg(out.join("lam/seed-1/episode.csv"))
        .arg("--out")
        .arg(dir.path().join("seeds.svg"))
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn plot_rejects_empty_csv() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(
        dir.path(),
        "episode.csv",
        "episode,env_step,length,score,rolling_mean\n",
    );
    let out = bin()
        .arg("plot")
        .arg(&empty)
        .arg("--out")
        .arg(dir.path().join("x.svg"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_IO));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no episode rows"));
}

#[test]
fn bench_refresh_reports_equal_costs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bench.toml", SHORT_CHAIN);
    let out = bin()
        .args([
            "bench-refresh",
            "--capacities",
            "2000,20000",
            "--repeats",
            "2",
            "--config",
        ])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches(" 16080 ").count(), 4, "{stdout}");
}

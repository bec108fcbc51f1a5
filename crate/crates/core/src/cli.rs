//! Command-line front end: training runs, matched-seed comparisons, refresh
//! benchmarks and learning-curve plots.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{fill_random_memory, train_dqn_lambda, train_dqn_nstep_baseline, RunLog};
use crate::config::{AgentKind, Preset, RunConfig};
use crate::error::{Error, Result};
use crate::replay::{build_cache, ReplayMemory};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "DQN_LAMBDA_OUT";
pub const DEFAULT_OUT_ROOT: &str = "runs";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dqn-lambda", version, about = "DQN(λ) with cached λ-returns")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one config on each of its seeds.
    Train(TrainArgs),
    /// Train several configs on matched seeds and summarise final scores.
    Compare(CompareArgs),
    /// Time cache builds at several replay-memory capacities.
    BenchRefresh(BenchArgs),
    /// Render rolling-score curves from episode CSVs as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Comma-separated seeds overriding the config.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Output root directory.
    #[arg(long, env = OUT_ROOT_ENV)]
    pub out: Option<PathBuf>,
    /// Preset the config file is laid over.
    #[arg(long, default_value = "desk")]
    pub preset: Preset,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, short)]
    pub config: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// One config per arm; repeat the flag.
    #[arg(long = "config", short, required = true, num_args = 1..)]
    pub configs: Vec<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, short)]
    pub config: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "10000,1000000")]
    pub capacities: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value = "desk")]
    pub preset: Preset,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// episode.csv files or merged comparison CSVs.
    #[arg(required = true)]
    pub csvs: Vec<PathBuf>,
    #[arg(long, short, default_value = "curves.svg")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
}

/// Process exit code for an error: 2 for configuration problems, 3 for a
/// diverged run, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::InvalidMask(_)
        | Error::HorizonOutOfRange { .. }
        | Error::CacheNotDivisible { .. }
        | Error::MemoryTooSmall { .. } => EXIT_CONFIG,
        Error::Diverged { .. } => EXIT_DIVERGED,
        _ => EXIT_IO,
    }
}

/// Parses `args` and runs the selected command, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Train(args) => {
            let cfg = load_with_seeds(&args.config, &args.common)?;
            let root = out_root(&args.common, &cfg);
            let runs = train(&cfg, &root)?;
            for r in &runs {
                println!(
                    "{} seed {}: {} episodes, final score {}, {}",
                    cfg.name(),
                    r.seed,
                    r.log.episodes.len(),
                    fmt_opt(r.log.final_score()),
                    r.dir.display()
                );
            }
            first_divergence(&runs)
        }
        Command::Compare(args) => {
            let cfgs = args
                .configs
                .iter()
                .map(|p| load_with_seeds(p, &args.common))
                .collect::<Result<Vec<_>>>()?;
            let root = out_root(&args.common, &cfgs[0]);
            let cmp = compare(&cfgs, &root)?;
            println!(
                "{:<24} {:>6} {:>12} {:>10} {:>9}",
                "arm", "seeds", "mean final", "sem", "diverged"
            );
            for a in &cmp.arms {
                println!(
                    "{:<24} {:>6} {:>12.4} {:>10.4} {:>9}",
                    a.arm, a.seeds, a.mean_final, a.sem_final, a.diverged
                );
            }
            println!("merged episodes: {}", cmp.merged_csv.display());
            Ok(())
        }
        Command::BenchRefresh(args) => {
            let cfg = RunConfig::load(&args.config, args.preset)?;
            let rows = bench_refresh(&cfg, &args.capacities, args.repeats)?;
            println!(
                "{:>10} {:>12} {:>12} {:>10} {:>10}",
                "capacity", "q evals", "expected", "min ms", "median ms"
            );
            for r in &rows {
                println!(
                    "{:>10} {:>12} {:>12} {:>10.2} {:>10.2}",
                    r.capacity, r.q_evaluations, r.expected_evaluations, r.min_ms, r.median_ms
                );
            }
            check_equal_cost(&rows)
        }
        Command::Plot(args) => {
            let curves = learning_curves(&args.csvs, args.points)?;
            std::fs::write(&args.out, render_svg(&curves))?;
            println!("wrote {}", args.out.display());
            Ok(())
        }
    }
}

fn load_with_seeds(path: &Path, common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path, common.preset)?;
    if let Some(seeds) = &common.seeds {
        if seeds.is_empty() {
            return Err(Error::Config("--seeds must list at least one seed".into()));
        }
        cfg.seeds = seeds.clone();
    }
    Ok(cfg)
}

fn out_root(common: &CommonArgs, cfg: &RunConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

/// Trains `cfg` on a single seed without writing anything.
pub fn run_seed(cfg: &RunConfig, seed: u64) -> Result<RunLog> {
    let mut env = cfg.build_env(seed)?;
    let mut q = cfg.build_q(env.as_ref(), seed)?;
    let train_cfg = cfg.train_config(seed)?;
    match cfg.agent.kind {
        AgentKind::DqnLambda => train_dqn_lambda(env.as_mut(), q.as_mut(), &train_cfg),
        AgentKind::NstepBaseline => {
            train_dqn_nstep_baseline(env.as_mut(), q.as_mut(), &train_cfg, cfg.agent.n)
        }
    }
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub dir: PathBuf,
    pub log: RunLog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub env_steps: usize,
    pub episodes: usize,
    pub minibatches: usize,
    pub target_syncs: usize,
    pub q_evaluations: u64,
    pub final_score: Option<f64>,
    pub diverged_at: Option<usize>,
    pub config: RunConfig,
}

/// Trains every seed of `cfg` in parallel and writes
/// `<out_root>/<name>/seed-<seed>/{episode.csv, refresh.csv, manifest.json}`.
pub fn train(cfg: &RunConfig, out_root: &Path) -> Result<Vec<SeedRun>> {
    let logs: Vec<Result<RunLog>> = cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect();
    let run_dir = out_root.join(cfg.name());
    let mut runs = Vec::with_capacity(logs.len());
    for (&seed, log) in cfg.seeds.iter().zip(logs) {
        let log = log?;
        let dir = run_dir.join(format!("seed-{seed}"));
        write_run(&dir, cfg, seed, &log)?;
        runs.push(SeedRun { seed, dir, log });
    }
    Ok(runs)
}

fn first_divergence(runs: &[SeedRun]) -> Result<()> {
    match runs.iter().find_map(|r| r.log.diverged_at) {
        Some(refresh) => Err(Error::Diverged { refresh }),
        None => Ok(()),
    }
}

const EPISODE_HEADER: [&str; 5] = ["episode", "env_step", "length", "score", "rolling_mean"];
const REFRESH_HEADER: [&str; 9] = [
    "refresh",
    "env_step",
    "q_evaluations",
    "median_abs_td",
    "mean_abs_td",
    "mean_lambda",
    "priority",
    "mean_loss",
    "wall_ms",
];

fn headed_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<File>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(header)?;
    Ok(w)
}

pub fn write_run(dir: &Path, cfg: &RunConfig, seed: u64, log: &RunLog) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = headed_writer(&dir.join("episode.csv"), &EPISODE_HEADER)?;
    for e in &log.episodes {
        w.serialize(e)?;
    }
    w.flush()?;
    let mut w = headed_writer(&dir.join("refresh.csv"), &REFRESH_HEADER)?;
    for r in &log.refreshes {
        w.serialize(r)?;
    }
    w.flush()?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        env_steps: log.env_steps,
        episodes: log.episodes.len(),
        minibatches: log.minibatches,
        target_syncs: log.target_syncs,
        q_evaluations: log.q_evaluations,
        final_score: log.final_score(),
        diverged_at: log.diverged_at,
        config: RunConfig {
            seeds: vec![seed],
            ..cfg.clone()
        },
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmSummary {
    pub arm: String,
    pub seeds: usize,
    pub finals: Vec<f64>,
    pub mean_final: f64,
    pub sem_final: f64,
    pub diverged: usize,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub arms: Vec<ArmSummary>,
    pub merged_csv: PathBuf,
    pub summary_csv: PathBuf,
}

/// Mean and standard error of the mean; the error is zero below two values.
pub fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs every arm on the seeds of the first arm and writes a merged episode
/// CSV plus a per-arm summary next to the per-seed directories.
pub fn compare(cfgs: &[RunConfig], out_root: &Path) -> Result<Comparison> {
    let first = cfgs
        .first()
        .ok_or_else(|| Error::Config("compare needs at least one config".into()))?;
    let seeds = first.seeds.clone();
    let mut names: Vec<String> = Vec::with_capacity(cfgs.len());
    for (i, cfg) in cfgs.iter().enumerate() {
        let base = cfg.name().to_string();
        let name = if names.contains(&base) {
            format!("{base}-{i}")
        } else {
            base
        };
        names.push(name);
    }

    let merged_csv = out_root.join("comparison.csv");
    let summary_csv = out_root.join("summary.csv");
    std::fs::create_dir_all(out_root)?;
    let mut merged = headed_writer(
        &merged_csv,
        &[
            "arm",
            "seed",
            "episode",
            "env_step",
            "length",
            "score",
            "rolling_mean",
        ],
    )?;
    let mut arms = Vec::with_capacity(cfgs.len());
    for (cfg, name) in cfgs.iter().zip(&names) {
        let cfg = RunConfig {
            name: Some(name.clone()),
            seeds: seeds.clone(),
            ..cfg.clone()
        };
        let runs = train(&cfg, out_root)?;
        for r in &runs {
            for e in &r.log.episodes {
                merged.serialize((
                    name,
                    r.seed,
                    e.episode,
                    e.env_step,
                    e.length,
                    e.score,
                    e.rolling_mean,
                ))?;
            }
        }
        let finals: Vec<f64> = runs.iter().filter_map(|r| r.log.final_score()).collect();
        let (mean_final, sem_final) = mean_sem(&finals);
        arms.push(ArmSummary {
            arm: name.clone(),
            seeds: runs.len(),
            finals,
            mean_final,
            sem_final,
            diverged: runs.iter().filter(|r| r.log.diverged_at.is_some()).count(),
        });
    }
    merged.flush()?;

    let mut w = headed_writer(
        &summary_csv,
        &["arm", "seeds", "mean_final", "sem_final", "diverged"],
    )?;
    for a in &arms {
        w.serialize((&a.arm, a.seeds, a.mean_final, a.sem_final, a.diverged))?;
    }
    w.flush()?;
    Ok(Comparison {
        arms,
        merged_csv,
        summary_csv,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub capacity: usize,
    pub q_evaluations: u64,
    pub expected_evaluations: u64,
    pub min_ms: f64,
    pub median_ms: f64,
}

/// Fills a memory of each capacity with random-policy transitions and times
/// `repeats` cache builds under an untrained Q-function.
pub fn bench_refresh(
    cfg: &RunConfig,
    capacities: &[usize],
    repeats: usize,
) -> Result<Vec<BenchRow>> {
    if repeats == 0 || capacities.is_empty() {
        return Err(Error::Config(
            "bench-refresh needs at least one capacity and one repeat".into(),
        ));
    }
    let seed = cfg.seeds[0];
    let train_cfg = cfg.train_config(seed)?;
    let (s, b) = (train_cfg.cache_size as u64, train_cfg.block as u64);
    let expected = (s / b) * (b + 1) + s;
    let mut rows = Vec::with_capacity(capacities.len());
    for &capacity in capacities {
        let mut env = cfg.build_env(seed)?;
        let q = cfg.build_q(env.as_ref(), seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mem = ReplayMemory::new(capacity);
        fill_random_memory(
            env.as_mut(),
            &mut mem,
            capacity,
            train_cfg.history_len,
            &mut rng,
        )?;

        let mut evals = Vec::with_capacity(repeats);
        let mut times = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let before = q.evaluations();
            let start = Instant::now();
            let cache = build_cache(
                &mem,
                q.as_ref(),
                &train_cfg.estimator,
                train_cfg.cache_size,
                train_cfg.block,
                &mut rng,
            )?;
            times.push(start.elapsed().as_secs_f64() * 1e3);
            evals.push(q.evaluations() - before);
            drop(cache);
        }
        if evals.iter().any(|&e| e != evals[0]) {
            return Err(Error::RefreshCostMismatch(format!(
                "capacity {capacity} gave evaluation counts {evals:?}"
            )));
        }
        times.sort_by(f64::total_cmp);
        rows.push(BenchRow {
            capacity,
            q_evaluations: evals[0],
            expected_evaluations: expected,
            min_ms: times[0],
            median_ms: times[times.len() / 2],
        });
    }
    Ok(rows)
}

pub fn check_equal_cost(rows: &[BenchRow]) -> Result<()> {
    let Some(first) = rows.first() else {
        return Ok(());
    };
    if rows.iter().any(|r| r.q_evaluations != first.q_evaluations) {
        let counts: Vec<(usize, u64)> =
            rows.iter().map(|r| (r.capacity, r.q_evaluations)).collect();
        return Err(Error::RefreshCostMismatch(format!(
            "(capacity, evaluations) = {counts:?}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmCurve {
    pub arm: String,
    pub seeds: usize,
    pub steps: Vec<f64>,
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
}

#[derive(Deserialize)]
struct CurveRow {
    #[serde(default)]
    arm: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
    env_step: usize,
    rolling_mean: f64,
}

/// Label for a bare `episode.csv`: `<run>/<seed-dir>` when the file sits in
/// the layout written by `train`, the file stem otherwise.
fn path_labels(path: &Path) -> (String, String) {
    let parent = path.parent();
    let seed = parent
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned());
    let run = parent
        .and_then(|p| p.parent())
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned());
    match (run, seed) {
        (Some(run), Some(seed)) if seed.starts_with("seed-") => (run, seed),
        _ => {
            let stem = path
                .file_stem()
                .map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
            (stem, "0".into())
        }
    }
}

/// Rolling-score curves averaged over seeds on a grid of `points` env steps.
pub fn learning_curves(csvs: &[PathBuf], points: usize) -> Result<Vec<ArmCurve>> {
    let points = points.max(2);
    let mut series: BTreeMap<String, BTreeMap<String, Vec<(usize, f64)>>> = BTreeMap::new();
    for path in csvs {
        let malformed = |reason: String| Error::MalformedCsv {
            path: path.display().to_string(),
            reason,
        };
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        for col in ["env_step", "rolling_mean"] {
            if !headers.iter().any(|h| h == col) {
                return Err(malformed(format!("missing column {col:?}")));
            }
        }
        let (arm_default, seed_default) = path_labels(path);
        let mut rows = 0;
        for row in reader.deserialize::<CurveRow>() {
            let row = row.map_err(|e| malformed(e.to_string()))?;
            let arm = row.arm.unwrap_or_else(|| arm_default.clone());
            let seed = row
                .seed
                .map_or_else(|| seed_default.clone(), |s| format!("seed-{s}"));
            series
                .entry(arm)
                .or_default()
                .entry(seed)
                .or_default()
                .push((row.env_step, row.rolling_mean));
            rows += 1;
        }
        if rows == 0 {
            return Err(malformed("no episode rows".into()));
        }
    }

    let max_step = series
        .values()
        .flat_map(|s| s.values())
        .flat_map(|v| v.iter().map(|&(t, _)| t))
        .max()
        .unwrap_or(0) as f64;
    let grid: Vec<f64> = (0..points)
        .map(|i| max_step * i as f64 / (points - 1) as f64)
        .collect();

    let mut curves = Vec::with_capacity(series.len());
    for (arm, seeds) in series {
        let mut sorted: Vec<Vec<(usize, f64)>> = seeds.into_values().collect();
        for s in &mut sorted {
            s.sort_by_key(|&(t, _)| t);
        }
        let (mut steps, mut mean, mut sem) = (Vec::new(), Vec::new(), Vec::new());
        for &x in &grid {
            let values: Vec<f64> = sorted
                .iter()
                .filter_map(|s| {
                    let i = s.partition_point(|&(t, _)| t as f64 <= x);
                    (i > 0).then(|| s[i - 1].1)
                })
                .collect();
            if values.is_empty() {
                continue;
            }
            let (m, e) = mean_sem(&values);
            steps.push(x);
            mean.push(m);
            sem.push(e);
        }
        curves.push(ArmCurve {
            arm,
            seeds: sorted.len(),
            steps,
            mean,
            sem,
        });
    }
    Ok(curves)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Mean curves with ±1 SEM bands.
pub fn render_svg(curves: &[ArmCurve]) -> String {
    let (w, h) = (800.0, 500.0);
    let (left, right, top, bottom) = (70.0, 20.0, 20.0, 50.0);
    let xs = curves.iter().flat_map(|c| c.steps.iter().copied());
    let x_max = xs.fold(1.0_f64, f64::max);
    let lows = curves
        .iter()
        .flat_map(|c| c.mean.iter().zip(&c.sem).map(|(m, s)| m - s));
    let highs = curves
        .iter()
        .flat_map(|c| c.mean.iter().zip(&c.sem).map(|(m, s)| m + s));
    let mut y_min = lows.fold(f64::INFINITY, f64::min);
    let mut y_max = highs.fold(f64::NEG_INFINITY, f64::max);
    if !y_min.is_finite() || !y_max.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    if y_max - y_min < 1e-9 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let px = |x: f64| left + x / x_max * (w - left - right);
    let py = |y: f64| h - bottom - (y - y_min) / (y_max - y_min) * (h - top - bottom);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{left} {top} V{} H{}" fill="none" stroke="black"/>"#,
        h - bottom,
        w - right
    );
    for i in 0..=5 {
        let fx = x_max * i as f64 / 5.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(fx),
            h - bottom + 18.0,
            fx.round()
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
            left - 6.0,
            py(fy) + 4.0,
            fy
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">environment steps</text>"#,
        left + (w - left - right) / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">rolling-100 score</text>"#,
        top + (h - top - bottom) / 2.0,
        top + (h - top - bottom) / 2.0
    );

    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if c.steps.is_empty() {
            continue;
        }
        let upper = c
            .steps
            .iter()
            .zip(c.mean.iter().zip(&c.sem))
            .map(|(&x, (m, s))| (x, m + s));
        let lower = c
            .steps
            .iter()
            .zip(c.mean.iter().zip(&c.sem))
            .map(|(&x, (m, s))| (x, m - s));
        let band: Vec<String> = upper
            .chain(lower.rev())
            .map(|(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = c
            .steps
            .iter()
            .zip(&c.mean)
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = top + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/>"#,
            left + 10.0,
            left + 30.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}">{} (n={})</text>"#,
            left + 36.0,
            ly + 4.0,
            xml_escape(&c.arm),
            c.seeds
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_sem_values() {
        let (m, s) = mean_sem(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        let var: f64 = [1.5f64, 0.5, 0.5, 1.5].iter().map(|d| d * d).sum::<f64>() / 3.0;
        assert!((s - (var / 4.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_sem(&[7.0]), (7.0, 0.0));
        assert!(mean_sem(&[]).0.is_nan());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::Diverged { refresh: 3 }), EXIT_DIVERGED);
        assert_eq!(exit_code(&Error::EmptyBatch), EXIT_IO);
    }

    #[test]
    fn path_labels_follow_layout() {
        let (arm, seed) = path_labels(Path::new("out/lam08/seed-3/episode.csv"));
        assert_eq!((arm.as_str(), seed.as_str()), ("lam08", "seed-3"));
        let (arm, _) = path_labels(Path::new("curve.csv"));
        assert_eq!(arm, "curve");
    }

    #[test]
    fn svg_contains_band_and_legend() {
        let c = ArmCurve {
            arm: "a<b".into(),
            seeds: 2,
            steps: vec![0.0, 10.0, 20.0],
            mean: vec![0.0, 0.5, 1.0],
            sem: vec![0.1, 0.1, 0.0],
        };
        let svg = render_svg(&[c]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<polygon"));
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("a&lt;b (n=2)"));
    }
}

//! Method × reward × environment × seed experiment matrices.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::checkpoint::{save_checkpoint, Checkpoint};
use super::config::{apply_experiment_keys, KeyValues};
use super::experiment::{train_with_sources, write_metrics_csv, ExperimentConfig, Method, MetricsRow};
use crate::error::{Error, Result};
use crate::rewards::RewardMode;

/// Where fused and transferred agents get their primitives.
#[derive(Debug, Clone, PartialEq)]
pub enum PrimitivePlan {
    /// Existing checkpoints; methods take the first `arity` entries.
    Provided(Vec<PathBuf>),
    /// Train one primitive per variant before the matrix runs.
    Train {
        envs: Vec<String>,
        episodes: usize,
        reward_mode: RewardMode,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    /// Settings shared by every run; method, reward, env and primitives are
    /// replaced per cell.
    pub base: ExperimentConfig,
    pub cells: Vec<(Method, RewardMode)>,
    pub envs: Vec<String>,
    /// Episode counts reported in the summary.
    pub checkpoints: Vec<usize>,
    pub primitives: PrimitivePlan,
    /// Worker threads for independent runs.
    pub threads: usize,
}

pub const DEFAULT_CHECKPOINTS: [usize; 4] = [50, 100, 150, 200];

impl BenchmarkConfig {
    /// Push adaptation to the friction change: fused, guided-only and sparse
    /// scratch agents over five seeds.
    pub fn default_push() -> Result<Self> {
        let mut base = ExperimentConfig::new("push-env-1")?;
        base.seeds = vec![0, 1, 2, 3, 4];
        Ok(Self {
            base,
            cells: vec![
                (Method::Dmf3, RewardMode::Mgr),
                (Method::Dmf2, RewardMode::Mgr),
                (Method::Tfs, RewardMode::Mgr),
                (Method::Tfs, RewardMode::Sparse),
            ],
            envs: vec!["push-env-1".into()],
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
            primitives: PrimitivePlan::Train {
                envs: vec!["push-base-1".into(), "push-base-2".into(), "push-base-3".into()],
                episodes: 300,
                reward_mode: RewardMode::Mgr,
                seed: 1000,
            },
            threads: 1,
        })
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let mut cfg = Self::default_push()?;
        apply_experiment_keys(&mut kv, &mut cfg.base, base_dir)?;
        if let Some(cells) = kv.get_list::<String>("benchmark.cells")? {
            cfg.cells = cells.iter().map(|c| parse_cell(c)).collect::<Result<_>>()?;
        } else {
            let methods = kv.get_list::<Method>("benchmark.methods")?;
            let rewards = kv.get_list::<RewardMode>("benchmark.rewards")?;
            if methods.is_some() || rewards.is_some() {
                let methods = methods.unwrap_or_else(|| vec![cfg.base.method]);
                let rewards = rewards.unwrap_or_else(|| vec![cfg.base.reward_mode]);
                cfg.cells = methods
                    .iter()
                    .flat_map(|&m| rewards.iter().map(move |&r| (m, r)))
                    .collect();
            }
        }
        if let Some(envs) = kv.get_list("benchmark.envs")? {
            cfg.envs = envs;
        } else if kv.contains("env") {
            cfg.envs = vec![cfg.base.env_variant.clone()];
        }
        if let Some(c) = kv.get_list("benchmark.checkpoints")? {
            cfg.checkpoints = c;
        }
        if let Some(t) = kv.get("benchmark.threads")? {
            cfg.threads = t;
        }
        if !cfg.base.primitive_checkpoints.is_empty() {
            cfg.primitives = PrimitivePlan::Provided(std::mem::take(&mut cfg.base.primitive_checkpoints));
        } else if let PrimitivePlan::Train {
            envs,
            episodes,
            reward_mode,
            seed,
        } = &mut cfg.primitives
        {
            if let Some(v) = kv.get_list("benchmark.primitive_envs")? {
                *envs = v;
            }
            if let Some(v) = kv.get("benchmark.primitive_episodes")? {
                *episodes = v;
            }
            if let Some(v) = kv.get("benchmark.primitive_reward")? {
                *reward_mode = v;
            }
            if let Some(v) = kv.get("benchmark.primitive_seed")? {
                *seed = v;
            }
        }
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() || self.envs.is_empty() {
            return Err(Error::Config("benchmark needs at least one method/reward cell and one env".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("benchmark.threads must be at least 1".into()));
        }
        let available = match &self.primitives {
            PrimitivePlan::Provided(p) => p.len(),
            PrimitivePlan::Train { envs, .. } => envs.len(),
        };
        for (m, _) in &self.cells {
            if m.arity() > available {
                return Err(Error::Config(format!(
                    "method {} needs {} primitives, only {available} configured",
                    m.name(),
                    m.arity()
                )));
            }
        }
        for env in &self.envs {
            let mut probe = self.base.clone();
            probe.env_variant = env.clone();
            probe.primitive_checkpoints.clear();
            probe.method = Method::Tfs;
            probe.validate()?;
        }
        Ok(())
    }

    /// The experiment for one cell; primitive paths are filled in by the runner.
    pub fn cell_config(&self, method: Method, reward: RewardMode, env: &str) -> ExperimentConfig {
        let mut c = self.base.clone();
        c.method = method;
        c.reward_mode = reward;
        c.env_variant = env.to_string();
        c.output_path = None;
        c.primitive_checkpoints.clear();
        c
    }
}

fn parse_cell(s: &str) -> Result<(Method, RewardMode)> {
    let (m, r) = s
        .split_once('/')
        .ok_or_else(|| Error::Config(format!("benchmark cell {s:?} should look like method/reward")))?;
    Ok((m.trim().parse()?, r.trim().parse()?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub method: Method,
    pub reward: RewardMode,
    pub env: String,
    pub seed: u64,
    pub outcome: std::result::Result<Vec<MetricsRow>, String>,
}

impl RunRecord {
    pub fn file_stem(&self) -> String {
        format!("{}-{}-{}-seed{}", self.method.name(), self.reward.name(), self.env, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryCell {
    pub method: Method,
    pub reward: RewardMode,
    pub env: String,
    pub episode: usize,
    /// `None` when any seed of the cell failed.
    pub mean_success: Option<f64>,
    pub mean_return: Option<f64>,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryCell>,
    pub checkpoints: Vec<usize>,
}

impl BenchmarkReport {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.outcome.is_err()).count()
    }

    pub fn cell(&self, method: Method, reward: RewardMode, env: &str, episode: usize) -> Option<&SummaryCell> {
        self.summary
            .iter()
            .find(|c| c.method == method && c.reward == reward && c.env == env && c.episode == episode)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("method,reward,env,episode,mean_success,mean_return,n_seeds,status\n");
        for c in &self.summary {
            let (s, r, status) = match (c.mean_success, c.mean_return) {
                (Some(s), Some(r)) => (s.to_string(), r.to_string(), "ok"),
                _ => (String::new(), String::new(), "FAILED"),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{s},{r},{},{status}",
                c.method.name(),
                c.reward.name(),
                c.env,
                c.episode,
                c.n_seeds
            );
        }
        out
    }

    /// Aligned table: one row per method/reward/env, one column per checkpoint.
    pub fn summary_table(&self) -> String {
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["method".to_string(), "reward".into(), "env".into()];
        header.extend(self.checkpoints.iter().map(|e| e.to_string()));
        rows.push(header);
        let mut keys: Vec<(Method, RewardMode, String)> = Vec::new();
        for c in &self.summary {
            let k = (c.method, c.reward, c.env.clone());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        for (m, r, env) in keys {
            let mut row = vec![m.name().to_string(), r.name().to_string(), env.clone()];
            for &ep in &self.checkpoints {
                row.push(match self.cell(m, r, &env, ep) {
                    Some(SummaryCell {
                        mean_success: Some(s),
                        n_seeds,
                        ..
                    }) => format!("{s:.3} (n={n_seeds})"),
                    Some(_) => "FAILED".into(),
                    None => "-".into(),
                });
            }
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in rows {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, w))| if i < 3 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}

/// Mean success and return per cell and checkpoint across seeds.
pub fn summarize(runs: &[RunRecord], checkpoints: &[usize]) -> Vec<SummaryCell> {
    let mut keys: Vec<(Method, RewardMode, String)> = Vec::new();
    for r in runs {
        let k = (r.method, r.reward, r.env.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out = Vec::new();
    for (m, rw, env) in keys {
        let cell_runs: Vec<&RunRecord> = runs
            .iter()
            .filter(|r| r.method == m && r.reward == rw && r.env == env)
            .collect();
        let failed = cell_runs.iter().any(|r| r.outcome.is_err());
        for &ep in checkpoints {
            let hits: Vec<&MetricsRow> = cell_runs
                .iter()
                .filter_map(|r| r.outcome.as_ref().ok())
                .filter_map(|rows| rows.iter().find(|row| row.episode == ep))
                .collect();
            let n = hits.len();
            let mean = |f: fn(&MetricsRow) -> f64| (!failed && n > 0).then(|| hits.iter().map(|r| f(r)).sum::<f64>() / n as f64);
            out.push(SummaryCell {
                method: m,
                reward: rw,
                env: env.clone(),
                episode: ep,
                mean_success: mean(|r| r.success_rate),
                mean_return: mean(|r| r.avg_return),
                n_seeds: n,
            });
        }
    }
    out
}

/// Trains (or loads) the primitives named by the plan.
fn provision_primitives(
    cfg: &BenchmarkConfig,
    out_dir: Option<&Path>,
    log: &(dyn Fn(&str) + Sync),
) -> Result<Vec<Checkpoint>> {
    match &cfg.primitives {
        PrimitivePlan::Provided(paths) => paths.iter().map(super::checkpoint::load_checkpoint).collect(),
        PrimitivePlan::Train {
            envs,
            episodes,
            reward_mode,
            seed,
        } => {
            let needed = cfg.cells.iter().map(|(m, _)| m.arity()).max().unwrap_or(0);
            let mut out = Vec::new();
            for (i, env) in envs.iter().take(needed).enumerate() {
                let mut c = cfg.base.clone();
                c.method = Method::Tfs;
                c.primitive_checkpoints.clear();
                c.env_variant = env.clone();
                c.reward_mode = *reward_mode;
                c.episodes = *episodes;
                c.eval_every = (*episodes).max(1);
                let s = seed.wrapping_add(i as u64);
                log(&format!("training primitive on {env} (seed {s}, {episodes} episodes)"));
                let trained = train_with_sources(&c, &[], s)?;
                if let Some(dir) = out_dir {
                    save_checkpoint(dir.join("primitives").join(format!("{env}.ckpt")), &trained.checkpoint)?;
                }
                out.push(trained.checkpoint);
            }
            Ok(out)
        }
    }
}

/// Runs every cell × env × seed. Individual run failures are recorded, not
/// propagated; a failure to obtain primitives fails every run that needs them.
pub fn run_benchmark(
    cfg: &BenchmarkConfig,
    out_dir: Option<&Path>,
    log: &(dyn Fn(&str) + Sync),
) -> Result<BenchmarkReport> {
    cfg.validate()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir.join("runs")).map_err(|e| Error::io(dir, e))?;
    }
    let primitives = provision_primitives(cfg, out_dir, log).map_err(|e| e.to_string());

    let mut jobs = Vec::new();
    for &(method, reward) in &cfg.cells {
        for env in &cfg.envs {
            for &seed in &cfg.base.seeds {
                jobs.push((method, reward, env.clone(), seed));
            }
        }
    }
    let results: Mutex<Vec<Option<RunRecord>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some((method, reward, env, seed)) = jobs.get(i).cloned() else {
            break;
        };
        log(&format!("run {}/{}: {} {} {} seed {seed}", i + 1, jobs.len(), method.name(), reward.name(), env));
        let config = cfg.cell_config(method, reward, &env);
        let outcome = match &primitives {
            Ok(p) => train_with_sources(&config, &p[..method.arity()], seed)
                .map(|o| o.metrics)
                .map_err(|e| e.to_string()),
            Err(e) if method.arity() > 0 => Err(format!("primitives unavailable: {e}")),
            Err(_) => train_with_sources(&config, &[], seed)
                .map(|o| o.metrics)
                .map_err(|e| e.to_string()),
        };
        if let Err(e) = &outcome {
            log(&format!("run {} failed: {e}", i + 1));
        }
        results.lock().expect("no panics while holding the lock")[i] = Some(RunRecord {
            method,
            reward,
            env,
            seed,
            outcome,
        });
    };
    std::thread::scope(|s| {
        for _ in 1..cfg.threads.min(jobs.len().max(1)) {
            s.spawn(worker);
        }
        worker();
    });
    let runs: Vec<RunRecord> = results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect();

    let report = BenchmarkReport {
        summary: summarize(&runs, &cfg.checkpoints),
        checkpoints: cfg.checkpoints.clone(),
        runs,
    };
    if let Some(dir) = out_dir {
        for run in &report.runs {
            if let Ok(rows) = &run.outcome {
                write_metrics_csv(&dir.join("runs").join(format!("{}.csv", run.file_stem())), rows)?;
            }
        }
        let write = |name: &str, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
        };
        write("summary.csv", report.summary_csv())?;
        write("summary.txt", report.summary_table())?;
    }
    Ok(report)
}

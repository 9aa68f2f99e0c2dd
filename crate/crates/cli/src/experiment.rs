//! Seed fan-out, paired strategy/agent runs and CSV emission.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use real_core::datasets::{apply_noise, load_csv, make_blobs, split};
use real_core::strategies::select;
use real_core::{
    Agent, AlEnv, CandidatePool, Dataset, EnvConfig, EpisodeMode, NoiseSpec, Rng, SplitSpec,
    StrategyKind,
};

use crate::config::{ConfigError, DatasetSource, RunConfig};
use crate::format::{fmt_g, fmt_interval, mean_std};
use crate::HarnessError;

/// Name of the learned policy in output files.
pub const AGENT: &str = "agent";

// Per-seed RNG streams.
const DATA: u64 = 1;
const SPLIT: u64 = 2;
const NOISE: u64 = 3;
const AGENT_INIT: u64 = 4;
const AGENT_TRAIN: u64 = 5;
const EVAL: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    Agent,
    Strategy(StrategyKind),
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Agent => AGENT,
            Policy::Strategy(k) => k.name(),
        }
    }
}

/// One labelling step of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub strategy: &'static str,
    pub seed: u64,
    pub step: usize,
    pub labeled_count: usize,
    pub test_accuracy: f64,
    pub reward: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub policy: Policy,
    pub seed: u64,
    pub records: Vec<RunRecord>,
    pub initial_test_accuracy: f64,
    /// Agent training time; zero for fixed strategies.
    pub train_ms: f64,
    pub agent: Option<Agent>,
}

impl RunResult {
    pub fn final_accuracy(&self) -> f64 {
        self.records
            .last()
            .map_or(self.initial_test_accuracy, |r| r.test_accuracy)
    }
}

/// Splits of one seed, noise already applied to the pool.
#[derive(Debug, Clone)]
pub struct SeedData {
    pub pool: Dataset,
    pub state_set: Dataset,
    pub reward_set: Dataset,
    pub test_set: Dataset,
}

/// Builds the dataset and splits for `seed`; `csv` is the preloaded CSV dataset if any.
pub fn seed_data(
    cfg: &RunConfig,
    csv: Option<&Dataset>,
    seed: u64,
    noise: Option<&NoiseSpec>,
) -> Result<SeedData, HarnessError> {
    let root = Rng::new(seed);
    let ds = match (&cfg.dataset, csv) {
        (_, Some(ds)) => ds.clone(),
        (
            DatasetSource::Blobs {
                n,
                d,
                k,
                separation,
            },
            None,
        ) => make_blobs(*n, *d, *k, *separation, &mut root.derive(DATA))?,
        (DatasetSource::Csv { path, .. }, None) => {
            return Err(HarnessError::Config(ConfigError::new(format!(
                "{} was not loaded",
                path.display()
            ))))
        }
    };
    let spec = SplitSpec {
        seed: root.derive(SPLIT).next_u64(),
        ..cfg.split
    };
    let s = split(&ds, &spec)?;
    let mut pool = ds.subset(&s.pool);
    if let Some(noise) = noise {
        let spec = NoiseSpec {
            seed: Rng::new(noise.seed)
                .derive(root.derive(NOISE).next_u64())
                .next_u64(),
            ..*noise
        };
        pool = apply_noise(&pool, &spec)?;
    }
    Ok(SeedData {
        pool,
        state_set: ds.subset(&s.state_set),
        reward_set: ds.subset(&s.reward_set),
        test_set: ds.subset(&s.test_set),
    })
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Option<Dataset>, HarnessError> {
    match &cfg.dataset {
        DatasetSource::Blobs { .. } => Ok(None),
        DatasetSource::Csv { path, image_shape } => {
            let ds = load_csv(path)?;
            Ok(Some(match image_shape {
                Some((h, w)) => ds.with_image_shape(*h, *w)?,
                None => ds,
            }))
        }
    }
}

fn env_for(data: &SeedData, cfg: EnvConfig) -> Result<AlEnv, HarnessError> {
    Ok(AlEnv::new(
        data.pool.clone(),
        data.state_set.clone(),
        data.reward_set.clone(),
        data.test_set.clone(),
        cfg,
    )?)
}

/// One full labelling run. Fixed strategies score the whole unlabelled pool;
/// the agent is trained first and then evaluated greedily. Both start the
/// evaluation episode from the same rng stream, so `L_0` and the classifier
/// initialisation are paired across policies.
pub fn run_policy(
    policy: Policy,
    seed: u64,
    data: &SeedData,
    env_cfg: &EnvConfig,
    cfg: &RunConfig,
) -> Result<RunResult, HarnessError> {
    let root = Rng::new(seed);
    let mut eval_rng = root.derive(EVAL);
    let name = policy.name();
    let record = |step: usize, labeled_count, test_accuracy, reward, wall_ms| RunRecord {
        strategy: name,
        seed,
        step,
        labeled_count,
        test_accuracy,
        reward,
        wall_ms,
    };
    match policy {
        Policy::Strategy(kind) => {
            let mut env = env_for(
                data,
                EnvConfig {
                    candidates: CandidatePool::All,
                    ..env_cfg.clone()
                },
            )?;
            let mut env_rng = eval_rng.split();
            let mut act_rng = eval_rng.split();
            let (_, mut candidates) = env.reset(&mut env_rng)?;
            let initial_test_accuracy = env.test_accuracy()?;
            let mut records = Vec::new();
            while !env.is_terminal() {
                let started = Instant::now();
                let probs = env.candidate_probabilities()?;
                let picks = select(kind, &probs, env.labels_this_step(), &mut act_rng)?;
                let indices: Vec<usize> = picks
                    .iter()
                    .map(|&p| candidates[p].candidate_index)
                    .collect();
                let out = env.step(&indices)?;
                candidates = out.next_candidates;
                let ms = started.elapsed().as_secs_f64() * 1e3;
                records.push(record(
                    env.steps_taken(),
                    env.partition()?.labeled().len(),
                    env.test_accuracy()?,
                    out.reward,
                    ms,
                ));
            }
            Ok(RunResult {
                policy,
                seed,
                records,
                initial_test_accuracy,
                train_ms: 0.0,
                agent: None,
            })
        }
        Policy::Agent => {
            let mut env = env_for(data, env_cfg.clone())?;
            let started = Instant::now();
            let mut agent = Agent::for_env(&env, cfg.agent.clone(), &mut root.derive(AGENT_INIT))?;
            agent.fit(&mut env, &mut root.derive(AGENT_TRAIN))?;
            let train_ms = started.elapsed().as_secs_f64() * 1e3;
            let stats = agent.run_episode(&mut env, EpisodeMode::Eval, &mut eval_rng)?;
            let records = (0..stats.rewards.len())
                .map(|i| {
                    record(
                        i + 1,
                        stats.labeled_counts[i],
                        stats.test_accuracies[i],
                        stats.rewards[i],
                        stats.step_ms[i],
                    )
                })
                .collect();
            Ok(RunResult {
                policy,
                seed,
                records,
                initial_test_accuracy: stats.initial_test_accuracy,
                train_ms,
                agent: Some(agent),
            })
        }
    }
}

/// Policies in config order: strategies first, then the agent.
pub fn policies(cfg: &RunConfig) -> Vec<Policy> {
    let mut out: Vec<Policy> = cfg
        .strategies
        .iter()
        .map(|&k| Policy::Strategy(k))
        .collect();
    if cfg.agent_enabled {
        out.push(Policy::Agent);
    }
    out
}

/// Runs every (policy, seed) cell in parallel; results come back policy-major
/// in config order.
pub fn run_cells(
    cfg: &RunConfig,
    env_cfg: &EnvConfig,
    policies: &[Policy],
    noise: Option<&NoiseSpec>,
) -> Result<Vec<RunResult>, HarnessError> {
    let csv = load_dataset(cfg)?;
    let data: Vec<SeedData> = cfg
        .seeds
        .par_iter()
        .map(|&seed| seed_data(cfg, csv.as_ref(), seed, noise))
        .collect::<Result<_, _>>()?;
    let cells: Vec<(Policy, usize)> = policies
        .iter()
        .flat_map(|&p| (0..cfg.seeds.len()).map(move |i| (p, i)))
        .collect();
    cells
        .par_iter()
        .map(|&(p, i)| run_policy(p, cfg.seeds[i], &data[i], env_cfg, cfg))
        .collect()
}

pub fn curves_csv(results: &[RunResult]) -> String {
    let mut s = String::from("strategy,seed,step,labeled_count,test_accuracy,reward\n");
    for r in results.iter().flat_map(|r| &r.records) {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.strategy,
            r.seed,
            r.step,
            r.labeled_count,
            fmt_g(r.test_accuracy),
            fmt_g(r.reward)
        ));
    }
    s
}

/// Step 0 holds the agent's training time.
pub fn timings_csv(results: &[RunResult]) -> String {
    let mut s = String::from("strategy,seed,step,wall_ms\n");
    for r in results {
        s.push_str(&format!(
            "{},{},0,{}\n",
            r.policy.name(),
            r.seed,
            fmt_g(r.train_ms)
        ));
        for rec in &r.records {
            s.push_str(&format!(
                "{},{},{},{}\n",
                rec.strategy,
                rec.seed,
                rec.step,
                fmt_g(rec.wall_ms)
            ));
        }
    }
    s
}

/// Final accuracies grouped per policy, in first-seen order.
pub fn final_accuracies(results: &[RunResult]) -> Vec<(&'static str, Vec<f64>)> {
    let mut out: Vec<(&'static str, Vec<f64>)> = Vec::new();
    for r in results {
        let name = r.policy.name();
        match out.iter_mut().find(|(n, _)| *n == name) {
            Some((_, v)) => v.push(r.final_accuracy()),
            None => out.push((name, vec![r.final_accuracy()])),
        }
    }
    out
}

pub fn summary_csv(results: &[RunResult]) -> String {
    let mut s = String::from("strategy,seeds,mean_acc,acc_68_interval\n");
    for (name, accs) in final_accuracies(results) {
        let (m, sd) = mean_std(&accs);
        s.push_str(&format!(
            "{name},{},{},{}\n",
            accs.len(),
            fmt_g(m),
            fmt_g(sd)
        ));
    }
    s
}

/// Writes all files or none: on any failure the listed files are removed.
pub fn write_outputs(dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>, HarnessError> {
    let paths: Vec<PathBuf> = files.iter().map(|(n, _)| dir.join(n)).collect();
    let result = fs::create_dir_all(dir)
        .map_err(|e| HarnessError::io(dir, e))
        .and_then(|()| {
            for ((_, body), path) in files.iter().zip(&paths) {
                fs::write(path, body).map_err(|e| HarnessError::io(path, e))?;
            }
            Ok(())
        });
    if let Err(e) = result {
        remove_all(&paths);
        return Err(e);
    }
    Ok(paths)
}

fn remove_all(paths: &[PathBuf]) {
    for p in paths {
        let _ = fs::remove_file(p);
    }
}

/// Runs `f`, deleting stale copies of `outputs` if it fails.
fn cleanup_on_error<T>(
    dir: &Path,
    outputs: &[&str],
    f: impl FnOnce() -> Result<T, HarnessError>,
) -> Result<T, HarnessError> {
    let r = f();
    if r.is_err() {
        remove_all(&outputs.iter().map(|n| dir.join(n)).collect::<Vec<_>>());
    }
    r
}

/// `curves.csv`, `summary.csv` and `timings.csv` for every policy and seed.
pub fn run_experiment(cfg: &RunConfig) -> Result<Vec<RunResult>, HarnessError> {
    let dir = &cfg.output_dir;
    let mut outputs = vec!["curves.csv", "summary.csv", "timings.csv"];
    let weight_names: Vec<String> = cfg
        .seeds
        .iter()
        .map(|s| format!("agent_seed{s}.real"))
        .collect();
    if cfg.save_weights && cfg.agent_enabled {
        outputs.extend(weight_names.iter().map(String::as_str));
    }
    cleanup_on_error(dir, &outputs, || {
        let results = run_cells(cfg, &cfg.env, &policies(cfg), cfg.noise.as_ref())?;
        write_outputs(
            dir,
            &[
                ("curves.csv", curves_csv(&results)),
                ("summary.csv", summary_csv(&results)),
                ("timings.csv", timings_csv(&results)),
            ],
        )?;
        if cfg.save_weights {
            for (r, name) in results
                .iter()
                .filter(|r| r.agent.is_some())
                .zip(&weight_names)
            {
                if let Some(agent) = &r.agent {
                    agent.save_weights(dir.join(name))?;
                }
            }
        }
        Ok(results)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub accuracies: Vec<f64>,
    pub train_seconds: Vec<f64>,
}

/// Trains and evaluates the agent once per `N` at fixed budget; writes
/// `n_sweep.csv` and the per-step `n_sweep_timings.csv`.
pub fn sweep_n(cfg: &RunConfig, ns: &[usize]) -> Result<Vec<SweepRow>, HarnessError> {
    if ns.is_empty() {
        return Err(ConfigError::new("no N values given").into());
    }
    for &n in ns {
        let env = EnvConfig {
            per_step: n,
            ..cfg.env.clone()
        };
        env.validate()
            .map_err(|e| ConfigError::new(format!("N = {n}: {e}")))?;
    }
    let dir = &cfg.output_dir;
    let outputs = ["n_sweep.csv", "n_sweep_timings.csv"];
    cleanup_on_error(dir, &outputs, || {
        let mut rows = Vec::new();
        let mut timings = String::from("N,seed,step,wall_ms\n");
        for &n in ns {
            let env = EnvConfig {
                per_step: n,
                ..cfg.env.clone()
            };
            let results = run_cells(cfg, &env, &[Policy::Agent], cfg.noise.as_ref())?;
            for r in &results {
                timings.push_str(&format!("{n},{},0,{}\n", r.seed, fmt_g(r.train_ms)));
                for rec in &r.records {
                    timings.push_str(&format!(
                        "{n},{},{},{}\n",
                        rec.seed,
                        rec.step,
                        fmt_g(rec.wall_ms)
                    ));
                }
            }
            rows.push(SweepRow {
                n,
                accuracies: results.iter().map(RunResult::final_accuracy).collect(),
                train_seconds: results.iter().map(|r| r.train_ms / 1e3).collect(),
            });
        }
        let mut csv = String::from("N,mean_acc,acc_68_interval,mean_train_seconds\n");
        for row in &rows {
            let (m, sd) = mean_std(&row.accuracies);
            let (t, _) = mean_std(&row.train_seconds);
            csv.push_str(&format!(
                "{},{},{},{}\n",
                row.n,
                fmt_g(m),
                fmt_g(sd),
                fmt_g(t)
            ));
        }
        write_outputs(
            dir,
            &[("n_sweep.csv", csv), ("n_sweep_timings.csv", timings)],
        )?;
        Ok(rows)
    })
}

/// Final accuracies per strategy per fraction, policy-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTable {
    pub fractions: Vec<f64>,
    /// `(strategy, accuracies[fraction][seed])`.
    pub rows: Vec<(&'static str, Vec<Vec<f64>>)>,
}

/// Runs every policy at each noise fraction (pool only) and writes the wide
/// `noise_sweep.csv` plus the per-seed `noise_sweep_runs.csv`.
pub fn sweep_noise(cfg: &RunConfig, fractions: &[f64]) -> Result<NoiseTable, HarnessError> {
    if fractions.is_empty() {
        return Err(ConfigError::new("no noise fractions given").into());
    }
    let base = cfg.noise.unwrap_or_default();
    let specs: Vec<NoiseSpec> = fractions
        .iter()
        .map(|&f| NoiseSpec {
            fraction: f,
            ..base
        })
        .collect();
    for s in &specs {
        s.validate().map_err(|e| ConfigError::new(e.to_string()))?;
    }
    let dir = &cfg.output_dir;
    let outputs = ["noise_sweep.csv", "noise_sweep_runs.csv"];
    cleanup_on_error(dir, &outputs, || {
        let pols = policies(cfg);
        let mut rows: Vec<(&'static str, Vec<Vec<f64>>)> =
            pols.iter().map(|p| (p.name(), Vec::new())).collect();
        let mut runs = String::from("fraction,strategy,seed,final_accuracy\n");
        for (f, spec) in fractions.iter().zip(&specs) {
            let results = run_cells(cfg, &cfg.env, &pols, Some(spec))?;
            for r in &results {
                runs.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt_g(*f),
                    r.policy.name(),
                    r.seed,
                    fmt_g(r.final_accuracy())
                ));
            }
            for ((_, col), (_, accs)) in rows.iter_mut().zip(final_accuracies(&results)) {
                col.push(accs);
            }
        }
        let mut csv = String::from("strategy");
        for f in fractions {
            csv.push_str(&format!(",noise_{}", fmt_g(*f)));
        }
        csv.push('\n');
        for (name, cols) in &rows {
            csv.push_str(name);
            for accs in cols {
                let (m, sd) = mean_std(accs);
                csv.push_str(&format!(",{}", fmt_interval(m, sd)));
            }
            csv.push('\n');
        }
        write_outputs(
            dir,
            &[("noise_sweep.csv", csv), ("noise_sweep_runs.csv", runs)],
        )?;
        Ok(NoiseTable {
            fractions: fractions.to_vec(),
            rows,
        })
    })
}

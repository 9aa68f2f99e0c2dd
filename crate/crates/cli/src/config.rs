//! Flat `key = value` run configuration.
//!
//! One pair per line, `#` starts a comment, blank lines are ignored. Unknown
//! keys are rejected. Relative paths are resolved against the directory of the
//! config file.
//!
//! | key | default |
//! |-----|---------|
//! | `dataset` | `blobs` (`blobs` or `csv`) |
//! | `csv_path` | none, required when `dataset = csv` |
//! | `image_height`, `image_width` | none (CSV rows as flattened images) |
//! | `blobs_n`, `blobs_d`, `blobs_k`, `blobs_separation` | 600, 16, 8, 3.0 |
//! | `split_pool`, `split_state`, `split_reward`, `split_test` | 0.5, 0.2, 0.15, 0.15 |
//! | `budget`, `n_per_step`, `initial_labeled` | 50, 5, 8 |
//! | `candidates` | 32 (`all` scores the whole unlabelled pool) |
//! | `classifier_hidden` | 64 (comma list) |
//! | `classifier_lr`, `classifier_minibatch` | 0.05, 16 |
//! | `classifier_initial_epochs`, `classifier_epochs_per_step` | 200, 1 |
//! | `agent` | true |
//! | `gamma`, `learning_rate`, `momentum` | 0.99, 0.0001, 0 |
//! | `hidden` | 128,128,128 |
//! | `warm_start_episodes`, `max_episodes` | 16, 200 |
//! | `epsilon_start`, `epsilon_end`, `epsilon_decay_steps` | 1.0, 0.05, 500 |
//! | `replay_capacity`, `minibatch`, `target_sync` | 10000, 64, 100 |
//! | `early_stop_window`, `early_stop_patience`, `early_stop_min_delta` | 20, 10, 0.001 |
//! | `target_aggregate` | `mean` (`mean` or `sum`) |
//! | `strategies` | `random` (comma list; may be empty) |
//! | `seeds` | 1,2,3,4,5 |
//! | `output_dir` | `out` |
//! | `noise_fraction`, `noise_sigma` | unset (no noise), 0.1 |
//! | `noise_max_rotation`, `noise_zoom_min`, `noise_zoom_max`, `noise_seed` | 0, 1, 1, 0 |
//! | `save_weights` | false |
//!
//! Setting any `noise_*` key enables noise on the training pool.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use real_core::{
    AgentConfig, CandidatePool, EnvConfig, NoiseSpec, SplitSpec, StrategyKind, TargetAggregate,
};

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Blobs {
        n: usize,
        d: usize,
        k: usize,
        separation: f64,
    },
    Csv {
        path: PathBuf,
        image_shape: Option<(usize, usize)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub split: SplitSpec,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub agent_enabled: bool,
    pub strategies: Vec<StrategyKind>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub noise: Option<NoiseSpec>,
    pub save_weights: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Blobs {
                n: 600,
                d: 16,
                k: 8,
                separation: 3.0,
            },
            split: SplitSpec::default(),
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            agent_enabled: true,
            strategies: vec![StrategyKind::Random],
            seeds: vec![1, 2, 3, 4, 5],
            output_dir: PathBuf::from("out"),
            noise: None,
            save_weights: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    pub fn new(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
}

/// Parses config text; relative paths are joined onto `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut dataset = "blobs".to_string();
    let (mut blobs_n, mut blobs_d, mut blobs_k, mut blobs_sep) = (600, 16, 8, 3.0);
    let mut csv_path: Option<PathBuf> = None;
    let (mut img_h, mut img_w): (Option<usize>, Option<usize>) = (None, None);
    let mut noise = NoiseSpec::default();
    let mut noise_set = false;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| {
            ConfigError::at(line, format!("expected `key = value`, got `{content}`"))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let p = Parser { key, value, line };
        let c = &mut cfg;
        match key {
            "dataset" => match value {
                "blobs" | "csv" => dataset = value.to_string(),
                _ => return Err(p.err("expected `blobs` or `csv`")),
            },
            "csv_path" => csv_path = Some(base.join(value)),
            "image_height" => img_h = Some(p.parse()?),
            "image_width" => img_w = Some(p.parse()?),
            "blobs_n" => blobs_n = p.parse()?,
            "blobs_d" => blobs_d = p.parse()?,
            "blobs_k" => blobs_k = p.parse()?,
            "blobs_separation" => blobs_sep = p.parse()?,
            "split_pool" => c.split.pool_fraction = p.parse()?,
            "split_state" => c.split.state_fraction = p.parse()?,
            "split_reward" => c.split.reward_fraction = p.parse()?,
            "split_test" => c.split.test_fraction = p.parse()?,
            "budget" => c.env.budget = p.parse()?,
            "n_per_step" => c.env.per_step = p.parse()?,
            "initial_labeled" => c.env.initial_labeled = p.parse()?,
            "candidates" => {
                c.env.candidates = if value == "all" {
                    CandidatePool::All
                } else {
                    CandidatePool::Sample(p.parse()?)
                }
            }
            "classifier_hidden" => c.env.classifier.hidden = p.list()?,
            "classifier_lr" => c.env.classifier.train.learning_rate = p.parse()?,
            "classifier_minibatch" => c.env.classifier.train.minibatch_size = p.parse()?,
            "classifier_initial_epochs" => c.env.classifier.initial_epochs = p.parse()?,
            "classifier_epochs_per_step" => c.env.classifier.epochs_per_step = p.parse()?,
            "agent" => c.agent_enabled = p.parse()?,
            "gamma" => c.agent.gamma = p.parse()?,
            "learning_rate" => c.agent.learning_rate = p.parse()?,
            "momentum" => c.agent.momentum = p.parse()?,
            "hidden" => c.agent.hidden = p.list()?,
            "warm_start_episodes" => c.agent.warm_start_episodes = p.parse()?,
            "max_episodes" => c.agent.max_episodes = p.parse()?,
            "epsilon_start" => c.agent.epsilon.start = p.parse()?,
            "epsilon_end" => c.agent.epsilon.end = p.parse()?,
            "epsilon_decay_steps" => c.agent.epsilon.decay_steps = p.parse()?,
            "replay_capacity" => c.agent.replay_capacity = p.parse()?,
            "minibatch" => c.agent.minibatch = p.parse()?,
            "target_sync" => c.agent.target_sync = p.parse()?,
            "early_stop_window" => c.agent.early_stop.window = p.parse()?,
            "early_stop_patience" => c.agent.early_stop.patience = p.parse()?,
            "early_stop_min_delta" => c.agent.early_stop.min_delta = p.parse()?,
            "target_aggregate" => {
                c.agent.target_aggregate = match value {
                    "mean" => TargetAggregate::Mean,
                    "sum" => TargetAggregate::Sum,
                    _ => return Err(p.err("expected `mean` or `sum`")),
                }
            }
            "strategies" => c.strategies = p.list()?,
            "seeds" => c.seeds = p.list()?,
            "output_dir" => c.output_dir = PathBuf::from(value),
            "save_weights" => c.save_weights = p.parse()?,
            k if k.starts_with("noise_") => {
                noise_set = true;
                match k {
                    "noise_fraction" => noise.fraction = p.parse()?,
                    "noise_sigma" => noise.gaussian_sigma = p.parse()?,
                    "noise_max_rotation" => noise.max_rotation_radians = p.parse()?,
                    "noise_zoom_min" => noise.zoom_range.0 = p.parse()?,
                    "noise_zoom_max" => noise.zoom_range.1 = p.parse()?,
                    "noise_seed" => noise.seed = p.parse()?,
                    _ => return Err(ConfigError::at(line, format!("unknown key `{key}`"))),
                }
            }
            _ => return Err(ConfigError::at(line, format!("unknown key `{key}`"))),
        }
    }

    cfg.dataset = if dataset == "csv" {
        let path =
            csv_path.ok_or_else(|| ConfigError::new("`dataset = csv` requires `csv_path`"))?;
        if !path.is_file() {
            return Err(ConfigError::new(format!(
                "csv_path {} does not exist",
                path.display()
            )));
        }
        let image_shape = match (img_h, img_w) {
            (Some(h), Some(w)) => Some((h, w)),
            (None, None) => None,
            _ => {
                return Err(ConfigError::new(
                    "set both image_height and image_width, or neither",
                ))
            }
        };
        DatasetSource::Csv { path, image_shape }
    } else {
        DatasetSource::Blobs {
            n: blobs_n,
            d: blobs_d,
            k: blobs_k,
            separation: blobs_sep,
        }
    };
    cfg.output_dir = base.join(&cfg.output_dir);
    cfg.noise = noise_set.then_some(noise);
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let wrap = |e: real_core::Error| ConfigError::new(e.to_string());
        if self.seeds.is_empty() {
            return Err(ConfigError::new("at least one seed is required"));
        }
        if self.strategies.is_empty() && !self.agent_enabled {
            return Err(ConfigError::new(
                "no strategies listed and the agent is disabled",
            ));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(ConfigError::new("seeds must be distinct"));
        }
        if let DatasetSource::Blobs {
            n,
            d,
            k,
            separation,
        } = self.dataset
        {
            if n == 0 || d == 0 || k < 2 || !(separation.is_finite() && separation >= 0.0) {
                return Err(ConfigError::new(
                    "blobs need n, d >= 1, k >= 2 and a finite separation >= 0",
                ));
            }
        }
        self.split.validate().map_err(wrap)?;
        self.env.validate().map_err(wrap)?;
        if self.env.classifier.hidden.is_empty() {
            return Err(ConfigError::new(
                "classifier_hidden needs at least one layer",
            ));
        }
        if self.agent_enabled {
            self.agent.validate().map_err(wrap)?;
        }
        if let Some(noise) = &self.noise {
            noise.validate().map_err(wrap)?;
        }
        Ok(())
    }
}

struct Parser<'a> {
    key: &'a str,
    value: &'a str,
    line: usize,
}

impl Parser<'_> {
    fn err(&self, what: &str) -> ConfigError {
        ConfigError::at(
            self.line,
            format!("`{}`: {what}, got `{}`", self.key, self.value),
        )
    }

    fn parse<T: FromStr>(&self) -> Result<T, ConfigError> {
        self.value
            .parse()
            .map_err(|_| self.err(&format!("expected {}", type_name::<T>())))
    }

    fn list<T: FromStr>(&self) -> Result<Vec<T>, ConfigError> {
        if self.value.is_empty() {
            return Ok(Vec::new());
        }
        self.value
            .split(',')
            .map(|t| {
                t.trim().parse().map_err(|_| {
                    self.err(&format!("expected a comma list of {}", type_name::<T>()))
                })
            })
            .collect()
    }
}

fn type_name<T>() -> &'static str {
    let full = std::any::type_name::<T>();
    match full.rsplit("::").next().unwrap_or(full) {
        "usize" | "u64" => "a non-negative integer",
        "f64" => "a number",
        "bool" => "true or false",
        "StrategyKind" => "strategy names",
        other => other,
    }
}

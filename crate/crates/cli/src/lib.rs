//! Experiment harness for reinforced active learning.
//!
//! Reads a flat `key = value` config (see [`config`]), fans runs out over
//! seeds on a worker pool and writes plot-ready CSV files.

pub mod config;
pub mod experiment;
pub mod format;

use std::path::Path;

pub use config::{parse_config, parse_config_str, ConfigError, DatasetSource, RunConfig};
pub use experiment::{run_experiment, sweep_n, sweep_noise, Policy, RunRecord, RunResult};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] real_core::Error),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Core(
                real_core::Error::InvalidConfig(_) | real_core::Error::DegenerateConfig(_),
            ) => 1,
            _ => 2,
        }
    }
}

/// Worker pool sized by `REAL_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool, ConfigError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("REAL_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
            ConfigError::new(format!(
                "REAL_THREADS must be a positive integer, got `{v}`"
            ))
        })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| ConfigError::new(format!("cannot start worker pool: {e}")))
}

/// `1..10` (inclusive), `3` or `1,2,5`.
pub fn parse_n_values(s: &str) -> Result<Vec<usize>, ConfigError> {
    let bad = || {
        ConfigError::new(format!(
            "expected `a..b` or a comma list of N values, got `{s}`"
        ))
    };
    if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b): (usize, usize) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        if a == 0 || a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .ok()
                .filter(|&n: &usize| n >= 1)
                .ok_or_else(bad)
        })
        .collect()
}

pub fn parse_fractions(s: &str) -> Result<Vec<f64>, ConfigError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|f| (0.0..=1.0).contains(f))
                .ok_or_else(|| {
                    ConfigError::new(format!("noise fraction `{}` is not in [0, 1]", t.trim()))
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_ranges() {
        assert_eq!(
            parse_n_values("1..10").unwrap(),
            (1..=10).collect::<Vec<_>>()
        );
        assert_eq!(parse_n_values("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_n_values("1, 4,5").unwrap(), vec![1, 4, 5]);
        assert_eq!(parse_n_values("7").unwrap(), vec![7]);
        for bad in ["0..3", "5..2", "a..b", "", "1,,2", "0"] {
            assert!(parse_n_values(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn fractions() {
        assert_eq!(
            parse_fractions("0,0.1,0.5,1.0").unwrap(),
            vec![0.0, 0.1, 0.5, 1.0]
        );
        assert!(parse_fractions("0.5,1.5").is_err());
        assert!(parse_fractions("x").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(HarnessError::from(ConfigError::new("x")).exit_code(), 1);
        assert_eq!(
            HarnessError::from(real_core::Error::DegenerateConfig("x".into())).exit_code(),
            1
        );
        assert_eq!(
            HarnessError::from(real_core::Error::NotReset).exit_code(),
            2
        );
    }
}

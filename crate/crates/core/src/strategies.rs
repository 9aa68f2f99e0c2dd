//! Uncertainty-style baseline query strategies over class probabilities.
//!
//! "Average confidence" has no standard single-label form; here each class is
//! read as a one-vs-rest binary problem with confidence `max(p, 1 - p)`, and
//! the row score is the mean over classes (least confident rows are queried).

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::numkit::{Matrix, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Random,
    Margin,
    Entropy,
    LeastConfident,
    AverageConfidence,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Random,
        StrategyKind::Margin,
        StrategyKind::Entropy,
        StrategyKind::LeastConfident,
        StrategyKind::AverageConfidence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Margin => "margin",
            StrategyKind::Entropy => "entropy",
            StrategyKind::LeastConfident => "least_confident",
            StrategyKind::AverageConfidence => "average_confidence",
        }
    }

    /// Score of one probability row; `None` for [`StrategyKind::Random`].
    pub fn score(self, probs: &[f64]) -> Result<Option<f64>> {
        Ok(Some(match self {
            StrategyKind::Random => return Ok(None),
            StrategyKind::Margin => margin_score(probs)?,
            StrategyKind::Entropy => entropy_score(probs),
            StrategyKind::LeastConfident => least_confident_score(probs),
            StrategyKind::AverageConfidence => average_confidence_score(probs),
        }))
    }

    /// Whether larger scores are queried first.
    fn prefers_high(self) -> bool {
        matches!(self, StrategyKind::Entropy | StrategyKind::LeastConfident)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(StrategyKind::Random),
            "margin" => Ok(StrategyKind::Margin),
            "entropy" => Ok(StrategyKind::Entropy),
            "least_confident" | "uncertainty" => Ok(StrategyKind::LeastConfident),
            "average_confidence" => Ok(StrategyKind::AverageConfidence),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Top probability minus runner-up.
pub fn margin_score(probs: &[f64]) -> Result<f64> {
    if probs.len() < 2 {
        return Err(Error::TooFewClasses(probs.len()));
    }
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in probs {
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    Ok(first - second)
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy_score(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

pub fn least_confident_score(probs: &[f64]) -> f64 {
    1.0 - probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn average_confidence_score(probs: &[f64]) -> f64 {
    probs.iter().map(|&p| p.max(1.0 - p)).sum::<f64>() / probs.len() as f64
}

/// Picks `n` distinct rows of `probs` to label.
///
/// Deterministic kinds order rows by score in their preferred direction, ties
/// to the lower row index. `Random` ignores the probabilities.
pub fn select(kind: StrategyKind, probs: &Matrix, n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let available = probs.rows();
    if n > available {
        return Err(Error::TooManyRequested {
            requested: n,
            available,
        });
    }
    if kind == StrategyKind::Random {
        return Ok(rng.sample_indices(available, n));
    }
    let mut scored = Vec::with_capacity(available);
    for (i, row) in probs.iter_rows().enumerate() {
        scored.push((i, kind.score(row)?.expect("deterministic kind")));
    }
    let high = kind.prefers_high();
    scored.sort_by(|a, b| {
        let ord = a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal);
        let ord = if high { ord.reverse() } else { ord };
        ord.then(a.0.cmp(&b.0))
    });
    Ok(scored.into_iter().take(n).map(|(i, _)| i).collect())
}

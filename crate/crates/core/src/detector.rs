//! Novelty threshold calibrated on the empirical CDF of training scores.
//!
//! The cutoff is an order statistic (no interpolation): for a high-is-novel
//! score such as reconstruction MSE it is the value at ascending rank
//! `ceil(p * N)`; for a low-is-novel similarity it is the value at rank
//! `N + 1 - ceil(p * N)`, so both orientations flag the same fraction of the
//! calibration set. Classification uses strict inequality.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Larger scores are more novel (losses).
    HighIsNovel,
    /// Smaller scores are more novel (similarities).
    LowIsNovel,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::HighIsNovel => "high-is-novel",
            Orientation::LowIsNovel => "low-is-novel",
        })
    }
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "high-is-novel" => Ok(Orientation::HighIsNovel),
            "low-is-novel" => Ok(Orientation::LowIsNovel),
            other => Err(Error::InvalidData(format!("unknown orientation `{other}`"))),
        }
    }
}

/// Sorted, finite calibration scores.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empirical CDF of an empty set".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite calibration score {v}")));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// Value at 1-indexed ascending `rank`.
    pub fn order_statistic(&self, rank: usize) -> f64 {
        self.sorted[rank.clamp(1, self.sorted.len()) - 1]
    }

    /// Fraction of calibration values `<= v`.
    pub fn cdf(&self, v: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= v) as f64 / self.sorted.len() as f64
    }
}

/// `ceil(p * n)` clamped to `[1, n]`, robust to `p * n` landing a few ulps
/// above an integer.
pub fn percentile_rank(p: f64, n: usize) -> usize {
    ((p * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoveltyThreshold {
    pub cutoff: f64,
    pub orientation: Orientation,
    pub percentile: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoveltyVerdict {
    pub score: f64,
    pub novel: bool,
    pub threshold: NoveltyThreshold,
}

pub fn fit_threshold(losses: &[f64], percentile: f64, orientation: Orientation) -> Result<NoveltyThreshold> {
    if !(percentile > 0.0 && percentile < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "percentile must lie in (0, 1), got {percentile}"
        )));
    }
    let cdf = EmpiricalCdf::new(losses)?;
    let n = cdf.len();
    let rank = percentile_rank(percentile, n);
    let cutoff = match orientation {
        Orientation::HighIsNovel => cdf.order_statistic(rank),
        Orientation::LowIsNovel => cdf.order_statistic(n + 1 - rank),
    };
    Ok(NoveltyThreshold {
        cutoff,
        orientation,
        percentile,
    })
}

impl NoveltyThreshold {
    pub fn is_novel(&self, score: f64) -> bool {
        match self.orientation {
            Orientation::HighIsNovel => score > self.cutoff,
            Orientation::LowIsNovel => score < self.cutoff,
        }
    }

    pub fn classify(&self, score: f64) -> Result<NoveltyVerdict> {
        if !score.is_finite() {
            return Err(Error::InvalidArgument(format!("cannot classify non-finite score {score}")));
        }
        Ok(NoveltyVerdict {
            score,
            novel: self.is_novel(score),
            threshold: *self,
        })
    }

    pub fn flagged_fraction(&self, scores: &[f64]) -> f64 {
        if scores.is_empty() {
            return 0.0;
        }
        scores.iter().filter(|&&s| self.is_novel(s)).count() as f64 / scores.len() as f64
    }

    /// Three lines: orientation, percentile, cutoff. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_record(&self) -> String {
        format!("{}\n{}\n{}\n", self.orientation, self.percentile, self.cutoff)
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let [orientation, percentile, cutoff] = lines.as_slice() else {
            return Err(Error::InvalidData(format!(
                "threshold record needs 3 lines, found {}",
                lines.len()
            )));
        };
        let parse = |s: &str, what: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::InvalidData(format!("threshold {what} `{s}`: {e}")))
        };
        let t = Self {
            orientation: orientation.parse()?,
            percentile: parse(percentile, "percentile")?,
            cutoff: parse(cutoff, "cutoff")?,
        };
        if !(t.percentile > 0.0 && t.percentile < 1.0) || !t.cutoff.is_finite() {
            return Err(Error::InvalidData(format!("invalid threshold record {t:?}")));
        }
        Ok(t)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_record()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_record(&text)
    }
}

pub fn classify(score: f64, threshold: &NoveltyThreshold) -> Result<NoveltyVerdict> {
    threshold.classify(score)
}

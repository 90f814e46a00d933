//! Scores, separation statistics and the files they are written to.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detector::{NoveltyThreshold, Orientation};
use crate::error::{Error, Result};

pub const HISTOGRAM_BINS: usize = 50;
pub const HISTOGRAM_HEADER: &str = "bin_low,bin_high,count_target,count_novel";

/// Probability that a novel sample is more novel than a target sample, ties
/// counting one half (Mann-Whitney U over average ranks).
pub fn auc(target: &[f64], novel: &[f64], orientation: Orientation) -> Result<f64> {
    if target.is_empty() || novel.is_empty() {
        return Err(Error::InvalidArgument("AUC needs nonempty target and novel sets".into()));
    }
    let sign = match orientation {
        Orientation::HighIsNovel => 1.0,
        Orientation::LowIsNovel => -1.0,
    };
    let mut all: Vec<(f64, bool)> = target
        .iter()
        .map(|&s| (sign * s, false))
        .chain(novel.iter().map(|&s| (sign * s, true)))
        .collect();
    if all.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::InvalidData("AUC over non-finite scores".into()));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * all[i..=j].iter().filter(|(_, n)| *n).count() as f64;
        i = j + 1;
    }
    let (nt, nn) = (target.len() as f64, novel.len() as f64);
    Ok((rank_sum - nn * (nn + 1.0) / 2.0) / (nt * nn))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub low: f64,
    pub high: f64,
    pub target: Vec<u64>,
    pub novel: Vec<u64>,
}

impl Histogram {
    /// Uniform bins over `[low, high]`; the last bin is closed and values
    /// outside the range land in the nearest end bin.
    pub fn new(low: f64, high: f64, bins: usize, target: &[f64], novel: &[f64]) -> Result<Self> {
        if bins == 0 || !(high > low) {
            return Err(Error::InvalidArgument(format!("bad histogram range [{low}, {high}] x {bins}")));
        }
        let count = |xs: &[f64]| {
            let mut c = vec![0u64; bins];
            for &x in xs {
                let t = ((x - low) / (high - low) * bins as f64).floor();
                c[(t.max(0.0) as usize).min(bins - 1)] += 1;
            }
            c
        };
        Ok(Self {
            low,
            high,
            target: count(target),
            novel: count(novel),
        })
    }

    /// 50 bins over `[0, 1]` for similarities, `[0, max]` for losses.
    pub fn for_scores(target: &[f64], novel: &[f64], orientation: Orientation) -> Result<Self> {
        let high = match orientation {
            Orientation::LowIsNovel => 1.0,
            Orientation::HighIsNovel => {
                let m = target.iter().chain(novel).copied().fold(0.0f64, f64::max);
                if m > 0.0 {
                    m
                } else {
                    1.0
                }
            }
        };
        Self::new(0.0, high, HISTOGRAM_BINS, target, novel)
    }

    pub fn bins(&self) -> usize {
        self.target.len()
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = (self.high - self.low) / self.bins() as f64;
        let hi = if i + 1 == self.bins() { self.high } else { self.low + w * (i + 1) as f64 };
        (self.low + w * i as f64, hi)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{HISTOGRAM_HEADER}\n");
        for i in 0..self.bins() {
            let (lo, hi) = self.bin_edges(i);
            s.push_str(&format!("{lo},{hi},{},{}\n", self.target[i], self.novel[i]));
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// One scored image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub path: String,
    /// `target`, `novel` or `calibration`.
    pub set: String,
    pub preprocess: String,
    pub loss: String,
    pub score: f64,
    pub novel: bool,
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| Error::InvalidData(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::InvalidData(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub preprocess: String,
    pub loss: String,
    pub orientation: String,
    pub n_target: usize,
    pub n_novel: usize,
    pub mean_target: f64,
    pub mean_novel: f64,
    pub auc: f64,
    pub cutoff: f64,
    pub percentile: f64,
    pub flagged_target: f64,
    pub flagged_novel: f64,
    pub artifacts: Vec<String>,
}

/// Per-image scores of both sets plus their summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ScoreRow>,
    pub summary: Summary,
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub struct Scored<'a> {
    pub paths: &'a [String],
    pub scores: &'a [f64],
}

impl ExperimentReport {
    pub fn build(
        label: &str,
        preprocess: &str,
        loss: &str,
        threshold: &NoveltyThreshold,
        target: Scored<'_>,
        novel: Scored<'_>,
    ) -> Result<Self> {
        if target.paths.len() != target.scores.len() || novel.paths.len() != novel.scores.len() {
            return Err(Error::DimensionMismatch("score and path counts differ".into()));
        }
        let mut rows = Vec::with_capacity(target.scores.len() + novel.scores.len());
        for (set, s) in [("target", &target), ("novel", &novel)] {
            for (p, &score) in s.paths.iter().zip(s.scores) {
                rows.push(ScoreRow {
                    path: p.clone(),
                    set: set.to_string(),
                    preprocess: preprocess.to_string(),
                    loss: loss.to_string(),
                    score,
                    novel: threshold.is_novel(score),
                });
            }
        }
        let summary = Summary {
            label: label.to_string(),
            preprocess: preprocess.to_string(),
            loss: loss.to_string(),
            orientation: threshold.orientation.to_string(),
            n_target: target.scores.len(),
            n_novel: novel.scores.len(),
            mean_target: mean(target.scores),
            mean_novel: mean(novel.scores),
            auc: auc(target.scores, novel.scores, threshold.orientation)?,
            cutoff: threshold.cutoff,
            percentile: threshold.percentile,
            flagged_target: threshold.flagged_fraction(target.scores),
            flagged_novel: threshold.flagged_fraction(novel.scores),
            artifacts: Vec::new(),
        };
        Ok(Self { rows, summary })
    }

    pub fn scores(&self, set: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.set == set).map(|r| r.score).collect()
    }

    pub fn histogram(&self) -> Result<Histogram> {
        let o: Orientation = self.summary.orientation.parse()?;
        Histogram::for_scores(&self.scores("target"), &self.scores("novel"), o)
    }

    /// Writes `report.jsonl`, `histogram.csv` and `summary.json` into `dir`
    /// and records them in the summary's artifact list.
    pub fn write(&mut self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [dir.join("report.jsonl"), dir.join("histogram.csv"), dir.join("summary.json")];
        write_jsonl(&files[0], &self.rows)?;
        self.histogram()?.write(&files[1])?;
        for f in &files {
            let name = f.file_name().expect("file name").to_string_lossy().into_owned();
            if !self.summary.artifacts.contains(&name) {
                self.summary.artifacts.push(name);
            }
        }
        write_json(&files[2], &self.summary)?;
        Ok(files.to_vec())
    }
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidData(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Summary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))
}

/// Fixed-width table of summaries.
pub fn summary_table(summaries: &[Summary]) -> String {
    let mut s = format!(
        "{:<24} {:>8} {:>6} {:>10} {:>10} {:>7} {:>9} {:>9}\n",
        "label", "preproc", "loss", "mean_tgt", "mean_nov", "auc", "flag_tgt", "flag_nov"
    );
    for m in summaries {
        s.push_str(&format!(
            "{:<24} {:>8} {:>6} {:>10.4} {:>10.4} {:>7.4} {:>9.3} {:>9.3}\n",
            m.label, m.preprocess, m.loss, m.mean_target, m.mean_novel, m.auc, m.flagged_target, m.flagged_novel
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_extremes_and_ties() {
        let h = Orientation::HighIsNovel;
        assert_eq!(auc(&[0.1, 0.2], &[0.3, 0.4], h).unwrap(), 1.0);
        assert_eq!(auc(&[0.3, 0.4], &[0.1, 0.2], h).unwrap(), 0.0);
        assert_eq!(auc(&[0.5, 0.5], &[0.5], h).unwrap(), 0.5);
        assert_eq!(auc(&[0.3, 0.4], &[0.1, 0.2], Orientation::LowIsNovel).unwrap(), 1.0);
        // one of four pairs inverted, one tied
        assert_eq!(auc(&[0.1, 0.3], &[0.3, 0.5], h).unwrap(), 0.875);
        assert!(auc(&[], &[1.0], h).is_err());
    }

    #[test]
    fn histogram_counts_sum_and_edges() {
        let t = [0.0, 0.5, 1.0, 1.2];
        let n = [-0.1, 0.02];
        let h = Histogram::new(0.0, 1.0, 50, &t, &n).unwrap();
        assert_eq!(h.target.iter().sum::<u64>(), 4);
        assert_eq!(h.novel.iter().sum::<u64>(), 2);
        assert_eq!(h.target[49], 2);
        assert_eq!(h.target[25], 1);
        assert_eq!(h.novel[0], 1);
        assert_eq!(h.novel[1], 1);
        let csv = h.to_csv();
        assert!(csv.starts_with(HISTOGRAM_HEADER));
        assert_eq!(csv.lines().count(), 51);
        assert!(csv.lines().last().unwrap().starts_with("0.98,1,"));
    }

    #[test]
    fn loss_histogram_spans_to_max() {
        let h = Histogram::for_scores(&[0.1, 0.2], &[0.8], Orientation::HighIsNovel).unwrap();
        assert_eq!(h.high, 0.8);
        assert_eq!(h.novel[49], 1);
    }
}

//! Run configuration: line-oriented `key = value` text.
//!
//! `#` starts a comment. Unknown and repeated keys are errors. Relative paths
//! in a config file are resolved against the file's directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::autoencoder::LossKind;
use crate::error::{Error, Result};
use crate::synth::WorldId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preprocess {
    /// Autoencoder sees the grayscale camera frame.
    Raw,
    /// Autoencoder sees the VBP saliency mask of the frame.
    Vbp,
}

impl fmt::Display for Preprocess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preprocess::Raw => "raw",
            Preprocess::Vbp => "vbp",
        })
    }
}

impl FromStr for Preprocess {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "raw" => Ok(Preprocess::Raw),
            "vbp" => Ok(Preprocess::Vbp),
            other => Err(Error::Config(format!("unknown preprocessing `{other}` (expected raw or vbp)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentId {
    /// Real-label vs random-label saliency.
    E0,
    /// Reconstructions under MSE and SSIM training.
    E1,
    /// World A as target, world B as novel.
    E2,
    /// Clean vs noise-corrupted world A.
    E3,
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "E0" => Ok(ExperimentId::E0),
            "E1" => Ok(ExperimentId::E1),
            "E2" => Ok(ExperimentId::E2),
            "E3" => Ok(ExperimentId::E3),
            other => Err(Error::Config(format!("unknown experiment `{other}` (expected E0..E3)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Target / training manifest.
    pub data: Option<PathBuf>,
    /// Novel-class manifest for scoring.
    pub novel: Option<PathBuf>,
    /// Calibration manifest; defaults to the held-out split of `data`.
    pub calibration: Option<PathBuf>,
    pub cnn: Option<PathBuf>,
    pub ae: Option<PathBuf>,
    pub threshold: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub loss: LossKind,
    pub preprocess: Preprocess,
    pub percentile: f64,
    pub experiment: Option<ExperimentId>,
    pub seed: u64,
    pub world: WorldId,
    /// Scenes generated by `gen-data` and used for CNN training in experiments.
    pub scenes: usize,
    /// Held-out images per class in experiments.
    pub test_scenes: usize,
    pub cnn_epochs: usize,
    pub ae_epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub train_fraction: f64,
    pub random_labels: bool,
    pub noise_sigma: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            novel: None,
            calibration: None,
            cnn: None,
            ae: None,
            threshold: None,
            out_dir: PathBuf::from("out"),
            loss: LossKind::ssim(),
            preprocess: Preprocess::Vbp,
            percentile: 0.99,
            experiment: None,
            seed: 0,
            world: WorldId::A,
            scenes: 2000,
            test_scenes: 200,
            cnn_epochs: 15,
            ae_epochs: 200,
            batch: 32,
            learning_rate: 1e-3,
            train_fraction: 0.8,
            random_labels: false,
            noise_sigma: 0.1,
        }
    }
}

pub const KEYS: &[&str] = &[
    "data",
    "novel",
    "calibration",
    "cnn",
    "ae",
    "threshold",
    "out_dir",
    "loss",
    "preprocess",
    "percentile",
    "experiment",
    "seed",
    "world",
    "scenes",
    "test_scenes",
    "cnn_epochs",
    "ae_epochs",
    "batch",
    "learning_rate",
    "train_fraction",
    "random_labels",
    "noise_sigma",
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

impl RunConfig {
    /// Parses config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`", lineno + 1)));
            };
            let key = key.trim();
            if !seen.insert(key.to_string()) && KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: `{key}` given twice", lineno + 1)));
            }
            cfg.set(key, value.trim(), base)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || Some(base.join(value));
        match key {
            "data" => self.data = path(),
            "novel" => self.novel = path(),
            "calibration" => self.calibration = path(),
            "cnn" => self.cnn = path(),
            "ae" => self.ae = path(),
            "threshold" => self.threshold = path(),
            "out_dir" => self.out_dir = base.join(value),
            "loss" => self.loss = LossKind::parse(value)?,
            "preprocess" => self.preprocess = value.parse()?,
            "percentile" => self.percentile = num(key, value)?,
            "experiment" => self.experiment = Some(value.parse()?),
            "seed" => self.seed = num(key, value)?,
            "world" => self.world = value.parse()?,
            "scenes" => self.scenes = num(key, value)?,
            "test_scenes" => self.test_scenes = num(key, value)?,
            "cnn_epochs" => self.cnn_epochs = num(key, value)?,
            "ae_epochs" => self.ae_epochs = num(key, value)?,
            "batch" => self.batch = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "train_fraction" => self.train_fraction = num(key, value)?,
            "random_labels" => self.random_labels = num(key, value)?,
            "noise_sigma" => self.noise_sigma = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override (as given on the command line).
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{kv}` is not `key=value`")))?;
        self.set(k.trim(), v.trim(), Path::new(""))?;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.percentile > 0.0 && self.percentile < 1.0) {
            return Err(Error::Config(format!("percentile must lie in (0, 1), got {}", self.percentile)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1], got {}",
                self.train_fraction
            )));
        }
        if self.scenes == 0 || self.test_scenes == 0 || self.cnn_epochs == 0 || self.ae_epochs == 0 || self.batch == 0 {
            return Err(Error::Config("counts (scenes, epochs, batch) must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }

    pub(crate) fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        let p = value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("`{key}` is required for this command")))?;
        if !p.exists() {
            return Err(Error::Config(format!("`{key}` path {} does not exist", p.display())));
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_relative_paths() {
        let text = "# E2 recipe\nexperiment = e2\nloss = mse  # baseline\npreprocess = raw\nseed = 42\ndata = a/manifest.csv\n\n";
        let cfg = RunConfig::parse(text, Path::new("/cfg")).unwrap();
        assert_eq!(cfg.experiment, Some(ExperimentId::E2));
        assert_eq!(cfg.loss, LossKind::Mse);
        assert_eq!(cfg.preprocess, Preprocess::Raw);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.data.as_deref(), Some(Path::new("/cfg/a/manifest.csv")));
        assert_eq!(cfg.percentile, 0.99);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        assert!(matches!(RunConfig::parse("colour = red", Path::new("")), Err(Error::Config(_))));
        assert!(RunConfig::parse("seed = 1\nseed = 2", Path::new("")).is_err());
        assert!(RunConfig::parse("seed 1", Path::new("")).is_err());
        assert!(RunConfig::parse("seed = -1", Path::new("")).is_err());
        assert!(RunConfig::parse("percentile = 1.0", Path::new("")).is_err());
        assert!(RunConfig::parse("experiment = E9", Path::new("")).is_err());
    }

    #[test]
    fn overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_override("test_scenes=500").unwrap();
        assert_eq!(cfg.test_scenes, 500);
        assert!(cfg.apply_override("batch=0").is_err());
        assert!(cfg.apply_override("nonsense").is_err());
    }
}

//! The CLI verbs as library functions over a [`RunConfig`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::{ae_train_with, AeModel, AeTrainConfig, LossKind};
use crate::cnn::{angle_mse, cnn_train, cnn_train_random_labels, CnnModel, DEFAULT_INPUT_DIMS};
use crate::dataset::{split_dataset, DatasetManifest, ManifestRecord, SplitSpec};
use crate::detector::{fit_threshold, NoveltyThreshold, Orientation};
use crate::error::{Error, Result};
use crate::image::{resize_bilinear, to_grayscale, ImageBuf};
use crate::metrics::{mse, ssim_mean};
use crate::nn::TrainConfig;
use crate::pipeline::config::{Preprocess, RunConfig};
use crate::pipeline::report::{self, ExperimentReport, Scored, ScoreRow, Summary};
use crate::synth::{self, WorldSpec};
use crate::{pnm, vbp, weights};

pub const CNN_WEIGHTS: &str = "cnn.nvsm";
pub const CNN_RANDOM_WEIGHTS: &str = "cnn_random.nvsm";
pub const AE_WEIGHTS: &str = "ae.nvsm";
pub const THRESHOLD_FILE: &str = "threshold.txt";

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Reads a PGM, or a PPM converted to grayscale, resized to `dims` if needed.
pub fn load_image(path: &Path, dims: (usize, usize)) -> Result<ImageBuf> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let context = |e: Error| Error::InvalidData(format!("{}: {e}", path.display()));
    let img = if bytes.starts_with(b"P6") {
        to_grayscale(&pnm::decode_ppm(&bytes).map_err(context)?)
    } else {
        pnm::decode_pgm(&bytes).map_err(context)?
    };
    if img.dims() == dims {
        Ok(img)
    } else {
        resize_bilinear(&img, dims.0, dims.1)
    }
}

pub fn load_images(manifest: &DatasetManifest, dims: (usize, usize)) -> Result<Vec<ImageBuf>> {
    (0..manifest.len())
        .map(|i| load_image(&manifest.resolve(i), dims))
        .collect()
}

/// `(train, held_out)`; a fraction of 1 keeps everything for training.
pub fn split(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<(DatasetManifest, DatasetManifest)> {
    if cfg.train_fraction >= 1.0 {
        let empty = DatasetManifest {
            records: Vec::new(),
            root: manifest.root.clone(),
        };
        return Ok((manifest.clone(), empty));
    }
    split_dataset(
        manifest,
        SplitSpec {
            train_fraction: cfg.train_fraction,
            seed: cfg.seed,
        },
    )
}

/// Applies the configured preprocessing; `vbp` needs a CNN.
pub fn preprocess(images: &[ImageBuf], mode: Preprocess, cnn: Option<&CnnModel>) -> Result<Vec<ImageBuf>> {
    match mode {
        Preprocess::Raw => Ok(images.to_vec()),
        Preprocess::Vbp => {
            let cnn = cnn.ok_or_else(|| Error::Config("preprocess = vbp needs `cnn` weights".into()))?;
            Ok(vbp::vbp_batch(cnn, images)?.into_iter().map(vbp::SaliencyMask::into_image).collect())
        }
    }
}

/// SSIM runs report similarity (low is novel), MSE runs report loss.
pub fn orientation_for(loss: &LossKind) -> Orientation {
    match loss {
        LossKind::Mse => Orientation::HighIsNovel,
        LossKind::Ssim(_) => Orientation::LowIsNovel,
    }
}

/// Per-image novelty scores of `images` under `ae`.
pub fn score_images(ae: &AeModel, images: &[ImageBuf], loss: &LossKind) -> Result<Vec<f64>> {
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let recon = ae.reconstruct(img)?;
            let s = match loss {
                LossKind::Mse => mse(img, &recon)?,
                LossKind::Ssim(p) => ssim_mean(img, &recon, p)?,
            };
            if s.is_finite() {
                Ok(s)
            } else {
                Err(Error::at_index(i, Error::NumericalFailure(format!("score {s}"))))
            }
        })
        .collect()
}

pub fn write_history(path: &Path, history: &[f64]) -> Result<()> {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        s.push_str(&format!("{},{l}\n", i + 1));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn train_config(cfg: &RunConfig, epochs: usize) -> TrainConfig {
    TrainConfig {
        batch: cfg.batch,
        epochs,
        learning_rate: cfg.learning_rate,
        seed: cfg.seed,
    }
}

/// `gen-data`: a synthetic dataset for `cfg.world` into `cfg.out_dir`.
pub fn gen_data(cfg: &RunConfig) -> Result<DatasetManifest> {
    let spec = WorldSpec::for_world(cfg.world, cfg.seed);
    let m = synth::gen_dataset(&spec, cfg.scenes, &cfg.out_dir)?;
    log::info!("wrote {} world-{} scenes to {}", m.len(), cfg.world, cfg.out_dir.display());
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct CnnRun {
    pub model: CnnModel,
    pub history: Vec<f64>,
    /// Angle MSE on the held-out split, if there is one.
    pub heldout_mse: Option<f64>,
    pub weights: PathBuf,
}

/// `train-cnn`: trains on the train split of `data`, writes weights and a
/// per-epoch loss history.
pub fn train_cnn(cfg: &RunConfig) -> Result<CnnRun> {
    let manifest = DatasetManifest::read(cfg.require(&cfg.data, "data")?)?;
    let (train, held) = split(&manifest, cfg)?;
    let images = load_images(&train, DEFAULT_INPUT_DIMS)?;
    let tc = train_config(cfg, cfg.cnn_epochs);
    let init = CnnModel::default_steering(cfg.seed);
    let trained = if cfg.random_labels {
        cnn_train_random_labels(init, &images, &tc)?
    } else {
        cnn_train(init, &images, &train.angles(), &tc)?
    };
    let heldout_mse = if held.is_empty() {
        None
    } else {
        Some(angle_mse(&trained.model, &load_images(&held, DEFAULT_INPUT_DIMS)?, &held.angles())?)
    };
    ensure_dir(&cfg.out_dir)?;
    let name = if cfg.random_labels { CNN_RANDOM_WEIGHTS } else { CNN_WEIGHTS };
    let stem = name.trim_end_matches(".nvsm");
    let weights_path = cfg.out_dir.join(name);
    weights::save_cnn(&trained.model, &weights_path)?;
    write_history(&cfg.out_dir.join(format!("{stem}_history.csv")), &trained.history)?;
    if let Some(m) = heldout_mse {
        log::info!("held-out angle MSE {m:.6} rad^2");
    }
    Ok(CnnRun {
        model: trained.model,
        history: trained.history,
        heldout_mse,
        weights: weights_path,
    })
}

fn mask_name(path: &str) -> String {
    let stem = Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string());
    format!("{stem}_vbp.pgm")
}

/// `export-vbp`: one mask PGM per manifest image plus a mask manifest.
/// Failing images are logged and skipped; the run then reports an error.
pub fn export_vbp(cfg: &RunConfig) -> Result<DatasetManifest> {
    let manifest = DatasetManifest::read(cfg.require(&cfg.data, "data")?)?;
    let cnn = weights::load_cnn(cfg.require(&cfg.cnn, "cnn")?, DEFAULT_INPUT_DIMS)?;
    let dir = cfg.out_dir.join("masks");
    ensure_dir(&dir)?;
    let mut records = Vec::with_capacity(manifest.len());
    let mut failed = 0;
    for (i, rec) in manifest.records.iter().enumerate() {
        let result = load_image(&manifest.resolve(i), cnn.input_dims())
            .and_then(|img| vbp::saliency(&cnn, &img))
            .and_then(|mask| {
                let name = mask_name(&rec.path);
                pnm::write_pgm(dir.join(&name), mask.image())?;
                Ok(name)
            });
        match result {
            Ok(name) => records.push(ManifestRecord {
                path: name,
                angle_rad: rec.angle_rad,
            }),
            Err(e) => {
                log::error!("{}: {e}", rec.path);
                failed += 1;
            }
        }
    }
    let out = DatasetManifest {
        records,
        root: dir.clone(),
    };
    if !out.is_empty() {
        out.write(dir.join(synth::MANIFEST_NAME))?;
    }
    if failed > 0 {
        return Err(Error::InvalidData(format!(
            "VBP export failed for {failed} of {} images",
            manifest.len()
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeMeta {
    pub loss: String,
    pub preprocess: String,
    pub epochs: usize,
    pub seed: u64,
    pub images: usize,
}

#[derive(Debug, Clone)]
pub struct AeRun {
    pub model: AeModel,
    pub history: Vec<f64>,
    pub meta: AeMeta,
    pub weights: PathBuf,
}

fn maybe_cnn(cfg: &RunConfig) -> Result<Option<CnnModel>> {
    match cfg.preprocess {
        Preprocess::Raw => Ok(None),
        Preprocess::Vbp => Ok(Some(weights::load_cnn(cfg.require(&cfg.cnn, "cnn")?, DEFAULT_INPUT_DIMS)?)),
    }
}

/// Images of `manifest` after the configured preprocessing.
fn prepared(cfg: &RunConfig, manifest: &DatasetManifest, cnn: Option<&CnnModel>) -> Result<Vec<ImageBuf>> {
    preprocess(&load_images(manifest, DEFAULT_INPUT_DIMS)?, cfg.preprocess, cnn)
}

/// `train-ae`: autoencoder on the (preprocessed) train split of `data`.
pub fn train_ae(cfg: &RunConfig) -> Result<AeRun> {
    let manifest = DatasetManifest::read(cfg.require(&cfg.data, "data")?)?;
    let (train, _) = split(&manifest, cfg)?;
    let cnn = maybe_cnn(cfg)?;
    let images = prepared(cfg, &train, cnn.as_ref())?;
    let ac = AeTrainConfig {
        train: train_config(cfg, cfg.ae_epochs),
        loss: cfg.loss,
    };
    let trained = ae_train_with(AeModel::default_pipeline(cfg.seed), &images, &ac, |e, l| {
        log::debug!("ae epoch {e}: {} {l:.6}", cfg.loss)
    })?;
    ensure_dir(&cfg.out_dir)?;
    let weights_path = cfg.out_dir.join(AE_WEIGHTS);
    weights::save_ae(&trained.model, &weights_path)?;
    write_history(&cfg.out_dir.join("ae_history.csv"), &trained.history)?;
    let meta = AeMeta {
        loss: cfg.loss.to_string(),
        preprocess: cfg.preprocess.to_string(),
        epochs: cfg.ae_epochs,
        seed: cfg.seed,
        images: images.len(),
    };
    report::write_json(cfg.out_dir.join("ae_meta.json"), &meta)?;
    Ok(AeRun {
        model: trained.model,
        history: trained.history,
        meta,
        weights: weights_path,
    })
}

/// `calibrate`: fits the percentile threshold on the calibration set (the
/// held-out split of `data` unless `calibration` is given; the train split
/// when nothing is held out).
pub fn calibrate(cfg: &RunConfig) -> Result<NoveltyThreshold> {
    let ae = weights::load_ae(cfg.require(&cfg.ae, "ae")?)?;
    let manifest = match &cfg.calibration {
        Some(_) => DatasetManifest::read(cfg.require(&cfg.calibration, "calibration")?)?,
        None => {
            let (train, held_out) = split(&DatasetManifest::read(cfg.require(&cfg.data, "data")?)?, cfg)?;
            if held_out.is_empty() { train } else { held_out }
        }
    };
    let cnn = maybe_cnn(cfg)?;
    let scores = score_images(&ae, &prepared(cfg, &manifest, cnn.as_ref())?, &cfg.loss)?;
    let threshold = fit_threshold(&scores, cfg.percentile, orientation_for(&cfg.loss))?;
    ensure_dir(&cfg.out_dir)?;
    threshold.write(cfg.out_dir.join(THRESHOLD_FILE))?;
    let rows: Vec<ScoreRow> = manifest
        .records
        .iter()
        .zip(&scores)
        .map(|(r, &score)| ScoreRow {
            path: r.path.clone(),
            set: "calibration".into(),
            preprocess: cfg.preprocess.to_string(),
            loss: cfg.loss.to_string(),
            score,
            novel: threshold.is_novel(score),
        })
        .collect();
    report::write_jsonl(cfg.out_dir.join("calibration.jsonl"), &rows)?;
    log::info!(
        "threshold {} ({}), flags {:.4} of calibration set",
        threshold.cutoff,
        threshold.orientation,
        threshold.flagged_fraction(&scores)
    );
    Ok(threshold)
}

/// `score`: scores `data` (target) and `novel` against a fitted threshold.
pub fn score(cfg: &RunConfig) -> Result<ExperimentReport> {
    let ae = weights::load_ae(cfg.require(&cfg.ae, "ae")?)?;
    let threshold = NoveltyThreshold::read(cfg.require(&cfg.threshold, "threshold")?)?;
    if threshold.orientation != orientation_for(&cfg.loss) {
        return Err(Error::Config(format!(
            "threshold is {} but loss {} scores are {}",
            threshold.orientation,
            cfg.loss,
            orientation_for(&cfg.loss)
        )));
    }
    let target = DatasetManifest::read(cfg.require(&cfg.data, "data")?)?;
    let novel = DatasetManifest::read(cfg.require(&cfg.novel, "novel")?)?;
    let cnn = maybe_cnn(cfg)?;
    let ts = score_images(&ae, &prepared(cfg, &target, cnn.as_ref())?, &cfg.loss)?;
    let ns = score_images(&ae, &prepared(cfg, &novel, cnn.as_ref())?, &cfg.loss)?;
    let paths = |m: &DatasetManifest| m.records.iter().map(|r| r.path.clone()).collect::<Vec<_>>();
    let (tp, np) = (paths(&target), paths(&novel));
    let label = format!("{}+{}", cfg.preprocess, cfg.loss);
    let mut rep = ExperimentReport::build(
        &label,
        &cfg.preprocess.to_string(),
        cfg.loss.name(),
        &threshold,
        Scored { paths: &tp, scores: &ts },
        Scored { paths: &np, scores: &ns },
    )?;
    rep.write(&cfg.out_dir)?;
    Ok(rep)
}

/// `report`: every `summary.json` below `out_dir`, as a table written to
/// `out_dir/report.txt`.
pub fn report(cfg: &RunConfig) -> Result<Vec<Summary>> {
    let mut paths = Vec::new();
    collect_summaries(&cfg.out_dir, &mut paths)?;
    paths.sort();
    let summaries = paths.iter().map(report::read_summary).collect::<Result<Vec<_>>>()?;
    if summaries.is_empty() {
        return Err(Error::InvalidData(format!("no summary.json under {}", cfg.out_dir.display())));
    }
    let table = report::summary_table(&summaries);
    let out = cfg.out_dir.join("report.txt");
    std::fs::write(&out, &table).map_err(|e| Error::io(&out, e))?;
    print!("{table}");
    Ok(summaries)
}

fn collect_summaries(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_summaries(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == "summary.json") {
            out.push(path);
        }
    }
    Ok(())
}

//! Experiment recipes E0-E3 on synthetic worlds.
//!
//! A [`Workbench`] generates the scenes once and caches the trained steering
//! CNNs and autoencoders, so E2 and E3 share models the way they would share
//! weights files on disk.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::{ae_train_with, AeModel, AeTrainConfig, LossKind};
use crate::cnn::{angle_mse, cnn_train, cnn_train_random_labels, CnnModel, TrainedCnn};
use crate::corruption::add_gaussian_noise;
use crate::dataset::{shuffled_indices, train_count};
use crate::detector::{fit_threshold, NoveltyThreshold};
use crate::error::{Error, Result};
use crate::image::ImageBuf;
use crate::metrics::{mse, ssim_mean, SsimParams};
use crate::pipeline::commands::{orientation_for, preprocess, score_images, train_config, write_history};
use crate::pipeline::config::{ExperimentId, Preprocess, RunConfig};
use crate::pipeline::report::{self, mean, ExperimentReport, Scored};
use crate::synth::{edge_concentration, gen_scenes, Scene, WorldSpec};
use crate::{pnm, rng, vbp, weights};

/// Preprocessing and loss of one autoencoder pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Setup {
    pub preprocess: Preprocess,
    pub loss: LossId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossId {
    Mse,
    Ssim,
}

impl Setup {
    pub const RAW_MSE: Setup = Setup { preprocess: Preprocess::Raw, loss: LossId::Mse };
    pub const VBP_MSE: Setup = Setup { preprocess: Preprocess::Vbp, loss: LossId::Mse };
    pub const VBP_SSIM: Setup = Setup { preprocess: Preprocess::Vbp, loss: LossId::Ssim };

    pub fn loss_kind(&self) -> LossKind {
        match self.loss {
            LossId::Mse => LossKind::Mse,
            LossId::Ssim => LossKind::ssim(),
        }
    }

    pub fn label(&self) -> String {
        format!("{}+{}", self.preprocess, self.loss_kind())
    }
}

/// Noise levels swept alongside the configured sigma in E3.
pub const NOISE_SWEEP: [f64; 3] = [0.05, 0.1, 0.2];

pub struct Workbench {
    pub cfg: RunConfig,
    /// World A scenes the CNN and autoencoders train on.
    pub train: Vec<Scene>,
    /// World A scenes held out from the CNN split (validation).
    pub validation: Vec<Scene>,
    /// Fresh world A scenes used as the target test set.
    pub target: Vec<Scene>,
    /// World B scenes used as the novel test set.
    pub novel: Vec<Scene>,
    cnn: Option<TrainedCnn>,
    random_cnn: Option<TrainedCnn>,
    aes: HashMap<Setup, (AeModel, Vec<f64>)>,
    train_inputs: HashMap<Preprocess, Vec<ImageBuf>>,
}

fn images(scenes: &[Scene]) -> Vec<ImageBuf> {
    scenes.iter().map(|s| s.image.clone()).collect()
}

fn angles(scenes: &[Scene]) -> Vec<f64> {
    scenes.iter().map(|s| s.angle).collect()
}

impl Workbench {
    /// Generates `cfg.scenes` world A scenes (split by `train_fraction`) and
    /// `cfg.test_scenes` fresh scenes from each world.
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let all = gen_scenes(&WorldSpec::world_a(cfg.seed), cfg.scenes)?;
        let order = shuffled_indices(all.len(), cfg.seed, 0);
        let n_train = train_count(all.len(), cfg.train_fraction).max(1);
        let train = order[..n_train].iter().map(|&i| all[i].clone()).collect();
        let validation = order[n_train..].iter().map(|&i| all[i].clone()).collect();
        Ok(Self {
            cfg: cfg.clone(),
            train,
            validation,
            target: gen_scenes(&WorldSpec::world_a(rng::mix(cfg.seed, 101)), cfg.test_scenes)?,
            novel: gen_scenes(&WorldSpec::world_b(rng::mix(cfg.seed, 202)), cfg.test_scenes)?,
            cnn: None,
            random_cnn: None,
            aes: HashMap::new(),
            train_inputs: HashMap::new(),
        })
    }

    pub fn cnn(&mut self) -> Result<&TrainedCnn> {
        if self.cnn.is_none() {
            log::info!("training steering CNN on {} scenes", self.train.len());
            let tc = train_config(&self.cfg, self.cfg.cnn_epochs);
            let t = cnn_train(CnnModel::default_steering(self.cfg.seed), &images(&self.train), &angles(&self.train), &tc)?;
            self.cnn = Some(t);
        }
        Ok(self.cnn.as_ref().expect("trained"))
    }

    /// Same initialization and images as [`Self::cnn`], random labels.
    pub fn random_cnn(&mut self) -> Result<&TrainedCnn> {
        if self.random_cnn.is_none() {
            log::info!("training random-label CNN");
            let tc = train_config(&self.cfg, self.cfg.cnn_epochs);
            let t = cnn_train_random_labels(CnnModel::default_steering(self.cfg.seed), &images(&self.train), &tc)?;
            self.random_cnn = Some(t);
        }
        Ok(self.random_cnn.as_ref().expect("trained"))
    }

    /// Held-out angle MSE of the real-label CNN on the target set.
    pub fn heldout_mse(&mut self) -> Result<f64> {
        let (imgs, a) = (images(&self.target), angles(&self.target));
        angle_mse(&self.cnn()?.model, &imgs, &a)
    }

    pub fn prepare(&mut self, imgs: &[ImageBuf], mode: Preprocess) -> Result<Vec<ImageBuf>> {
        match mode {
            Preprocess::Raw => Ok(imgs.to_vec()),
            Preprocess::Vbp => {
                let cnn = &self.cnn()?.model;
                preprocess(imgs, mode, Some(cnn))
            }
        }
    }

    fn train_inputs(&mut self, mode: Preprocess) -> Result<Vec<ImageBuf>> {
        if !self.train_inputs.contains_key(&mode) {
            let imgs = images(&self.train);
            let prepared = self.prepare(&imgs, mode)?;
            self.train_inputs.insert(mode, prepared);
        }
        Ok(self.train_inputs[&mode].clone())
    }

    pub fn autoencoder(&mut self, setup: Setup) -> Result<&AeModel> {
        if !self.aes.contains_key(&setup) {
            let inputs = self.train_inputs(setup.preprocess)?;
            let ac = AeTrainConfig {
                train: train_config(&self.cfg, self.cfg.ae_epochs),
                loss: setup.loss_kind(),
            };
            log::info!("training {} autoencoder for {} epochs", setup.label(), ac.train.epochs);
            let label = setup.label();
            let t = ae_train_with(AeModel::default_pipeline(self.cfg.seed), &inputs, &ac, |e, l| {
                if (e + 1) % 20 == 0 {
                    log::info!("{label} epoch {}: loss {l:.6}", e + 1);
                }
            })?;
            self.aes.insert(setup, (t.model, t.history));
        }
        Ok(&self.aes[&setup].0)
    }

    pub fn ae_history(&self, setup: Setup) -> Option<&[f64]> {
        self.aes.get(&setup).map(|(_, h)| h.as_slice())
    }

    /// Threshold fitted on the held-out validation scenes, or on the
    /// training inputs when there are none (`train_fraction = 1`).
    pub fn threshold(&mut self, setup: Setup) -> Result<NoveltyThreshold> {
        let inputs = if self.validation.is_empty() {
            self.train_inputs(setup.preprocess)?
        } else {
            let imgs = images(&self.validation);
            self.prepare(&imgs, setup.preprocess)?
        };
        let ae = self.autoencoder(setup)?;
        let scores = score_images(ae, &inputs, &setup.loss_kind())?;
        fit_threshold(&scores, self.cfg.percentile, orientation_for(&setup.loss_kind()))
    }

    /// Scores `target` vs `novel` images under `setup`.
    pub fn compare(
        &mut self,
        setup: Setup,
        label: &str,
        target: (&[String], &[ImageBuf]),
        novel: (&[String], &[ImageBuf]),
    ) -> Result<ExperimentReport> {
        let threshold = self.threshold(setup)?;
        let t_in = self.prepare(target.1, setup.preprocess)?;
        let n_in = self.prepare(novel.1, setup.preprocess)?;
        let ae = self.autoencoder(setup)?;
        let ts = score_images(ae, &t_in, &setup.loss_kind())?;
        let ns = score_images(ae, &n_in, &setup.loss_kind())?;
        ExperimentReport::build(
            label,
            &setup.preprocess.to_string(),
            setup.loss_kind().name(),
            &threshold,
            Scored { paths: target.0, scores: &ts },
            Scored { paths: novel.0, scores: &ns },
        )
    }
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}_{i:05}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyStats {
    /// Mean edge-band concentration over the target set.
    pub real_ratio: f64,
    pub random_ratio: f64,
    pub real_heldout_mse: f64,
    pub random_heldout_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionStats {
    pub label: String,
    pub mean_ssim: f64,
    pub mean_mse: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentBundle {
    pub id: ExperimentId,
    pub reports: Vec<ExperimentReport>,
    pub saliency: Option<SaliencyStats>,
    pub reconstructions: Vec<ReconstructionStats>,
    pub artifacts: Vec<PathBuf>,
}

impl ExperimentBundle {
    pub fn report(&self, label: &str) -> Option<&ExperimentReport> {
        self.reports.iter().find(|r| r.summary.label == label)
    }
}

/// E0: edge concentration of VBP masks, real-label vs random-label CNN.
pub fn run_e0(wb: &mut Workbench, out: Option<&Path>) -> Result<ExperimentBundle> {
    let target = images(&wb.target);
    let ratio = |model: &CnnModel, scenes: &[Scene]| -> Result<f64> {
        let mut total = 0.0;
        for s in scenes {
            total += edge_concentration(vbp::saliency(model, &s.image)?.image(), &s.edge_band);
        }
        Ok(total / scenes.len() as f64)
    };
    let real = wb.cnn()?.model.clone();
    let random = wb.random_cnn()?.model.clone();
    let stats = SaliencyStats {
        real_ratio: ratio(&real, &wb.target)?,
        random_ratio: ratio(&random, &wb.target)?,
        real_heldout_mse: angle_mse(&real, &target, &angles(&wb.target))?,
        random_heldout_mse: angle_mse(&random, &target, &angles(&wb.target))?,
    };
    let mut artifacts = Vec::new();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, img) in target.iter().take(4).enumerate() {
            for (tag, model) in [("real", &real), ("random", &random)] {
                let p = dir.join(format!("mask_{tag}_{i}.pgm"));
                pnm::write_pgm(&p, vbp::saliency(model, img)?.image())?;
                artifacts.push(p);
            }
            let p = dir.join(format!("input_{i}.pgm"));
            pnm::write_pgm(&p, img)?;
            artifacts.push(p);
        }
        for (name, model) in [("cnn.nvsm", &real), ("cnn_random.nvsm", &random)] {
            let p = dir.join(name);
            weights::save_cnn(model, &p)?;
            artifacts.push(p);
        }
        let p = dir.join("cnn_history.csv");
        write_history(&p, &wb.cnn()?.history)?;
        artifacts.push(p);
        let p = dir.join("cnn_random_history.csv");
        write_history(&p, &wb.random_cnn()?.history)?;
        artifacts.push(p);
        let p = dir.join("saliency.json");
        report::write_json(&p, &stats)?;
        artifacts.push(p);
    }
    Ok(ExperimentBundle {
        id: ExperimentId::E0,
        reports: Vec::new(),
        saliency: Some(stats),
        reconstructions: Vec::new(),
        artifacts,
    })
}

/// E1: VBP masks reconstructed by the MSE- and SSIM-trained autoencoders.
pub fn run_e1(wb: &mut Workbench, out: Option<&Path>) -> Result<ExperimentBundle> {
    let target = images(&wb.target);
    let masks = wb.prepare(&target, Preprocess::Vbp)?;
    let params = SsimParams::default();
    let mut reconstructions = Vec::new();
    let mut artifacts = Vec::new();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for setup in [Setup::VBP_MSE, Setup::VBP_SSIM] {
        let ae = wb.autoencoder(setup)?;
        let recon = ae.reconstruct_batch(&masks)?;
        let mut ss = Vec::with_capacity(masks.len());
        let mut ms = Vec::with_capacity(masks.len());
        for (m, r) in masks.iter().zip(&recon) {
            ss.push(ssim_mean(m, r, &params)?);
            ms.push(mse(m, r)?);
        }
        reconstructions.push(ReconstructionStats {
            label: setup.label(),
            mean_ssim: mean(&ss),
            mean_mse: mean(&ms),
        });
        if let Some(dir) = out {
            for (i, r) in recon.iter().take(4).enumerate() {
                let p = dir.join(format!("recon_{}_{i}.pgm", setup.loss_kind()));
                pnm::write_pgm(&p, r)?;
                artifacts.push(p);
            }
        }
    }
    if let Some(dir) = out {
        for (i, m) in masks.iter().take(4).enumerate() {
            let p = dir.join(format!("mask_{i}.pgm"));
            pnm::write_pgm(&p, m)?;
            artifacts.push(p);
        }
        let p = dir.join("reconstructions.json");
        report::write_json(&p, &reconstructions)?;
        artifacts.push(p);
    }
    Ok(ExperimentBundle {
        id: ExperimentId::E1,
        reports: Vec::new(),
        saliency: None,
        reconstructions,
        artifacts,
    })
}

fn write_reports(reports: &mut [ExperimentReport], out: Option<&Path>) -> Result<Vec<PathBuf>> {
    let mut artifacts = Vec::new();
    if let Some(dir) = out {
        for r in reports.iter_mut() {
            let sub = dir.join(r.summary.label.replace('+', "_"));
            artifacts.extend(r.write(&sub)?);
        }
    }
    Ok(artifacts)
}

/// E2: world A (target) vs world B (novel) under raw+MSE, VBP+MSE, VBP+SSIM.
pub fn run_e2(wb: &mut Workbench, out: Option<&Path>) -> Result<ExperimentBundle> {
    let (tn, nn) = (names("worldA", wb.target.len()), names("worldB", wb.novel.len()));
    let (ti, ni) = (images(&wb.target), images(&wb.novel));
    let mut reports = Vec::new();
    for setup in [Setup::RAW_MSE, Setup::VBP_MSE, Setup::VBP_SSIM] {
        reports.push(wb.compare(setup, &setup.label(), (&tn, &ti), (&nn, &ni))?);
    }
    let mut artifacts = write_reports(&mut reports, out)?;
    if let Some(dir) = out {
        for setup in [Setup::RAW_MSE, Setup::VBP_MSE, Setup::VBP_SSIM] {
            let sub = dir.join(setup.label().replace('+', "_"));
            let p = sub.join("ae.nvsm");
            weights::save_ae(wb.autoencoder(setup)?, &p)?;
            artifacts.push(p);
            let p = sub.join("ae_history.csv");
            write_history(&p, wb.ae_history(setup).unwrap_or(&[]))?;
            artifacts.push(p);
            let p = sub.join("threshold.txt");
            wb.threshold(setup)?.write(&p)?;
            artifacts.push(p);
        }
    }
    Ok(ExperimentBundle {
        id: ExperimentId::E2,
        reports,
        saliency: None,
        reconstructions: Vec::new(),
        artifacts,
    })
}

/// World A target images with Gaussian noise of `sigma`, per-image seeds.
pub fn noisy_target(wb: &Workbench, sigma: f64) -> Result<Vec<ImageBuf>> {
    wb.target
        .iter()
        .enumerate()
        .map(|(i, s)| add_gaussian_noise(&s.image, sigma, rng::mix(wb.cfg.seed, 303 + i as u64)))
        .collect()
}

/// E3: clean vs noisy world A under VBP+MSE and VBP+SSIM. The first two
/// reports use `cfg.noise_sigma`; the rest sweep [`NOISE_SWEEP`].
pub fn run_e3(wb: &mut Workbench, out: Option<&Path>) -> Result<ExperimentBundle> {
    let clean = images(&wb.target);
    let tn = names("clean", clean.len());
    let mut sigmas = vec![wb.cfg.noise_sigma];
    sigmas.extend(NOISE_SWEEP.iter().filter(|&&s| s != wb.cfg.noise_sigma));
    let mut reports = Vec::new();
    for (k, &sigma) in sigmas.iter().enumerate() {
        let noisy = noisy_target(wb, sigma)?;
        let nn = names(&format!("noisy{sigma}"), noisy.len());
        for setup in [Setup::VBP_MSE, Setup::VBP_SSIM] {
            let label = if k == 0 { setup.label() } else { format!("{}@sigma{sigma}", setup.label()) };
            reports.push(wb.compare(setup, &label, (&tn, &clean), (&nn, &noisy))?);
        }
    }
    let artifacts = write_reports(&mut reports, out)?;
    Ok(ExperimentBundle {
        id: ExperimentId::E3,
        reports,
        saliency: None,
        reconstructions: Vec::new(),
        artifacts,
    })
}

pub fn run(wb: &mut Workbench, id: ExperimentId, out: Option<&Path>) -> Result<ExperimentBundle> {
    match id {
        ExperimentId::E0 => run_e0(wb, out),
        ExperimentId::E1 => run_e1(wb, out),
        ExperimentId::E2 => run_e2(wb, out),
        ExperimentId::E3 => run_e3(wb, out),
    }
}

/// `experiment`: runs `cfg.experiment` into `out_dir/<id>`.
pub fn cmd_experiment(cfg: &RunConfig) -> Result<ExperimentBundle> {
    let id = cfg
        .experiment
        .ok_or_else(|| Error::Config("`experiment` is required (E0, E1, E2 or E3)".into()))?;
    let mut wb = Workbench::new(cfg)?;
    let dir = cfg.out_dir.join(id.to_string());
    run(&mut wb, id, Some(&dir))
}

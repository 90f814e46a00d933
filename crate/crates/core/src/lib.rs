//! Novel-input detection for an image-to-steering CNN.
//!
//! A steering CNN ([`cnn`]) is trained on road images. Its VisualBackProp
//! saliency masks ([`vbp`]) feed a dense autoencoder ([`autoencoder`]) trained
//! with an MSE or SSIM reconstruction loss ([`metrics`]). Images whose
//! reconstruction score falls past the 99th percentile of the training scores
//! ([`detector`]) are flagged as novel.
//!
//! [`synth`] renders two synthetic road "worlds" with known lane geometry;
//! [`pipeline`] runs the experiments and the command-line verbs on top of
//! everything else.

pub mod error;
pub mod rng;

pub mod image;
pub mod pnm;
pub mod dataset;

pub mod metrics;
pub mod corruption;

pub mod nn;
pub mod cnn;
pub mod vbp;
pub mod autoencoder;
pub mod weights;
pub mod detector;

pub mod synth;
pub mod pipeline;

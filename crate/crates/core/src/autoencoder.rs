//! Fully connected autoencoder used as the one-class classifier.
//!
//! The default network maps a flattened 60x160 image through 64, 16 and 64
//! ReLU units back to 9600 sigmoid outputs. It trains under either pixel MSE
//! or an SSIM loss (`1 - ssim_mean`), both with exact analytic gradients.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayViewMut2, Axis};

use crate::dataset::epoch_batches;
use crate::error::{Error, Result};
use crate::image::ImageBuf;
use crate::metrics::{mse, ssim_mean, ssim_mean_and_grad, SsimParams};
use crate::nn::{relu_backward_inplace, relu_inplace, sigmoid, Adam, DenseLayer, Parameters, TrainConfig};
use crate::rng;

pub const DEFAULT_DIMS: [usize; 5] = [9600, 64, 16, 64, 9600];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Mse,
    /// `1 - ssim_mean(input, reconstruction)`.
    Ssim(SsimParams),
}

impl LossKind {
    pub fn ssim() -> Self {
        LossKind::Ssim(SsimParams::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Ssim(_) => "ssim",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "ssim" => Ok(LossKind::ssim()),
            other => Err(Error::Config(format!("unknown loss kind `{other}` (expected mse or ssim)"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Loss between an input and a given reconstruction.
pub fn loss_between(input: &ImageBuf, recon: &ImageBuf, kind: &LossKind) -> Result<f64> {
    match kind {
        LossKind::Mse => mse(input, recon),
        LossKind::Ssim(p) => Ok(1.0 - ssim_mean(input, recon, p)?),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    layers: Vec<DenseLayer>,
}

/// Buffers reused across [`AeModel::loss_and_gradient_into`] calls.
#[derive(Debug, Default)]
pub struct AeWorkspace {
    /// Gradient in [`Parameters`] order.
    pub grads: Vec<Vec<f64>>,
    acts: Vec<Array2<f64>>,
    dy: Array2<f64>,
}

fn reshape(buf: &mut Array2<f64>, dim: (usize, usize)) {
    if buf.dim() != dim {
        *buf = Array2::zeros(dim);
    }
}

impl AeModel {
    /// Glorot-initialized autoencoder with layer widths `dims`, first and last
    /// equal.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims[0] != dims[dims.len() - 1] || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "autoencoder dims must be >= 2 positive widths with matching ends, got {dims:?}"
            )));
        }
        let mut rng = rng::stream(seed, 0xAE);
        let layers = dims.windows(2).map(|p| DenseLayer::glorot(p[0], p[1], &mut rng)).collect();
        Self::from_layers(layers)
    }

    pub fn default_pipeline(seed: u64) -> Self {
        Self::new(&DEFAULT_DIMS, seed).expect("default dims are valid")
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("autoencoder needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        if layers[0].inputs() != layers[layers.len() - 1].outputs() {
            return Err(Error::DimensionMismatch("autoencoder input and output widths differ".into()));
        }
        if !layers.iter().all(DenseLayer::is_finite) {
            return Err(Error::InvalidData("non-finite autoencoder weight".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs())
            .chain(self.layers.iter().map(DenseLayer::outputs))
            .collect()
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs()
    }

    fn check_input(&self, img: &ImageBuf) -> Result<()> {
        if img.len() != self.input_len() {
            return Err(Error::DimensionMismatch(format!(
                "autoencoder takes {} pixels, image has {}",
                self.input_len(),
                img.len()
            )));
        }
        Ok(())
    }

    /// Activations per layer, starting with the input itself; the last one is
    /// the sigmoid reconstruction.
    fn forward_batch(&self, x: Array2<f64>) -> Vec<Array2<f64>> {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.forward(&acts[i]);
            if i < last {
                relu_inplace(&mut z);
            } else {
                z.mapv_inplace(sigmoid);
            }
            acts.push(z);
        }
        acts
    }

    pub fn reconstruct(&self, img: &ImageBuf) -> Result<ImageBuf> {
        self.check_input(img)?;
        let x = Array2::from_shape_vec((1, img.len()), img.data().to_vec()).expect("shape");
        let y = self.forward_batch(x).pop().expect("layers").into_raw_vec_and_offset().0;
        Ok(ImageBuf::from_vec_unchecked(img.height(), img.width(), y))
    }

    pub fn reconstruct_batch(&self, images: &[ImageBuf]) -> Result<Vec<ImageBuf>> {
        images
            .iter()
            .enumerate()
            .map(|(i, img)| self.reconstruct(img).map_err(|e| Error::at_index(i, e)))
            .collect()
    }

    pub fn loss(&self, img: &ImageBuf, kind: &LossKind) -> Result<f64> {
        loss_between(img, &self.reconstruct(img)?, kind)
    }

    /// Mean per-image loss over the batch and its gradient, one vector per
    /// parameter tensor in [`Parameters`] order.
    pub fn loss_and_gradient(&self, images: &[&ImageBuf], kind: &LossKind) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut ws = AeWorkspace::default();
        let loss = self.loss_and_gradient_into(images, kind, &mut ws)?;
        Ok((loss, ws.grads))
    }

    /// Like [`Self::loss_and_gradient`], leaving the gradient in `ws.grads`.
    pub fn loss_and_gradient_into(&self, images: &[&ImageBuf], kind: &LossKind, ws: &mut AeWorkspace) -> Result<f64> {
        if images.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        for img in images {
            self.check_input(img)?;
            if img.dims() != images[0].dims() {
                return Err(Error::DimensionMismatch("batch images differ in dims".into()));
            }
        }
        let b = images.len();
        let k = self.input_len();
        let last = self.layers.len() - 1;
        ws.acts.resize_with(self.layers.len() + 1, Default::default);
        ws.grads.resize_with(2 * self.layers.len(), Vec::new);

        reshape(&mut ws.acts[0], (b, k));
        for (mut row, img) in ws.acts[0].axis_iter_mut(Axis(0)).zip(images) {
            row.assign(&ndarray::ArrayView1::from(img.data()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let (inp, out) = ws.acts.split_at_mut(i + 1);
            let z = &mut out[0];
            reshape(z, (b, layer.outputs()));
            general_mat_mul(1.0, &inp[i], &layer.weights.t(), 0.0, z);
            *z += &layer.bias;
            if i < last {
                relu_inplace(z);
            } else {
                z.mapv_inplace(sigmoid);
            }
        }
        let (x, y) = (&ws.acts[0], &ws.acts[last + 1]);

        let dy = &mut ws.dy;
        reshape(dy, (b, k));
        let mut total = 0.0;
        match kind {
            LossKind::Mse => {
                let scale = 2.0 / (k as f64 * b as f64);
                ndarray::Zip::from(&mut *dy).and(y).and(x).for_each(|d, &yv, &xv| {
                    total += (yv - xv) * (yv - xv);
                    *d = scale * (yv - xv);
                });
                total /= k as f64;
            }
            LossKind::Ssim(params) => {
                let (h, w) = images[0].dims();
                for (i, img) in images.iter().enumerate() {
                    let recon = ImageBuf::from_vec_unchecked(h, w, y.row(i).to_vec());
                    let (s, grad) = ssim_mean_and_grad(img, &recon, params)?;
                    total += 1.0 - s;
                    for (d, g) in dy.row_mut(i).iter_mut().zip(&grad) {
                        *d = -g / b as f64;
                    }
                }
            }
        }
        let loss = total / b as f64;

        // through the sigmoid
        ndarray::Zip::from(&mut *dy).and(y).for_each(|d, &yv| *d *= yv * (1.0 - yv));

        let mut upstream: Option<Array2<f64>> = None;
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let dz = upstream.as_ref().unwrap_or(&ws.dy);
            let gw = &mut ws.grads[2 * li];
            gw.resize(layer.weights.len(), 0.0);
            let mut gw = ArrayViewMut2::from_shape(layer.weights.dim(), gw).expect("sized above");
            general_mat_mul(1.0, &dz.t(), &ws.acts[li], 0.0, &mut gw);
            let gb = &mut ws.grads[2 * li + 1];
            gb.clear();
            gb.extend(dz.sum_axis(Axis(0)));
            if li > 0 {
                let mut dx = dz.dot(&layer.weights);
                relu_backward_inplace(&mut dx, &ws.acts[li]);
                upstream = Some(dx);
            }
        }
        Ok(loss)
    }
}

impl Parameters for AeModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice().expect("layout"), l.bias.as_slice().expect("layout")])
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("layout"),
                    l.bias.as_slice_mut().expect("layout"),
                ]
            })
            .collect()
    }
}

pub fn ae_reconstruct(model: &AeModel, img: &ImageBuf) -> Result<ImageBuf> {
    model.reconstruct(img)
}

pub fn ae_loss(model: &AeModel, img: &ImageBuf, kind: &LossKind) -> Result<f64> {
    model.loss(img, kind)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeTrainConfig {
    pub train: TrainConfig,
    pub loss: LossKind,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            loss: LossKind::ssim(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedAe {
    pub model: AeModel,
    /// Mean training loss per epoch.
    pub history: Vec<f64>,
}

/// Minibatch Adam on the mean per-image loss. SSIM is averaged over windows
/// within each image first, then over the batch.
pub fn ae_train(model: AeModel, images: &[ImageBuf], config: &AeTrainConfig) -> Result<TrainedAe> {
    ae_train_with(model, images, config, |_, _| {})
}

/// [`ae_train`] with a per-epoch callback `(epoch, mean_loss)`.
pub fn ae_train_with(
    model: AeModel,
    images: &[ImageBuf],
    config: &AeTrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainedAe> {
    config.train.validate()?;
    if images.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty image set".into()));
    }
    let dims = images[0].dims();
    if let Some(i) = images.iter().position(|im| im.dims() != dims) {
        return Err(Error::DimensionMismatch(format!(
            "image {i} is {:?}, expected {dims:?}",
            images[i].dims()
        )));
    }
    let mut model = model;
    let mut adam = Adam::for_model(config.train.learning_rate, &model);
    let mut history = Vec::with_capacity(config.train.epochs);
    let mut ws = AeWorkspace::default();
    for epoch in 0..config.train.epochs {
        let mut epoch_loss = 0.0;
        for batch in epoch_batches(images.len(), config.train.batch, config.train.seed, epoch)? {
            let imgs: Vec<&ImageBuf> = batch.iter().map(|&i| &images[i]).collect();
            let loss = model.loss_and_gradient_into(&imgs, &config.loss, &mut ws)?;
            if !loss.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "autoencoder {} loss became {loss} in epoch {epoch}",
                    config.loss
                )));
            }
            epoch_loss += loss * batch.len() as f64;
            let refs: Vec<&[f64]> = ws.grads.iter().map(Vec::as_slice).collect();
            adam.step(model.param_slices_mut(), &refs);
        }
        let mean = epoch_loss / images.len() as f64;
        on_epoch(epoch, mean);
        history.push(mean);
    }
    Ok(TrainedAe { model, history })
}

//! Convolutional steering-angle regressor.
//!
//! Convolutions are valid-padding cross-correlations followed by ReLU and are
//! evaluated through im2col + GEMM. The dense head uses ReLU on hidden layers
//! and a single linear output (radians). A forward pass can retain every
//! post-activation feature-map stack for saliency extraction.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::dataset::epoch_batches;
use crate::error::{Error, Result};
use crate::image::ImageBuf;
use crate::nn::{relu_backward_inplace, relu_inplace, Adam, DenseLayer, Parameters, TrainConfig};
use crate::rng;

pub const DEFAULT_INPUT_DIMS: (usize, usize) = (60, 160);

/// Geometry of one ReLU convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvLayerSpec {
    pub const fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
        }
    }

    /// Valid-padding output dims, or `None` when the kernel does not fit.
    pub fn output_dims(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        if self.stride == 0 || h < self.kernel || w < self.kernel {
            return None;
        }
        Some((
            (h - self.kernel) / self.stride + 1,
            (w - self.kernel) / self.stride + 1,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel % 2 == 0 || self.stride == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "invalid conv layer {self:?}: kernel must be odd, stride and channels >= 1"
            )));
        }
        Ok(())
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }
}

/// Convolution weights are `(out_channels, in_channels * k * k)`, i.e.
/// output-channel-major with each filter stored channel, row, column.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub spec: ConvLayerSpec,
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ConvLayer {
    pub fn glorot(spec: ConvLayerSpec, rng: &mut impl Rng) -> Self {
        let kk = spec.kernel * spec.kernel;
        let w = crate::nn::glorot_uniform(
            rng,
            spec.in_channels * kk,
            spec.out_channels * kk,
            spec.out_channels * spec.patch_len(),
        );
        Self {
            spec,
            weights: Array2::from_shape_vec((spec.out_channels, spec.patch_len()), w).expect("shape"),
            bias: Array1::zeros(spec.out_channels),
        }
    }

    pub fn from_parts(spec: ConvLayerSpec, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if weights.len() != spec.out_channels * spec.patch_len() || bias.len() != spec.out_channels {
            return Err(Error::DimensionMismatch(format!(
                "conv layer {spec:?} got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            spec,
            weights: Array2::from_shape_vec((spec.out_channels, spec.patch_len()), weights)
                .expect("checked"),
            bias: Array1::from(bias),
        })
    }
}

/// Channel-major stack of feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMaps {
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Post-activation feature maps of every conv layer from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input_h: usize,
    pub input_w: usize,
    pub layers: Vec<FeatureMaps>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    input_h: usize,
    input_w: usize,
    conv: Vec<ConvLayer>,
    dense: Vec<DenseLayer>,
}

impl CnnModel {
    /// Glorot-initialized model with zero biases. `hidden` lists the hidden
    /// dense widths; a single linear output unit is appended.
    pub fn new(
        input_dims: (usize, usize),
        conv_specs: &[ConvLayerSpec],
        hidden: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng::stream(seed, 0xC0);
        let conv: Vec<ConvLayer> = conv_specs.iter().map(|&s| ConvLayer::glorot(s, &mut rng)).collect();
        let flat = flattened_len(input_dims, conv_specs)?;
        let mut dense = Vec::new();
        let mut prev = flat;
        for &width in hidden.iter().chain(std::iter::once(&1)) {
            dense.push(DenseLayer::glorot(prev, width, &mut rng));
            prev = width;
        }
        Self::from_layers(input_dims, conv, dense)
    }

    /// Desk-scale steering network for 60x160 grayscale input.
    pub fn default_steering(seed: u64) -> Self {
        Self::new(DEFAULT_INPUT_DIMS, &DEFAULT_CONV, &DEFAULT_HIDDEN, seed).expect("default geometry is valid")
    }

    pub fn from_layers(input_dims: (usize, usize), conv: Vec<ConvLayer>, dense: Vec<DenseLayer>) -> Result<Self> {
        if conv.is_empty() {
            return Err(Error::InvalidArgument("CNN needs at least one conv layer".into()));
        }
        let specs: Vec<ConvLayerSpec> = conv.iter().map(|c| c.spec).collect();
        for (i, s) in specs.iter().enumerate() {
            s.validate()?;
            let expected_in = if i == 0 { 1 } else { specs[i - 1].out_channels };
            if s.in_channels != expected_in {
                return Err(Error::DimensionMismatch(format!(
                    "conv layer {i} expects {} input channels, previous layer yields {expected_in}",
                    s.in_channels
                )));
            }
        }
        let mut prev = flattened_len(input_dims, &specs)?;
        if dense.is_empty() {
            return Err(Error::InvalidArgument("CNN needs a dense output layer".into()));
        }
        for (i, d) in dense.iter().enumerate() {
            if d.inputs() != prev {
                return Err(Error::DimensionMismatch(format!(
                    "dense layer {i} takes {} inputs, previous stage yields {prev}",
                    d.inputs()
                )));
            }
            prev = d.outputs();
        }
        if prev != 1 {
            return Err(Error::DimensionMismatch(format!("final layer must have 1 output, has {prev}")));
        }
        let model = Self {
            input_h: input_dims.0,
            input_w: input_dims.1,
            conv,
            dense,
        };
        if !model.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidData("non-finite CNN weight".into()));
        }
        Ok(model)
    }

    pub fn input_dims(&self) -> (usize, usize) {
        (self.input_h, self.input_w)
    }

    pub fn conv_layers(&self) -> &[ConvLayer] {
        &self.conv
    }

    pub fn dense_layers(&self) -> &[DenseLayer] {
        &self.dense
    }

    pub fn conv_specs(&self) -> Vec<ConvLayerSpec> {
        self.conv.iter().map(|c| c.spec).collect()
    }

    /// Spatial dims of every conv layer's output.
    pub fn conv_output_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.conv.len());
        let (mut h, mut w) = self.input_dims();
        for c in &self.conv {
            (h, w) = c.spec.output_dims(h, w).expect("validated at construction");
            dims.push((h, w));
        }
        dims
    }

    pub fn forward(&self, img: &ImageBuf, keep_trace: bool) -> Result<(f64, Option<ForwardTrace>)> {
        self.check_input(img)?;
        let pass = self.forward_one(img);
        let angle = self.dense_forward(pass.flat_row()).pop().expect("output").1[[0, 0]];
        let trace = keep_trace.then(|| ForwardTrace {
            input_h: self.input_h,
            input_w: self.input_w,
            layers: pass.maps,
        });
        Ok((angle, trace))
    }

    pub fn predict(&self, img: &ImageBuf) -> Result<f64> {
        Ok(self.forward(img, false)?.0)
    }

    /// Mean squared angle error over the batch and its gradient, one vector
    /// per parameter tensor in [`Parameters`] order.
    pub fn loss_and_gradient(&self, images: &[&ImageBuf], targets: &[f64]) -> Result<(f64, Vec<Vec<f64>>)> {
        if images.is_empty() || images.len() != targets.len() {
            return Err(Error::InvalidArgument(format!(
                "need a nonempty batch with one target per image ({} images, {} targets)",
                images.len(),
                targets.len()
            )));
        }
        for img in images {
            self.check_input(img)?;
        }
        let b = images.len();
        let passes: Vec<ConvPass> = images.iter().map(|img| self.forward_one(img)).collect();
        let flat_len = passes[0].maps.last().expect("conv").data.len();
        let mut flat = Array2::zeros((b, flat_len));
        for (mut row, p) in flat.axis_iter_mut(Axis(0)).zip(&passes) {
            row.assign(&ndarray::ArrayView1::from(&p.maps.last().expect("conv").data));
        }

        // dense forward, keeping each layer's input and activation
        let acts = self.dense_forward(flat.view());
        let preds = &acts.last().expect("output").1;
        let mut loss = 0.0;
        let mut dz = Array2::zeros((b, 1));
        for i in 0..b {
            let err = preds[[i, 0]] - targets[i];
            loss += err * err;
            dz[[i, 0]] = 2.0 * err / b as f64;
        }
        loss /= b as f64;

        let mut dense_grads = Vec::with_capacity(self.dense.len());
        for (li, layer) in self.dense.iter().enumerate().rev() {
            let (input, _) = &acts[li];
            let (g, dx) = layer.backward(input, &dz, true);
            dense_grads.push(g);
            let mut dx = dx.expect("requested");
            if li > 0 {
                relu_backward_inplace(&mut dx, &acts[li - 1].1);
            }
            dz = dx;
        }
        dense_grads.reverse();

        let mut conv_w: Vec<Array2<f64>> = self.conv.iter().map(|c| Array2::zeros(c.weights.dim())).collect();
        let mut conv_b: Vec<Array1<f64>> = self.conv.iter().map(|c| Array1::zeros(c.bias.len())).collect();
        for (i, pass) in passes.iter().enumerate() {
            let mut upstream: Vec<f64> = dz.row(i).to_vec();
            for li in (0..self.conv.len()).rev() {
                let layer = &self.conv[li];
                let out = &pass.maps[li];
                let positions = out.height * out.width;
                for (g, &a) in upstream.iter_mut().zip(&out.data) {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                }
                let d_out = ArrayView2::from_shape((layer.spec.out_channels, positions), &upstream).expect("shape");
                conv_w[li] += &d_out.dot(&pass.cols[li].t());
                conv_b[li] += &d_out.sum_axis(Axis(1));
                if li > 0 {
                    let d_cols = layer.weights.t().dot(&d_out);
                    let prev = &pass.maps[li - 1];
                    upstream = col2im(&d_cols, layer.spec, prev.height, prev.width, out.height, out.width);
                }
            }
        }

        let mut grads = Vec::with_capacity(2 * (self.conv.len() + self.dense.len()));
        for (w, b) in conv_w.into_iter().zip(conv_b) {
            grads.push(w.into_raw_vec_and_offset().0);
            grads.push(b.to_vec());
        }
        for g in dense_grads {
            grads.push(g.weights.into_raw_vec_and_offset().0);
            grads.push(g.bias.to_vec());
        }
        Ok((loss, grads))
    }

    fn check_input(&self, img: &ImageBuf) -> Result<()> {
        if img.dims() != self.input_dims() {
            return Err(Error::DimensionMismatch(format!(
                "CNN expects {}x{} input, got {}x{}",
                self.input_h,
                self.input_w,
                img.height(),
                img.width()
            )));
        }
        Ok(())
    }

    fn forward_one(&self, img: &ImageBuf) -> ConvPass {
        let mut maps = Vec::with_capacity(self.conv.len());
        let mut cols_all = Vec::with_capacity(self.conv.len());
        let (mut h, mut w) = self.input_dims();
        let mut input: Vec<f64> = img.data().to_vec();
        for layer in &self.conv {
            let (oh, ow) = layer.spec.output_dims(h, w).expect("validated");
            let cols = im2col(&input, layer.spec, h, w, oh, ow);
            let mut out = layer.weights.dot(&cols);
            out += &layer.bias.view().insert_axis(Axis(1));
            out.mapv_inplace(|v| v.max(0.0));
            let data = out.into_raw_vec_and_offset().0;
            input = data.clone();
            maps.push(FeatureMaps {
                channels: layer.spec.out_channels,
                height: oh,
                width: ow,
                data,
            });
            cols_all.push(cols);
            (h, w) = (oh, ow);
        }
        ConvPass { maps, cols: cols_all }
    }

    /// Returns `(input, activation)` per dense layer.
    fn dense_forward(&self, flat: ArrayView2<'_, f64>) -> Vec<(Array2<f64>, Array2<f64>)> {
        let mut out = Vec::with_capacity(self.dense.len());
        let mut x = flat.to_owned();
        let last = self.dense.len() - 1;
        for (i, layer) in self.dense.iter().enumerate() {
            let mut z = layer.forward(&x);
            if i < last {
                relu_inplace(&mut z);
            }
            out.push((x, z.clone()));
            x = z;
        }
        out
    }
}

impl Parameters for CnnModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for c in &self.conv {
            v.push(c.weights.as_slice().expect("standard layout"));
            v.push(c.bias.as_slice().expect("standard layout"));
        }
        for d in &self.dense {
            v.push(d.weights.as_slice().expect("standard layout"));
            v.push(d.bias.as_slice().expect("standard layout"));
        }
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for c in &mut self.conv {
            v.push(c.weights.as_slice_mut().expect("standard layout"));
            v.push(c.bias.as_slice_mut().expect("standard layout"));
        }
        for d in &mut self.dense {
            v.push(d.weights.as_slice_mut().expect("standard layout"));
            v.push(d.bias.as_slice_mut().expect("standard layout"));
        }
        v
    }
}

pub const DEFAULT_CONV: [ConvLayerSpec; 3] = [
    ConvLayerSpec::new(1, 8, 5, 2),
    ConvLayerSpec::new(8, 12, 5, 2),
    ConvLayerSpec::new(12, 16, 3, 2),
];
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 16];

fn flattened_len(input: (usize, usize), specs: &[ConvLayerSpec]) -> Result<usize> {
    let (mut h, mut w) = input;
    for (i, s) in specs.iter().enumerate() {
        (h, w) = s.output_dims(h, w).ok_or_else(|| {
            Error::DimensionMismatch(format!("conv layer {i} ({s:?}) does not fit a {h}x{w} input"))
        })?;
    }
    Ok(specs.last().map_or(h * w, |s| s.out_channels * h * w))
}

struct ConvPass {
    maps: Vec<FeatureMaps>,
    cols: Vec<Array2<f64>>,
}

impl ConvPass {
    fn flat_row(&self) -> ArrayView2<'_, f64> {
        let d = &self.maps.last().expect("conv").data;
        ArrayView2::from_shape((1, d.len()), d).expect("shape")
    }
}

/// `(C*k*k, oh*ow)` patch matrix; row index is `c*k*k + ki*k + kj`.
fn im2col(input: &[f64], spec: ConvLayerSpec, h: usize, w: usize, oh: usize, ow: usize) -> Array2<f64> {
    let k = spec.kernel;
    let s = spec.stride;
    let positions = oh * ow;
    let mut cols = vec![0.0; spec.patch_len() * positions];
    for c in 0..spec.in_channels {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for i in 0..oh {
                    let src_row = &plane[(i * s + ki) * w..];
                    let d = &mut dst[i * ow..(i + 1) * ow];
                    for (j, v) in d.iter_mut().enumerate() {
                        *v = src_row[j * s + kj];
                    }
                }
            }
        }
    }
    Array2::from_shape_vec((spec.patch_len(), positions), cols).expect("shape")
}

/// Adjoint of [`im2col`]: scatter-adds patch gradients back onto the input.
fn col2im(cols: &Array2<f64>, spec: ConvLayerSpec, h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let k = spec.kernel;
    let s = spec.stride;
    let positions = oh * ow;
    let cols = cols.as_standard_layout();
    let src = cols.as_slice().expect("standard layout");
    let mut out = vec![0.0; spec.in_channels * h * w];
    for c in 0..spec.in_channels {
        let plane = &mut out[c * h * w..(c + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let g = &src[row * positions..(row + 1) * positions];
                for i in 0..oh {
                    let dst_row = &mut plane[(i * s + ki) * w..];
                    for (j, v) in g[i * ow..(i + 1) * ow].iter().enumerate() {
                        dst_row[j * s + kj] += v;
                    }
                }
            }
        }
    }
    out
}

pub fn cnn_forward(model: &CnnModel, img: &ImageBuf, keep_trace: bool) -> Result<(f64, Option<ForwardTrace>)> {
    model.forward(img, keep_trace)
}

#[derive(Debug, Clone)]
pub struct TrainedCnn {
    pub model: CnnModel,
    /// Mean training loss per epoch.
    pub history: Vec<f64>,
}

/// Minibatch Adam on mean squared angle error.
pub fn cnn_train(model: CnnModel, images: &[ImageBuf], angles: &[f64], config: &TrainConfig) -> Result<TrainedCnn> {
    config.validate()?;
    if images.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    if images.len() != angles.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} images but {} angles",
            images.len(),
            angles.len()
        )));
    }
    if let Some(a) = angles.iter().find(|a| !a.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite angle label {a}")));
    }
    let mut model = model;
    let mut adam = Adam::for_model(config.learning_rate, &model);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0;
        for batch in epoch_batches(images.len(), config.batch, config.seed, epoch)? {
            let imgs: Vec<&ImageBuf> = batch.iter().map(|&i| &images[i]).collect();
            let targets: Vec<f64> = batch.iter().map(|&i| angles[i]).collect();
            let (loss, grads) = model.loss_and_gradient(&imgs, &targets)?;
            if !loss.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "CNN loss became {loss} in epoch {epoch}"
                )));
            }
            epoch_loss += loss * batch.len() as f64;
            let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
            adam.step(model.param_slices_mut(), &grad_refs);
        }
        let mean = epoch_loss / images.len() as f64;
        log::debug!("cnn epoch {epoch}: loss {mean:.6}");
        history.push(mean);
    }
    if !model.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite())) {
        return Err(Error::NumericalFailure("CNN weights became non-finite".into()));
    }
    Ok(TrainedCnn { model, history })
}

pub const RANDOM_ANGLE_RANGE: (f64, f64) = (-0.5, 0.5);

/// Labels drawn uniformly from [`RANDOM_ANGLE_RANGE`], seeded by `config.seed`.
pub fn random_angles(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, 0xA11);
    (0..n)
        .map(|_| rng.random_range(RANDOM_ANGLE_RANGE.0..=RANDOM_ANGLE_RANGE.1))
        .collect()
}

/// [`cnn_train`] with every label replaced by a random angle.
pub fn cnn_train_random_labels(model: CnnModel, images: &[ImageBuf], config: &TrainConfig) -> Result<TrainedCnn> {
    let labels = random_angles(images.len(), config.seed);
    cnn_train(model, images, &labels, config)
}

/// Mean squared angle error of `model` over a labeled set.
pub fn angle_mse(model: &CnnModel, images: &[ImageBuf], angles: &[f64]) -> Result<f64> {
    if images.is_empty() || images.len() != angles.len() {
        return Err(Error::InvalidArgument("need matching, nonempty images and angles".into()));
    }
    let mut total = 0.0;
    for (img, &a) in images.iter().zip(angles) {
        let e = model.predict(img)? - a;
        total += e * e;
    }
    Ok(total / images.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model(seed: u64) -> CnnModel {
        CnnModel::new(
            (10, 12),
            &[ConvLayerSpec::new(1, 2, 3, 1), ConvLayerSpec::new(2, 3, 3, 2)],
            &[4],
            seed,
        )
        .unwrap()
    }

    fn random_image(h: usize, w: usize, seed: u64) -> ImageBuf {
        let mut rng = rng::stream(seed, 9);
        ImageBuf::from_fn(h, w, |_, _| rng.random::<f64>())
    }

    #[test]
    fn default_geometry() {
        let m = CnnModel::default_steering(0);
        assert_eq!(m.conv_output_dims(), vec![(28, 78), (12, 37), (5, 18)]);
        assert_eq!(m.dense_layers()[0].inputs(), 16 * 5 * 18);
        assert_eq!(m.dense_layers().last().unwrap().outputs(), 1);
    }

    #[test]
    fn zero_model_outputs_zero() {
        let mut m = tiny_model(1);
        let zeros = vec![0.0; m.param_count()];
        m.set_params_flat(&zeros);
        let (angle, trace) = m.forward(&random_image(10, 12, 2), true).unwrap();
        assert_eq!(angle, 0.0);
        assert!(trace.unwrap().layers.iter().all(|l| l.data.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn delta_kernel_crops_input() {
        let spec = ConvLayerSpec::new(1, 1, 3, 1);
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        let conv = ConvLayer::from_parts(spec, w, vec![0.0]).unwrap();
        let dense = DenseLayer::zeros(4 * 6, 1);
        let m = CnnModel::from_layers((6, 8), vec![conv], vec![dense]).unwrap();
        let img = random_image(6, 8, 3);
        let (_, trace) = m.forward(&img, true).unwrap();
        let fm = &trace.unwrap().layers[0];
        for r in 0..4 {
            for c in 0..6 {
                assert_eq!(fm.data[r * 6 + c], img.get(r + 1, c + 1));
            }
        }
    }

    #[test]
    fn rejects_wrong_input_dims_and_bad_layers() {
        let m = tiny_model(1);
        assert!(m.forward(&ImageBuf::zeros(9, 12), false).is_err());
        assert!(CnnModel::new((4, 4), &[ConvLayerSpec::new(1, 1, 5, 1)], &[], 0).is_err());
        assert!(CnnModel::new((8, 8), &[ConvLayerSpec::new(1, 1, 4, 1)], &[], 0).is_err());
    }

    #[test]
    fn trace_maps_are_nonnegative() {
        let m = tiny_model(5);
        let (_, trace) = m.forward(&random_image(10, 12, 6), true).unwrap();
        let trace = trace.unwrap();
        assert_eq!(trace.layers.len(), 2);
        assert!(trace.layers.iter().all(|l| l.data.iter().all(|&v| v >= 0.0)));
    }

    #[test]
    fn training_rejects_empty_and_mismatched() {
        let cfg = TrainConfig::default();
        assert!(cnn_train(tiny_model(0), &[], &[], &cfg).is_err());
        assert!(cnn_train(tiny_model(0), &[random_image(10, 12, 1)], &[0.1, 0.2], &cfg).is_err());
    }

    #[test]
    fn constant_labels_are_learned() {
        let images: Vec<ImageBuf> = (0..16).map(|i| random_image(10, 12, 100 + i)).collect();
        let angles = vec![0.3; images.len()];
        let cfg = TrainConfig {
            batch: 8,
            epochs: 150,
            learning_rate: 1e-2,
            seed: 1,
        };
        let trained = cnn_train(tiny_model(2), &images, &angles, &cfg).unwrap();
        assert_eq!(trained.history.len(), 150);
        assert!(angle_mse(&trained.model, &images, &angles).unwrap() <= 1e-3);
    }

    #[test]
    fn single_sample_overfits() {
        let images = vec![random_image(10, 12, 42)];
        let cfg = TrainConfig {
            batch: 1,
            epochs: 500,
            learning_rate: 1e-2,
            seed: 3,
        };
        let trained = cnn_train(tiny_model(4), &images, &[-0.2], &cfg).unwrap();
        assert!(angle_mse(&trained.model, &images, &[-0.2]).unwrap() <= 1e-6);
    }

    #[test]
    fn training_is_reproducible_and_seed_sensitive() {
        let images: Vec<ImageBuf> = (0..6).map(|i| random_image(10, 12, 200 + i)).collect();
        let cfg = TrainConfig {
            batch: 4,
            epochs: 5,
            learning_rate: 1e-2,
            seed: 9,
        };
        let a = cnn_train_random_labels(tiny_model(1), &images, &cfg).unwrap();
        let b = cnn_train_random_labels(tiny_model(1), &images, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
        let c = cnn_train_random_labels(tiny_model(1), &images, &TrainConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn random_angles_stay_in_range() {
        let a = random_angles(1000, 4);
        assert!(a.iter().all(|v| (-0.5..=0.5).contains(v)));
        let mean = a.iter().sum::<f64>() / 1000.0;
        assert!(mean.abs() < 0.05);
    }
}

//! VisualBackProp saliency masks.
//!
//! Starting from the deepest conv layer, the channel-averaged feature map is
//! spread back to the previous layer's resolution by a transposed convolution
//! with an all-ones kernel (same kernel size and stride as the forward layer),
//! multiplied pointwise with that layer's channel average, and so on down to
//! the input. The result is min-max normalized to `[0, 1]`.

use crate::cnn::{CnnModel, ConvLayerSpec, FeatureMaps, ForwardTrace};
use crate::error::{Error, Result};
use crate::image::ImageBuf;

/// Input-resolution saliency map with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMask(ImageBuf);

impl SaliencyMask {
    pub fn image(&self) -> &ImageBuf {
        &self.0
    }

    pub fn into_image(self) -> ImageBuf {
        self.0
    }
}

impl AsRef<ImageBuf> for SaliencyMask {
    fn as_ref(&self) -> &ImageBuf {
        &self.0
    }
}

/// Row-major real-valued grid used for the unnormalized intermediate maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

pub fn channel_mean(maps: &FeatureMaps) -> Grid {
    let n = maps.height * maps.width;
    let mut data = vec![0.0; n];
    for c in 0..maps.channels {
        for (acc, v) in data.iter_mut().zip(maps.channel(c)) {
            *acc += v;
        }
    }
    let inv = 1.0 / maps.channels as f64;
    data.iter_mut().for_each(|v| *v *= inv);
    Grid {
        height: maps.height,
        width: maps.width,
        data,
    }
}

/// Transposed convolution with an all-ones `k x k` kernel and stride `s`,
/// fitted to `(target_h, target_w)`.
///
/// The raw output is `(h - 1) * s + k` per axis. When valid-padding division
/// left rows or columns of the target unused by the forward layer the output
/// is short; it is then anchored at the origin and the remainder stays zero.
/// An oversized output is center-cropped, keeping the top/left bias on odd
/// excess.
pub fn upsample_ones(map: &Grid, kernel: usize, stride: usize, target_h: usize, target_w: usize) -> Grid {
    let full_h = (map.height - 1) * stride + kernel;
    let full_w = (map.width - 1) * stride + kernel;
    let mut full = vec![0.0; full_h * full_w];
    for i in 0..map.height {
        for j in 0..map.width {
            let v = map.data[i * map.width + j];
            for a in 0..kernel {
                let row = &mut full[(i * stride + a) * full_w + j * stride..];
                for cell in row.iter_mut().take(kernel) {
                    *cell += v;
                }
            }
        }
    }
    let off_r = full_h.saturating_sub(target_h) / 2;
    let off_c = full_w.saturating_sub(target_w) / 2;
    let mut out = vec![0.0; target_h * target_w];
    for r in 0..target_h.min(full_h - off_r) {
        for c in 0..target_w.min(full_w - off_c) {
            out[r * target_w + c] = full[(r + off_r) * full_w + c + off_c];
        }
    }
    Grid {
        height: target_h,
        width: target_w,
        data: out,
    }
}

/// Min-max normalization to `[0, 1]`; a constant map becomes all zeros.
pub fn normalize(grid: &Grid) -> ImageBuf {
    let (lo, hi) = grid
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return ImageBuf::zeros(grid.height, grid.width);
    }
    let span = hi - lo;
    let data = grid.data.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect();
    ImageBuf::from_vec_unchecked(grid.height, grid.width, data)
}

/// Unnormalized saliency at input resolution.
pub fn vbp_raw(trace: &ForwardTrace, model: &CnnModel) -> Result<Grid> {
    check_trace(trace, model)?;
    let specs: Vec<ConvLayerSpec> = model.conv_specs();
    let means: Vec<Grid> = trace.layers.iter().map(channel_mean).collect();
    let last = means.len() - 1;
    let mut mask = means[last].clone();
    for li in (1..=last).rev() {
        let target = &means[li - 1];
        let up = upsample_ones(&mask, specs[li].kernel, specs[li].stride, target.height, target.width);
        mask = Grid {
            height: target.height,
            width: target.width,
            data: up.data.iter().zip(&target.data).map(|(a, b)| a * b).collect(),
        };
    }
    Ok(upsample_ones(
        &mask,
        specs[0].kernel,
        specs[0].stride,
        trace.input_h,
        trace.input_w,
    ))
}

pub fn vbp_mask(trace: &ForwardTrace, model: &CnnModel) -> Result<SaliencyMask> {
    Ok(SaliencyMask(normalize(&vbp_raw(trace, model)?)))
}

/// Forward pass plus mask for one image.
pub fn saliency(model: &CnnModel, img: &ImageBuf) -> Result<SaliencyMask> {
    let (_, trace) = model.forward(img, true)?;
    vbp_mask(&trace.expect("trace requested"), model)
}

/// Order-preserving [`saliency`] over a batch; errors carry the image index.
pub fn vbp_batch(model: &CnnModel, images: &[ImageBuf]) -> Result<Vec<SaliencyMask>> {
    images
        .iter()
        .enumerate()
        .map(|(i, img)| saliency(model, img).map_err(|e| Error::at_index(i, e)))
        .collect()
}

fn check_trace(trace: &ForwardTrace, model: &CnnModel) -> Result<()> {
    if (trace.input_h, trace.input_w) != model.input_dims() {
        return Err(Error::DimensionMismatch(format!(
            "trace input {}x{} does not match model input {:?}",
            trace.input_h,
            trace.input_w,
            model.input_dims()
        )));
    }
    let dims = model.conv_output_dims();
    if trace.layers.len() != dims.len() {
        return Err(Error::DimensionMismatch(format!(
            "trace has {} layers, model has {} conv layers",
            trace.layers.len(),
            dims.len()
        )));
    }
    for (i, ((maps, &(h, w)), spec)) in trace.layers.iter().zip(&dims).zip(model.conv_specs()).enumerate() {
        if (maps.channels, maps.height, maps.width) != (spec.out_channels, h, w)
            || maps.data.len() != maps.channels * h * w
        {
            return Err(Error::DimensionMismatch(format!(
                "trace layer {i} is {}x{}x{}, model expects {}x{h}x{w}",
                maps.channels, maps.height, maps.width, spec.out_channels
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::ConvLayerSpec;
    use rand::Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> ImageBuf {
        let mut rng = crate::rng::stream(seed, 3);
        ImageBuf::from_fn(h, w, |_, _| rng.random::<f64>())
    }

    #[test]
    fn upsample_exact_geometry() {
        let g = Grid { height: 2, width: 2, data: vec![1.0, 2.0, 3.0, 4.0] };
        let up = upsample_ones(&g, 3, 1, 4, 4);
        // (2-1)*1+3 = 4, overlapping ones-kernel sums
        assert_eq!(
            up.data,
            vec![1.0, 3.0, 3.0, 2.0, 4.0, 10.0, 10.0, 6.0, 4.0, 10.0, 10.0, 6.0, 3.0, 7.0, 7.0, 4.0]
        );
    }

    #[test]
    fn upsample_pads_short_output_and_crops_long_output() {
        let g = Grid { height: 1, width: 1, data: vec![2.0] };
        let padded = upsample_ones(&g, 3, 2, 4, 4);
        assert_eq!(padded.data[0], 2.0);
        assert_eq!(padded.data[3], 0.0);
        assert_eq!(padded.data[15], 0.0);
        let g = Grid { height: 1, width: 3, data: vec![1.0, 0.0, 5.0] };
        let cropped = upsample_ones(&g, 1, 1, 1, 2);
        assert_eq!(cropped.data, vec![1.0, 0.0]);
    }

    #[test]
    fn constant_maps_give_zero_mask() {
        // non-overlapping geometry so the upsampled map stays constant
        let flat = CnnModel::new((9, 9), &[ConvLayerSpec::new(1, 2, 3, 3)], &[], 0).unwrap();
        let trace = ForwardTrace {
            input_h: 9,
            input_w: 9,
            layers: vec![FeatureMaps { channels: 2, height: 3, width: 3, data: vec![0.7; 18] }],
        };
        let mask = vbp_mask(&trace, &flat).unwrap();
        assert!(mask.image().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_layer_mask_is_normalized_upsampled_mean() {
        let model = CnnModel::new((10, 12), &[ConvLayerSpec::new(1, 3, 3, 1)], &[2], 4).unwrap();
        let img = random_image(10, 12, 1);
        let (_, trace) = model.forward(&img, true).unwrap();
        let trace = trace.unwrap();
        let expected = normalize(&upsample_ones(&channel_mean(&trace.layers[0]), 3, 1, 10, 12));
        assert_eq!(vbp_mask(&trace, &model).unwrap().into_image(), expected);
    }

    #[test]
    fn rejects_mismatched_trace() {
        let model = CnnModel::new((10, 12), &[ConvLayerSpec::new(1, 2, 3, 1)], &[], 0).unwrap();
        let other = CnnModel::new((10, 12), &[ConvLayerSpec::new(1, 2, 5, 1)], &[], 0).unwrap();
        let (_, trace) = other.forward(&random_image(10, 12, 2), true).unwrap();
        assert!(vbp_mask(&trace.unwrap(), &model).is_err());
    }

    #[test]
    fn batch_handles_empty_singleton_and_errors() {
        let model = CnnModel::new((10, 12), &[ConvLayerSpec::new(1, 2, 3, 1)], &[], 0).unwrap();
        assert!(vbp_batch(&model, &[]).unwrap().is_empty());
        let img = random_image(10, 12, 5);
        assert_eq!(vbp_batch(&model, &[img.clone()]).unwrap(), vec![saliency(&model, &img).unwrap()]);
        let err = vbp_batch(&model, &[img, ImageBuf::zeros(3, 3)]).unwrap_err();
        assert!(matches!(err, Error::AtIndex { index: 1, .. }));
    }
}

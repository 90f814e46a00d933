//! Grayscale and RGB image buffers plus the resampling used during ingestion.
//!
//! All intensities live in `[0, 1]`. Constructors validate that range, so any
//! `ImageBuf` handed between pipeline stages can be trusted downstream.

use crate::error::{Error, Result};

/// Row-major grayscale intensity grid with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageBuf {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width} image needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::InvalidData(format!(
                "pixel {i} has intensity {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Builds an image from values already known to be in range.
    pub(crate) fn from_vec_unchecked(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        debug_assert!(data.iter().all(|v| (0.0..=1.0).contains(v)));
        Self {
            height,
            width,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::from_vec_unchecked(height, width, vec![0.0; height * width])
    }

    /// Evaluates `f(row, col)` per pixel, clamping the result into `[0, 1]`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(clamp_unit(f(r, c)));
            }
        }
        Self::from_vec_unchecked(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Applies `f` per pixel and clamps the result into `[0, 1]`.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let data = self.data.iter().map(|&v| clamp_unit(f(v))).collect();
        Self::from_vec_unchecked(self.height, self.width, data)
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub(crate) fn ensure_same_dims(&self, other: &ImageBuf) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Row-major `(r, g, b)` triples, each channel in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != 3 * height * width {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width} RGB image needs {} values, got {}",
                3 * height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::InvalidData("RGB channel outside [0, 1]".into()));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        let data = std::iter::repeat_n(rgb, height * width).flatten().collect();
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

pub fn to_grayscale(img: &RgbImage) -> ImageBuf {
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| {
            let g = LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2];
            // rounding can push a convex combination a few ulps past its inputs
            let lo = p[0].min(p[1]).min(p[2]);
            let hi = p[0].max(p[1]).max(p[2]);
            g.clamp(lo, hi)
        })
        .collect();
    ImageBuf::from_vec_unchecked(img.height, img.width, data)
}

/// Corner-aligned bilinear resize.
///
/// Output pixel `i` samples source coordinate `i * (in - 1) / (out - 1)`, or 0
/// when the output dimension is 1.
pub fn resize_bilinear(img: &ImageBuf, out_h: usize, out_w: usize) -> Result<ImageBuf> {
    if img.is_empty() {
        return Err(Error::InvalidArgument("cannot resize an empty image".into()));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!(
            "output dims must be positive, got {out_h}x{out_w}"
        )));
    }
    if img.dims() == (out_h, out_w) {
        return Ok(img.clone());
    }

    let rows: Vec<(usize, usize, f64)> = (0..out_h).map(|i| sample(i, img.height, out_h)).collect();
    let cols: Vec<(usize, usize, f64)> = (0..out_w).map(|j| sample(j, img.width, out_w)).collect();

    let mut data = Vec::with_capacity(out_h * out_w);
    for &(r0, r1, fr) in &rows {
        for &(c0, c1, fc) in &cols {
            let top = lerp(img.get(r0, c0), img.get(r0, c1), fc);
            let bottom = lerp(img.get(r1, c0), img.get(r1, c1), fc);
            data.push(lerp(top, bottom, fr));
        }
    }
    Ok(ImageBuf::from_vec_unchecked(out_h, out_w, data))
}

fn sample(index: usize, in_dim: usize, out_dim: usize) -> (usize, usize, f64) {
    if out_dim == 1 || in_dim == 1 {
        return (0, 0, 0.0);
    }
    let src = index as f64 * (in_dim - 1) as f64 / (out_dim - 1) as f64;
    let lo = (src.floor() as usize).min(in_dim - 1);
    let hi = (lo + 1).min(in_dim - 1);
    (lo, hi, src - lo as f64)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    // both endpoints weighted explicitly so the result stays within [min(a,b), max(a,b)]
    let v = a * (1.0 - t) + b * t;
    v.clamp(a.min(b), a.max(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_out_of_range_and_bad_lengths() {
        assert!(ImageBuf::new(2, 2, vec![0.0; 3]).is_err());
        assert!(ImageBuf::new(1, 2, vec![0.0, 1.5]).is_err());
        assert!(ImageBuf::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(RgbImage::new(1, 1, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn grayscale_reference_colors() {
        let black = RgbImage::filled(3, 4, [0.0, 0.0, 0.0]).unwrap();
        assert!(to_grayscale(&black).data().iter().all(|&v| v == 0.0));

        let white = RgbImage::filled(3, 4, [1.0, 1.0, 1.0]).unwrap();
        for &v in to_grayscale(&white).data() {
            assert!((v - 1.0).abs() < 1e-15);
        }

        let red = RgbImage::filled(2, 2, [1.0, 0.0, 0.0]).unwrap();
        for &v in to_grayscale(&red).data() {
            assert_eq!(v, 0.299);
        }
    }

    #[test]
    fn resize_constant_and_identity() {
        let c = ImageBuf::filled(7, 5, 0.3).unwrap();
        let r = resize_bilinear(&c, 13, 2).unwrap();
        assert_eq!(r.dims(), (13, 2));
        assert!(r.data().iter().all(|&v| (v - 0.3).abs() < 1e-15));

        let img = ImageBuf::from_fn(4, 6, |r, c| (r * 6 + c) as f64 / 24.0);
        assert_eq!(resize_bilinear(&img, 4, 6).unwrap(), img);
    }

    #[test]
    fn resize_hand_evaluated_middle_column() {
        let img = ImageBuf::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let r = resize_bilinear(&img, 2, 3).unwrap();
        assert_eq!(r.data(), &[0.0, 0.5, 1.0, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn resize_single_output_samples_origin() {
        let img = ImageBuf::from_fn(3, 3, |r, c| (r + c) as f64 / 4.0);
        let r = resize_bilinear(&img, 1, 1).unwrap();
        assert_eq!(r.data(), &[0.0]);
    }

    #[test]
    fn resize_rejects_zero_dims() {
        let img = ImageBuf::zeros(2, 2);
        assert!(resize_bilinear(&img, 0, 3).is_err());
        assert!(resize_bilinear(&ImageBuf::zeros(0, 0), 2, 2).is_err());
    }

    proptest! {
        #[test]
        fn grayscale_is_convex_combination(px in proptest::collection::vec(0.0f64..=1.0, 3 * 6)) {
            let rgb = RgbImage::new(2, 3, px.clone()).unwrap();
            let g = to_grayscale(&rgb);
            for (p, &v) in px.chunks_exact(3).zip(g.data()) {
                let lo = p[0].min(p[1]).min(p[2]);
                let hi = p[0].max(p[1]).max(p[2]);
                prop_assert!(lo <= v && v <= hi);
            }
        }

        #[test]
        fn resize_stays_within_input_range(
            vals in proptest::collection::vec(0.0f64..=1.0, 20),
            oh in 1usize..12,
            ow in 1usize..12,
        ) {
            let img = ImageBuf::new(4, 5, vals.clone()).unwrap();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let r = resize_bilinear(&img, oh, ow).unwrap();
            prop_assert_eq!(r.dims(), (oh, ow));
            prop_assert!(r.data().iter().all(|&v| lo <= v && v <= hi));
        }
    }
}

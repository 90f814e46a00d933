//! Controlled perturbations: additive Gaussian noise, brightness shifts and
//! pairs of the two matched to the same pixel MSE.
//!
//! Perturbed values are clamped to `[0, 1]`; untouched pixels stay
//! bit-identical.

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::ImageBuf;
use crate::metrics::mse;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionKind {
    GaussianNoise,
    Brightness,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Corruption {
    GaussianNoise { sigma: f64 },
    Brightness { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub corruption: Corruption,
    /// Used by noise only.
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn apply(&self, img: &ImageBuf) -> Result<ImageBuf> {
        match self.corruption {
            Corruption::GaussianNoise { sigma } => add_gaussian_noise(img, sigma, self.seed),
            Corruption::Brightness { delta } => adjust_brightness(img, delta),
        }
    }
}

/// Standard normal samples by Box-Muller, consuming uniforms in order and
/// using both outputs of each pair.
pub struct BoxMuller<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: Rng> BoxMuller<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

pub fn add_gaussian_noise(img: &ImageBuf, sigma: f64, seed: u64) -> Result<ImageBuf> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut normal = BoxMuller::new(rng::stream(seed, 0x0015E));
    Ok(img.map(|v| v + sigma * normal.sample()))
}

pub fn adjust_brightness(img: &ImageBuf, delta: f64) -> Result<ImageBuf> {
    if !(delta.abs() <= 1.0) {
        return Err(Error::InvalidArgument(format!("brightness delta must lie in [-1, 1], got {delta}")));
    }
    Ok(img.map(|v| v + delta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedCorruption {
    pub image: ImageBuf,
    pub achieved_mse: f64,
    /// Sigma for noise, delta for brightness.
    pub parameter: f64,
}

pub const MATCH_ITERATIONS: usize = 40;
pub const MATCH_TOLERANCE: f64 = 0.02;

/// Bisects the corruption parameter on `[0, 1]` until the result's MSE
/// against `img` is within 2% of `target_mse`. Noise probes all share `seed`,
/// which keeps MSE monotone in sigma.
pub fn match_mse(img: &ImageBuf, target_mse: f64, kind: CorruptionKind, seed: u64) -> Result<MatchedCorruption> {
    if !(target_mse >= 0.0 && target_mse.is_finite()) {
        return Err(Error::InvalidArgument(format!("target MSE must be >= 0, got {target_mse}")));
    }
    let apply = |p: f64| -> Result<ImageBuf> {
        match kind {
            CorruptionKind::GaussianNoise => add_gaussian_noise(img, p, seed),
            CorruptionKind::Brightness => adjust_brightness(img, p),
        }
    };
    if target_mse == 0.0 {
        return Ok(MatchedCorruption {
            image: img.clone(),
            achieved_mse: 0.0,
            parameter: 0.0,
        });
    }
    let max = mse(img, &apply(1.0)?)?;
    if max < target_mse * (1.0 - MATCH_TOLERANCE) {
        return Err(Error::Unachievable { target: target_mse, max });
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best: Option<MatchedCorruption> = None;
    for _ in 0..MATCH_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        let candidate = apply(mid)?;
        let achieved = mse(img, &candidate)?;
        let err = (achieved - target_mse).abs();
        if best.as_ref().is_none_or(|b| err < (b.achieved_mse - target_mse).abs()) {
            best = Some(MatchedCorruption {
                image: candidate,
                achieved_mse: achieved,
                parameter: mid,
            });
        }
        if achieved < target_mse {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let best = best.expect("at least one probe");
    if (best.achieved_mse - target_mse).abs() > MATCH_TOLERANCE * target_mse {
        return Err(Error::Unachievable { target: target_mse, max });
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{ssim_mean, SsimParams};

    fn gradient_image() -> ImageBuf {
        ImageBuf::from_fn(60, 160, |r, c| 0.25 + 0.5 * ((r * 160 + c) as f64 / 9600.0))
    }

    #[test]
    fn zero_sigma_is_identity() {
        let img = gradient_image();
        assert_eq!(add_gaussian_noise(&img, 0.0, 3).unwrap(), img);
        assert!(add_gaussian_noise(&img, -0.1, 3).is_err());
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let img = gradient_image();
        let a = add_gaussian_noise(&img, 0.1, 9).unwrap();
        assert_eq!(a, add_gaussian_noise(&img, 0.1, 9).unwrap());
        assert_ne!(a, add_gaussian_noise(&img, 0.1, 10).unwrap());
    }

    #[test]
    fn noise_statistics_at_mid_gray() {
        let img = ImageBuf::filled(60, 160, 0.5).unwrap();
        let noisy = add_gaussian_noise(&img, 0.1, 1).unwrap();
        let d: Vec<f64> = noisy.data().iter().map(|v| v - 0.5).collect();
        let k = d.len() as f64;
        let mean = d.iter().sum::<f64>() / k;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
        assert!(mean.abs() <= 3.0 * 0.1 / k.sqrt(), "mean {mean}");
        assert!((sd - 0.1).abs() <= 0.005, "sd {sd}");
    }

    #[test]
    fn brightness_shift_and_saturation() {
        let img = gradient_image();
        assert_eq!(adjust_brightness(&img, 0.0).unwrap(), img);
        assert!(adjust_brightness(&img, 1.0).unwrap().data().iter().all(|&v| v == 1.0));
        let b = adjust_brightness(&img, 0.1).unwrap();
        for (o, n) in img.data().iter().zip(b.data()) {
            assert_eq!(*n, o + 0.1);
        }
        assert!(adjust_brightness(&img, 1.5).is_err());
    }

    #[test]
    fn match_zero_target_returns_original() {
        let img = gradient_image();
        let m = match_mse(&img, 0.0, CorruptionKind::GaussianNoise, 1).unwrap();
        assert_eq!(m.image, img);
        assert_eq!(m.parameter, 0.0);
    }

    #[test]
    fn brightness_match_without_clamping_is_sqrt_target() {
        let img = ImageBuf::filled(20, 20, 0.4).unwrap();
        let m = match_mse(&img, 0.01, CorruptionKind::Brightness, 0).unwrap();
        assert!((m.parameter - 0.1).abs() < 1e-3, "delta {}", m.parameter);
        assert!((m.achieved_mse - 0.01).abs() <= 0.02 * 0.01);
    }

    #[test]
    fn unachievable_target_reports_max() {
        let img = ImageBuf::filled(10, 10, 0.5).unwrap();
        match match_mse(&img, 0.9, CorruptionKind::Brightness, 0) {
            Err(Error::Unachievable { max, .. }) => assert!((max - 0.25).abs() < 1e-12),
            other => panic!("expected unachievable, got {other:?}"),
        }
    }

    #[test]
    fn matched_noise_hurts_ssim_more_than_brightness() {
        let img = gradient_image();
        let n = match_mse(&img, 0.01, CorruptionKind::GaussianNoise, 5).unwrap();
        let b = match_mse(&img, 0.01, CorruptionKind::Brightness, 5).unwrap();
        let p = SsimParams::default();
        assert!(ssim_mean(&img, &n.image, &p).unwrap() < ssim_mean(&img, &b.image, &p).unwrap());
    }
}

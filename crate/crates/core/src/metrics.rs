//! Pixel-wise MSE and windowed SSIM, including the analytic SSIM gradient used
//! to train the autoencoder under a similarity loss.
//!
//! SSIM windows are uniform (unweighted), stride 1, valid placement only, with
//! population (divide-by-n) moments. With `alpha = beta = gamma = 1` and the
//! structure stabilizer fixed at `c2 / 2`, the luminance/contrast/structure
//! product collapses to the familiar single fraction
//!
//! ```text
//! (2 mu_x mu_y + c1)(2 cov_xy + c2) / ((mu_x^2 + mu_y^2 + c1)(var_x + var_y + c2))
//! ```

use crate::error::{Error, Result};
use crate::image::ImageBuf;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    /// Odd window side length, at least 3.
    pub window: usize,
    pub c1: f64,
    pub c2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for SsimParams {
    /// 11x11 windows with the usual `(0.01 L)^2`, `(0.03 L)^2` stabilizers for
    /// dynamic range `L = 1`.
    fn default() -> Self {
        Self {
            window: 11,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

impl SsimParams {
    pub fn with_window(window: usize) -> Self {
        Self {
            window,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "SSIM window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "SSIM stabilizers must be positive, got c1={} c2={}",
                self.c1, self.c2
            )));
        }
        Ok(())
    }

    fn unit_exponents(&self) -> bool {
        self.alpha == 1.0 && self.beta == 1.0 && self.gamma == 1.0
    }
}

/// First and second moments of one aligned window pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats {
    pub mu_x: f64,
    pub mu_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub cov_xy: f64,
}

impl WindowStats {
    /// Two-pass population moments of a patch pair.
    pub fn from_patches(x: &[f64], y: &[f64]) -> Self {
        assert_eq!(x.len(), y.len(), "patch lengths differ");
        let n = x.len() as f64;
        let mu_x = x.iter().sum::<f64>() / n;
        let mu_y = y.iter().sum::<f64>() / n;
        let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
        for (&a, &b) in x.iter().zip(y) {
            vx += (a - mu_x) * (a - mu_x);
            vy += (b - mu_y) * (b - mu_y);
            cxy += (a - mu_x) * (b - mu_y);
        }
        Self {
            mu_x,
            mu_y,
            var_x: vx / n,
            var_y: vy / n,
            cov_xy: cxy / n,
        }
    }

    fn numerator_denominator(&self, c1: f64, c2: f64) -> (f64, f64, f64, f64) {
        let a1 = 2.0 * self.mu_x * self.mu_y + c1;
        let a2 = 2.0 * self.cov_xy + c2;
        let b1 = self.mu_x * self.mu_x + self.mu_y * self.mu_y + c1;
        let b2 = self.var_x + self.var_y + c2;
        (a1, a2, b1, b2)
    }
}

/// Luminance, contrast and structure factors of one window pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimComponents {
    pub luminance: f64,
    pub contrast: f64,
    pub structure: f64,
}

impl SsimComponents {
    /// `I^alpha * C^beta * S^gamma`.
    pub fn combine(&self, params: &SsimParams) -> f64 {
        pow(self.luminance, params.alpha)
            * pow(self.contrast, params.beta)
            * pow(self.structure, params.gamma)
    }
}

fn pow(base: f64, exp: f64) -> f64 {
    if exp == 1.0 {
        base
    } else {
        base.powf(exp)
    }
}

pub fn ssim_components(stats: &WindowStats, params: &SsimParams) -> SsimComponents {
    let sx = stats.var_x.max(0.0).sqrt();
    let sy = stats.var_y.max(0.0).sqrt();
    let c3 = params.c2 / 2.0;
    SsimComponents {
        luminance: (2.0 * stats.mu_x * stats.mu_y + params.c1)
            / (stats.mu_x * stats.mu_x + stats.mu_y * stats.mu_y + params.c1),
        contrast: (2.0 * sx * sy + params.c2) / (stats.var_x + stats.var_y + params.c2),
        structure: (stats.cov_xy + c3) / (sx * sy + c3),
    }
}

/// Single-fraction SSIM of one window pair (unit exponents).
pub fn ssim_reduced(stats: &WindowStats, params: &SsimParams) -> f64 {
    let (a1, a2, b1, b2) = stats.numerator_denominator(params.c1, params.c2);
    (a1 * a2) / (b1 * b2)
}

fn window_score(stats: &WindowStats, params: &SsimParams) -> f64 {
    let s = if params.unit_exponents() {
        ssim_reduced(stats, params)
    } else {
        ssim_components(stats, params).combine(params)
    };
    s.clamp(-1.0, 1.0)
}

/// Per-window SSIM scores over the valid window grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SsimMap {
    pub height: usize,
    pub width: usize,
    pub scores: Vec<f64>,
}

impl SsimMap {
    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }
}

pub fn mse(x: &ImageBuf, y: &ImageBuf) -> Result<f64> {
    x.ensure_same_dims(y)?;
    if x.is_empty() {
        return Err(Error::InvalidArgument("MSE of empty images".into()));
    }
    let sum: f64 = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / x.len() as f64)
}

pub fn ssim_map(x: &ImageBuf, y: &ImageBuf, params: &SsimParams) -> Result<SsimMap> {
    let grid = WindowGrid::new(x, y, params)?;
    let scores = grid.stats().map(|s| window_score(&s, params)).collect();
    Ok(SsimMap {
        height: grid.out_h,
        width: grid.out_w,
        scores,
    })
}

pub fn ssim_mean(x: &ImageBuf, y: &ImageBuf, params: &SsimParams) -> Result<f64> {
    Ok(ssim_map(x, y, params)?.mean())
}

/// Gradient of [`ssim_mean`] with respect to every pixel of `y`, row-major.
pub fn ssim_grad_wrt_y(x: &ImageBuf, y: &ImageBuf, params: &SsimParams) -> Result<Vec<f64>> {
    Ok(ssim_mean_and_grad(x, y, params)?.1)
}

/// [`ssim_mean`] together with its gradient with respect to `y`.
///
/// Each window contributes `a_w * x_i + b_w * y_i + c_w` to the derivative at
/// every pixel `i` it covers, so the full gradient is three box-spread
/// coefficient maps combined per pixel.
pub fn ssim_mean_and_grad(
    x: &ImageBuf,
    y: &ImageBuf,
    params: &SsimParams,
) -> Result<(f64, Vec<f64>)> {
    if !params.unit_exponents() {
        return Err(Error::InvalidArgument(
            "analytic SSIM gradient requires alpha = beta = gamma = 1".into(),
        ));
    }
    let grid = WindowGrid::new(x, y, params)?;
    let n = (params.window * params.window) as f64;
    let m = grid.out_h * grid.out_w;
    let mut coef_x = Vec::with_capacity(m);
    let mut coef_y = Vec::with_capacity(m);
    let mut coef_c = Vec::with_capacity(m);
    let mut total = 0.0;
    for st in grid.stats() {
        let (a1, a2, b1, b2) = st.numerator_denominator(params.c1, params.c2);
        let s = (a1 * a2) / (b1 * b2);
        total += s.clamp(-1.0, 1.0);
        let k = 2.0 / n;
        let denom = b1 * b2;
        let a = k * a1 / denom;
        let b = -k * s / b2;
        let c = k * (st.mu_x * a2 / denom - st.mu_y * s / b1) - a * st.mu_x - b * st.mu_y;
        coef_x.push(a);
        coef_y.push(b);
        coef_c.push(c);
    }
    let (h, w) = x.dims();
    let [spread_x, spread_y, spread_c] =
        box_spreads([&coef_x, &coef_y, &coef_c], grid.out_h, grid.out_w, params.window, h, w);
    let inv_m = 1.0 / m as f64;
    let grad = (0..h * w)
        .map(|i| inv_m * (x.data()[i] * spread_x[i] + y.data()[i] * spread_y[i] + spread_c[i]))
        .collect();
    Ok((total / m as f64, grad))
}

/// Window sums of the five moment channels for every valid window position.
struct WindowGrid {
    out_h: usize,
    out_w: usize,
    window: usize,
    /// x, y, xx, yy, xy
    sums: [Vec<f64>; 5],
}

impl WindowGrid {
    fn new(x: &ImageBuf, y: &ImageBuf, params: &SsimParams) -> Result<Self> {
        params.validate()?;
        x.ensure_same_dims(y)?;
        let (h, w) = x.dims();
        let win = params.window;
        if h < win || w < win {
            return Err(Error::DimensionMismatch(format!(
                "{h}x{w} image is smaller than the {win}x{win} SSIM window"
            )));
        }
        let (xd, yd) = (x.data(), y.data());
        let xx: Vec<f64> = xd.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = yd.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = xd.iter().zip(yd).map(|(a, b)| a * b).collect();
        Ok(Self {
            out_h: h - win + 1,
            out_w: w - win + 1,
            window: win,
            sums: box_sums([xd, yd, &xx, &yy, &xy], h, w, win),
        })
    }

    fn stats(&self) -> impl Iterator<Item = WindowStats> + '_ {
        let n = (self.window * self.window) as f64;
        (0..self.out_h * self.out_w).map(move |i| {
            let [sx, sy, sxx, syy, sxy] = &self.sums;
            let mu_x = sx[i] / n;
            let mu_y = sy[i] / n;
            WindowStats {
                mu_x,
                mu_y,
                var_x: (sxx[i] / n - mu_x * mu_x).max(0.0),
                var_y: (syy[i] / n - mu_y * mu_y).max(0.0),
                cov_xy: sxy[i] / n - mu_x * mu_y,
            }
        })
    }
}

/// Sum over every valid `win x win` window of each channel, by running sums
/// along columns and then along rows. Channels share the row pass so their
/// running sums interleave.
fn box_sums<const N: usize>(data: [&[f64]; N], h: usize, w: usize, win: usize) -> [Vec<f64>; N] {
    let oh = h - win + 1;
    let ow = w - win + 1;
    let vertical = data.map(|d| column_sums(d, h, w, win));
    let mut out: [Vec<f64>; N] = std::array::from_fn(|_| vec![0.0; oh * ow]);
    for r in 0..oh {
        let rows: [&[f64]; N] = std::array::from_fn(|i| &vertical[i][r * w..(r + 1) * w]);
        let outs = out.each_mut().map(|o| &mut o[r * ow..(r + 1) * ow]);
        let mut acc: [f64; N] = std::array::from_fn(|i| rows[i][..win].iter().sum());
        for i in 0..N {
            outs[i][0] = acc[i];
        }
        for c in 1..ow {
            for i in 0..N {
                acc[i] += rows[i][c + win - 1] - rows[i][c - 1];
                outs[i][c] = acc[i];
            }
        }
    }
    out
}

/// Running sums of `win` rows, one per valid top row.
fn column_sums(data: &[f64], h: usize, w: usize, win: usize) -> Vec<f64> {
    let oh = h - win + 1;
    let mut vertical = vec![0.0; oh * w];
    for k in 0..win {
        for (acc, v) in vertical[..w].iter_mut().zip(&data[k * w..(k + 1) * w]) {
            *acc += v;
        }
    }
    for r in 1..oh {
        let (done, rest) = vertical.split_at_mut(r * w);
        let prev = &done[(r - 1) * w..];
        let enter = &data[(r + win - 1) * w..(r + win) * w];
        let leave = &data[(r - 1) * w..r * w];
        for (((d, p), e), l) in rest[..w].iter_mut().zip(prev).zip(enter).zip(leave) {
            *d = p + e - l;
        }
    }
    vertical
}

/// Adjoint of [`box_sums`]: each pixel receives the sum over all windows that
/// cover it.
fn box_spreads<const N: usize>(maps: [&[f64]; N], oh: usize, ow: usize, win: usize, h: usize, w: usize) -> [Vec<f64>; N] {
    let mut horizontal: [Vec<f64>; N] = std::array::from_fn(|_| vec![0.0; oh * w]);
    for r in 0..oh {
        let src: [&[f64]; N] = std::array::from_fn(|i| &maps[i][r * ow..(r + 1) * ow]);
        let dst = horizontal.each_mut().map(|h| &mut h[r * w..(r + 1) * w]);
        let mut acc = [0.0; N];
        for c in 0..w {
            for i in 0..N {
                if c < ow {
                    acc[i] += src[i][c];
                }
                if c >= win {
                    acc[i] -= src[i][c - win];
                }
                dst[i][c] = acc[i];
            }
        }
    }
    horizontal.map(|hz| {
        let mut out = vec![0.0; h * w];
        let mut acc = vec![0.0; w];
        for r in 0..h {
            if r < oh {
                for (a, v) in acc.iter_mut().zip(&hz[r * w..(r + 1) * w]) {
                    *a += v;
                }
            }
            if r >= win {
                for (a, v) in acc.iter_mut().zip(&hz[(r - win) * w..(r - win + 1) * w]) {
                    *a -= v;
                }
            }
            out[r * w..(r + 1) * w].copy_from_slice(&acc);
        }
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> ImageBuf {
        let mut rng = crate::rng::stream(seed, 0);
        ImageBuf::from_fn(h, w, |_, _| rng.random::<f64>())
    }

    /// Direct per-window evaluation, independent of the box-sum path.
    fn oracle_scores(x: &ImageBuf, y: &ImageBuf, p: &SsimParams) -> Vec<f64> {
        let (h, w) = x.dims();
        let win = p.window;
        let mut out = Vec::new();
        for r in 0..=h - win {
            for c in 0..=w - win {
                let mut px = Vec::new();
                let mut py = Vec::new();
                for i in 0..win {
                    for j in 0..win {
                        px.push(x.get(r + i, c + j));
                        py.push(y.get(r + i, c + j));
                    }
                }
                let st = WindowStats::from_patches(&px, &py);
                let (a1, a2, b1, b2) = (
                    2.0 * st.mu_x * st.mu_y + p.c1,
                    2.0 * st.cov_xy + p.c2,
                    st.mu_x.powi(2) + st.mu_y.powi(2) + p.c1,
                    st.var_x + st.var_y + p.c2,
                );
                out.push(a1 * a2 / (b1 * b2));
            }
        }
        out
    }

    #[test]
    fn mse_reference_values() {
        let x = ImageBuf::zeros(4, 4);
        let y = ImageBuf::filled(4, 4, 0.5).unwrap();
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
        assert_eq!(mse(&x, &y).unwrap(), 0.25);
        assert!(mse(&x, &ImageBuf::zeros(4, 5)).is_err());
    }

    #[test]
    fn mse_matches_double_loop() {
        let x = random_image(8, 8, 1);
        let y = random_image(8, 8, 2);
        let mut acc = 0.0;
        for r in 0..8 {
            for c in 0..8 {
                let d = x.get(r, c) - y.get(r, c);
                acc += d * d;
            }
        }
        assert!((mse(&x, &y).unwrap() - acc / 64.0).abs() < 1e-15);
    }

    #[test]
    fn identical_windows_give_unit_components() {
        let px = [0.1, 0.5, 0.9, 0.3];
        let st = WindowStats::from_patches(&px, &px);
        let c = ssim_components(&st, &SsimParams::default());
        assert!((c.luminance - 1.0).abs() < 1e-15);
        assert!((c.contrast - 1.0).abs() < 1e-15);
        assert!((c.structure - 1.0).abs() < 1e-15);
    }

    #[test]
    fn black_vs_white_window() {
        let st = WindowStats::from_patches(&[0.0; 9], &[1.0; 9]);
        let p = SsimParams::default();
        let expected = 1e-4 / (1.0 + 1e-4);
        assert!((ssim_reduced(&st, &p) - expected).abs() < 1e-15);
        let c = ssim_components(&st, &p);
        assert_eq!(c.contrast, 1.0);
        assert_eq!(c.structure, 1.0);
        assert!((c.combine(&p) - expected).abs() < 1e-15);
    }

    #[test]
    fn map_dims_and_identity() {
        let x = random_image(13, 13, 3);
        let m = ssim_map(&x, &x, &SsimParams::default()).unwrap();
        assert_eq!((m.height, m.width), (3, 3));
        assert!(m.scores.iter().all(|s| (s - 1.0).abs() < 1e-9));
    }

    #[test]
    fn inverted_image_scores_lower() {
        let x = random_image(16, 16, 4);
        let inv = x.map(|v| 1.0 - v);
        let p = SsimParams::default();
        let same = ssim_map(&x, &x, &p).unwrap();
        let flipped = ssim_map(&x, &inv, &p).unwrap();
        for (a, b) in flipped.scores.iter().zip(&same.scores) {
            assert!(a < b);
        }
    }

    #[test]
    fn map_matches_per_window_oracle() {
        let x = random_image(17, 21, 5);
        let y = random_image(17, 21, 6);
        let p = SsimParams::default();
        let m = ssim_map(&x, &y, &p).unwrap();
        let oracle = oracle_scores(&x, &y, &p);
        for (a, b) in m.scores.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        let oracle_mean = oracle.iter().sum::<f64>() / oracle.len() as f64;
        assert!((ssim_mean(&x, &y, &p).unwrap() - oracle_mean).abs() < 1e-12);
    }

    #[test]
    fn rejects_small_images_and_bad_params() {
        let x = ImageBuf::zeros(10, 20);
        assert!(ssim_map(&x, &x, &SsimParams::default()).is_err());
        assert!(ssim_map(&x, &x, &SsimParams::with_window(4)).is_err());
        let bad = SsimParams { c1: 0.0, ..SsimParams::with_window(3) };
        assert!(ssim_map(&x, &x, &bad).is_err());
    }

    #[test]
    fn gradient_zero_at_constant_identity() {
        let x = ImageBuf::filled(12, 12, 0.4).unwrap();
        let g = ssim_grad_wrt_y(&x, &x, &SsimParams::default()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let x = random_image(12, 12, 7);
        // keep y away from the [0, 1] walls so +-h probes stay valid
        let y = random_image(12, 12, 8).map(|v| 0.1 + 0.8 * v);
        let p = SsimParams::default();
        let g = ssim_grad_wrt_y(&x, &y, &p).unwrap();
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for i in 0..y.len() {
            let mut plus = y.data().to_vec();
            let mut minus = y.data().to_vec();
            plus[i] += h;
            minus[i] -= h;
            let fp = ssim_mean(&x, &ImageBuf::new(12, 12, plus).unwrap(), &p).unwrap();
            let fm = ssim_mean(&x, &ImageBuf::new(12, 12, minus).unwrap(), &p).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-8);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn every_pixel_is_covered() {
        let (h, w, win) = (12, 15, 11);
        let ones = vec![1.0; (h - win + 1) * (w - win + 1)];
        let [cover] = box_spreads([&ones], h - win + 1, w - win + 1, win, h, w);
        assert!(cover.iter().all(|&c| c >= 1.0));
        assert_eq!(cover.iter().sum::<f64>(), (ones.len() * win * win) as f64);
    }
}

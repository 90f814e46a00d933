//! Reference implementations shared by the oracle and acceptance tests.
#![allow(dead_code)]

use rand::Rng;
use vbp_novelty::autoencoder::{AeModel, LossKind};
use vbp_novelty::cnn::{CnnModel, ConvLayerSpec, ForwardTrace};
use vbp_novelty::image::ImageBuf;
use vbp_novelty::metrics::SsimParams;
use vbp_novelty::nn::Parameters;
use vbp_novelty::rng;

pub fn random_image(h: usize, w: usize, seed: u64) -> ImageBuf {
    let mut r = rng::stream(seed, 77);
    ImageBuf::from_fn(h, w, |_, _| r.random::<f64>())
}

/// Model with small positive biases so feature maps are rarely all zero.
pub fn toy_cnn(dims: (usize, usize), specs: &[ConvLayerSpec], hidden: &[usize], seed: u64) -> CnnModel {
    let mut m = CnnModel::new(dims, specs, hidden, seed).unwrap();
    let mut r = rng::stream(seed, 5);
    let mut flat = m.params_flat();
    for v in flat.iter_mut() {
        *v += r.random_range(0.0..0.05);
    }
    m.set_params_flat(&flat);
    m
}


pub struct Maps {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

impl Maps {
    fn at(&self, c: usize, i: usize, j: usize) -> f64 {
        self.v[(c * self.h + i) * self.w + j]
    }
}

/// Six nested loops per conv layer, then plain dense layers.
pub fn naive_forward(model: &CnnModel, img: &ImageBuf) -> (f64, Vec<Maps>) {
    let mut cur = Maps {
        c: 1,
        h: img.height(),
        w: img.width(),
        v: img.data().to_vec(),
    };
    let mut trace = Vec::new();
    for layer in model.conv_layers() {
        let s = layer.spec;
        let (oh, ow) = ((cur.h - s.kernel) / s.stride + 1, (cur.w - s.kernel) / s.stride + 1);
        let mut out = vec![0.0; s.out_channels * oh * ow];
        for o in 0..s.out_channels {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = layer.bias[o];
                    for c in 0..s.in_channels {
                        for a in 0..s.kernel {
                            for b in 0..s.kernel {
                                let w = layer.weights[[o, (c * s.kernel + a) * s.kernel + b]];
                                acc += w * cur.at(c, i * s.stride + a, j * s.stride + b);
                            }
                        }
                    }
                    out[(o * oh + i) * ow + j] = acc.max(0.0);
                }
            }
        }
        cur = Maps {
            c: s.out_channels,
            h: oh,
            w: ow,
            v: out,
        };
        trace.push(Maps { c: cur.c, h: cur.h, w: cur.w, v: cur.v.clone() });
    }
    let mut x = cur.v;
    let dense = model.dense_layers();
    for (k, d) in dense.iter().enumerate() {
        let mut y = vec![0.0; d.outputs()];
        for (o, yo) in y.iter_mut().enumerate() {
            *yo = d.bias[o] + (0..d.inputs()).map(|i| d.weights[[o, i]] * x[i]).sum::<f64>();
            if k + 1 < dense.len() {
                *yo = yo.max(0.0);
            }
        }
        x = y;
    }
    (x[0], trace)
}


/// Step-by-step VBP: explicit channel averages, explicit scatter of a
/// ones-kernel transposed convolution, explicit products.
pub fn oracle_vbp(trace: &ForwardTrace, specs: &[ConvLayerSpec]) -> Vec<f64> {
    let avg: Vec<(usize, usize, Vec<f64>)> = trace
        .layers
        .iter()
        .map(|m| {
            let mut a = vec![0.0; m.height * m.width];
            for c in 0..m.channels {
                for p in 0..a.len() {
                    a[p] += m.data[c * m.height * m.width + p] / m.channels as f64;
                }
            }
            (m.height, m.width, a)
        })
        .collect();
    let deconv = |h: usize, w: usize, m: &[f64], k: usize, s: usize, th: usize, tw: usize| {
        let (fh, fw) = ((h - 1) * s + k, (w - 1) * s + k);
        let (or, oc) = (fh.saturating_sub(th) / 2, fw.saturating_sub(tw) / 2);
        let mut out = vec![0.0; th * tw];
        for r in 0..th {
            for c in 0..tw {
                let (fr, fc) = (r + or, c + oc);
                for i in 0..h {
                    for j in 0..w {
                        if fr >= i * s && fr < i * s + k && fc >= j * s && fc < j * s + k {
                            out[r * tw + c] += m[i * w + j];
                        }
                    }
                }
            }
        }
        out
    };
    let last = avg.len() - 1;
    let (mut h, mut w, mut m) = avg[last].clone();
    for l in (1..=last).rev() {
        let (th, tw, ref below) = avg[l - 1];
        let up = deconv(h, w, &m, specs[l].kernel, specs[l].stride, th, tw);
        m = up.iter().zip(below).map(|(a, b)| a * b).collect();
        (h, w) = (th, tw);
    }
    let full = deconv(h, w, &m, specs[0].kernel, specs[0].stride, trace.input_h, trace.input_w);
    let lo = full.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = full.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        full.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; full.len()]
    }
}


pub fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-8 {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

/// Worst relative error of central differences (step 1e-4) against the
/// analytic gradient, over every parameter.
pub fn gradient_error(params: Vec<f64>, analytic: &[f64], mut loss_at: impl FnMut(&[f64]) -> f64) -> f64 {
    assert_eq!(params.len(), analytic.len());
    let h = 1e-4;
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] += h;
        let up = loss_at(&p);
        p[i] -= 2.0 * h;
        let down = loss_at(&p);
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    worst
}


/// Direct per-window SSIM from the three-factor definition.
pub fn oracle_window_ssim(x: &[f64], y: &[f64], p: &SsimParams) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let vx = x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n;
    let vy = y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
    let cxy = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    let c3 = p.c2 / 2.0;
    let l = (2.0 * mx * my + p.c1) / (mx * mx + my * my + p.c1);
    let c = (2.0 * vx.sqrt() * vy.sqrt() + p.c2) / (vx + vy + p.c2);
    let s = (cxy + c3) / (vx.sqrt() * vy.sqrt() + c3);
    l * c * s
}


/// Worst gradient error of a small CNN on three images.
pub fn cnn_gradient_error() -> (usize, f64) {
    let specs = [ConvLayerSpec::new(1, 2, 3, 1), ConvLayerSpec::new(2, 3, 3, 2)];
    let mut model = toy_cnn((8, 10), &specs, &[6, 4], 9);
    let n = model.param_count();
    let imgs: Vec<ImageBuf> = (0..3).map(|i| random_image(8, 10, 20 + i)).collect();
    let refs: Vec<&ImageBuf> = imgs.iter().collect();
    let targets = [0.2, -0.1, 0.05];
    let (_, grads) = model.loss_and_gradient(&refs, &targets).unwrap();
    let params = model.params_flat();
    let worst = gradient_error(params, &grads.concat(), |p| {
        model.set_params_flat(p);
        model.loss_and_gradient(&refs, &targets).unwrap().0
    });
    (n, worst)
}

/// Worst gradient error of a 48-8-4-8-48 autoencoder on three 6x8 images.
pub fn ae_gradient_error(kind: LossKind) -> (usize, f64) {
    let mut model = AeModel::new(&[48, 8, 4, 8, 48], 4).unwrap();
    let n = model.param_count();
    let imgs: Vec<ImageBuf> = (0..3).map(|i| random_image(6, 8, 40 + i)).collect();
    let refs: Vec<&ImageBuf> = imgs.iter().collect();
    let (_, grads) = model.loss_and_gradient(&refs, &kind).unwrap();
    let params = model.params_flat();
    let worst = gradient_error(params, &grads.concat(), |p| {
        model.set_params_flat(p);
        model.loss_and_gradient(&refs, &kind).unwrap().0
    });
    (n, worst)
}

pub fn ae_ssim_kind() -> LossKind {
    LossKind::Ssim(SsimParams::with_window(3))
}

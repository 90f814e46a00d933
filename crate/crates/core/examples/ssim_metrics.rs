//! MSE and SSIM between a road scene and two corruptions of it that have the
//! same pixel MSE: Gaussian noise and a brightness shift.
//!
//!     cargo run --release --example ssim_metrics [target_mse]

use vbp_novelty::corruption::{match_mse, CorruptionKind};
use vbp_novelty::metrics::{mse, ssim_map, ssim_mean, SsimParams};
use vbp_novelty::synth::{render_scene, WorldSpec};

fn main() -> vbp_novelty::error::Result<()> {
    let target: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let scene = render_scene(&WorldSpec::world_a(7), 0.004, 0.1)?;
    let params = SsimParams::default();

    let noisy = match_mse(&scene.image, target, CorruptionKind::GaussianNoise, 1)?;
    let bright = match_mse(&scene.image, target, CorruptionKind::Brightness, 1)?;

    println!("{:<12} {:>10} {:>10} {:>10}", "corruption", "param", "mse", "ssim");
    for (name, c) in [("noise", &noisy), ("brightness", &bright)] {
        println!(
            "{name:<12} {:>10.4} {:>10.5} {:>10.4}",
            c.parameter,
            mse(&scene.image, &c.image)?,
            ssim_mean(&scene.image, &c.image, &params)?
        );
    }

    let map = ssim_map(&scene.image, &noisy.image, &params)?;
    let worst = map.scores.iter().copied().fold(f64::INFINITY, f64::min);
    println!("noise ssim map {}x{}, worst window {worst:.4}", map.height, map.width);
    Ok(())
}

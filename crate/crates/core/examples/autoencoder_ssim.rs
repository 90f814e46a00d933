//! Trains two small autoencoders on world A scenes, one with MSE loss and one
//! with SSIM loss, and compares their reconstructions of held-out scenes.
//!
//!     cargo run --release --example autoencoder_ssim [epochs] [out_dir]

use std::path::PathBuf;

use vbp_novelty::autoencoder::{ae_train_with, AeModel, AeTrainConfig, LossKind};
use vbp_novelty::image::ImageBuf;
use vbp_novelty::metrics::{mse, ssim_mean, SsimParams};
use vbp_novelty::nn::TrainConfig;
use vbp_novelty::pnm;
use vbp_novelty::synth::{gen_scenes, WorldSpec};

fn main() -> vbp_novelty::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/ae".into()));
    std::fs::create_dir_all(&out).map_err(|e| vbp_novelty::error::Error::io(&out, e))?;

    let images = |seed, n| -> vbp_novelty::error::Result<Vec<ImageBuf>> {
        Ok(gen_scenes(&WorldSpec::world_a(seed), n)?.into_iter().map(|s| s.image).collect())
    };
    let train = images(1, 400)?;
    let test = images(2, 3)?;
    let params = SsimParams::default();

    for loss in [LossKind::Mse, LossKind::ssim()] {
        let cfg = AeTrainConfig {
            train: TrainConfig { epochs, ..TrainConfig::default() },
            loss,
        };
        let trained = ae_train_with(AeModel::default_pipeline(0), &train, &cfg, |e, l| {
            if (e + 1) % 10 == 0 {
                println!("{loss} epoch {}: {l:.5}", e + 1);
            }
        })?;
        for (i, img) in test.iter().enumerate() {
            let recon = trained.model.reconstruct(img)?;
            println!(
                "  {loss} test {i}: mse {:.5} ssim {:.4}",
                mse(img, &recon)?,
                ssim_mean(img, &recon, &params)?
            );
            pnm::write_pgm(out.join(format!("test{i}.pgm")), img)?;
            pnm::write_pgm(out.join(format!("test{i}_{}.pgm", loss.name())), &recon)?;
        }
    }
    Ok(())
}

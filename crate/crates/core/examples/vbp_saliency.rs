//! VisualBackProp masks for a real-label and a random-label CNN on the same
//! scenes, with the edge-band concentration of each.
//!
//!     cargo run --release --example vbp_saliency [out_dir]

use std::path::PathBuf;

use vbp_novelty::cnn::{cnn_train, cnn_train_random_labels, CnnModel};
use vbp_novelty::image::ImageBuf;
use vbp_novelty::nn::TrainConfig;
use vbp_novelty::synth::{edge_concentration, gen_scenes, WorldSpec};
use vbp_novelty::{pnm, vbp};

fn main() -> vbp_novelty::error::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/vbp".into()));
    std::fs::create_dir_all(&out).map_err(|e| vbp_novelty::error::Error::io(&out, e))?;

    let train = gen_scenes(&WorldSpec::world_a(1), 800)?;
    let imgs: Vec<ImageBuf> = train.iter().map(|s| s.image.clone()).collect();
    let angles: Vec<f64> = train.iter().map(|s| s.angle).collect();
    let cfg = TrainConfig { epochs: 10, ..TrainConfig::default() };
    let real = cnn_train(CnnModel::default_steering(0), &imgs, &angles, &cfg)?.model;
    let random = cnn_train_random_labels(CnnModel::default_steering(0), &imgs, &cfg)?.model;

    let test = gen_scenes(&WorldSpec::world_a(9), 5)?;
    for (i, scene) in test.iter().enumerate() {
        let m_real = vbp::saliency(&real, &scene.image)?;
        let m_rand = vbp::saliency(&random, &scene.image)?;
        println!(
            "scene {i}: edge concentration real {:.2}, random {:.2}",
            edge_concentration(m_real.image(), &scene.edge_band),
            edge_concentration(m_rand.image(), &scene.edge_band)
        );
        pnm::write_pgm(out.join(format!("scene{i}.pgm")), &scene.image)?;
        pnm::write_pgm(out.join(format!("scene{i}_real.pgm")), m_real.image())?;
        pnm::write_pgm(out.join(format!("scene{i}_random.pgm")), m_rand.image())?;
    }
    println!("masks in {}", out.display());
    Ok(())
}

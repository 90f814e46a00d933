//! Trains the steering CNN on world A scenes, reports held-out angle MSE and
//! saves the weights.
//!
//!     cargo run --release --example train_steering_cnn [scenes] [epochs] [weights.nvsm]

use std::time::Instant;

use vbp_novelty::cnn::{angle_mse, cnn_train, CnnModel};
use vbp_novelty::image::ImageBuf;
use vbp_novelty::nn::TrainConfig;
use vbp_novelty::synth::{gen_scenes, WorldSpec};
use vbp_novelty::weights;

fn main() -> vbp_novelty::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let path = args.next().unwrap_or_else(|| "cnn.nvsm".into());

    let train = gen_scenes(&WorldSpec::world_a(1), n)?;
    let test = gen_scenes(&WorldSpec::world_a(2), 200)?;
    let imgs: Vec<ImageBuf> = train.iter().map(|s| s.image.clone()).collect();
    let angles: Vec<f64> = train.iter().map(|s| s.angle).collect();

    let cfg = TrainConfig { epochs, ..TrainConfig::default() };
    let start = Instant::now();
    let trained = cnn_train(CnnModel::default_steering(0), &imgs, &angles, &cfg)?;
    for (e, l) in trained.history.iter().enumerate() {
        println!("epoch {:>3}  train mse {l:.5}", e + 1);
    }

    let test_imgs: Vec<ImageBuf> = test.iter().map(|s| s.image.clone()).collect();
    let test_angles: Vec<f64> = test.iter().map(|s| s.angle).collect();
    println!(
        "held-out angle mse {:.5} rad^2 ({:.1?})",
        angle_mse(&trained.model, &test_imgs, &test_angles)?,
        start.elapsed()
    );
    weights::save_cnn(&trained.model, &path)?;
    println!("saved {path}");
    Ok(())
}

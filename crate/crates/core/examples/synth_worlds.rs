//! Writes a small dataset from each synthetic world and prints a few scenes'
//! road parameters and labels.
//!
//!     cargo run --release --example synth_worlds [out_dir] [n]

use std::path::PathBuf;

use vbp_novelty::synth::{gen_dataset, gen_scenes, WorldId, WorldSpec};

fn main() -> vbp_novelty::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/worlds".into()));
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);

    for world in [WorldId::A, WorldId::B] {
        let spec = WorldSpec::for_world(world, 42);
        let dir = out.join(format!("world{world}"));
        let manifest = gen_dataset(&spec, n, &dir)?;
        println!("world {world}: {} images in {}", manifest.len(), dir.display());
        for (i, s) in gen_scenes(&spec, 3)?.iter().enumerate() {
            println!(
                "  scene {i}: curvature {:+.5} offset {:+.3} -> angle {:+.4} rad, mean intensity {:.3}",
                s.curvature,
                s.offset,
                s.angle,
                s.image.mean()
            );
        }
    }
    Ok(())
}

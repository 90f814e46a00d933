//! Fits the 99th-percentile novelty threshold on calibration scores and
//! classifies a few new ones, for a loss and for a similarity.

use vbp_novelty::detector::{fit_threshold, Orientation};

fn main() -> vbp_novelty::error::Result<()> {
    let losses: Vec<f64> = (1..=1000).map(|i| 0.01 + 0.0001 * (i as f64).sqrt()).collect();
    let t = fit_threshold(&losses, 0.99, Orientation::HighIsNovel)?;
    println!("loss cutoff {:.6}, calibration flagged {:.4}", t.cutoff, t.flagged_fraction(&losses));
    for s in [0.012, 0.0132, 0.05] {
        println!("  loss {s}: novel = {}", t.classify(s)?.novel);
    }

    let sims: Vec<f64> = losses.iter().map(|l| 1.0 - 10.0 * l).collect();
    let t = fit_threshold(&sims, 0.99, Orientation::LowIsNovel)?;
    println!("similarity cutoff {:.6}, calibration flagged {:.4}", t.cutoff, t.flagged_fraction(&sims));
    for s in [0.95, 0.86, 0.3] {
        println!("  similarity {s}: novel = {}", t.classify(s)?.novel);
    }
    print!("record:\n{}", t.to_record());
    Ok(())
}

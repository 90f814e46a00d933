//! Runs one experiment (E0-E3) from a config file and prints its summaries.
//!
//!     cargo run --release --example experiment -- configs/e2.conf [key=value ...]

use vbp_novelty::pipeline::{experiments, report, RunConfig};

fn main() -> vbp_novelty::error::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let mut cfg = match args.next() {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for kv in args {
        cfg.apply_override(&kv)?;
    }
    if cfg.experiment.is_none() {
        cfg.apply_override("experiment=E2")?;
    }
    let bundle = experiments::cmd_experiment(&cfg)?;
    let summaries: Vec<_> = bundle.reports.iter().map(|r| r.summary.clone()).collect();
    print!("{}", report::summary_table(&summaries));
    if let Some(s) = &bundle.saliency {
        println!("{s:?}");
    }
    println!("{} artifacts under {}", bundle.artifacts.len(), cfg.out_dir.display());
    Ok(())
}

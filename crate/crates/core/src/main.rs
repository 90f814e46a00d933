use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vbp_novelty::error::{Error, Result};
use vbp_novelty::pipeline::{commands, experiments, report, RunConfig};

#[derive(Parser)]
#[command(name = "vbp-novelty", version, about = "Saliency-based novelty detection for steering CNNs")]
struct Cli {
    /// `key = value` run configuration.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set seed=3`.
    #[arg(short, long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Generate a synthetic world dataset.
    GenData,
    /// Train the steering CNN.
    TrainCnn,
    /// Write VBP masks for every manifest image.
    ExportVbp,
    /// Train the autoencoder.
    TrainAe,
    /// Fit the novelty threshold.
    Calibrate,
    /// Score target and novel sets.
    Score,
    /// Run one of the experiments E0-E3.
    Experiment,
    /// Tabulate every summary under the output directory.
    Report,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &cli.overrides {
        cfg.apply_override(kv)?;
    }
    match cli.verb {
        Verb::GenData => {
            commands::gen_data(&cfg)?;
        }
        Verb::TrainCnn => {
            let r = commands::train_cnn(&cfg)?;
            println!("weights: {}", r.weights.display());
            if let Some(m) = r.heldout_mse {
                println!("held-out angle MSE: {m}");
            }
        }
        Verb::ExportVbp => {
            let m = commands::export_vbp(&cfg)?;
            println!("{} masks in {}", m.len(), m.root.display());
        }
        Verb::TrainAe => {
            let r = commands::train_ae(&cfg)?;
            println!("weights: {} (final loss {})", r.weights.display(), r.history.last().copied().unwrap_or(f64::NAN));
        }
        Verb::Calibrate => {
            let t = commands::calibrate(&cfg)?;
            print!("{}", t.to_record());
        }
        Verb::Score => {
            let r = commands::score(&cfg)?;
            print!("{}", report::summary_table(std::slice::from_ref(&r.summary)));
        }
        Verb::Experiment => {
            let b = experiments::cmd_experiment(&cfg)?;
            let summaries: Vec<_> = b.reports.iter().map(|r| r.summary.clone()).collect();
            if !summaries.is_empty() {
                print!("{}", report::summary_table(&summaries));
            }
            if let Some(s) = &b.saliency {
                println!(
                    "edge concentration: real {:.3}, random {:.3}",
                    s.real_ratio, s.random_ratio
                );
            }
            for r in &b.reconstructions {
                println!("{}: mean SSIM {:.4}, mean MSE {:.6}", r.label, r.mean_ssim, r.mean_mse);
            }
        }
        Verb::Report => {
            commands::report(&cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Error::exit_code(&e) as u8)
        }
    }
}

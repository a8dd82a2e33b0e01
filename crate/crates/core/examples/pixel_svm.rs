//! The pixel-wise baseline: skin GMM for pixel labels, RBF SVM on the spectral pixel
//! features, Platt-calibrated presentation scores. Trains on the grand test protocol and
//! prints the test error rates at the dev threshold.
//!
//! cargo run --release --example pixel_svm

use swirpad::dataset::{select_protocol, Protocol};
use swirpad::models::{ModelKind, ScorerConfig};
use swirpad::pipeline::{score_split, train_scorer};
use swirpad::evalkit::{compute_rates, threshold_at_bpcer};
use swirpad::synthgen::{generate_presentations, GeneratorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate_presentations(&GeneratorConfig::default())?;
    let view = select_protocol(&data, Protocol::GrandTest)?;
    let cfg = ScorerConfig::desk(ModelKind::PixelSvm);
    let (scorer, _) = train_scorer(&view, &[], &cfg, None)?;
    let dev = score_split(&scorer, &view.dev)?;
    let test = score_split(&scorer, &view.test)?;
    let choice = threshold_at_bpcer(&dev, cfg.train.dev_bpcer_target)?;
    let r = compute_rates(&test, choice.tau)?;
    println!(
        "test APCER {:.1}%  BPCER {:.1}%  ACER {:.1}% (tau {:.4})",
        r.apcer, r.bpcer, r.acer, choice.tau
    );
    Ok(())
}

//! Synthesizes a dataset, ranks and selects band differences, trains the pixel-wise
//! supervised CNN on the selection and writes the evaluation report.
//!
//! cargo run --release --example end_to_end -- [out_dir] [protocol]

use std::path::PathBuf;
use std::time::Instant;

use swirpad::dataset::Protocol;
use swirpad::models::{ModelKind, ScorerConfig};
use swirpad::pipeline::{run_pipeline, PipelineConfig};
use swirpad::synthgen::GeneratorConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "end_to_end_run".into()));
    let protocol: Protocol = args.next().as_deref().unwrap_or("grand_test").parse()?;
    let cfg = PipelineConfig {
        generator: GeneratorConfig::default(),
        data: None,
        protocol,
        selection: ScorerConfig::proxy(ModelKind::Pixbis),
        model: ScorerConfig::desk(ModelKind::Pixbis),
        channels: None,
        max_candidates: None,
        out,
    };
    let start = Instant::now();
    let outcome = run_pipeline(&cfg)?;
    println!("selected: {:?}", outcome.scorer.specs.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    println!(
        "test APCER {:.1}%  BPCER {:.1}%  ACER {:.1}%  EER {:.1}%",
        outcome.metrics.test_apcer, outcome.metrics.test_bpcer, outcome.metrics.test_acer, outcome.metrics.test_eer
    );
    println!("report in {} ({:.0?})", cfg.out.display(), start.elapsed());
    Ok(())
}

//! Trains the pixel-wise supervised CNN on fixed channels of a synthetic dataset, prints the
//! per-epoch training loss and dev ACER, then the test error rates at the dev threshold.
//!
//! cargo run --release --example train_pixbis -- [channels] [epochs] [learning rate] [scale] [preset] [batch]

use std::collections::BTreeMap;

use swirpad::dataset::{select_protocol, Label, Protocol};
use swirpad::evalkit::{compute_rates, threshold_at_bpcer};
use swirpad::models::{ModelKind, ScorerConfig};
use swirpad::pipeline::{score_split, train_scorer};
use swirpad::swirdiff::parse_spec_list;
use swirpad::synthgen::{generate_presentations, reference_counts, GeneratorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let specs = parse_spec_list(&args.next().unwrap_or_else(|| "1450-940,1550-1300".into()))?;
    let (epochs, lr, scale) = (args.next(), args.next(), args.next());
    let mut cfg = ScorerConfig::preset(&args.next().unwrap_or_else(|| "desk".into()), ModelKind::Pixbis)?;
    if let Some(b) = args.next() {
        cfg.train.batch_size = b.parse()?;
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e.parse()?;
    }
    if let Some(lr) = lr {
        cfg.train.learning_rate = lr.parse()?;
    }
    let mut gen = GeneratorConfig::default();
    if let Some(s) = scale {
        gen.counts = reference_counts(s.parse()?);
    }
    let data = generate_presentations(&gen)?;
    let view = select_protocol(&data, Protocol::GrandTest)?;
    let (scorer, report) = train_scorer(&view, &specs, &cfg, None)?;
    println!("initial loss {:.4}", report.initial_loss);
    for e in &report.epochs {
        println!(
            "epoch {:>3}  loss {:.4}  dev ACER {:>5.1}%  dev BCE {:.4}",
            e.epoch, e.train_loss, e.dev_acer, e.dev_loss
        );
    }
    println!("kept epoch {}", report.best_epoch);

    let dev = score_split(&scorer, &view.dev)?;
    let test = score_split(&scorer, &view.test)?;
    let tau = threshold_at_bpcer(&dev, cfg.train.dev_bpcer_target)?.tau;
    let r = compute_rates(&test, tau)?;
    println!(
        "test APCER {:.1}%  BPCER {:.1}%  ACER {:.1}%",
        r.apcer, r.bpcer, r.acer
    );
    let mut per_type: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for e in test.entries().iter().filter(|e| e.label == Label::Attack) {
        let c = per_type.entry(e.attack_type.to_string()).or_default();
        c.0 += usize::from(e.score >= tau);
        c.1 += 1;
    }
    for (t, (acc, n)) in per_type {
        println!("  {t:<14} accepted {acc}/{n}");
    }
    Ok(())
}

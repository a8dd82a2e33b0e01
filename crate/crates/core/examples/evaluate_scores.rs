//! Picks the threshold on dev scores and writes the evaluation report (metrics, ROC,
//! per-attack breakdown and summary table) for a made-up scorer.
//!
//! cargo run --release --example evaluate_scores -- [out_dir]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use swirpad::dataset::AttackType;
use swirpad::evalkit::{write_report, ReportMeta, ScoreSet};

fn scores(rng: &mut impl Rng, n: usize) -> Result<ScoreSet, swirpad::evalkit::EvalError> {
    let kinds = [
        (AttackType::None, 0.8),
        (AttackType::Print, 0.2),
        (AttackType::RigidMask, 0.35),
        (AttackType::Tattoo, 0.75),
    ];
    let s: Vec<(f64, AttackType)> = (0..n)
        .map(|i| {
            let (kind, centre) = kinds[i % kinds.len()];
            ((centre + rng.random_range(-0.15..0.15f64)).clamp(0.0, 1.0), kind)
        })
        .collect();
    ScoreSet::from_scores(&s)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "report".into()));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let dev = scores(&mut rng, 400)?;
    let test = scores(&mut rng, 400)?;
    let meta = ReportMeta {
        protocol: "grand_test".into(),
        model: "toy".into(),
        input: "scores".into(),
    };
    let (m, paths) = write_report(&dev, &test, &meta, 1.0, &out)?;
    print!("{}", std::fs::read_to_string(&paths.summary)?);
    println!("tau {:?}, test EER {:.2}%", m.tau, m.test_eer);
    Ok(())
}

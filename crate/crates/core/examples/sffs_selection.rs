//! Floating forward selection over the best-ranked differences, with the dev ACER of a
//! small CNN trained from scratch as the criterion. Prints the evaluation trace.
//!
//! cargo run --release --example sffs_selection -- [candidates]

use swirpad::bandselect::Step;
use swirpad::dataset::{select_protocol, Protocol};
use swirpad::models::{ModelKind, ScorerConfig};
use swirpad::pipeline::{rank_split, select_channels};
use swirpad::synthgen::{generate_presentations, GeneratorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(6);
    let data = generate_presentations(&GeneratorConfig::default())?;
    let view = select_protocol(&data, Protocol::GrandTest)?;
    let cfg = ScorerConfig::proxy(ModelKind::Pixbis);
    let ranked = rank_split(&view.train, cfg.train.epsilon)?;
    let result = select_channels(&view, &ranked, &cfg, Some(n))?;
    for t in &result.trace {
        let step = if t.step == Step::Forward { "add " } else { "drop" };
        let subset: Vec<String> = t.subset.iter().map(|s| s.to_string()).collect();
        let mark = if t.accepted { "*" } else { "" };
        println!("{step} {:>6.2}{mark:<2} {}", t.value, subset.join(","));
    }
    let selected: Vec<String> = result.selected.iter().map(|s| s.to_string()).collect();
    println!("selected {} with dev ACER {:.2}%", selected.join(","), result.best_error);
    Ok(())
}

//! Ranks the 42 ordered SWIR band differences by inter/intra-class variability on the
//! train split of a synthetic dataset.
//!
//! cargo run --release --example rank_differences -- [top]

use swirpad::dataset::{select_protocol, Protocol};
use swirpad::pipeline::rank_split;
use swirpad::swirdiff::DEFAULT_EPSILON;
use swirpad::synthgen::{generate_presentations, GeneratorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let top: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let data = generate_presentations(&GeneratorConfig::default())?;
    let view = select_protocol(&data, Protocol::GrandTest)?;
    let ranked = rank_split(&view.train, DEFAULT_EPSILON)?;
    println!("{} bonafide pairs, {} bonafide/attack pairs", ranked.k_bf, ranked.k_a);
    println!("{:<10} {:>8} {:>8} {:>8}", "diff", "ratio", "inter", "intra");
    for e in ranked.entries.iter().take(top) {
        println!("{:<10} {:>8.3} {:>8.4} {:>8.4}", e.spec.to_string(), e.ratio, e.inter, e.intra);
    }
    Ok(())
}

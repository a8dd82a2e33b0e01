//! Compares the hand-written backward pass of a tiny pixel-wise supervised CNN against
//! central finite differences, in f64.
//!
//! cargo run --release --example gradient_check

use rand::{Rng, SeedableRng};
use swirpad::models::{Network, PixBisConfig, PixBisNet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = PixBisConfig {
        input_size: 8,
        stem_width: 2,
        stage_widths: vec![3],
        context_dilations: vec![2],
        map_size: 4,
        ..PixBisConfig::default()
    };
    let net = PixBisNet::new(2, cfg)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let p: Vec<f64> = net.init(&mut rng).into_iter().map(f64::from).collect();
    let x: Vec<f64> = (0..2 * 64).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut g = vec![0.0; p.len()];
    let loss = net.loss_grad(&p, &x, 1.0, &mut g);
    let h = 1e-4;
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let (mut a, mut b) = (p.clone(), p.clone());
        a[i] += h;
        b[i] -= h;
        let fd = (net.loss(&a, &x, 1.0) - net.loss(&b, &x, 1.0)) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6));
    }
    println!("{} parameters, loss {loss:.6}, max relative gradient error {worst:.2e}", p.len());
    Ok(())
}

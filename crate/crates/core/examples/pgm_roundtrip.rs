//! Writes a band image as 16-bit binary PGM and reads it back.
//!
//! cargo run --release --example pgm_roundtrip -- [path]

use std::path::PathBuf;

use swirpad::dataset::{read_pgm16, write_pgm16, BandImage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "gradient_1450.pgm".into()));
    let (w, h) = (16, 8);
    let values: Vec<f32> = (0..w * h).map(|i| (i % w) as f32 / (w - 1) as f32).collect();
    let image = BandImage::new(w, h, 1450, values)?;
    write_pgm16(&image, &path)?;
    let back = read_pgm16(&path, 1450)?;
    let worst = image
        .values()
        .iter()
        .zip(back.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    println!(
        "{}: {}x{}, {} bytes, max quantization error {worst:.2e}",
        path.display(),
        back.width(),
        back.height(),
        std::fs::metadata(&path)?.len()
    );
    Ok(())
}

//! Synthetic multispectral face presentations with known spectral properties.
//!
//! Every pixel is `gain * reflectance(material, wavelength) + noise`. Bonafide faces are skin,
//! impersonation attacks replace the whole face with the instrument's material and obfuscation
//! attacks only alter part of it. All randomness for a presentation comes from a ChaCha stream
//! selected by `(seed, presentation id)`, so output does not depend on generation order.

mod materials;
mod scene;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    write_manifest, write_pgm16, AttackType, DatasetError, Frame, ManifestRow, Presentation,
    Split, Wavelength,
};

pub use materials::{
    Material, MaterialLibrary, MaterialSpectrum, SWIR_WAVELENGTHS, VISIBLE_WAVELENGTHS,
};
pub use scene::{attack_material, render_presentation, Ellipse, SceneSpec};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("generator config error: {0}")]
    Config(String),
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Bonafide presentation counts per split (train, dev, test) of the reference collection.
pub const REFERENCE_BONAFIDE: [usize; 3] = [228, 145, 182];

/// Attack counts per split (train, dev, test) of the reference collection.
pub const REFERENCE_ATTACKS: [(AttackType, [usize; 3]); 10] = [
    (AttackType::Print, [48, 98, 0]),
    (AttackType::Replay, [36, 100, 126]),
    (AttackType::RigidMask, [162, 118, 140]),
    (AttackType::PaperMask, [28, 24, 49]),
    (AttackType::FlexibleMask, [90, 86, 48]),
    (AttackType::Mannequin, [20, 38, 77]),
    (AttackType::Glasses, [56, 38, 36]),
    (AttackType::Makeup, [264, 271, 258]),
    (AttackType::Tattoo, [24, 24, 24]),
    (AttackType::Wig, [14, 26, 26]),
];

pub type Counts = BTreeMap<Split, BTreeMap<AttackType, usize>>;

/// Reference counts scaled by `scale` and rounded to the nearest integer.
pub fn reference_counts(scale: f64) -> Counts {
    let splits = [Split::Train, Split::Dev, Split::Test];
    let mut counts = Counts::new();
    for (i, split) in splits.into_iter().enumerate() {
        let per = counts.entry(split).or_default();
        per.insert(
            AttackType::None,
            (REFERENCE_BONAFIDE[i] as f64 * scale).round() as usize,
        );
        for (t, n) in REFERENCE_ATTACKS {
            per.insert(t, (n[i] as f64 * scale).round() as usize);
        }
    }
    counts
}

fn default_wavelengths() -> Vec<Wavelength> {
    SWIR_WAVELENGTHS.to_vec()
}

fn default_frames() -> usize {
    10
}

fn default_noise() -> f64 {
    0.02
}

fn default_seed() -> u64 {
    42
}

fn default_image_size() -> usize {
    56
}

fn default_gain() -> (f64, f64) {
    (0.9, 1.1)
}

fn default_counts() -> Counts {
    reference_counts(DEFAULT_SCALE)
}

/// Scale applied to the reference counts by default (about 200 presentations).
pub const DEFAULT_SCALE: f64 = 0.07;

/// Contents of `generator.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    #[serde(default = "default_wavelengths")]
    pub wavelengths: Vec<Wavelength>,
    #[serde(default = "default_counts")]
    pub counts: Counts,
    #[serde(default = "default_frames")]
    pub frames_per_presentation: usize,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub materials: MaterialLibrary,
    /// Square image side in pixels.
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    /// Per-frame multiplicative illumination gain range `[lo, hi]`.
    #[serde(default = "default_gain")]
    pub illumination_gain: (f64, f64),
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            wavelengths: default_wavelengths(),
            counts: default_counts(),
            frames_per_presentation: default_frames(),
            noise_sigma: default_noise(),
            seed: default_seed(),
            materials: MaterialLibrary::default(),
            image_size: default_image_size(),
            illumination_gain: default_gain(),
        }
    }
}

impl GeneratorConfig {
    /// Adds the optional visible bands (465, 550, 640 nm) in front of the SWIR set.
    pub fn with_visible(mut self) -> Self {
        let mut wl: Vec<Wavelength> = VISIBLE_WAVELENGTHS.to_vec();
        wl.extend(self.wavelengths.iter().filter(|w| !VISIBLE_WAVELENGTHS.contains(w)));
        self.wavelengths = wl;
        self
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let cfg: GeneratorConfig =
            serde_json::from_str(text).map_err(|e| SynthError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("generator config serializes")
    }

    pub fn total(&self) -> usize {
        self.counts.values().flat_map(|m| m.values()).sum()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.wavelengths.is_empty() {
            return Err(SynthError::Config("no wavelengths configured".into()));
        }
        let mut sorted = self.wavelengths.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.wavelengths.len() || sorted[0] == 0 {
            return Err(SynthError::Config(
                "wavelengths must be distinct and positive".into(),
            ));
        }
        if self.total() == 0 {
            return Err(SynthError::Config("zero presentations requested".into()));
        }
        if self.frames_per_presentation == 0 {
            return Err(SynthError::Config("frames_per_presentation must be >= 1".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(SynthError::Config("noise_sigma must be >= 0".into()));
        }
        let (lo, hi) = self.illumination_gain;
        if !(lo > 0.0 && hi >= lo) {
            return Err(SynthError::Config(format!(
                "illumination gain range ({lo}, {hi}) must be positive and ordered"
            )));
        }
        if self.image_size < 8 {
            return Err(SynthError::Config("image_size must be at least 8".into()));
        }
        self.materials.validate(&self.wavelengths)
    }
}

/// Planned presentation: id, attack type and split, in manifest order.
pub fn plan(cfg: &GeneratorConfig) -> Vec<(String, AttackType, Split)> {
    let mut out = Vec::new();
    for (split, per) in &cfg.counts {
        for (t, &n) in per {
            for i in 0..n {
                out.push((format!("{split}_{t}_{i:03}"), *t, *split));
            }
        }
    }
    out
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// The RNG stream owned by one presentation.
pub fn presentation_rng(seed: u64, presentation_id: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(presentation_id));
    rng
}

fn render_one(
    cfg: &GeneratorConfig,
    id: &str,
    attack_type: AttackType,
    split: Split,
) -> Result<Presentation, SynthError> {
    let mut rng = presentation_rng(cfg.seed, id);
    let spec = SceneSpec::sample(attack_type, cfg, &mut rng);
    render_presentation(id, split, &spec, cfg, &mut rng)
}

/// Renders the whole configured dataset in memory.
pub fn generate_presentations(cfg: &GeneratorConfig) -> Result<Vec<Presentation>, SynthError> {
    cfg.validate()?;
    plan(cfg)
        .par_iter()
        .map(|(id, t, split)| render_one(cfg, id, *t, *split))
        .collect()
}

/// Writes PGM frames, `manifest.csv` and a copy of the config under `out`.
pub fn generate_dataset(cfg: &GeneratorConfig, out: &Path) -> Result<PathBuf, SynthError> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| DatasetError::io(out, e))?;
    let planned = plan(cfg);
    let rows = planned
        .par_iter()
        .map(|(id, t, split)| -> Result<ManifestRow, SynthError> {
            let p = render_one(cfg, id, *t, *split)?;
            let rel = format!("{split}/{id}");
            let dir = out.join(&rel);
            fs::create_dir_all(&dir).map_err(|e| DatasetError::io(&dir, e))?;
            for frame in p.frames() {
                let stack = frame.stack()?;
                for band in stack.bands() {
                    write_pgm16(
                        band,
                        &dir.join(Frame::file_name(frame.index(), band.wavelength())),
                    )?;
                }
            }
            Ok(ManifestRow {
                presentation_id: p.id.clone(),
                split: p.split,
                label: p.label,
                attack_type: p.attack_type,
                group: p.group,
                n_frames: p.frames().len(),
                path: rel,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let cfg_path = out.join("generator.json");
    fs::write(&cfg_path, cfg.to_json()).map_err(|e| DatasetError::io(&cfg_path, e))?;
    Ok(write_manifest(out, &rows)?)
}

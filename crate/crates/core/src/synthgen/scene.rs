use rand::Rng;
use rand_distr::StandardNormal;

use super::{GeneratorConfig, Material, SynthError};
use crate::dataset::{AttackType, BandImage, Frame, Group, Presentation, SpectralStack, Split};

/// Axis-aligned ellipse in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub ax: f64,
    pub ay: f64,
}

impl Ellipse {
    /// Coordinates normalized to the ellipse: the boundary is `u^2 + v^2 = 1`, `v < 0` is up.
    fn normalized(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.cx) / self.ax, (y - self.cy) / self.ay)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (u, v) = self.normalized(x, y);
        u * u + v * v <= 1.0
    }
}

/// Material replacing (part of) the face for each attack type.
pub fn attack_material(t: AttackType) -> Material {
    match t {
        AttackType::None => Material::Skin,
        AttackType::Print | AttackType::PaperMask => Material::Paper,
        AttackType::Replay => Material::Screen,
        AttackType::RigidMask | AttackType::Mannequin => Material::Plastic,
        AttackType::FlexibleMask | AttackType::Makeup => Material::Silicone,
        AttackType::Glasses => Material::GlassLens,
        AttackType::Tattoo => Material::TattooInkOnSkin,
        AttackType::Wig => Material::Fabric,
    }
}

/// Geometry and acquisition settings of one synthetic presentation.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub attack_type: AttackType,
    pub face_region: Ellipse,
    /// Row-major mask of the pixels an obfuscation attack alters; a subset of the face.
    pub altered_region: Vec<bool>,
    pub image_size: usize,
    pub noise_sigma: f64,
    pub illumination_gain: (f64, f64),
}

fn in_disk(u: f64, v: f64, cu: f64, cv: f64, r: f64) -> bool {
    (u - cu).powi(2) + (v - cv).powi(2) <= r * r
}

fn altered(t: AttackType, u: f64, v: f64, tattoo_side: f64) -> bool {
    match t {
        AttackType::Glasses => {
            in_disk(u, v, -0.38, -0.22, 0.26)
                || in_disk(u, v, 0.38, -0.22, 0.26)
                || (u.abs() < 0.15 && (v + 0.22).abs() < 0.05)
        }
        AttackType::Makeup => {
            in_disk(u, v, -0.45, 0.18, 0.3)
                || in_disk(u, v, 0.45, 0.18, 0.3)
                || ((u / 0.3).powi(2) + ((v - 0.6) / 0.12).powi(2) <= 1.0)
        }
        AttackType::Tattoo => in_disk(u, v, 0.4 * tattoo_side, 0.25, 0.22),
        AttackType::Wig => v < -0.6,
        _ => false,
    }
}

impl SceneSpec {
    /// Builds the scene for `attack_type`. The number of draws taken from `rng` does not
    /// depend on the attack type, so presentations sharing a stream share their geometry.
    pub fn sample<R: Rng + ?Sized>(
        attack_type: AttackType,
        cfg: &GeneratorConfig,
        rng: &mut R,
    ) -> Self {
        let n = cfg.image_size as f64;
        let jitter = |rng: &mut R, amp: f64| rng.random_range(-amp..=amp);
        // frames are face-aligned crops, so only a small residual misalignment
        let cx = n / 2.0 + jitter(rng, 0.015 * n);
        let cy = n / 2.0 + jitter(rng, 0.015 * n);
        let ax = 0.38 * n * (1.0 + jitter(rng, 0.02));
        let ay = 0.47 * n * (1.0 + jitter(rng, 0.02));
        let tattoo_side = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let face_region = Ellipse { cx, cy, ax, ay };
        Self::with_geometry(attack_type, face_region, tattoo_side, cfg)
    }

    pub fn with_geometry(
        attack_type: AttackType,
        face_region: Ellipse,
        tattoo_side: f64,
        cfg: &GeneratorConfig,
    ) -> Self {
        let size = cfg.image_size;
        let mut altered_region = vec![false; size * size];
        if attack_type.group() == Group::Obfuscation {
            for y in 0..size {
                for x in 0..size {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    if face_region.contains(px, py) {
                        let (u, v) = face_region.normalized(px, py);
                        altered_region[y * size + x] = altered(attack_type, u, v, tattoo_side);
                    }
                }
            }
        }
        Self {
            attack_type,
            face_region,
            altered_region,
            image_size: size,
            noise_sigma: cfg.noise_sigma,
            illumination_gain: cfg.illumination_gain,
        }
    }

    pub fn material_at(&self, x: usize, y: usize) -> Material {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        if !self.face_region.contains(px, py) {
            return Material::Fabric;
        }
        match self.attack_type.group() {
            Group::None => Material::Skin,
            Group::Impersonation => attack_material(self.attack_type),
            Group::Obfuscation => {
                if self.altered_region[y * self.image_size + x] {
                    attack_material(self.attack_type)
                } else {
                    Material::Skin
                }
            }
        }
    }

    /// Pixels inside the face ellipse, row-major.
    pub fn face_mask(&self) -> Vec<bool> {
        let n = self.image_size;
        (0..n * n)
            .map(|i| {
                self.face_region
                    .contains((i % n) as f64 + 0.5, (i / n) as f64 + 0.5)
            })
            .collect()
    }
}

/// Renders all frames of one presentation.
///
/// Each material gets one standard-normal draw per wavelength per presentation; tattoo ink
/// reuses the skin draws, since the ink sits on the skin it hides.
pub fn render_presentation<R: Rng + ?Sized>(
    id: &str,
    split: Split,
    spec: &SceneSpec,
    cfg: &GeneratorConfig,
    rng: &mut R,
) -> Result<Presentation, SynthError> {
    let wls = &cfg.wavelengths;
    let mut table: Vec<(Material, Vec<f64>)> = Vec::with_capacity(Material::ALL.len());
    let mut skin_z: Vec<f64> = Vec::new();
    for m in Material::ALL {
        let z: Vec<f64> = if m == Material::TattooInkOnSkin {
            skin_z.clone()
        } else {
            wls.iter().map(|_| rng.sample(StandardNormal)).collect()
        };
        if m == Material::Skin {
            skin_z = z.clone();
        }
        let r = wls
            .iter()
            .zip(&z)
            .map(|(&wl, &z)| cfg.materials.reflectance_with(m, wl, z))
            .collect::<Result<Vec<_>, _>>()?;
        table.push((m, r));
    }
    let size = spec.image_size;
    let material_index: Vec<usize> = (0..size * size)
        .map(|i| {
            let m = spec.material_at(i % size, i / size);
            table.iter().position(|(t, _)| *t == m).expect("all materials tabulated")
        })
        .collect();

    let (lo, hi) = spec.illumination_gain;
    let mut frames = Vec::with_capacity(cfg.frames_per_presentation);
    for k in 0..cfg.frames_per_presentation {
        let gain = lo + (hi - lo) * rng.random::<f64>();
        let mut bands = Vec::with_capacity(wls.len());
        for (wi, &wl) in wls.iter().enumerate() {
            let values = material_index
                .iter()
                .map(|&mi| {
                    let noise: f64 = rng.sample(StandardNormal);
                    (gain * table[mi].1[wi] + spec.noise_sigma * noise).clamp(0.0, 1.0) as f32
                })
                .collect();
            bands.push(BandImage::new(size, size, wl, values)?);
        }
        frames.push(Frame::in_memory(SpectralStack::new(k, bands)?));
    }
    Ok(Presentation::new(id, spec.attack_type, split, frames)?)
}

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::dataset::Wavelength;

pub const SWIR_WAVELENGTHS: [Wavelength; 7] = [940, 1050, 1200, 1300, 1450, 1550, 1650];
pub const VISIBLE_WAVELENGTHS: [Wavelength; 3] = [465, 550, 640];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Material {
    Skin,
    Paper,
    Silicone,
    Plastic,
    Screen,
    Fabric,
    TattooInkOnSkin,
    GlassLens,
}

impl Material {
    pub const ALL: [Material; 8] = [
        Material::Skin,
        Material::Paper,
        Material::Silicone,
        Material::Plastic,
        Material::Screen,
        Material::Fabric,
        Material::TattooInkOnSkin,
        Material::GlassLens,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Material::Skin => "skin",
            Material::Paper => "paper",
            Material::Silicone => "silicone",
            Material::Plastic => "plastic",
            Material::Screen => "screen",
            Material::Fabric => "fabric",
            Material::TattooInkOnSkin => "tattoo_ink_on_skin",
            Material::GlassLens => "glass_lens",
        }
    }
}

impl fmt::Display for Material {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Material {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Material::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| SynthError::Domain(format!("unknown material {s:?}")))
    }
}

/// Mean reflectance per wavelength plus the relative per-presentation spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpectrum {
    pub reflectance: BTreeMap<Wavelength, f64>,
    pub variability: f64,
}

impl MaterialSpectrum {
    fn from_pairs(swir: [f64; 7], visible: [f64; 3], variability: f64) -> Self {
        let reflectance = SWIR_WAVELENGTHS
            .into_iter()
            .zip(swir)
            .chain(VISIBLE_WAVELENGTHS.into_iter().zip(visible))
            .collect();
        Self {
            reflectance,
            variability,
        }
    }

    pub fn mean(&self, wavelength: Wavelength) -> Option<f64> {
        self.reflectance.get(&wavelength).copied()
    }
}

/// Reflectance tables for every material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MaterialLibrary(pub BTreeMap<Material, MaterialSpectrum>);

impl Default for MaterialLibrary {
    /// Invented tables. Skin goes dark around the 1430 nm water absorption band; tattoo ink
    /// matches skin throughout the SWIR range and is only dark in the visible bands.
    fn default() -> Self {
        const SKIN_SWIR: [f64; 7] = [0.55, 0.50, 0.40, 0.35, 0.05, 0.10, 0.20];
        const VAR: f64 = 0.03;
        let mut m = BTreeMap::new();
        m.insert(
            Material::Skin,
            MaterialSpectrum::from_pairs(SKIN_SWIR, [0.30, 0.38, 0.52], VAR),
        );
        m.insert(
            Material::TattooInkOnSkin,
            MaterialSpectrum::from_pairs(SKIN_SWIR, [0.08, 0.09, 0.12], VAR),
        );
        m.insert(
            Material::Paper,
            MaterialSpectrum::from_pairs([0.70; 7], [0.72, 0.74, 0.75], VAR),
        );
        m.insert(
            Material::Screen,
            MaterialSpectrum::from_pairs([0.12; 7], [0.28, 0.36, 0.45], VAR),
        );
        m.insert(
            Material::Silicone,
            MaterialSpectrum::from_pairs(
                [0.60, 0.58, 0.50, 0.46, 0.30, 0.34, 0.40],
                [0.32, 0.40, 0.50],
                VAR,
            ),
        );
        m.insert(
            Material::Plastic,
            MaterialSpectrum::from_pairs(
                [0.65, 0.63, 0.55, 0.60, 0.50, 0.52, 0.45],
                [0.45, 0.50, 0.58],
                VAR,
            ),
        );
        m.insert(
            Material::Fabric,
            MaterialSpectrum::from_pairs(
                [0.45, 0.44, 0.42, 0.40, 0.30, 0.33, 0.35],
                [0.20, 0.22, 0.25],
                VAR,
            ),
        );
        // clear lenses: skin shows through in the visible range, flat and dim in SWIR
        m.insert(
            Material::GlassLens,
            MaterialSpectrum::from_pairs(
                [0.16, 0.15, 0.14, 0.13, 0.12, 0.12, 0.11],
                [0.29, 0.37, 0.50],
                VAR,
            ),
        );
        MaterialLibrary(m)
    }
}

impl MaterialLibrary {
    pub fn spectrum(&self, material: Material) -> Result<&MaterialSpectrum, SynthError> {
        self.0
            .get(&material)
            .ok_or_else(|| SynthError::Domain(format!("no reflectance table for {material}")))
    }

    pub fn validate(&self, wavelengths: &[Wavelength]) -> Result<(), SynthError> {
        for m in Material::ALL {
            let spec = self.spectrum(m)?;
            if !(spec.variability >= 0.0) {
                return Err(SynthError::Config(format!(
                    "{m}: variability must be >= 0"
                )));
            }
            for &wl in wavelengths {
                match spec.mean(wl) {
                    None => {
                        return Err(SynthError::Config(format!(
                            "{m}: no reflectance for {wl} nm"
                        )))
                    }
                    Some(r) if !(0.0..=1.0).contains(&r) => {
                        return Err(SynthError::Config(format!(
                            "{m}: reflectance {r} at {wl} nm outside [0, 1]"
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// `mean * (1 + variability * z)` clamped to `[0, 1]`, for a given standard normal draw.
    pub fn reflectance_with(
        &self,
        material: Material,
        wavelength: Wavelength,
        z: f64,
    ) -> Result<f64, SynthError> {
        let spec = self.spectrum(material)?;
        let mean = spec.mean(wavelength).ok_or_else(|| {
            SynthError::Domain(format!("{material} has no reflectance at {wavelength} nm"))
        })?;
        Ok((mean * (1.0 + spec.variability * z)).clamp(0.0, 1.0))
    }

    /// Draws one reflectance value; always consumes exactly one normal variate.
    pub fn material_reflectance<R: Rng + ?Sized>(
        &self,
        material: Material,
        wavelength: Wavelength,
        rng: &mut R,
    ) -> Result<f64, SynthError> {
        let z: f64 = rng.sample(StandardNormal);
        self.reflectance_with(material, wavelength, z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_var() -> MaterialLibrary {
        let mut lib = MaterialLibrary::default();
        for s in lib.0.values_mut() {
            s.variability = 0.0;
        }
        lib
    }

    #[test]
    fn table_lookups() {
        let lib = zero_var();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(lib.material_reflectance(Material::Skin, 1450, &mut rng).unwrap(), 0.05);
        for wl in SWIR_WAVELENGTHS {
            assert_eq!(
                lib.material_reflectance(Material::TattooInkOnSkin, wl, &mut rng).unwrap(),
                lib.material_reflectance(Material::Skin, wl, &mut rng).unwrap()
            );
        }
        for wl in VISIBLE_WAVELENGTHS {
            assert!(lib.material_reflectance(Material::TattooInkOnSkin, wl, &mut rng).unwrap() <= 0.15);
        }
        assert!(lib.material_reflectance(Material::Skin, 777, &mut rng).is_err());
        assert!("unobtainium".parse::<Material>().is_err());
    }

    #[test]
    fn deterministic_draws() {
        let lib = MaterialLibrary::default();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..5)
                .map(|_| lib.material_reflectance(Material::Paper, 1200, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn skin_dip_is_unique_to_skin() {
        let lib = zero_var();
        let at = |m, wl| lib.reflectance_with(m, wl, 0.0).unwrap();
        for wl in SWIR_WAVELENGTHS.iter().filter(|&&w| w != 1450) {
            assert!(at(Material::Skin, 1450) < at(Material::Skin, *wl));
        }
        for m in [Material::Paper, Material::Plastic, Material::Screen] {
            let below_all = SWIR_WAVELENGTHS
                .iter()
                .filter(|&&w| w != 1450)
                .all(|&w| at(m, 1450) < at(m, w));
            assert!(!below_all, "{m} should not show the water dip");
        }
    }
}

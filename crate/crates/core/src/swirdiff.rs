//! Normalized band differences `(I1 - I2) / (I1 + I2 + eps)` and ordered pair enumeration.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::dataset::{BandImage, SpectralStack, Wavelength};

/// Default stabilizer added to the denominator.
pub const DEFAULT_EPSILON: f32 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum SwirError {
    #[error("wavelength {0} nm is not available")]
    MissingWavelength(Wavelength),
    #[error("{0}")]
    Domain(String),
}

/// An ordered wavelength pair; `(a, b)` and `(b, a)` are distinct features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiffSpec {
    pub s1: Wavelength,
    pub s2: Wavelength,
}

impl DiffSpec {
    pub fn new(s1: Wavelength, s2: Wavelength) -> Result<Self, SwirError> {
        if s1 == s2 {
            return Err(SwirError::Domain(format!(
                "difference {s1}-{s2} needs two distinct wavelengths"
            )));
        }
        Ok(Self { s1, s2 })
    }

    pub fn reversed(self) -> Self {
        Self {
            s1: self.s2,
            s2: self.s1,
        }
    }

    /// True if one wavelength lies below `nm` and the other above it.
    pub fn straddles(self, nm: Wavelength) -> bool {
        (self.s1 < nm && self.s2 > nm) || (self.s2 < nm && self.s1 > nm)
    }
}

impl fmt::Display for DiffSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.s1, self.s2)
    }
}

impl FromStr for DiffSpec {
    type Err = SwirError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .trim()
            .split_once('-')
            .ok_or_else(|| SwirError::Domain(format!("expected \"<s1>-<s2>\", got {s:?}")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<Wavelength>()
                .map_err(|_| SwirError::Domain(format!("invalid wavelength {t:?} in {s:?}")))
        };
        DiffSpec::new(parse(a)?, parse(b)?)
    }
}

impl Serialize for DiffSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DiffSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a comma separated list such as `"1550-1200,1450-1200"`.
pub fn parse_spec_list(s: &str) -> Result<Vec<DiffSpec>, SwirError> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect()
}

fn check_distinct(wavelengths: &[Wavelength]) -> Result<(), SwirError> {
    let set: BTreeSet<_> = wavelengths.iter().collect();
    if set.len() != wavelengths.len() {
        return Err(SwirError::Domain(format!(
            "duplicate wavelengths in {wavelengths:?}"
        )));
    }
    Ok(())
}

/// All `n (n - 1)` ordered pairs, ordered by (index of s1, index of s2).
pub fn enumerate_ordered_pairs(wavelengths: &[Wavelength]) -> Result<Vec<DiffSpec>, SwirError> {
    check_distinct(wavelengths)?;
    let mut out = Vec::with_capacity(wavelengths.len() * wavelengths.len().saturating_sub(1));
    for &a in wavelengths {
        for &b in wavelengths {
            if a != b {
                out.push(DiffSpec { s1: a, s2: b });
            }
        }
    }
    Ok(out)
}

/// The `n (n - 1) / 2` pairs with s1 preceding s2 in list order.
pub fn enumerate_unordered_pairs(wavelengths: &[Wavelength]) -> Result<Vec<DiffSpec>, SwirError> {
    check_distinct(wavelengths)?;
    let mut out = Vec::new();
    for (i, &a) in wavelengths.iter().enumerate() {
        for &b in &wavelengths[i + 1..] {
            out.push(DiffSpec { s1: a, s2: b });
        }
    }
    Ok(out)
}

/// A row-major real grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl Grid {
    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v)).sum::<f64>() / self.values.len() as f64
    }
}

#[inline]
pub fn normalized_diff_value(a: f32, b: f32, epsilon: f32) -> f32 {
    let den = a + b + epsilon;
    if den == 0.0 {
        0.0
    } else {
        (a - b) / den
    }
}

/// Per-pixel normalized difference. `epsilon = 0` is accepted; a zero denominator yields 0.
pub fn normalized_diff(i1: &BandImage, i2: &BandImage, epsilon: f32) -> Result<Grid, SwirError> {
    if (i1.width(), i1.height()) != (i2.width(), i2.height()) {
        return Err(SwirError::Domain(format!(
            "shape mismatch: {}x{} vs {}x{}",
            i1.width(),
            i1.height(),
            i2.width(),
            i2.height()
        )));
    }
    if !(epsilon >= 0.0) {
        return Err(SwirError::Domain(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let values = i1
        .values()
        .iter()
        .zip(i2.values())
        .map(|(&a, &b)| normalized_diff_value(a, b, epsilon))
        .collect();
    Ok(Grid {
        width: i1.width(),
        height: i1.height(),
        values,
    })
}

/// The multi-channel input built from one frame: one difference map per spec.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffStack {
    pub specs: Vec<DiffSpec>,
    pub maps: Vec<Grid>,
    pub epsilon: f32,
}

impl DiffStack {
    pub fn channels(&self) -> usize {
        self.specs.len()
    }

    /// `(width, height)` of the maps, `None` when there are no channels.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.maps.first().map(|g| (g.width, g.height))
    }

    /// Channel-major flattened values, `[c][y][x]`.
    pub fn to_chw(&self) -> Vec<f32> {
        self.maps.iter().flat_map(|g| g.values.iter().copied()).collect()
    }
}

pub fn band<'a>(stack: &'a SpectralStack, wl: Wavelength) -> Result<&'a BandImage, SwirError> {
    stack.band(wl).ok_or(SwirError::MissingWavelength(wl))
}

pub fn build_diff_stack(
    stack: &SpectralStack,
    specs: &[DiffSpec],
    epsilon: f32,
) -> Result<DiffStack, SwirError> {
    let maps = specs
        .iter()
        .map(|s| normalized_diff(band(stack, s.s1)?, band(stack, s.s2)?, epsilon))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DiffStack {
        specs: specs.to_vec(),
        maps,
        epsilon,
    })
}

/// Wavelength in `available` closest to `target` (lower one on ties).
pub fn nearest_wavelength(available: &[Wavelength], target: Wavelength) -> Option<Wavelength> {
    available
        .iter()
        .copied()
        .min_by_key(|&w| (w.abs_diff(target), w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(wl: Wavelength, values: &[f32]) -> BandImage {
        BandImage::new(values.len(), 1, wl, values.to_vec()).unwrap()
    }

    #[test]
    fn pair_counts() {
        let seven = [940, 1050, 1200, 1300, 1450, 1550, 1650];
        assert_eq!(enumerate_ordered_pairs(&seven).unwrap().len(), 42);
        assert_eq!(
            enumerate_ordered_pairs(&[1, 2]).unwrap(),
            vec![DiffSpec { s1: 1, s2: 2 }, DiffSpec { s1: 2, s2: 1 }]
        );
        assert!(enumerate_ordered_pairs(&[940]).unwrap().is_empty());
        assert!(enumerate_ordered_pairs(&[940, 940]).is_err());
        assert_eq!(enumerate_unordered_pairs(&[935, 1060, 1300, 1550]).unwrap().len(), 6);
    }

    #[test]
    fn diff_examples() {
        let d = normalized_diff(&img(1, &[0.6]), &img(2, &[0.2]), 1e-4).unwrap();
        assert!((d.values[0] - 0.4 / 0.8001).abs() < 1e-6);
        assert!((d.values[0] - 0.499_938).abs() < 1e-6);
        let z = normalized_diff(&img(1, &[0.0, 0.0]), &img(2, &[0.0, 0.0]), 1e-4).unwrap();
        assert_eq!(z.values, vec![0.0, 0.0]);
        let same = normalized_diff(&img(1, &[0.3, 0.9]), &img(2, &[0.3, 0.9]), 1e-4).unwrap();
        assert_eq!(same.values, vec![0.0, 0.0]);
        assert!(normalized_diff(&img(1, &[0.3]), &img(2, &[0.3, 0.1]), 1e-4).is_err());
    }

    #[test]
    fn spec_text_form() {
        let s: DiffSpec = "1550-1200".parse().unwrap();
        assert_eq!(s, DiffSpec { s1: 1550, s2: 1200 });
        assert_eq!(s.to_string(), "1550-1200");
        assert!("1550".parse::<DiffSpec>().is_err());
        assert!("1200-1200".parse::<DiffSpec>().is_err());
        assert_eq!(parse_spec_list("940-1450, 1450-940").unwrap().len(), 2);
        assert_eq!(serde_json::to_string(&s).unwrap(), "\"1550-1200\"");
        assert!(s.straddles(1430));
        assert!(!DiffSpec { s1: 1450, s2: 1550 }.straddles(1430));
    }

    #[test]
    fn diff_stack_channels() {
        let stack = SpectralStack::new(0, vec![img(940, &[0.5, 0.2]), img(1450, &[0.1, 0.2])]).unwrap();
        let specs = enumerate_ordered_pairs(&[940, 1450]).unwrap();
        let ds = build_diff_stack(&stack, &specs, DEFAULT_EPSILON).unwrap();
        assert_eq!(ds.channels(), 2);
        for (a, b) in ds.maps[0].values.iter().zip(&ds.maps[1].values) {
            assert_eq!(*a, -*b);
        }
        let empty = build_diff_stack(&stack, &[], DEFAULT_EPSILON).unwrap();
        assert_eq!(empty.channels(), 0);
        assert_eq!(
            build_diff_stack(&stack, &[DiffSpec { s1: 940, s2: 1300 }], DEFAULT_EPSILON).unwrap_err(),
            SwirError::MissingWavelength(1300)
        );
    }

    #[test]
    fn nearest() {
        let configured = [940, 1050, 1200, 1300, 1450, 1550, 1650];
        let mapped: Vec<_> = [935, 1060, 1300, 1550]
            .iter()
            .map(|&w| nearest_wavelength(&configured, w).unwrap())
            .collect();
        assert_eq!(mapped, vec![940, 1050, 1300, 1550]);
    }

    proptest! {
        #[test]
        fn antisymmetric_and_bounded(a in 0.0f32..=1.0, b in 0.0f32..=1.0) {
            let d = normalized_diff_value(a, b, DEFAULT_EPSILON);
            prop_assert_eq!(d, -normalized_diff_value(b, a, DEFAULT_EPSILON));
            prop_assert!(d.abs() < 1.0);
        }

        #[test]
        fn scale_invariant_without_epsilon(a in 1e-3f32..=1.0, b in 1e-3f32..=1.0, c in 0.01f32..4.0, p in -3i32..3) {
            let pow2 = 2f32.powi(p);
            prop_assert_eq!(normalized_diff_value(pow2 * a, pow2 * b, 0.0), normalized_diff_value(a, b, 0.0));
            let d0 = normalized_diff_value(a, b, 0.0);
            let dc = normalized_diff_value(c * a, c * b, 0.0);
            prop_assert!((d0 - dc).abs() <= 1e-6 * (1.0 + d0.abs()) * 4.0);
        }
    }
}

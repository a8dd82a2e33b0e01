use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BandSelectError;
use crate::dataset::{Label, SpectralStack, Wavelength};
use crate::swirdiff::{band, enumerate_ordered_pairs, normalized_diff, DiffSpec};

/// Bands below this are visible-range and not considered for ranking by default.
pub const SWIR_MIN_NM: Wavelength = 900;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub spec: DiffSpec,
    pub ratio: f64,
    pub intra: f64,
    pub inter: f64,
    /// Intra-class variability was zero for this component.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDiffs {
    pub entries: Vec<RankedEntry>,
    pub k_bf: u64,
    pub k_a: u64,
}

impl RankedDiffs {
    pub fn specs(&self) -> Vec<DiffSpec> {
        self.entries.iter().map(|e| e.spec).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// First `n` specs (all of them if fewer).
    pub fn top(&self, n: usize) -> Vec<DiffSpec> {
        self.entries.iter().take(n).map(|e| e.spec).collect()
    }
}

/// Spatial mean of every difference, in `specs` order.
pub fn diff_means(stack: &SpectralStack, specs: &[DiffSpec], epsilon: f32) -> Result<Vec<f64>, BandSelectError> {
    specs
        .iter()
        .map(|s| Ok(normalized_diff(band(stack, s.s1)?, band(stack, s.s2)?, epsilon)?.mean()))
        .collect()
}

/// Ranks every ordered pair of the SWIR bands (those at or above [`SWIR_MIN_NM`]) present in the first example.
pub fn rank_differences(
    examples: &[(&SpectralStack, Label)],
    epsilon: f32,
) -> Result<RankedDiffs, BandSelectError> {
    let first = examples
        .first()
        .ok_or_else(|| BandSelectError::Precondition("no examples".into()))?;
    let wavelengths: Vec<Wavelength> = first.0.wavelengths().filter(|&w| w >= SWIR_MIN_NM).collect();
    rank_differences_over(examples, &wavelengths, epsilon)
}

pub fn rank_differences_over(
    examples: &[(&SpectralStack, Label)],
    wavelengths: &[Wavelength],
    epsilon: f32,
) -> Result<RankedDiffs, BandSelectError> {
    let n_bf = examples.iter().filter(|e| e.1 == Label::Bonafide).count();
    if n_bf < 2 {
        return Err(BandSelectError::Precondition(format!(
            "intra undefined: need at least 2 bonafide examples, got {n_bf}"
        )));
    }
    if n_bf == examples.len() {
        return Err(BandSelectError::Precondition(
            "inter undefined: need at least 1 attack example".into(),
        ));
    }
    let specs = enumerate_ordered_pairs(wavelengths)?;
    if specs.is_empty() {
        return Err(BandSelectError::Precondition(format!(
            "need at least 2 wavelengths, got {wavelengths:?}"
        )));
    }
    let means: Vec<Vec<f64>> = examples
        .par_iter()
        .map(|(stack, _)| diff_means(stack, &specs, epsilon))
        .collect::<Result<_, _>>()?;
    let labels: Vec<Label> = examples.iter().map(|e| e.1).collect();
    let d = specs.len();

    // one partial sum per i, reduced in index order so results do not depend on scheduling
    let partials: Vec<(Vec<f64>, Vec<f64>, u64, u64)> = (0..examples.len())
        .into_par_iter()
        .map(|i| {
            let (mut intra, mut inter) = (vec![0.0; d], vec![0.0; d]);
            let (mut k_bf, mut k_a) = (0u64, 0u64);
            for j in 0..examples.len() {
                if i == j {
                    continue;
                }
                let target = match (labels[i], labels[j]) {
                    (Label::Bonafide, Label::Bonafide) => {
                        k_bf += 1;
                        &mut intra
                    }
                    (Label::Attack, Label::Attack) => continue,
                    _ => {
                        k_a += 1;
                        &mut inter
                    }
                };
                for (acc, (a, b)) in target.iter_mut().zip(means[i].iter().zip(&means[j])) {
                    *acc += (a - b).abs();
                }
            }
            (intra, inter, k_bf, k_a)
        })
        .collect();
    let (mut intra, mut inter) = (vec![0.0; d], vec![0.0; d]);
    let (mut k_bf, mut k_a) = (0u64, 0u64);
    for (pi, pe, kb, ka) in partials {
        for c in 0..d {
            intra[c] += pi[c];
            inter[c] += pe[c];
        }
        k_bf += kb;
        k_a += ka;
    }

    let mut entries: Vec<RankedEntry> = specs
        .iter()
        .enumerate()
        .map(|(c, &spec)| {
            let intra = intra[c] / k_bf as f64;
            let inter = inter[c] / k_a as f64;
            let degenerate = intra == 0.0;
            let ratio = match (degenerate, inter > 0.0) {
                (false, _) => inter / intra,
                (true, true) => f64::INFINITY,
                (true, false) => 0.0,
            };
            RankedEntry {
                spec,
                ratio,
                intra,
                inter,
                degenerate,
            }
        })
        .collect();
    // stable: ties keep enumeration order
    entries.sort_by(|a, b| b.ratio.total_cmp(&a.ratio));
    Ok(RankedDiffs { entries, k_bf, k_a })
}

pub fn write_ranking_csv(ranked: &RankedDiffs, path: &Path) -> Result<(), BandSelectError> {
    let mut s = String::from("rank,s1,s2,ratio,degenerate\n");
    for (i, e) in ranked.entries.iter().enumerate() {
        let _ = writeln!(s, "{},{},{},{},{}", i + 1, e.spec.s1, e.spec.s2, e.ratio, e.degenerate);
    }
    fs::write(path, s).map_err(|e| BandSelectError::io(path, e))
}

/// Reads the spec order back from `ranking.csv`. Intra/inter are not stored and come back as NaN.
pub fn read_ranking_csv(path: &Path) -> Result<RankedDiffs, BandSelectError> {
    let text = fs::read_to_string(path).map_err(|e| BandSelectError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("rank,s1,s2,ratio,degenerate") {
        return Err(BandSelectError::Format(format!("{}: unexpected header", path.display())));
    }
    let bad = |row: usize, msg: &str| BandSelectError::Format(format!("{}: row {row}: {msg}", path.display()));
    let mut entries = Vec::new();
    for (row, line) in lines.enumerate().map(|(i, l)| (i + 1, l)) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 5 {
            return Err(bad(row, "expected 5 fields"));
        }
        let s1 = f[1].parse().map_err(|_| bad(row, "bad s1"))?;
        let s2 = f[2].parse().map_err(|_| bad(row, "bad s2"))?;
        entries.push(RankedEntry {
            spec: DiffSpec::new(s1, s2).map_err(|e| bad(row, &e.to_string()))?,
            ratio: f[3].parse().map_err(|_| bad(row, "bad ratio"))?,
            intra: f64::NAN,
            inter: f64::NAN,
            degenerate: f[4].parse().map_err(|_| bad(row, "bad degenerate flag"))?,
        });
    }
    Ok(RankedDiffs {
        entries,
        k_bf: 0,
        k_a: 0,
    })
}

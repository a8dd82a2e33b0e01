//! PAD error rates, threshold selection, curves and report files.
//!
//! Decisions follow one rule everywhere: a presentation is accepted as bonafide iff
//! `score >= tau`. Scores are "bonafide-high". Candidate thresholds are midpoints between
//! adjacent distinct scores, so every reported rate is invariant to monotone rescaling.

mod curves;
mod report;
mod svg;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AttackType, Label, Presentation, Protocol, Split};

pub use curves::{eer, roc_points, RocPoint};
pub use report::{write_report, Metrics, ReportMeta, ReportPaths};
pub use svg::roc_svg;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no {missing} entries; only the other rate is defined ({partial:?} %)")]
    MissingClass { missing: Label, partial: Option<f64> },
    #[error("score set is empty")]
    Empty,
    #[error("duplicate presentation id {0}")]
    DuplicateId(String),
    #[error("score {score} for {id} is not finite")]
    NonFinite { id: String, score: f64 },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub id: String,
    pub score: f64,
    pub label: Label,
    pub attack_type: AttackType,
}

impl ScoreEntry {
    pub fn new(id: impl Into<String>, score: f64, attack_type: AttackType) -> Self {
        Self {
            id: id.into(),
            score,
            label: attack_type.label(),
            attack_type,
        }
    }

    pub fn for_presentation(p: &Presentation, score: f64) -> Self {
        Self::new(p.id.clone(), score, p.attack_type)
    }

    fn accepted(&self, tau: f64) -> bool {
        self.score >= tau
    }
}

/// Per-presentation scores with ground truth; the unit all metrics are computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    entries: Vec<ScoreEntry>,
    pub split: Option<Split>,
    pub protocol: Option<Protocol>,
}

impl ScoreSet {
    pub fn new(entries: Vec<ScoreEntry>) -> Result<Self, EvalError> {
        if entries.is_empty() {
            return Err(EvalError::Empty);
        }
        let mut ids = BTreeSet::new();
        for e in &entries {
            if !e.score.is_finite() {
                return Err(EvalError::NonFinite {
                    id: e.id.clone(),
                    score: e.score,
                });
            }
            if !ids.insert(e.id.as_str()) {
                return Err(EvalError::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self {
            entries,
            split: None,
            protocol: None,
        })
    }

    pub fn tagged(mut self, split: Split, protocol: Protocol) -> Self {
        self.split = Some(split);
        self.protocol = Some(protocol);
        self
    }

    /// Builds a set from bare `(score, attack_type)` pairs with generated ids.
    pub fn from_scores(scores: &[(f64, AttackType)]) -> Result<Self, EvalError> {
        Self::new(
            scores
                .iter()
                .enumerate()
                .map(|(i, &(s, t))| ScoreEntry::new(format!("s{i}"), s, t))
                .collect(),
        )
    }

    pub fn entries(&self) -> &[ScoreEntry] {
        &self.entries
    }

    pub fn bonafide(&self) -> impl Iterator<Item = &ScoreEntry> {
        self.entries.iter().filter(|e| e.label == Label::Bonafide)
    }

    pub fn attacks(&self) -> impl Iterator<Item = &ScoreEntry> {
        self.entries.iter().filter(|e| e.label == Label::Attack)
    }

    pub fn count(&self, label: Label) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    /// Ascending distinct scores.
    pub(crate) fn distinct_scores(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.entries.iter().map(|e| e.score).collect();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    }
}

/// APCER, BPCER and ACER in percent at threshold `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTriple {
    pub apcer: f64,
    pub bpcer: f64,
    pub acer: f64,
    pub tau: f64,
}

/// `100 * num / den`, one rounding.
pub(crate) fn percent(num: usize, den: usize) -> f64 {
    (100 * num) as f64 / den as f64
}

pub(crate) fn counts_at(scores: &ScoreSet, tau: f64) -> (usize, usize, usize, usize) {
    let (mut acc_attacks, mut n_attacks, mut rej_bf, mut n_bf) = (0, 0, 0, 0);
    for e in scores.entries() {
        match e.label {
            Label::Attack => {
                n_attacks += 1;
                acc_attacks += usize::from(e.accepted(tau));
            }
            Label::Bonafide => {
                n_bf += 1;
                rej_bf += usize::from(!e.accepted(tau));
            }
        }
    }
    (acc_attacks, n_attacks, rej_bf, n_bf)
}

pub fn compute_rates(scores: &ScoreSet, tau: f64) -> Result<RateTriple, EvalError> {
    let (acc, na, rej, nb) = counts_at(scores, tau);
    match (na, nb) {
        (0, _) => Err(EvalError::MissingClass {
            missing: Label::Attack,
            partial: Some(percent(rej, nb)),
        }),
        (_, 0) => Err(EvalError::MissingClass {
            missing: Label::Bonafide,
            partial: Some(percent(acc, na)),
        }),
        _ => Ok(rates_from_counts(acc, na, rej, nb, tau)),
    }
}

pub fn rates_from_counts(
    accepted_attacks: usize,
    attacks: usize,
    rejected_bonafide: usize,
    bonafide: usize,
    tau: f64,
) -> RateTriple {
    let apcer = percent(accepted_attacks, attacks);
    let bpcer = percent(rejected_bonafide, bonafide);
    RateTriple {
        apcer,
        bpcer,
        acer: (apcer + bpcer) / 2.0,
        tau,
    }
}

/// Operating threshold picked on a development set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub tau: f64,
    /// BPCER in percent on the set the threshold was chosen on.
    pub bpcer: f64,
    /// Set when the bonafide count is too small to resolve the requested target.
    pub granularity_warning: bool,
}

/// Largest candidate threshold whose BPCER on `dev` does not exceed `target` percent.
///
/// Candidates are the midpoints between adjacent distinct bonafide scores, a lower edge just
/// below the smallest bonafide score and `+inf`. The lower edge is the midpoint between the
/// smallest bonafide score and the closest lower score in `dev`, or the smallest bonafide score
/// itself when nothing scores below it.
pub fn threshold_at_bpcer(dev: &ScoreSet, target: f64) -> Result<ThresholdChoice, EvalError> {
    let mut bf: Vec<f64> = dev.bonafide().map(|e| e.score).collect();
    if bf.is_empty() {
        return Err(EvalError::MissingClass {
            missing: Label::Bonafide,
            partial: None,
        });
    }
    bf.sort_by(f64::total_cmp);
    let n = bf.len();
    let min_bf = bf[0];
    let lower_edge = dev
        .entries()
        .iter()
        .map(|e| e.score)
        .filter(|&s| s < min_bf)
        .max_by(f64::total_cmp)
        .map_or(min_bf, |below| 0.5 * (below + min_bf));

    // (tau, rejected bonafide) in ascending tau
    let mut candidates = vec![(lower_edge, 0usize)];
    for i in 1..n {
        if bf[i] > bf[i - 1] {
            candidates.push((0.5 * (bf[i - 1] + bf[i]), i));
        }
    }
    candidates.push((f64::INFINITY, n));

    let (tau, rejected) = candidates
        .iter()
        .rev()
        .find(|&&(_, r)| percent(r, n) <= target)
        .copied()
        .unwrap_or(candidates[0]);
    let granularity_warning = target > 0.0 && (n as f64) * target / 100.0 < 1.0;
    if granularity_warning {
        log::debug!(
            "{n} bonafide scores cannot resolve a BPCER target of {target}%; using BPCER {}%",
            percent(rejected, n)
        );
    }
    Ok(ThresholdChoice {
        tau,
        bpcer: percent(rejected, n),
        granularity_warning,
    })
}

/// Per-type APCER at `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeRate {
    pub count: usize,
    pub apcer: f64,
}

/// APCER of each attack type present in `scores`; absent types are omitted.
pub fn apcer_by_type(scores: &ScoreSet, tau: f64) -> Result<BTreeMap<AttackType, TypeRate>, EvalError> {
    let mut tally: BTreeMap<AttackType, (usize, usize)> = BTreeMap::new();
    for e in scores.attacks() {
        let t = tally.entry(e.attack_type).or_default();
        t.0 += 1;
        t.1 += usize::from(e.accepted(tau));
    }
    if tally.is_empty() {
        return Err(EvalError::MissingClass {
            missing: Label::Attack,
            partial: None,
        });
    }
    Ok(tally
        .into_iter()
        .map(|(t, (n, acc))| {
            (
                t,
                TypeRate {
                    count: n,
                    apcer: percent(acc, n),
                },
            )
        })
        .collect())
}

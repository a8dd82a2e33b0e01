use serde::{Deserialize, Serialize};

use super::{percent, EvalError, ScoreSet};
use crate::dataset::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub tau: f64,
    pub apcer: f64,
    pub bpcer: f64,
}

fn require_both(scores: &ScoreSet) -> Result<(usize, usize), EvalError> {
    let (na, nb) = (scores.count(Label::Attack), scores.count(Label::Bonafide));
    if na == 0 {
        return Err(EvalError::MissingClass {
            missing: Label::Attack,
            partial: None,
        });
    }
    if nb == 0 {
        return Err(EvalError::MissingClass {
            missing: Label::Bonafide,
            partial: None,
        });
    }
    Ok((na, nb))
}

/// Sweep over `-inf`, the midpoints between adjacent distinct scores, and `+inf`:
/// `n` distinct scores give `n + 1` points in ascending `tau`.
pub fn roc_points(scores: &ScoreSet) -> Result<Vec<RocPoint>, EvalError> {
    let (na, nb) = require_both(scores)?;
    let distinct = scores.distinct_scores();
    // per distinct score: (attacks, bonafide) with exactly that score
    let mut at = vec![(0usize, 0usize); distinct.len()];
    for e in scores.entries() {
        let i = distinct
            .binary_search_by(|s| s.total_cmp(&e.score))
            .expect("score is in the distinct list");
        match e.label {
            Label::Attack => at[i].0 += 1,
            Label::Bonafide => at[i].1 += 1,
        }
    }
    let mut points = Vec::with_capacity(distinct.len() + 1);
    // below threshold so far
    let (mut attacks_below, mut bf_below) = (0usize, 0usize);
    for k in 0..=distinct.len() {
        let tau = match k {
            0 => f64::NEG_INFINITY,
            k if k == distinct.len() => f64::INFINITY,
            k => 0.5 * (distinct[k - 1] + distinct[k]),
        };
        if k > 0 {
            attacks_below += at[k - 1].0;
            bf_below += at[k - 1].1;
        }
        points.push(RocPoint {
            tau,
            apcer: percent(na - attacks_below, na),
            bpcer: percent(bf_below, nb),
        });
    }
    Ok(points)
}

/// Equal error rate in percent and the threshold it is reached at.
///
/// Picks the sweep threshold minimizing `|APCER - BPCER|` (lowest such threshold on ties)
/// and reports the mean of the two rates there.
pub fn eer(scores: &ScoreSet) -> Result<(f64, f64), EvalError> {
    let points = roc_points(scores)?;
    let best = points
        .iter()
        .min_by(|a, b| {
            (a.apcer - a.bpcer)
                .abs()
                .total_cmp(&(b.apcer - b.bpcer).abs())
                .then(a.tau.total_cmp(&b.tau))
        })
        .expect("at least two points");
    Ok(((best.apcer + best.bpcer) / 2.0, best.tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::AttackType;
    use crate::evalkit::compute_rates;
    use proptest::prelude::*;

    fn set(pairs: &[(f64, bool)]) -> ScoreSet {
        ScoreSet::from_scores(
            &pairs
                .iter()
                .map(|&(s, bf)| (s, if bf { AttackType::None } else { AttackType::Replay }))
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn eer_examples() {
        let separated = set(&[(0.9, true), (0.8, true), (0.2, false), (0.1, false)]);
        assert_eq!(eer(&separated).unwrap().0, 0.0);
        let mixed = set(&[(0.8, true), (0.4, true), (0.6, false), (0.2, false)]);
        let (e, tau) = eer(&mixed).unwrap();
        assert_eq!(e, 50.0);
        assert!((tau - 0.5).abs() < 1e-12);
        let swapped = set(&[(-0.8, false), (-0.4, false), (-0.6, true), (-0.2, true)]);
        assert_eq!(eer(&swapped).unwrap().0, e);
        assert!(eer(&set(&[(0.1, true)])).is_err());
    }

    #[test]
    fn roc_structure() {
        let s = set(&[(0.9, true), (0.5, true), (0.5, false), (0.1, false)]);
        let pts = roc_points(&s).unwrap();
        assert_eq!(pts.len(), 4);
        assert_eq!((pts[0].apcer, pts[0].bpcer), (100.0, 0.0));
        assert_eq!((pts[3].apcer, pts[3].bpcer), (0.0, 100.0));
    }

    /// Independent recount over every split of the sorted score list.
    fn brute_rates(pairs: &[(f64, bool)], tau: f64) -> (f64, f64) {
        let na = pairs.iter().filter(|p| !p.1).count();
        let nb = pairs.len() - na;
        let acc = pairs.iter().filter(|p| !p.1 && p.0 >= tau).count();
        let rej = pairs.iter().filter(|p| p.1 && p.0 < tau).count();
        (100.0 * acc as f64 / na as f64, 100.0 * rej as f64 / nb as f64)
    }

    proptest! {
        #[test]
        fn roc_matches_recount(
            raw in proptest::collection::vec((0u8..12, any::<bool>()), 2..20),
        ) {
            let mut pairs: Vec<(f64, bool)> = raw.iter().map(|&(s, b)| (f64::from(s) / 11.0, b)).collect();
            if pairs.iter().all(|p| p.1) { pairs[0].1 = false; }
            if pairs.iter().all(|p| !p.1) { pairs[0].1 = true; }
            let s = set(&pairs);
            let pts = roc_points(&s).unwrap();
            prop_assert_eq!(pts.len(), s.distinct_scores().len() + 1);
            for w in pts.windows(2) {
                prop_assert!(w[0].tau < w[1].tau);
                prop_assert!(w[1].apcer <= w[0].apcer);
                prop_assert!(w[1].bpcer >= w[0].bpcer);
            }
            for p in &pts {
                let (a, b) = brute_rates(&pairs, p.tau);
                prop_assert!((p.apcer - a).abs() < 1e-9 && (p.bpcer - b).abs() < 1e-9);
                let r = compute_rates(&s, p.tau).unwrap();
                prop_assert_eq!((r.apcer, r.bpcer), (p.apcer, p.bpcer));
            }
            // the ACER-minimizing sweep threshold is no worse than any brute-force split
            let best_sweep = pts.iter().map(|p| (p.apcer + p.bpcer) / 2.0).fold(f64::INFINITY, f64::min);
            let mut sorted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            sorted.sort_by(f64::total_cmp);
            for &t in sorted.iter().chain([f64::INFINITY].iter()) {
                let (a, b) = brute_rates(&pairs, t);
                prop_assert!(best_sweep <= (a + b) / 2.0 + 1e-9);
            }
        }
    }
}

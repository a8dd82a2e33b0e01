use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::BandSelectError;
use crate::swirdiff::DiffSpec;

/// Starting error and the value assigned to failed evaluations.
pub const MAX_ERROR: f64 = 100.0;

/// Maps an ordered channel subset to an error in percent.
pub trait Criterion: Sync {
    fn evaluate(&self, subset: &[DiffSpec]) -> Result<f64, String>;
}

impl<F> Criterion for F
where
    F: Fn(&[DiffSpec]) -> Result<f64, String> + Sync,
{
    fn evaluate(&self, subset: &[DiffSpec]) -> Result<f64, String> {
        self(subset)
    }
}

/// Memoizes another criterion by exact (ordered) subset. Safe to share between threads.
pub struct CachedCriterion<C> {
    inner: C,
    cache: Mutex<HashMap<Vec<DiffSpec>, Result<f64, String>>>,
}

impl<C: Criterion> CachedCriterion<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn cached_len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

impl<C: Criterion> Criterion for CachedCriterion<C> {
    fn evaluate(&self, subset: &[DiffSpec]) -> Result<f64, String> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(subset) {
            return hit.clone();
        }
        // evaluated outside the lock so independent subsets can train concurrently
        let value = self.inner.evaluate(subset);
        self.cache
            .lock()
            .expect("cache lock")
            .entry(subset.to_vec())
            .or_insert(value)
            .clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: Step,
    pub subset: Vec<DiffSpec>,
    pub value: f64,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Vec<DiffSpec>,
    pub best_error: f64,
    pub trace: Vec<TraceEntry>,
}

impl SelectionResult {
    pub fn failures(&self) -> usize {
        self.trace.iter().filter(|t| t.failure.is_some()).count()
    }
}

fn score(j: &dyn Criterion, subset: &[DiffSpec]) -> (f64, Option<String>) {
    match j.evaluate(subset) {
        Ok(v) if v.is_finite() => (v, None),
        Ok(v) => (MAX_ERROR, Some(format!("criterion returned {v}"))),
        Err(e) => {
            log::warn!("criterion failed on {subset:?}: {e}");
            (MAX_ERROR, Some(e))
        }
    }
}

/// Single forward pass over `ordered`; each accepted addition is followed by one sweep
/// trying to drop each previously retained element. Acceptance requires strict improvement.
pub fn sffs_select(ordered: &[DiffSpec], j: &dyn Criterion) -> Result<SelectionResult, BandSelectError> {
    if ordered.is_empty() {
        return Err(BandSelectError::Precondition("empty candidate list".into()));
    }
    let mut best = MAX_ERROR;
    let mut selected: Vec<DiffSpec> = Vec::new();
    let mut trace = Vec::new();
    for &s in ordered {
        if selected.contains(&s) {
            continue;
        }
        let mut candidate = selected.clone();
        candidate.push(s);
        let (e, failure) = score(j, &candidate);
        let accepted = e < best;
        trace.push(TraceEntry {
            step: Step::Forward,
            subset: candidate.clone(),
            value: e,
            accepted,
            failure,
        });
        if !accepted {
            continue;
        }
        selected = candidate;
        best = e;
        let earlier: Vec<DiffSpec> = selected[..selected.len() - 1].to_vec();
        for r in earlier {
            let reduced: Vec<DiffSpec> = selected.iter().copied().filter(|&x| x != r).collect();
            let (e, failure) = score(j, &reduced);
            let accepted = e < best;
            trace.push(TraceEntry {
                step: Step::Backward,
                subset: reduced.clone(),
                value: e,
                accepted,
                failure,
            });
            if accepted {
                selected = reduced;
                best = e;
            }
        }
    }
    Ok(SelectionResult {
        selected,
        best_error: best,
        trace,
    })
}

/// Contents of `selection.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionFile {
    pub protocol: String,
    pub model: String,
    pub selected: Vec<DiffSpec>,
    pub best_acer_percent: f64,
    /// How the criterion picks its operating point on dev.
    pub criterion: String,
    pub trace: Vec<TraceEntry>,
}

impl SelectionFile {
    pub fn new(protocol: &str, model: &str, criterion: &str, result: &SelectionResult) -> Self {
        Self {
            protocol: protocol.into(),
            model: model.into(),
            selected: result.selected.clone(),
            best_acer_percent: result.best_error,
            criterion: criterion.into(),
            trace: result.trace.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), BandSelectError> {
        let mut s = serde_json::to_string_pretty(self).expect("selection serializes");
        s.push('\n');
        fs::write(path, s).map_err(|e| BandSelectError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, BandSelectError> {
        let text = fs::read_to_string(path).map_err(|e| BandSelectError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| BandSelectError::Format(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn specs(n: u32) -> Vec<DiffSpec> {
        (0..n).map(|i| DiffSpec::new(1000 + i, 2000).unwrap()).collect()
    }

    fn lookup(table: BTreeMap<Vec<DiffSpec>, f64>) -> impl Fn(&[DiffSpec]) -> Result<f64, String> + Sync {
        move |s: &[DiffSpec]| {
            let mut key = s.to_vec();
            key.sort();
            Ok(*table.get(&key).unwrap_or(&50.0))
        }
    }

    #[test]
    fn hand_trace() {
        let s = specs(3);
        let mut t = BTreeMap::new();
        t.insert(vec![s[0]], 10.0);
        t.insert(vec![s[0], s[1]], 5.0);
        t.insert(vec![s[1]], 4.0);
        t.insert(vec![s[1], s[2]], 7.0);
        let r = sffs_select(&s, &lookup(t)).unwrap();
        assert_eq!(r.selected, vec![s[1]]);
        assert_eq!(r.best_error, 4.0);
        let steps: Vec<(Step, usize, f64, bool)> = r
            .trace
            .iter()
            .map(|t| (t.step, t.subset.len(), t.value, t.accepted))
            .collect();
        assert_eq!(
            steps,
            vec![
                (Step::Forward, 1, 10.0, true),
                (Step::Forward, 2, 5.0, true),
                (Step::Backward, 1, 4.0, true),
                (Step::Forward, 2, 7.0, false),
            ]
        );
    }

    #[test]
    fn constant_and_decreasing_criteria() {
        let s = specs(4);
        let r = sffs_select(&s, &|_: &[DiffSpec]| Ok(100.0)).unwrap();
        assert!(r.selected.is_empty());
        assert_eq!(r.best_error, 100.0);
        // each addition helps, each removal hurts
        let r = sffs_select(&s, &|sub: &[DiffSpec]| Ok(50.0 - 10.0 * sub.len() as f64)).unwrap();
        assert_eq!(r.selected, s);
        assert_eq!(r.best_error, 10.0);
        assert!(sffs_select(&[], &|_: &[DiffSpec]| Ok(1.0)).is_err());
    }

    #[test]
    fn failures_score_max() {
        let s = specs(2);
        let j = |sub: &[DiffSpec]| {
            if sub.len() == 2 {
                Err("diverged".to_string())
            } else {
                Ok(20.0)
            }
        };
        let r = sffs_select(&s, &j).unwrap();
        assert_eq!(r.selected, vec![s[0]]);
        assert_eq!(r.failures(), 1);
        assert_eq!(r.trace[1].value, MAX_ERROR);
    }

    #[test]
    fn cache_hits() {
        let calls = AtomicUsize::new(0);
        let c = CachedCriterion::new(|s: &[DiffSpec]| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(s.len() as f64)
        });
        let s = specs(2);
        assert_eq!(c.evaluate(&s).unwrap(), c.evaluate(&s).unwrap());
        let rev: Vec<_> = s.iter().rev().copied().collect();
        c.evaluate(&rev).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 2);
        assert_eq!(c.cached_len(), 2);
    }

    #[test]
    fn selection_file_round_trip() {
        let s = specs(2);
        let r = sffs_select(&s, &|sub: &[DiffSpec]| Ok(10.0 / sub.len() as f64)).unwrap();
        let f = SelectionFile::new("grand_test", "pixbis", "dev ACER at dev BPCER 1%", &r);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("selection.json");
        f.write(&p).unwrap();
        assert_eq!(SelectionFile::read(&p).unwrap(), f);
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(v["selected"][0], "1000-2000");
        for k in ["protocol", "model", "selected", "best_acer_percent", "trace"] {
            assert!(v.get(k).is_some());
        }
    }
}

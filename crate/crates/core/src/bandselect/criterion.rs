use super::sffs::{CachedCriterion, Criterion, MAX_ERROR};
use super::BandSelectError;
use crate::dataset::ProtocolView;
use crate::models::{train_model, ScorerConfig};
use crate::swirdiff::DiffSpec;

/// Describes the operating point recorded alongside every selection.
pub const CRITERION_NOTE: &str =
    "dev ACER (%) of the best epoch, at the dev threshold giving BPCER <= 1%";

/// Trains `cfg` from scratch on the train split with the subset as input channels and
/// returns the dev ACER of the kept epoch. The empty subset scores 100.
pub struct AcerCriterion<'v, 'd> {
    cfg: ScorerConfig,
    view: &'v ProtocolView<'d>,
}

impl Criterion for AcerCriterion<'_, '_> {
    fn evaluate(&self, subset: &[DiffSpec]) -> Result<f64, String> {
        if subset.is_empty() {
            return Ok(MAX_ERROR);
        }
        let (scorer, _) =
            train_model(&self.cfg, subset, &self.view.train, &self.view.dev).map_err(|e| e.to_string())?;
        log::info!(
            "criterion {}: {:.3}",
            subset.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
            scorer.provenance.dev_acer
        );
        Ok(scorer.provenance.dev_acer)
    }
}

pub fn acer_criterion<'v, 'd>(
    cfg: &ScorerConfig,
    view: &'v ProtocolView<'d>,
    seed: u64,
) -> Result<CachedCriterion<AcerCriterion<'v, 'd>>, BandSelectError> {
    if view.train.is_empty() || view.dev.is_empty() {
        return Err(BandSelectError::Precondition(
            "the criterion needs non-empty train and dev splits".into(),
        ));
    }
    cfg.validate().map_err(|e| BandSelectError::Precondition(e.to_string()))?;
    let mut cfg = cfg.clone();
    cfg.train.seed = seed;
    Ok(CachedCriterion::new(AcerCriterion { cfg, view }))
}

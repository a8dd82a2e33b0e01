//! Ranking of band differences by inter/intra-class variability and subset selection.

mod criterion;
mod rank;
mod sffs;

use std::path::Path;

pub use criterion::{acer_criterion, AcerCriterion, CRITERION_NOTE};
pub use rank::{
    diff_means, rank_differences, rank_differences_over, read_ranking_csv, write_ranking_csv,
    RankedDiffs, RankedEntry, SWIR_MIN_NM,
};
pub use sffs::{
    sffs_select, CachedCriterion, Criterion, SelectionFile, SelectionResult, Step, TraceEntry,
    MAX_ERROR,
};

use crate::swirdiff::SwirError;

#[derive(Debug, thiserror::Error)]
pub enum BandSelectError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Swir(#[from] SwirError),
    #[error("{0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl BandSelectError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

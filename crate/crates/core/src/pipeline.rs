//! End-to-end runs: generate, rank, select, train, evaluate, report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::bandselect::{
    acer_criterion, rank_differences, sffs_select, write_ranking_csv, BandSelectError, RankedDiffs,
    SelectionFile, SelectionResult, CRITERION_NOTE,
};
use crate::dataset::{
    load_manifest, sample_frames, select_protocol, DatasetError, Label, Presentation, Protocol,
    ProtocolView, SpectralStack, Split, MANIFEST_FILE,
};
use crate::evalkit::{write_report, EvalError, Metrics, ReportMeta, ReportPaths, ScoreEntry, ScoreSet};
use crate::models::{train_model, ModelError, ScorerConfig, TrainReport, TrainedScorer};
use crate::swirdiff::DiffSpec;
use crate::synthgen::{generate_dataset, GeneratorConfig, SynthError};

pub const RANKING_FILE: &str = "ranking.csv";
pub const SELECTION_FILE: &str = "selection.json";
pub const MODEL_FILE: &str = "model.spad";
pub const SCORES_FILE: &str = "scores.csv";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Select(#[from] BandSelectError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Whether the failure came from the file system rather than from the inputs' content.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            PipelineError::Io { .. }
                | PipelineError::Dataset(DatasetError::Io { .. })
                | PipelineError::Synth(SynthError::Dataset(DatasetError::Io { .. }))
                | PipelineError::Select(BandSelectError::Io { .. })
                | PipelineError::Model(ModelError::Io { .. })
                | PipelineError::Model(ModelError::Dataset(DatasetError::Io { .. }))
                | PipelineError::Eval(EvalError::Io { .. })
        )
    }
}

pub fn manifest_sha256(data_root: &Path) -> Result<String, PipelineError> {
    let path = data_root.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| PipelineError::io(&path, e))?;
    Ok(Sha256::digest(&bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

fn create_dir(dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))
}

/// Ranks the differences on the train split, one frame (the first sampled) per presentation.
pub fn rank_split(train: &[&Presentation], epsilon: f32) -> Result<RankedDiffs, PipelineError> {
    let stacks: Vec<(std::sync::Arc<SpectralStack>, Label)> = train
        .iter()
        .map(|p| Ok((sample_frames(p, 1)[0].stack()?, p.label)))
        .collect::<Result<_, DatasetError>>()?;
    let examples: Vec<(&SpectralStack, Label)> = stacks.iter().map(|(s, l)| (&**s, *l)).collect();
    Ok(rank_differences(&examples, epsilon)?)
}

/// SFFS over the first `max_candidates` ranked differences (all when `None`).
pub fn select_channels(
    view: &ProtocolView<'_>,
    ranked: &RankedDiffs,
    cfg: &ScorerConfig,
    max_candidates: Option<usize>,
) -> Result<SelectionResult, PipelineError> {
    let candidates = ranked.top(max_candidates.unwrap_or(ranked.len()));
    let criterion = acer_criterion(cfg, view, cfg.train.seed)?;
    Ok(sffs_select(&candidates, &criterion)?)
}

/// Trains on the train split, keeping the best dev epoch, and records the manifest hash.
pub fn train_scorer(
    view: &ProtocolView<'_>,
    specs: &[DiffSpec],
    cfg: &ScorerConfig,
    manifest_hash: Option<String>,
) -> Result<(TrainedScorer, TrainReport), PipelineError> {
    let (mut scorer, report) = train_model(cfg, specs, &view.train, &view.dev)?;
    scorer.provenance.manifest_sha256 = manifest_hash;
    Ok((scorer, report))
}

pub fn score_split(scorer: &TrainedScorer, presentations: &[&Presentation]) -> Result<ScoreSet, PipelineError> {
    let entries = presentations
        .par_iter()
        .map(|p| Ok(ScoreEntry::for_presentation(p, scorer.score_presentation(p)?)))
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(ScoreSet::new(entries)?)
}

fn write_scores(path: &Path, sets: &[(Split, &ScoreSet)]) -> Result<(), PipelineError> {
    let mut s = String::from("presentation_id,split,label,attack_type,score\n");
    for (split, set) in sets {
        for e in set.entries() {
            let _ = writeln!(s, "{},{split},{},{},{}", e.id, e.label, e.attack_type, e.score);
        }
    }
    fs::write(path, s).map_err(|e| PipelineError::io(path, e))
}

/// Scores dev and test, picks the threshold on dev and writes the report files and `scores.csv`.
pub fn evaluate(
    scorer: &TrainedScorer,
    view: &ProtocolView<'_>,
    out: &Path,
) -> Result<(Metrics, ReportPaths), PipelineError> {
    create_dir(out)?;
    let dev = score_split(scorer, &view.dev)?.tagged(Split::Dev, view.protocol);
    let test = score_split(scorer, &view.test)?.tagged(Split::Test, view.protocol);
    write_scores(&out.join(SCORES_FILE), &[(Split::Dev, &dev), (Split::Test, &test)])?;
    let meta = ReportMeta {
        protocol: view.protocol.to_string(),
        model: scorer.kind().to_string(),
        input: scorer.specs.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
    };
    Ok(write_report(&dev, &test, &meta, scorer.config.train.dev_bpcer_target, out)?)
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Used to synthesize `<out>/data` when `data` is `None`.
    pub generator: GeneratorConfig,
    pub data: Option<PathBuf>,
    pub protocol: Protocol,
    /// Scorer used inside the selection criterion.
    pub selection: ScorerConfig,
    /// Scorer trained on the selected channels.
    pub model: ScorerConfig,
    /// Skip selection and train on these channels.
    pub channels: Option<Vec<DiffSpec>>,
    pub max_candidates: Option<usize>,
    pub out: PathBuf,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub data_root: PathBuf,
    pub ranked: RankedDiffs,
    pub selection: Option<SelectionResult>,
    pub scorer: TrainedScorer,
    pub train_report: TrainReport,
    pub metrics: Metrics,
    pub model_path: PathBuf,
    pub report: ReportPaths,
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    create_dir(&cfg.out)?;
    let data_root = match &cfg.data {
        Some(d) => d.clone(),
        None => {
            let root = cfg.out.join("data");
            generate_dataset(&cfg.generator, &root)?;
            root
        }
    };
    let data = load_manifest(&data_root)?;
    let hash = manifest_sha256(&data_root)?;
    let view = select_protocol(&data, cfg.protocol)?;
    let epsilon = cfg.model.train.epsilon;

    let ranked = rank_split(&view.train, epsilon)?;
    write_ranking_csv(&ranked, &cfg.out.join(RANKING_FILE))?;
    log::info!("ranked {} differences", ranked.len());

    let (specs, selection) = match &cfg.channels {
        Some(c) => (c.clone(), None),
        None => {
            let sel = select_channels(&view, &ranked, &cfg.selection, cfg.max_candidates)?;
            SelectionFile::new(cfg.protocol.as_str(), cfg.model.kind.as_str(), CRITERION_NOTE, &sel)
                .write(&cfg.out.join(SELECTION_FILE))?;
            log::info!("selected {:?} (dev ACER {})", sel.selected, sel.best_error);
            if sel.selected.is_empty() {
                return Err(PipelineError::Config(
                    "selection kept no channel; nothing to train on".into(),
                ));
            }
            (sel.selected.clone(), Some(sel))
        }
    };

    let (scorer, train_report) = train_scorer(&view, &specs, &cfg.model, Some(hash))?;
    let model_path = cfg.out.join(MODEL_FILE);
    scorer.save(&model_path)?;
    let (metrics, report) = evaluate(&scorer, &view, &cfg.out)?;
    Ok(PipelineOutcome {
        data_root,
        ranked,
        selection,
        scorer,
        train_report,
        metrics,
        model_path,
        report,
    })
}

//! Command-line front end: `synthgen`, `rank`, `select`, `train`, `eval`, `pipeline`.
//!
//! Exit codes: 0 on success, 1 for usage, configuration and domain errors, 2 for I/O errors.
//! Every run appends one JSON line (command, seed, config hash, exit code, argv) to `run.log`
//! in the parent directory of `--out`; runs whose arguments do not parse log to `./run.log`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bandselect::{read_ranking_csv, write_ranking_csv, SelectionFile, CRITERION_NOTE};
use crate::dataset::{load_manifest, select_protocol, Protocol};
use crate::models::{FrameAgg, ModelKind, ScorerConfig, TrainedScorer};
use crate::pipeline::{
    evaluate, manifest_sha256, rank_split, run_pipeline, select_channels, train_scorer,
    PipelineConfig, PipelineError,
};
use crate::swirdiff::{parse_spec_list, DiffSpec};
use crate::synthgen::{generate_dataset, GeneratorConfig};

pub const RUN_LOG: &str = "run.log";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProtocolArg {
    #[value(name = "grand_test")]
    GrandTest,
    Impersonation,
    Obfuscation,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::GrandTest => Protocol::GrandTest,
            ProtocolArg::Impersonation => Protocol::Impersonation,
            ProtocolArg::Obfuscation => Protocol::Obfuscation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Pixbis,
    Mccnn,
    PixelSvm,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Pixbis => ModelKind::Pixbis,
            ModelArg::Mccnn => ModelKind::Mccnn,
            ModelArg::PixelSvm => ModelKind::PixelSvm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AggArg {
    Mean,
    Min,
    Median,
}

impl From<AggArg> for FrameAgg {
    fn from(a: AggArg) -> Self {
        match a {
            AggArg::Mean => FrameAgg::Mean,
            AggArg::Min => FrameAgg::Min,
            AggArg::Median => FrameAgg::Median,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PresetArg {
    Reference,
    Desk,
    Proxy,
}

impl PresetArg {
    fn config(self, kind: ModelKind) -> ScorerConfig {
        match self {
            PresetArg::Reference => ScorerConfig::reference(kind),
            PresetArg::Desk => ScorerConfig::desk(kind),
            PresetArg::Proxy => ScorerConfig::proxy(kind),
        }
    }
}

#[derive(Debug, Args)]
struct Common {
    /// Dataset root (directory holding the manifest).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "grand_test")]
    protocol: ProtocolArg,
    #[arg(long, value_enum, default_value = "pixbis")]
    model: ModelArg,
    /// Comma-separated differences, e.g. "1450-1300,1050-1450".
    #[arg(long)]
    channels: Option<String>,
    /// Overrides the generator and training seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Stabilizer of the normalized difference.
    #[arg(long)]
    epsilon: Option<f32>,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_enum)]
    frame_agg: Option<AggArg>,
    /// Generator configuration (generator.json).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Size and schedule of the trained model.
    #[arg(long, value_enum, default_value = "desk")]
    preset: PresetArg,
}

#[derive(Debug, Args)]
struct SelectArgs {
    /// Ranking CSV to select from; computed from the train split when absent.
    #[arg(long)]
    ranking: Option<PathBuf>,
    /// Only the first N ranked differences enter the search.
    #[arg(long)]
    max_candidates: Option<usize>,
    /// Scorer trained for every candidate subset.
    #[arg(long, value_enum, default_value = "proxy")]
    selection_preset: PresetArg,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Writes a synthetic dataset to --out.
    Synthgen {
        #[command(flatten)]
        common: Common,
    },
    /// Ranks all ordered band differences on the train split and writes the CSV to --out.
    Rank {
        #[command(flatten)]
        common: Common,
    },
    /// Runs the floating selection and writes selection.json to --out.
    Select {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        select: SelectArgs,
    },
    /// Trains a scorer on --channels (or a selection file) and writes the model to --out.
    Train {
        #[command(flatten)]
        common: Common,
        /// selection.json whose channels are used when --channels is absent.
        #[arg(long)]
        selection: Option<PathBuf>,
    },
    /// Scores dev and test with a model file and writes the report to --out.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model_file: PathBuf,
    },
    /// Generates (unless --data), ranks, selects (unless --channels), trains and evaluates.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        select: SelectArgs,
    },
}

#[derive(Debug, Parser)]
#[command(name = "swirpad", version, about = "Face presentation attack detection from SWIR band differences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] PipelineError),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(e) if e.is_io() => 2,
            _ => 1,
        }
    }
}

macro_rules! impl_from_run {
    ($($t:ty),+) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Run(e.into())
            }
        })+
    };
}
impl_from_run!(
    crate::dataset::DatasetError,
    crate::synthgen::SynthError,
    crate::bandselect::BandSelectError,
    crate::models::ModelError,
    crate::evalkit::EvalError
);

/// The resolved settings of one run; its hash goes to `run.log`.
#[derive(Debug, Serialize)]
struct RunConfig {
    command: &'static str,
    data: Option<PathBuf>,
    protocol: Protocol,
    channels: Option<Vec<DiffSpec>>,
    out: PathBuf,
    generator: Option<GeneratorConfig>,
    scorer: Option<ScorerConfig>,
    selection_scorer: Option<ScorerConfig>,
    extra: Vec<(String, String)>,
}

impl RunConfig {
    fn new(command: &'static str, common: &Common) -> Self {
        Self {
            command,
            data: common.data.clone(),
            protocol: common.protocol.into(),
            channels: None,
            out: common.out.clone(),
            generator: None,
            scorer: None,
            selection_scorer: None,
            extra: Vec::new(),
        }
    }

    fn seed(&self) -> Option<u64> {
        self.scorer
            .as_ref()
            .or(self.selection_scorer.as_ref())
            .map(|s| s.train.seed)
            .or(self.generator.as_ref().map(|g| g.seed))
    }

    fn sha256(&self) -> String {
        let json = serde_json::to_string(self).expect("run config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn require_data(common: &Common) -> Result<&Path, CliError> {
    common
        .data
        .as_deref()
        .ok_or_else(|| CliError::Usage("--data is required for this command".into()))
}

fn parse_channels(common: &Common) -> Result<Option<Vec<DiffSpec>>, CliError> {
    common
        .channels
        .as_deref()
        .map(|s| parse_spec_list(s).map_err(|e| CliError::Usage(format!("--channels: {e}"))))
        .transpose()
}

fn generator(common: &Common) -> Result<GeneratorConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => GeneratorConfig::load(path)?,
        None => GeneratorConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn scorer(common: &Common, preset: PresetArg, overrides: bool) -> Result<ScorerConfig, CliError> {
    let mut cfg = preset.config(common.model.into());
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(eps) = common.epsilon {
        cfg.train.epsilon = eps;
    }
    if overrides {
        if let Some(e) = common.epochs {
            cfg.train.epochs = e;
        }
        if let Some(a) = common.frame_agg {
            cfg.train.frame_agg = a.into();
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| {
            CliError::Run(PipelineError::Io {
                path: p.display().to_string(),
                source: e,
            })
        }),
        _ => Ok(()),
    }
}

fn execute(command: Command, run: &mut Option<RunConfig>) -> Result<(), CliError> {
    match command {
        Command::Synthgen { common } => {
            let cfg = generator(&common)?;
            let mut rc = RunConfig::new("synthgen", &common);
            rc.generator = Some(cfg.clone());
            *run = Some(rc);
            let root = generate_dataset(&cfg, &common.out)?;
            println!("wrote {} presentations to {}", cfg.total(), root.display());
        }
        Command::Rank { common } => {
            let mut rc = RunConfig::new("rank", &common);
            let eps = common.epsilon.unwrap_or(crate::swirdiff::DEFAULT_EPSILON);
            rc.extra.push(("epsilon".into(), eps.to_string()));
            *run = Some(rc);
            let data = load_manifest(require_data(&common)?)?;
            let view = select_protocol(&data, common.protocol.into())?;
            let ranked = rank_split(&view.train, eps)?;
            create_parent(&common.out)?;
            write_ranking_csv(&ranked, &common.out)?;
            println!("ranked {} differences into {}", ranked.len(), common.out.display());
        }
        Command::Select { common, select } => {
            let cfg = scorer(&common, select.selection_preset, true)?;
            let mut rc = RunConfig::new("select", &common);
            rc.selection_scorer = Some(cfg.clone());
            rc.extra.push(("ranking".into(), format!("{:?}", select.ranking)));
            rc.extra.push(("max_candidates".into(), format!("{:?}", select.max_candidates)));
            *run = Some(rc);
            let data = load_manifest(require_data(&common)?)?;
            let view = select_protocol(&data, common.protocol.into())?;
            let ranked = match &select.ranking {
                Some(path) => read_ranking_csv(path)?,
                None => rank_split(&view.train, cfg.train.epsilon)?,
            };
            let result = select_channels(&view, &ranked, &cfg, select.max_candidates)?;
            create_parent(&common.out)?;
            SelectionFile::new(view.protocol.as_str(), cfg.kind.as_str(), CRITERION_NOTE, &result)
                .write(&common.out)?;
            println!(
                "selected {} (dev ACER {:.2}%) into {}",
                spec_list(&result.selected),
                result.best_error,
                common.out.display()
            );
        }
        Command::Train { common, selection } => {
            let cfg = scorer(&common, common.preset, true)?;
            let mut rc = RunConfig::new("train", &common);
            rc.scorer = Some(cfg.clone());
            let specs = match (parse_channels(&common)?, &selection) {
                (Some(c), _) => c,
                (None, Some(path)) => SelectionFile::read(path)?.selected,
                (None, None) => {
                    return Err(CliError::Usage("train needs --channels or --selection".into()))
                }
            };
            rc.channels = Some(specs.clone());
            *run = Some(rc);
            let root = require_data(&common)?;
            let data = load_manifest(root)?;
            let view = select_protocol(&data, common.protocol.into())?;
            let (model, report) = train_scorer(&view, &specs, &cfg, Some(manifest_sha256(root)?))?;
            create_parent(&common.out)?;
            model.save(&common.out)?;
            println!(
                "trained {} on {} (epoch {}, dev ACER {:.2}%) into {}",
                cfg.kind,
                spec_list(&specs),
                report.best_epoch,
                model.provenance.dev_acer,
                common.out.display()
            );
        }
        Command::Eval { common, model_file } => {
            let mut model = TrainedScorer::load(&model_file)?;
            if let Some(a) = common.frame_agg {
                model.config.train.frame_agg = a.into();
            }
            let mut rc = RunConfig::new("eval", &common);
            rc.scorer = Some(model.config.clone());
            rc.channels = Some(model.specs.clone());
            rc.extra.push(("model_file".into(), model_file.display().to_string()));
            *run = Some(rc);
            let data = load_manifest(require_data(&common)?)?;
            let view = select_protocol(&data, common.protocol.into())?;
            let (m, paths) = evaluate(&model, &view, &common.out)?;
            println!(
                "test APCER {:.2}%  BPCER {:.2}%  ACER {:.2}%  EER {:.2}% ({})",
                m.test_apcer,
                m.test_bpcer,
                m.test_acer,
                m.test_eer,
                paths.metrics.display()
            );
        }
        Command::Pipeline { common, select } => {
            let model = scorer(&common, common.preset, true)?;
            let selection = scorer(&common, select.selection_preset, false)?;
            let channels = parse_channels(&common)?;
            let generator = generator(&common)?;
            let mut rc = RunConfig::new("pipeline", &common);
            rc.channels = channels.clone();
            rc.generator = common.data.is_none().then(|| generator.clone());
            rc.scorer = Some(model.clone());
            rc.selection_scorer = Some(selection.clone());
            rc.extra.push(("max_candidates".into(), format!("{:?}", select.max_candidates)));
            *run = Some(rc);
            if select.ranking.is_some() {
                return Err(CliError::Usage("pipeline computes its own ranking; drop --ranking".into()));
            }
            let cfg = PipelineConfig {
                generator,
                data: common.data.clone(),
                protocol: common.protocol.into(),
                selection,
                model,
                channels,
                max_candidates: select.max_candidates,
                out: common.out.clone(),
            };
            let o = run_pipeline(&cfg)?;
            println!(
                "{} on {}: test APCER {:.2}%  BPCER {:.2}%  ACER {:.2}%  EER {:.2}% ({})",
                o.scorer.kind(),
                spec_list(&o.scorer.specs),
                o.metrics.test_apcer,
                o.metrics.test_bpcer,
                o.metrics.test_acer,
                o.metrics.test_eer,
                common.out.display()
            );
        }
    }
    Ok(())
}

fn spec_list(specs: &[DiffSpec]) -> String {
    specs.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

fn out_of(command: &Command) -> &Path {
    match command {
        Command::Synthgen { common }
        | Command::Rank { common }
        | Command::Select { common, .. }
        | Command::Train { common, .. }
        | Command::Eval { common, .. }
        | Command::Pipeline { common, .. } => &common.out,
    }
}

fn name_of(command: &Command) -> &'static str {
    match command {
        Command::Synthgen { .. } => "synthgen",
        Command::Rank { .. } => "rank",
        Command::Select { .. } => "select",
        Command::Train { .. } => "train",
        Command::Eval { .. } => "eval",
        Command::Pipeline { .. } => "pipeline",
    }
}

fn jobs_of(command: &Command) -> Option<usize> {
    match command {
        Command::Synthgen { common }
        | Command::Rank { common }
        | Command::Select { common, .. }
        | Command::Train { common, .. }
        | Command::Eval { common, .. }
        | Command::Pipeline { common, .. } => common.jobs,
    }
}

fn run_log_path(out: &Path) -> PathBuf {
    match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.join(RUN_LOG),
        _ => PathBuf::from(RUN_LOG),
    }
}

#[derive(Serialize)]
struct Provenance<'a> {
    command: &'a str,
    seed: Option<u64>,
    config_sha256: String,
    exit: i32,
    argv: Vec<String>,
}

fn append_provenance(path: &Path, line: &Provenance<'_>) -> std::io::Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(line).expect("provenance serializes"))
}

/// Parses `argv` (program name first), runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return 0;
            }
            let line = Provenance {
                command: "usage",
                seed: None,
                config_sha256: String::new(),
                exit: 1,
                argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
            };
            if let Err(e) = append_provenance(Path::new(RUN_LOG), &line) {
                log::warn!("cannot append to {RUN_LOG}: {e}");
            }
            return 1;
        }
    };
    let log_path = run_log_path(out_of(&cli.command));
    let jobs = jobs_of(&cli.command);
    let name = name_of(&cli.command);
    let mut run_cfg = None;
    let result = match jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(cli.command, &mut run_cfg)),
            Err(e) => Err(CliError::Usage(format!("cannot start {n} workers: {e}"))),
        },
        None => execute(cli.command, &mut run_cfg),
    };
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    let (command, seed, hash) = match &run_cfg {
        Some(rc) => (rc.command, rc.seed(), rc.sha256()),
        None => (name, None, String::new()),
    };
    let line = Provenance {
        command,
        seed,
        config_sha256: hash,
        exit: code,
        argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
    };
    if let Err(e) = append_provenance(&log_path, &line) {
        log::warn!("cannot append to {}: {e}", log_path.display());
    }
    code
}

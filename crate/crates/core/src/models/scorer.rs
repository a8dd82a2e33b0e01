use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pixel::{score_pixel_svm, PixelSvmConfig, SkinPixelModel};
use super::train::{aggregate, prepare_input, TrainConfig};
use super::{McCnnConfig, McCnnNet, ModelError, ModelKind, Network, PixBisConfig, PixBisNet};
use crate::dataset::{sample_frames, Presentation, SpectralStack};
use crate::swirdiff::DiffSpec;

pub const MODEL_MAGIC: &[u8; 4] = b"SPAD";
pub const MODEL_VERSION: u32 = 1;

/// Everything needed to build and train one scorer. Only the section matching `kind` is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub kind: ModelKind,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub pixbis: PixBisConfig,
    #[serde(default)]
    pub mccnn: McCnnConfig,
    #[serde(default)]
    pub pixel_svm: PixelSvmConfig,
}

impl ScorerConfig {
    /// Full-size networks and schedules: 112 px / 30 epochs for pixbis, 128 px / 50 epochs
    /// for mccnn, Adam at 1e-4 with batches of 16.
    pub fn reference(kind: ModelKind) -> Self {
        let mut train = TrainConfig::default();
        if kind == ModelKind::Mccnn {
            train.epochs = 50;
        }
        if kind == ModelKind::PixelSvm {
            train.train_frames = 1;
        }
        Self {
            kind,
            train,
            pixbis: PixBisConfig::default(),
            mccnn: McCnnConfig::default(),
            pixel_svm: PixelSvmConfig::default(),
        }
    }

    /// Sized for the 56 px synthetic frames on a few CPU cores.
    pub fn desk(kind: ModelKind) -> Self {
        let mut c = Self::reference(kind);
        c.pixbis = PixBisConfig {
            input_size: 56,
            stem_width: 8,
            stage_widths: vec![12, 16],
            ..PixBisConfig::default()
        };
        c.mccnn = McCnnConfig {
            input_size: 56,
            specific_width: 8,
            embedding: 16,
            ..McCnnConfig::default()
        };
        c.train.learning_rate = 3e-3;
        c.train.batch_size = 2;
        c.train.train_frames = 3;
        c.train.epochs = match kind {
            ModelKind::Pixbis => 20,
            ModelKind::Mccnn => 20,
            ModelKind::PixelSvm => 1,
        };
        if kind == ModelKind::PixelSvm {
            c.train.train_frames = 1;
            c.train.eval_frames = 3;
        }
        c
    }

    /// A reduced setting cheap enough to evaluate once per candidate subset during selection.
    pub fn proxy(kind: ModelKind) -> Self {
        let mut c = Self::desk(kind);
        c.pixbis = PixBisConfig {
            input_size: 28,
            stem_width: 8,
            stage_widths: vec![8],
            ..PixBisConfig::default()
        };
        c.mccnn = McCnnConfig {
            input_size: 28,
            specific_width: 4,
            embedding: 8,
            ..McCnnConfig::default()
        };
        c.train.train_frames = 2;
        c.train.eval_frames = 3;
        c.train.epochs = match kind {
            ModelKind::PixelSvm => 1,
            _ => 12,
        };
        c.pixel_svm.max_train_pixels = 1000;
        c
    }

    pub fn preset(name: &str, kind: ModelKind) -> Result<Self, ModelError> {
        match name {
            "reference" => Ok(Self::reference(kind)),
            "desk" => Ok(Self::desk(kind)),
            "proxy" => Ok(Self::proxy(kind)),
            _ => Err(ModelError::Config(format!(
                "unknown preset {name:?} (expected reference, desk or proxy)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.train.validate()?;
        match self.kind {
            ModelKind::Pixbis => self.pixbis.validate(),
            ModelKind::Mccnn => self.mccnn.validate(),
            ModelKind::PixelSvm => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub manifest_sha256: Option<String>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub dev_acer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Metadata {
    kind: ModelKind,
    specs: Vec<DiffSpec>,
    config: ScorerConfig,
    provenance: Provenance,
    param_count: usize,
    /// `(dim, components, support vectors)` for pixel models.
    pixel_shape: Option<(usize, usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
enum Built {
    Pixbis(PixBisNet),
    Mccnn(McCnnNet),
    Pixel(Box<SkinPixelModel>),
}

/// A trained model ready for scoring, with enough provenance to retrain it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedScorer {
    pub config: ScorerConfig,
    pub specs: Vec<DiffSpec>,
    pub params: Vec<f32>,
    pub provenance: Provenance,
    built: Built,
}

impl TrainedScorer {
    pub fn new(
        config: ScorerConfig,
        specs: Vec<DiffSpec>,
        params: Vec<f32>,
        pixel: Option<SkinPixelModel>,
        provenance: Provenance,
    ) -> Result<Self, ModelError> {
        if specs.is_empty() {
            return Err(ModelError::Precondition("a scorer needs at least one channel".into()));
        }
        let built = match config.kind {
            ModelKind::Pixbis => Built::Pixbis(PixBisNet::new(specs.len(), config.pixbis.clone())?),
            ModelKind::Mccnn => Built::Mccnn(McCnnNet::new(specs.len(), config.mccnn.clone())?),
            ModelKind::PixelSvm => Built::Pixel(Box::new(
                pixel.ok_or_else(|| ModelError::Precondition("missing pixel model".into()))?,
            )),
        };
        let expected = match &built {
            Built::Pixbis(n) => n.param_len(),
            Built::Mccnn(n) => n.param_len(),
            Built::Pixel(m) => m.to_params().len(),
        };
        if params.len() != expected {
            return Err(ModelError::Format(format!(
                "{} parameters given, architecture needs {expected}",
                params.len()
            )));
        }
        Ok(Self {
            config,
            specs,
            params,
            provenance,
            built,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn pixel_model(&self) -> Option<&SkinPixelModel> {
        match &self.built {
            Built::Pixel(m) => Some(m),
            _ => None,
        }
    }

    pub fn score_frame(&self, stack: &SpectralStack) -> Result<f64, ModelError> {
        let eps = self.config.train.epsilon;
        Ok(match &self.built {
            Built::Pixbis(net) => {
                let x = prepare_input(stack, &self.specs, eps, net.cfg.input_size)?;
                f64::from(net.score(&self.params, &x))
            }
            Built::Mccnn(net) => {
                let x = prepare_input(stack, &self.specs, eps, net.cfg.input_size)?;
                f64::from(net.score(&self.params, &x))
            }
            Built::Pixel(m) => score_pixel_svm(m, stack)?,
        })
    }

    /// Scores the sampled frames of `p` and aggregates them.
    pub fn score_presentation(&self, p: &Presentation) -> Result<f64, ModelError> {
        let scores = sample_frames(p, self.config.train.eval_frames)
            .into_iter()
            .map(|f| self.score_frame(&*f.stack()?))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(aggregate(&scores, self.config.train.frame_agg))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = Metadata {
            kind: self.config.kind,
            specs: self.specs.clone(),
            config: self.config.clone(),
            provenance: self.provenance.clone(),
            param_count: self.params.len(),
            pixel_shape: self.pixel_model().map(SkinPixelModel::shape),
        };
        let json = serde_json::to_vec(&meta).expect("metadata serializes");
        let mut out = Vec::with_capacity(12 + json.len() + 4 * self.params.len());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let bad = |m: &str| ModelError::Format(m.to_string());
        if bytes.len() < 12 || &bytes[..4] != MODEL_MAGIC {
            return Err(bad("missing SPAD header"));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let version = u32_at(4);
        if version != MODEL_VERSION {
            return Err(ModelError::Format(format!("unsupported version {version}")));
        }
        let len = u32_at(8) as usize;
        let body = bytes.get(12..12 + len).ok_or_else(|| bad("truncated metadata"))?;
        let meta: Metadata = serde_json::from_slice(body).map_err(|e| ModelError::Format(e.to_string()))?;
        let payload = &bytes[12 + len..];
        if payload.len() != 4 * meta.param_count {
            return Err(ModelError::Format(format!(
                "payload holds {} bytes, metadata announces {} parameters",
                payload.len(),
                meta.param_count
            )));
        }
        let params: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if meta.kind != meta.config.kind {
            return Err(bad("kind does not match configuration"));
        }
        let pixel = match (meta.kind, meta.pixel_shape) {
            (ModelKind::PixelSvm, Some(shape)) => Some(SkinPixelModel::from_params(
                meta.specs.clone(),
                meta.config.train.epsilon,
                shape,
                &params,
            )?),
            (ModelKind::PixelSvm, None) => return Err(bad("pixel model without shape")),
            _ => None,
        };
        Self::new(meta.config, meta.specs, params, pixel, meta.provenance)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_bytes()).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = fs::read(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn presets_validate() {
        for k in ModelKind::ALL {
            for name in ["reference", "desk", "proxy"] {
                ScorerConfig::preset(name, k).unwrap().validate().unwrap();
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let cfg = ScorerConfig::proxy(ModelKind::Pixbis);
        let specs = vec![DiffSpec::new(1450, 940).unwrap()];
        let net = PixBisNet::new(1, cfg.pixbis.clone()).unwrap();
        let params = net.init(&mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
        let prov = Provenance {
            seed: 0,
            manifest_sha256: Some("ab".into()),
            best_epoch: 2,
            dev_acer: 1.5,
        };
        let s = TrainedScorer::new(cfg, specs, params, None, prov).unwrap();
        let bytes = s.to_bytes();
        assert_eq!(&bytes[..4], b"SPAD");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), MODEL_VERSION);
        let back = TrainedScorer::from_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_bytes(), bytes);
        assert!(TrainedScorer::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(TrainedScorer::from_bytes(b"NOPE").is_err());
    }
}

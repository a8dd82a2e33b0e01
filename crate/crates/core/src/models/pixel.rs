use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gmm::{fit_skin_gmm, Mixture};
use super::scorer::{Provenance, ScorerConfig, TrainedScorer};
use super::svm::{platt_fit, platt_prob, Svm, SvmParams};
use super::train::{aggregate, dev_acer, TrainReport};
use super::ModelError;
use crate::dataset::{sample_frames, Group, Presentation, SpectralStack, Wavelength};
use crate::evalkit::{ScoreEntry, ScoreSet};
use crate::swirdiff::{build_diff_stack, enumerate_unordered_pairs, nearest_wavelength, DiffSpec};

/// Bands of the reference skin classifier, mapped onto the nearest captured bands.
pub const SVM_TARGET_WAVELENGTHS: [Wavelength; 4] = [935, 1060, 1300, 1550];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PixelSvmConfig {
    pub components: usize,
    pub pixel_fraction: f64,
    pub calibration_fraction: f64,
    /// Upper bound on the labelled pixel set handed to the SVM.
    pub max_train_pixels: usize,
    /// Upper bound on the bonafide pixels used to fit the mixture.
    pub max_gmm_pixels: usize,
    pub svm: SvmParams,
}

impl Default for PixelSvmConfig {
    fn default() -> Self {
        Self {
            components: 3,
            pixel_fraction: 0.01,
            calibration_fraction: 0.1,
            max_train_pixels: 3000,
            max_gmm_pixels: 20_000,
            svm: SvmParams::default(),
        }
    }
}

/// The six unordered differences of [`SVM_TARGET_WAVELENGTHS`] mapped onto `available`.
pub fn default_svm_specs(available: &[Wavelength]) -> Result<Vec<DiffSpec>, ModelError> {
    let mut mapped: Vec<Wavelength> = Vec::new();
    for t in SVM_TARGET_WAVELENGTHS {
        let w = nearest_wavelength(available, t)
            .ok_or_else(|| ModelError::Precondition("no wavelengths available".into()))?;
        if !mapped.contains(&w) {
            mapped.push(w);
        }
    }
    Ok(enumerate_unordered_pairs(&mapped)?)
}

/// Central ellipse standing in for the face region when no annotation is available.
pub fn face_proxy_mask(width: usize, height: usize) -> Vec<bool> {
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let (ax, ay) = (0.30 * width as f64, 0.40 * height as f64);
    (0..width * height)
        .map(|i| {
            let dx = ((i % width) as f64 + 0.5 - cx) / ax;
            let dy = ((i / width) as f64 + 0.5 - cy) / ay;
            dx * dx + dy * dy <= 1.0
        })
        .collect()
}

/// Per-pixel difference vectors, flat `(pixels × specs)`, plus `(width, height)`.
pub fn pixel_features(
    stack: &SpectralStack,
    specs: &[DiffSpec],
    epsilon: f32,
) -> Result<(Vec<f64>, usize, usize), ModelError> {
    let d = build_diff_stack(stack, specs, epsilon)?;
    let (w, h) = d
        .shape()
        .ok_or_else(|| ModelError::Precondition("no feature channels".into()))?;
    let n = w * h;
    let mut out = vec![0.0; n * specs.len()];
    for (c, g) in d.maps.iter().enumerate() {
        for (i, &v) in g.values.iter().enumerate() {
            out[i * specs.len() + c] = f64::from(v);
        }
    }
    Ok((out, w, h))
}

/// Number of pixels kept per image: `floor(n * fraction)`, at least one.
pub fn retained_pixels(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).floor() as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelThreshold {
    pub threshold: f64,
    pub balanced_accuracy: f64,
    /// The best balanced accuracy was no better than chance.
    pub degenerate: bool,
}

/// Log-likelihood threshold (`LL >= t` means skin) maximizing balanced accuracy between
/// `positive` and `negative` log-likelihoods. Candidates are midpoints of adjacent distinct
/// values; the lowest best candidate wins.
pub fn derive_pixel_labels(positive: &[f64], negative: &[f64]) -> Result<LabelThreshold, ModelError> {
    if positive.is_empty() || negative.is_empty() {
        return Err(ModelError::Precondition("both pixel classes are required".into()));
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&v| (v, true))
        .chain(negative.iter().map(|&v| (v, false)))
        .collect();
    if all.iter().any(|v| !v.0.is_finite()) {
        return Err(ModelError::Precondition("non-finite log-likelihood".into()));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    if all[0].0 == all[all.len() - 1].0 {
        return Err(ModelError::Precondition("all log-likelihoods equal, no threshold".into()));
    }
    let (np, nn) = (positive.len() as f64, negative.len() as f64);
    // pixels strictly below the candidate are labelled non-skin
    let (mut pos_below, mut neg_below) = (0usize, 0usize);
    let mut best = (f64::NEG_INFINITY, 0.0);
    let mut i = 0;
    while i < all.len() {
        let v = all[i].0;
        while i < all.len() && all[i].0 == v {
            if all[i].1 {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            i += 1;
        }
        if i == all.len() {
            break;
        }
        let t = 0.5 * (v + all[i].0);
        let ba = 0.5 * ((np - pos_below as f64) / np + neg_below as f64 / nn);
        if ba > best.0 {
            best = (ba, t);
        }
    }
    let degenerate = best.0 <= 0.5;
    if degenerate {
        log::warn!("skin likelihood threshold is no better than chance");
    }
    Ok(LabelThreshold {
        threshold: best.1,
        balanced_accuracy: best.0,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkinPixelModel {
    pub specs: Vec<DiffSpec>,
    pub epsilon: f32,
    pub gmm: Mixture,
    pub threshold: f64,
    pub svm: Svm,
    pub platt: (f64, f64),
}

impl SkinPixelModel {
    pub fn prob(&self, x: &[f64]) -> f64 {
        platt_prob(self.platt.0, self.platt.1, self.svm.decision(x))
    }

    /// `(dim, components, support vectors)` describing the parameter payload.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.gmm.dim, self.gmm.components(), self.svm.n_support())
    }

    pub fn to_params(&self) -> Vec<f32> {
        let mut p: Vec<f64> = Vec::new();
        p.extend(&self.gmm.weights);
        p.extend(&self.gmm.means);
        p.extend(&self.gmm.vars);
        p.push(self.threshold);
        p.extend(&self.svm.support);
        p.extend(&self.svm.coef);
        p.extend([self.svm.rho, self.svm.gamma, self.platt.0, self.platt.1]);
        p.into_iter().map(|v| v as f32).collect()
    }

    pub fn from_params(
        specs: Vec<DiffSpec>,
        epsilon: f32,
        (dim, k, n_sv): (usize, usize, usize),
        params: &[f32],
    ) -> Result<Self, ModelError> {
        let expected = k + 2 * k * dim + 1 + n_sv * dim + n_sv + 4;
        if params.len() != expected || dim != specs.len() {
            return Err(ModelError::Format(format!(
                "pixel model payload has {} values, expected {expected}",
                params.len()
            )));
        }
        let v: Vec<f64> = params.iter().map(|&x| f64::from(x)).collect();
        let mut at = 0;
        let mut take = |n: usize| {
            let s = v[at..at + n].to_vec();
            at += n;
            s
        };
        let gmm = Mixture {
            dim,
            weights: take(k),
            means: take(k * dim),
            vars: take(k * dim),
        };
        let threshold = take(1)[0];
        let support = take(n_sv * dim);
        let coef = take(n_sv);
        let tail = take(4);
        Ok(Self {
            specs,
            epsilon,
            gmm,
            threshold,
            svm: Svm {
                dim,
                gamma: tail[1],
                support,
                coef,
                rho: tail[0],
                iterations: 0,
            },
            platt: (tail[2], tail[3]),
        })
    }
}

/// Mean calibrated skin probability over every pixel of the frame.
pub fn score_pixel_svm(model: &SkinPixelModel, stack: &SpectralStack) -> Result<f64, ModelError> {
    let (feat, _, _) = pixel_features(stack, &model.specs, model.epsilon)?;
    let d = model.specs.len();
    let n = feat.len() / d;
    Ok(feat.chunks(d).map(|x| model.prob(x)).sum::<f64>() / n as f64)
}

struct Image {
    feat: Vec<f64>,
    mask: Vec<bool>,
    bonafide: bool,
    impersonation: bool,
}

fn subsample<T: Clone>(v: Vec<T>, max: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    if v.len() <= max {
        return v;
    }
    let mut idx = sample(rng, v.len(), max).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| v[i].clone()).collect()
}

/// Fits the skin mixture on bonafide face pixels, thresholds its likelihood against attack
/// face pixels, keeps a seeded fraction of every image's pixels with those labels, trains the
/// SVM on them and calibrates it on a held-out part.
pub fn train_pixel_scorer(
    cfg: &ScorerConfig,
    specs: &[DiffSpec],
    train: &[&Presentation],
    dev: &[&Presentation],
) -> Result<(TrainedScorer, TrainReport), ModelError> {
    let t = &cfg.train;
    let pc = &cfg.pixel_svm;
    let first = train
        .first()
        .ok_or_else(|| ModelError::Precondition("empty train split".into()))?;
    let specs = if specs.is_empty() {
        let wl: Vec<Wavelength> = first.frames()[0].stack()?.wavelengths().collect();
        default_svm_specs(&wl)?
    } else {
        specs.to_vec()
    };
    let d = specs.len();
    let images: Vec<Image> = train
        .par_iter()
        .map(|p| {
            sample_frames(p, t.train_frames)
                .into_iter()
                .map(|f| {
                    let (feat, w, h) = pixel_features(&*f.stack()?, &specs, t.epsilon)?;
                    Ok(Image {
                        feat,
                        mask: face_proxy_mask(w, h),
                        bonafide: p.is_bonafide(),
                        impersonation: p.group == Group::Impersonation,
                    })
                })
                .collect::<Result<Vec<_>, ModelError>>()
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    if !images.iter().any(|i| i.bonafide) || images.iter().all(|i| i.bonafide) {
        return Err(ModelError::Precondition("train split must contain both classes".into()));
    }
    let face_pixels = |keep: &dyn Fn(&Image) -> bool| -> Vec<Vec<f64>> {
        images
            .iter()
            .filter(|i| keep(i))
            .flat_map(|i| {
                i.feat
                    .chunks(d)
                    .zip(&i.mask)
                    .filter(|(_, &m)| m)
                    .map(|(x, _)| x.to_vec())
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(t.seed);

    let skin = subsample(face_pixels(&|i| i.bonafide), pc.max_gmm_pixels, &mut rng);
    let flat: Vec<f64> = skin.iter().flatten().copied().collect();
    let fit = fit_skin_gmm(&flat, d, pc.components, t.seed)?;
    let gmm = fit.mixture;

    let has_impersonation = images.iter().any(|i| i.impersonation);
    if !has_impersonation {
        log::warn!("no impersonation attacks in train; thresholding skin likelihood against all attacks");
    }
    let negatives = subsample(
        face_pixels(&|i| !i.bonafide && (i.impersonation || !has_impersonation)),
        pc.max_gmm_pixels,
        &mut rng,
    );
    let pos_ll: Vec<f64> = skin.par_iter().map(|x| gmm.log_likelihood(x)).collect();
    let neg_ll: Vec<f64> = negatives.par_iter().map(|x| gmm.log_likelihood(x)).collect();
    let thr = derive_pixel_labels(&pos_ll, &neg_ll)?;

    // label and keep a fraction of every image's pixels
    let mut labelled: Vec<(Vec<f64>, bool)> = Vec::new();
    for img in &images {
        let n = img.mask.len();
        let mut idx = sample(&mut rng, n, retained_pixels(n, pc.pixel_fraction)).into_vec();
        idx.sort_unstable();
        for i in idx {
            let x = &img.feat[i * d..(i + 1) * d];
            labelled.push((x.to_vec(), gmm.log_likelihood(x) >= thr.threshold));
        }
    }
    let mut labelled = subsample(labelled, pc.max_train_pixels, &mut rng);
    labelled.shuffle(&mut rng);
    let n_cal = ((labelled.len() as f64 * pc.calibration_fraction).round() as usize).max(1);
    let (cal, fit_set) = labelled.split_at(n_cal);
    let xs: Vec<f64> = fit_set.iter().flat_map(|s| s.0.iter().copied()).collect();
    let ys: Vec<bool> = fit_set.iter().map(|s| s.1).collect();
    let svm = Svm::train(&xs, d, &ys, &pc.svm)?;
    let cal_f: Vec<f64> = cal.iter().map(|s| svm.decision(&s.0)).collect();
    let cal_y: Vec<bool> = cal.iter().map(|s| s.1).collect();
    let platt = platt_fit(&cal_f, &cal_y);
    let model = SkinPixelModel {
        specs: specs.clone(),
        epsilon: t.epsilon,
        gmm,
        threshold: thr.threshold,
        svm,
        platt,
    };
    // round through the stored precision so the in-memory model equals a reloaded one
    let model = SkinPixelModel::from_params(specs.clone(), t.epsilon, model.shape(), &model.to_params())?;

    let scores: Vec<f64> = dev
        .par_iter()
        .map(|p| {
            let s = sample_frames(p, t.eval_frames)
                .into_iter()
                .map(|f| score_pixel_svm(&model, &*f.stack()?))
                .collect::<Result<Vec<_>, ModelError>>()?;
            Ok(aggregate(&s, t.frame_agg))
        })
        .collect::<Result<_, ModelError>>()?;
    let set = ScoreSet::new(
        dev.iter()
            .zip(&scores)
            .map(|(p, &s)| ScoreEntry::for_presentation(p, s))
            .collect(),
    )?;
    let acer = dev_acer(&set, t.dev_bpcer_target)?;
    let provenance = Provenance {
        seed: t.seed,
        manifest_sha256: None,
        best_epoch: 1,
        dev_acer: acer,
    };
    let report = TrainReport {
        initial_loss: f64::NAN,
        epochs: vec![super::EpochStats {
            epoch: 1,
            train_loss: f64::NAN,
            dev_acer: acer,
            dev_loss: f64::NAN,
        }],
        best_epoch: 1,
    };
    let scorer = TrainedScorer::new(cfg.clone(), specs, model.to_params(), Some(model), provenance)?;
    Ok((scorer, report))
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pixbis::bce;
use super::scorer::{Provenance, ScorerConfig, TrainedScorer};
use super::{FrameAgg, McCnnNet, ModelError, ModelKind, Network, PixBisNet};
use crate::dataset::{sample_frames, Label, Presentation, SpectralStack};
use crate::evalkit::{compute_rates, threshold_at_bpcer, ScoreEntry, ScoreSet};
use crate::swirdiff::{build_diff_stack, DiffSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Frames sampled per training presentation; each one is a training sample.
    pub train_frames: usize,
    /// Frames sampled per presentation when scoring.
    pub eval_frames: usize,
    pub frame_agg: FrameAgg,
    pub epsilon: f32,
    pub dev_bpcer_target: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-4,
            seed: 42,
            train_frames: 10,
            eval_frames: 10,
            frame_agg: FrameAgg::Mean,
            epsilon: crate::swirdiff::DEFAULT_EPSILON,
            dev_bpcer_target: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 || self.batch_size == 0 || self.train_frames == 0 || self.eval_frames == 0 {
            return Err(ModelError::Config(
                "epochs, batch size and frame counts must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(ModelError::Config("learning rate must be positive".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(ModelError::Config("epsilon must be >= 0".into()));
        }
        Ok(())
    }
}

/// Resamples a row-major `w×h` grid to `size×size`: box averaging for integer
/// down-scaling, bilinear (pixel-centre aligned) otherwise.
fn resize(values: &[f32], w: usize, h: usize, size: usize) -> Vec<f32> {
    if w == size && h == size {
        return values.to_vec();
    }
    if w % size == 0 && h % size == 0 {
        let (fx, fy) = (w / size, h / size);
        let inv = 1.0 / (fx * fy) as f32;
        let mut out = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                let mut acc = 0.0f32;
                for dy in 0..fy {
                    let row = &values[(y * fy + dy) * w + x * fx..][..fx];
                    acc += row.iter().sum::<f32>();
                }
                out.push(acc * inv);
            }
        }
        return out;
    }
    let src = |v: f32, n: usize| -> (usize, usize, f32) {
        let p = (v.max(0.0)).min((n - 1) as f32);
        let i0 = p.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, p - i0 as f32)
    };
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let (y0, y1, ty) = src((y as f32 + 0.5) * h as f32 / size as f32 - 0.5, h);
        for x in 0..size {
            let (x0, x1, tx) = src((x as f32 + 0.5) * w as f32 / size as f32 - 0.5, w);
            let top = values[y0 * w + x0] * (1.0 - tx) + values[y0 * w + x1] * tx;
            let bot = values[y1 * w + x0] * (1.0 - tx) + values[y1 * w + x1] * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

/// Difference maps of one frame, resampled to `size×size`, channel-major.
pub fn prepare_input(
    stack: &SpectralStack,
    specs: &[DiffSpec],
    epsilon: f32,
    size: usize,
) -> Result<Vec<f32>, ModelError> {
    let d = build_diff_stack(stack, specs, epsilon)?;
    let mut out = Vec::with_capacity(specs.len() * size * size);
    for g in &d.maps {
        out.extend(resize(&g.values, g.width, g.height, size));
    }
    Ok(out)
}

pub fn presentation_inputs(
    p: &Presentation,
    specs: &[DiffSpec],
    epsilon: f32,
    size: usize,
    frames: usize,
) -> Result<Vec<Vec<f32>>, ModelError> {
    sample_frames(p, frames)
        .into_iter()
        .map(|f| prepare_input(&*f.stack()?, specs, epsilon, size))
        .collect()
}

pub fn aggregate(scores: &[f64], agg: FrameAgg) -> f64 {
    assert!(!scores.is_empty(), "no frame scores");
    match agg {
        FrameAgg::Mean => scores.iter().sum::<f64>() / scores.len() as f64,
        FrameAgg::Min => scores.iter().copied().fold(f64::INFINITY, f64::min),
        FrameAgg::Median => {
            let mut s = scores.to_vec();
            s.sort_by(f64::total_cmp);
            let n = s.len();
            if n % 2 == 1 {
                s[n / 2]
            } else {
                0.5 * (s[n / 2 - 1] + s[n / 2])
            }
        }
    }
}

pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f32], grad: &[f32]) {
        self.t += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let step = (self.lr * c2.sqrt() / c1) as f32;
        let eps = (self.eps * c2.sqrt()) as f32;
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step * *m / (v.sqrt() + eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_acer: f64,
    pub dev_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss of the initial weights.
    pub initial_loss: f64,
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
}

impl TrainReport {
    pub fn best(&self) -> &EpochStats {
        &self.epochs[self.best_epoch - 1]
    }
}

/// Dev ACER (percent) at the dev threshold reaching `target` BPCER.
pub fn dev_acer(dev: &ScoreSet, target: f64) -> Result<f64, ModelError> {
    let choice = threshold_at_bpcer(dev, target)?;
    Ok(compute_rates(dev, choice.tau)?.acer)
}

fn label_value(l: Label) -> f32 {
    match l {
        Label::Bonafide => 1.0,
        Label::Attack => 0.0,
    }
}

fn score_inputs<N: Network>(net: &N, params: &[f32], frames: &[Vec<f32>], agg: FrameAgg) -> f64 {
    let s: Vec<f64> = frames.iter().map(|x| f64::from(net.score(params, x))).collect();
    aggregate(&s, agg)
}

fn check_classes(samples: impl Iterator<Item = Label>, what: &str) -> Result<(), ModelError> {
    let (mut bf, mut at) = (false, false);
    for l in samples {
        match l {
            Label::Bonafide => bf = true,
            Label::Attack => at = true,
        }
    }
    if bf && at {
        Ok(())
    } else {
        Err(ModelError::Precondition(format!("{what} split must contain both classes")))
    }
}

/// Mini-batch Adam training; after every epoch the dev presentations are scored and the
/// weights with the lowest dev ACER (then lowest dev BCE) are kept.
///
/// `train` holds `(input, label)` samples, `dev` holds per-presentation frame inputs.
pub fn train_network<N: Network>(
    net: &N,
    train: &[(Vec<f32>, Label)],
    dev: &[(&Presentation, Vec<Vec<f32>>)],
    cfg: &TrainConfig,
) -> Result<(Vec<f32>, TrainReport), ModelError> {
    cfg.validate()?;
    check_classes(train.iter().map(|s| s.1), "train")?;
    check_classes(dev.iter().map(|d| d.0.label), "dev")?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut params = net.init(&mut init_rng);
    let n_params = params.len();
    let mut adam = Adam::new(n_params, cfg.learning_rate);

    let initial_loss = train
        .par_iter()
        .map(|(x, l)| f64::from(net.loss(&params, x, label_value(*l))))
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        / train.len() as f64;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, f64, usize, Vec<f32>)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0f64;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let per_sample: Vec<(f32, Vec<f32>)> = batch
                .par_iter()
                .map(|&i| {
                    let mut g = vec![0.0f32; n_params];
                    let l = net.loss_grad(&params, &train[i].0, label_value(train[i].1), &mut g);
                    (l, g)
                })
                .collect();
            let mut grad = vec![0.0f32; n_params];
            let mut batch_loss = 0.0f64;
            for (l, g) in &per_sample {
                batch_loss += f64::from(*l);
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ModelError::Training {
                    epoch,
                    batch: b,
                    msg: "non-finite loss or gradient".into(),
                });
            }
            let inv = 1.0 / batch.len() as f32;
            grad.iter_mut().for_each(|g| *g *= inv);
            adam.step(&mut params, &grad);
            loss_sum += batch_loss;
        }

        let scores: Vec<f64> = dev
            .par_iter()
            .map(|(_, frames)| score_inputs(net, &params, frames, cfg.frame_agg))
            .collect();
        let dev_loss = dev
            .iter()
            .zip(&scores)
            .map(|((p, _), &s)| bce(s, f64::from(label_value(p.label))))
            .sum::<f64>()
            / dev.len() as f64;
        let set = ScoreSet::new(
            dev.iter()
                .zip(&scores)
                .map(|((p, _), &s)| ScoreEntry::for_presentation(p, s))
                .collect(),
        )?;
        let acer = dev_acer(&set, cfg.dev_bpcer_target)?;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            dev_acer: acer,
            dev_loss,
        };
        log::debug!("epoch {epoch}: {stats:?}");
        let better = match &best {
            None => true,
            Some((a, l, _, _)) => acer < *a || (acer == *a && dev_loss < *l),
        };
        if better {
            best = Some((acer, dev_loss, epoch, params.clone()));
        }
        epochs.push(stats);
    }
    let (_, _, best_epoch, best_params) = best.expect("at least one epoch");
    Ok((
        best_params,
        TrainReport {
            initial_loss,
            epochs,
            best_epoch,
        },
    ))
}

/// Trains the scorer described by `cfg` on `specs` channels.
pub fn train_model(
    cfg: &ScorerConfig,
    specs: &[DiffSpec],
    train: &[&Presentation],
    dev: &[&Presentation],
) -> Result<(TrainedScorer, TrainReport), ModelError> {
    if cfg.kind == ModelKind::PixelSvm {
        return super::pixel::train_pixel_scorer(cfg, specs, train, dev);
    }
    if specs.is_empty() {
        return Err(ModelError::Precondition("no input channels".into()));
    }
    let t = &cfg.train;
    let side = match cfg.kind {
        ModelKind::Pixbis => cfg.pixbis.input_size,
        _ => cfg.mccnn.input_size,
    };
    let train_samples: Vec<(Vec<f32>, Label)> = train
        .par_iter()
        .map(|p| {
            presentation_inputs(p, specs, t.epsilon, side, t.train_frames)
                .map(|xs| xs.into_iter().map(|x| (x, p.label)).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let dev_inputs: Vec<(&Presentation, Vec<Vec<f32>>)> = dev
        .par_iter()
        .map(|p| presentation_inputs(p, specs, t.epsilon, side, t.eval_frames).map(|xs| (*p, xs)))
        .collect::<Result<_, _>>()?;
    let (params, report) = match cfg.kind {
        ModelKind::Pixbis => {
            let net = PixBisNet::new(specs.len(), cfg.pixbis.clone())?;
            train_network(&net, &train_samples, &dev_inputs, t)?
        }
        _ => {
            let net = McCnnNet::new(specs.len(), cfg.mccnn.clone())?;
            train_network(&net, &train_samples, &dev_inputs, t)?
        }
    };
    let best = report.best();
    let provenance = Provenance {
        seed: t.seed,
        manifest_sha256: None,
        best_epoch: report.best_epoch,
        dev_acer: best.dev_acer,
    };
    let scorer = TrainedScorer::new(cfg.clone(), specs.to_vec(), params, None, provenance)?;
    Ok((scorer, report))
}

pub fn score_presentation(model: &TrainedScorer, p: &Presentation) -> Result<f64, ModelError> {
    model.score_presentation(p)
}

use serde::{Deserialize, Serialize};

use super::adapt::adapt_first_layer;
use super::nn::{avgpool2, avgpool2_backward, init_uniform, sigmoid, Activation, Conv, Linear, Scalar};
use super::{ModelError, Network};

pub const BCE_CLAMP: f64 = 1e-7;

#[inline]
fn clamp_p<T: Scalar>(p: T) -> T {
    p.max(T::of(BCE_CLAMP)).min(T::of(1.0 - BCE_CLAMP))
}

pub fn bce<T: Scalar>(p: T, label: T) -> T {
    let p = clamp_p(p);
    -(label * p.ln() + (T::one() - label) * (T::one() - p).ln())
}

/// Derivative of [`bce`] with respect to `p`; zero where the clamp is active.
pub fn bce_grad<T: Scalar>(p: T, label: T) -> T {
    if p < T::of(BCE_CLAMP) || p > T::of(1.0 - BCE_CLAMP) {
        return T::zero();
    }
    -(label / p) + (T::one() - label) / (T::one() - p)
}

/// `lambda * mean_i BCE(map_i, label) + (1 - lambda) * BCE(binary, label)`.
pub fn pixbis_loss<T: Scalar>(map: &[T], binary: T, label: T, lambda: T) -> T {
    let pix = map.iter().map(|&m| bce(m, label)).sum::<T>() / T::of(map.len() as f64);
    lambda * pix + (T::one() - lambda) * bce(binary, label)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PixBisConfig {
    pub input_size: usize,
    pub stem_width: usize,
    /// One conv + pool stage per entry.
    pub stage_widths: Vec<usize>,
    /// Dilated 3×3 convs at map resolution, widening each map cell's view of the face.
    pub context_dilations: Vec<usize>,
    pub map_size: usize,
    pub lambda: f64,
    pub activation: Activation,
}

impl Default for PixBisConfig {
    fn default() -> Self {
        Self {
            input_size: 112,
            stem_width: 16,
            stage_widths: vec![16, 32, 64],
            context_dilations: vec![2, 4],
            map_size: 14,
            lambda: 0.5,
            activation: Activation::Silu,
        }
    }
}

impl PixBisConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let expected = self.map_size << self.stage_widths.len();
        if self.map_size == 0 || self.input_size != expected {
            return Err(ModelError::Config(format!(
                "input size {} must equal map size {} times 2^{} stages",
                self.input_size,
                self.map_size,
                self.stage_widths.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(ModelError::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.stem_width == 0 || self.stage_widths.contains(&0) {
            return Err(ModelError::Config("layer widths must be positive".into()));
        }
        if self.context_dilations.contains(&0) {
            return Err(ModelError::Config("dilations must be positive".into()));
        }
        Ok(())
    }
}

/// Conv stem, conv/pool stages down to the map size, dilated context convs, a 1×1 conv +
/// sigmoid giving the supervision map, and a linear + sigmoid binary head over the flattened map.
#[derive(Debug, Clone, PartialEq)]
pub struct PixBisNet {
    pub channels: usize,
    pub cfg: PixBisConfig,
    stem: Conv,
    stages: Vec<Conv>,
    context: Vec<Conv>,
    head: Conv,
    fc: Linear,
}

struct Cache<T> {
    stem_cols: Vec<T>,
    stem_pre: Vec<T>,
    // per stage: input size, conv cols, pre-activation
    stages: Vec<(usize, Vec<T>, Vec<T>)>,
    // per context conv: cols, pre-activation
    context: Vec<(Vec<T>, Vec<T>)>,
    head_cols: Vec<T>,
    map: Vec<T>,
    binary: T,
}

impl PixBisNet {
    pub fn new(channels: usize, cfg: PixBisConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        if channels == 0 {
            return Err(ModelError::Config("at least one input channel".into()));
        }
        let stem = Conv::new(channels, cfg.stem_width, 3);
        let mut prev = cfg.stem_width;
        let stages = cfg
            .stage_widths
            .iter()
            .map(|&w| {
                let c = Conv::new(prev, w, 3);
                prev = w;
                c
            })
            .collect();
        let context = cfg
            .context_dilations
            .iter()
            .map(|&d| Conv::new(prev, prev, 3).dilated(d))
            .collect();
        let head = Conv::new(prev, 1, 1);
        let fc = Linear {
            input: cfg.map_size * cfg.map_size,
            output: 1,
        };
        Ok(Self {
            channels,
            cfg,
            stem,
            stages,
            context,
            head,
            fc,
        })
    }

    fn layers(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.stem.param_len())
            .chain(self.stages.iter().map(Conv::param_len))
            .chain(self.context.iter().map(Conv::param_len))
            .chain([self.head.param_len(), self.fc.param_len()])
    }

    fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.layers()
            .map(|n| {
                let o = acc;
                acc += n;
                o
            })
            .collect()
    }

    fn forward_cached<T: Scalar>(&self, params: &[T], x: &[T]) -> Cache<T> {
        let off = self.offsets();
        let act = self.cfg.activation;
        let n = self.cfg.input_size;
        let (stem_pre, stem_cols) = self.stem.forward(&params[off[0]..], x, n, n);
        let mut a = stem_pre.clone();
        act.forward(&mut a);
        let mut size = n;
        let mut stages = Vec::with_capacity(self.stages.len());
        for (i, conv) in self.stages.iter().enumerate() {
            let (pre, cols) = conv.forward(&params[off[1 + i]..], &a, size, size);
            let mut post = pre.clone();
            act.forward(&mut post);
            a = avgpool2(&post, conv.cout, size, size);
            stages.push((size, cols, pre));
            size /= 2;
        }
        let ns = self.stages.len();
        let mut context = Vec::with_capacity(self.context.len());
        for (i, conv) in self.context.iter().enumerate() {
            let (pre, cols) = conv.forward(&params[off[1 + ns + i]..], &a, size, size);
            a = pre.clone();
            act.forward(&mut a);
            context.push((cols, pre));
        }
        let nh = 1 + ns + self.context.len();
        let (z, head_cols) = self.head.forward(&params[off[nh]..], &a, size, size);
        let map: Vec<T> = z.into_iter().map(sigmoid).collect();
        let zb = self.fc.forward(&params[off[nh + 1]..], &map)[0];
        Cache {
            stem_cols,
            stem_pre,
            stages,
            context,
            head_cols,
            map,
            binary: sigmoid(zb),
        }
    }

    /// Supervision map and binary output for one `(C, N, N)` input.
    pub fn forward<T: Scalar>(&self, params: &[T], x: &[T]) -> (Vec<T>, T) {
        let c = self.forward_cached(params, x);
        (c.map, c.binary)
    }
}

impl Network for PixBisNet {
    fn param_len(&self) -> usize {
        self.layers().sum()
    }

    fn input_shape(&self) -> (usize, usize) {
        (self.channels, self.cfg.input_size)
    }

    fn init(&self, rng: &mut dyn rand::RngCore) -> Vec<f32> {
        let mut p = vec![0.0f32; self.param_len()];
        let off = self.offsets();
        // a 3-channel stem adapted to the actual channel count
        let area = 9;
        let mut rgb = vec![0.0f32; self.stem.cout * 3 * area];
        init_uniform(&mut rgb, 3 * area, rng);
        let adapted = adapt_first_layer(&rgb, self.stem.cout, 3, area, self.channels);
        p[..adapted.len()].copy_from_slice(&adapted);
        for (i, conv) in self.stages.iter().chain(&self.context).chain([&self.head]).enumerate() {
            let o = off[1 + i];
            init_uniform(&mut p[o..o + conv.weight_len()], conv.cin * conv.k * conv.k, rng);
        }
        let o = off[2 + self.stages.len() + self.context.len()];
        init_uniform(&mut p[o..o + self.fc.input], self.fc.input, rng);
        // start the binary head near 0.5
        for w in &mut p[o..o + self.fc.input] {
            *w *= 0.1;
        }
        p
    }

    fn loss<T: Scalar>(&self, params: &[T], x: &[T], label: T) -> T {
        let (map, b) = self.forward(params, x);
        pixbis_loss(&map, b, label, T::of(self.cfg.lambda))
    }

    fn loss_grad<T: Scalar>(&self, params: &[T], x: &[T], label: T, grad: &mut [T]) -> T {
        let off = self.offsets();
        let act = self.cfg.activation;
        let c = self.forward_cached(params, x);
        let lambda = T::of(self.cfg.lambda);
        let loss = pixbis_loss(&c.map, c.binary, label, lambda);
        let n_map = T::of(c.map.len() as f64);
        let ns = self.stages.len();
        let nh = 1 + ns + self.context.len();

        let db = (T::one() - lambda) * bce_grad(c.binary, label);
        let dzb = [db * c.binary * (T::one() - c.binary)];
        let mut dmap = self.fc.backward(&params[off[nh + 1]..], &c.map, &dzb, &mut grad[off[nh + 1]..]);
        for (d, &m) in dmap.iter_mut().zip(&c.map) {
            *d = (*d + lambda * bce_grad(m, label) / n_map) * m * (T::one() - m);
        }
        let m = self.cfg.map_size;
        let mut da = self
            .head
            .backward(&params[off[nh]..], &c.head_cols, &dmap, m, m, &mut grad[off[nh]..], true)
            .expect("dx requested");
        for (i, conv) in self.context.iter().enumerate().rev() {
            let (cols, pre) = &c.context[i];
            act.backward(pre, &mut da);
            let o = off[1 + ns + i];
            da = conv
                .backward(&params[o..], cols, &da, m, m, &mut grad[o..], true)
                .expect("dx requested");
        }
        for (i, conv) in self.stages.iter().enumerate().rev() {
            let (size, cols, pre) = &c.stages[i];
            let mut dpost = avgpool2_backward(&da, conv.cout, *size, *size);
            act.backward(pre, &mut dpost);
            da = conv
                .backward(&params[off[1 + i]..], cols, &dpost, *size, *size, &mut grad[off[1 + i]..], true)
                .expect("dx requested");
        }
        act.backward(&c.stem_pre, &mut da);
        let n = self.cfg.input_size;
        self.stem.backward(&params[off[0]..], &c.stem_cols, &da, n, n, &mut grad[off[0]..], false);
        loss
    }

    /// Mean of the supervision map; the binary head is not used for scoring.
    fn score<T: Scalar>(&self, params: &[T], x: &[T]) -> T {
        let (map, _) = self.forward(params, x);
        map.iter().copied().sum::<T>() / T::of(map.len() as f64)
    }
}

use serde::{Deserialize, Serialize};

use super::nn::{avgpool2, avgpool2_backward, init_uniform, sigmoid, Activation, Conv, Linear, Scalar};
use super::pixbis::{bce, bce_grad};
use super::{ModelError, Network};

pub const HEAD_HIDDEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McCnnConfig {
    pub input_size: usize,
    /// Width of the channel-specific first stage.
    pub specific_width: usize,
    /// Width of the shared second stage, which is also the per-channel embedding size.
    pub embedding: usize,
    pub activation: Activation,
}

impl Default for McCnnConfig {
    fn default() -> Self {
        Self {
            input_size: 128,
            specific_width: 16,
            embedding: 32,
            activation: Activation::Silu,
        }
    }
}

impl McCnnConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_size < 4 || self.input_size % 4 != 0 {
            return Err(ModelError::Config(format!(
                "input size {} must be a positive multiple of 4",
                self.input_size
            )));
        }
        if self.specific_width == 0 || self.embedding == 0 {
            return Err(ModelError::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

/// Each input channel runs through its own conv/pool stage and then a shared conv/pool stage;
/// global average pooling gives one embedding per channel. The concatenated embeddings feed
/// FC(10, sigmoid) → FC(1, sigmoid).
#[derive(Debug, Clone, PartialEq)]
pub struct McCnnNet {
    pub channels: usize,
    pub cfg: McCnnConfig,
    specific: Conv,
    shared: Conv,
    fc1: Linear,
    fc2: Linear,
}

struct Branch<T> {
    cols1: Vec<T>,
    pre1: Vec<T>,
    cols2: Vec<T>,
    pre2: Vec<T>,
}

struct Cache<T> {
    branches: Vec<Branch<T>>,
    emb: Vec<T>,
    hidden: Vec<T>,
    out: T,
}

impl McCnnNet {
    pub fn new(channels: usize, cfg: McCnnConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        if channels == 0 {
            return Err(ModelError::Config("at least one input channel".into()));
        }
        Ok(Self {
            channels,
            specific: Conv::new(1, cfg.specific_width, 3),
            shared: Conv::new(cfg.specific_width, cfg.embedding, 3),
            fc1: Linear {
                input: channels * cfg.embedding,
                output: HEAD_HIDDEN,
            },
            fc2: Linear {
                input: HEAD_HIDDEN,
                output: 1,
            },
            cfg,
        })
    }

    // specific convs (one per channel), shared conv, fc1, fc2
    fn offsets(&self) -> (usize, usize, usize) {
        let shared = self.channels * self.specific.param_len();
        let fc1 = shared + self.shared.param_len();
        (shared, fc1, fc1 + self.fc1.param_len())
    }

    fn forward_cached<T: Scalar>(&self, params: &[T], x: &[T]) -> Cache<T> {
        let act = self.cfg.activation;
        let (o_shared, o_fc1, o_fc2) = self.offsets();
        let n = self.cfg.input_size;
        let (h, q) = (n / 2, n / 4);
        let e = self.cfg.embedding;
        let mut branches = Vec::with_capacity(self.channels);
        let mut emb = Vec::with_capacity(self.channels * e);
        for c in 0..self.channels {
            let plane = &x[c * n * n..(c + 1) * n * n];
            let p1 = &params[c * self.specific.param_len()..];
            let (pre1, cols1) = self.specific.forward(p1, plane, n, n);
            let mut a1 = pre1.clone();
            act.forward(&mut a1);
            let a1 = avgpool2(&a1, self.specific.cout, n, n);
            let (pre2, cols2) = self.shared.forward(&params[o_shared..], &a1, h, h);
            let mut a2 = pre2.clone();
            act.forward(&mut a2);
            let a2 = avgpool2(&a2, e, h, h);
            let inv = T::of(1.0 / (q * q) as f64);
            emb.extend(a2.chunks(q * q).map(|ch| ch.iter().copied().sum::<T>() * inv));
            branches.push(Branch { cols1, pre1, cols2, pre2 });
        }
        let hidden: Vec<T> = self.fc1.forward(&params[o_fc1..], &emb).into_iter().map(sigmoid).collect();
        let out = sigmoid(self.fc2.forward(&params[o_fc2..], &hidden)[0]);
        Cache {
            branches,
            emb,
            hidden,
            out,
        }
    }

    pub fn forward<T: Scalar>(&self, params: &[T], x: &[T]) -> T {
        self.forward_cached(params, x).out
    }
}

impl Network for McCnnNet {
    fn param_len(&self) -> usize {
        self.offsets().2 + self.fc2.param_len()
    }

    fn input_shape(&self) -> (usize, usize) {
        (self.channels, self.cfg.input_size)
    }

    fn init(&self, rng: &mut dyn rand::RngCore) -> Vec<f32> {
        let mut p = vec![0.0f32; self.param_len()];
        let (o_shared, o_fc1, o_fc2) = self.offsets();
        for c in 0..self.channels {
            let o = c * self.specific.param_len();
            init_uniform(&mut p[o..o + self.specific.weight_len()], 9, rng);
        }
        init_uniform(&mut p[o_shared..o_shared + self.shared.weight_len()], self.shared.cin * 9, rng);
        init_uniform(&mut p[o_fc1..o_fc1 + self.fc1.input * HEAD_HIDDEN], self.fc1.input, rng);
        init_uniform(&mut p[o_fc2..o_fc2 + HEAD_HIDDEN], HEAD_HIDDEN, rng);
        p
    }

    fn loss<T: Scalar>(&self, params: &[T], x: &[T], label: T) -> T {
        bce(self.forward(params, x), label)
    }

    fn loss_grad<T: Scalar>(&self, params: &[T], x: &[T], label: T, grad: &mut [T]) -> T {
        let act = self.cfg.activation;
        let (o_shared, o_fc1, o_fc2) = self.offsets();
        let c = self.forward_cached(params, x);
        let loss = bce(c.out, label);
        let n = self.cfg.input_size;
        let (h, q) = (n / 2, n / 4);
        let e = self.cfg.embedding;

        let dz2 = [bce_grad(c.out, label) * c.out * (T::one() - c.out)];
        let mut dhidden = self.fc2.backward(&params[o_fc2..], &c.hidden, &dz2, &mut grad[o_fc2..]);
        for (d, &s) in dhidden.iter_mut().zip(&c.hidden) {
            *d = *d * s * (T::one() - s);
        }
        let demb = self.fc1.backward(&params[o_fc1..], &c.emb, &dhidden, &mut grad[o_fc1..]);
        let inv = T::of(1.0 / (q * q) as f64);
        for (ch, b) in c.branches.iter().enumerate() {
            let mut da2 = Vec::with_capacity(e * q * q);
            for k in 0..e {
                let g = demb[ch * e + k] * inv;
                da2.extend(std::iter::repeat_n(g, q * q));
            }
            let mut dpre2 = avgpool2_backward(&da2, e, h, h);
            act.backward(&b.pre2, &mut dpre2);
            let da1 = self
                .shared
                .backward(&params[o_shared..], &b.cols2, &dpre2, h, h, &mut grad[o_shared..], true)
                .expect("dx requested");
            let mut dpre1 = avgpool2_backward(&da1, self.specific.cout, n, n);
            act.backward(&b.pre1, &mut dpre1);
            let o = ch * self.specific.param_len();
            self.specific
                .backward(&params[o..], &b.cols1, &dpre1, n, n, &mut grad[o..], false);
        }
        loss
    }

    fn score<T: Scalar>(&self, params: &[T], x: &[T]) -> T {
        self.forward(params, x)
    }
}

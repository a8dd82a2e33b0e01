//! Single-sample CHW building blocks with hand-written backward passes.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

/// Floating-point type the networks run in: `f32` for training, `f64` for gradient checks.
pub trait Scalar:
    Float + FromPrimitive + Default + Debug + Sum + Send + Sync + 'static
{
    /// `c = a · b + beta · c` with explicit row/column strides (row-major `m×k`, `k×n`, `m×n`
    /// when `cs == 1`).
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
    );

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }
}

macro_rules! impl_scalar {
    ($t:ty, $f:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                (rsa, csa): (isize, isize),
                b: &[Self],
                (rsb, csb): (isize, isize),
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(c.len() >= m * n);
                if m == 0 || n == 0 {
                    return;
                }
                let extent = |rows: usize, cols: usize, rs: isize, cs: isize| {
                    (rows.saturating_sub(1) as isize * rs + cols.saturating_sub(1) as isize * cs) as usize
                };
                if k > 0 {
                    assert!(a.len() > extent(m, k, rsa, csa));
                    assert!(b.len() > extent(k, n, rsb, csb));
                }
                // SAFETY: the asserts above keep every strided access inside the slices
                unsafe {
                    $f(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    #[default]
    Silu,
}

impl Activation {
    pub fn forward<T: Scalar>(self, x: &mut [T]) {
        match self {
            Activation::Relu => x.iter_mut().for_each(|v| *v = v.max(T::zero())),
            Activation::Silu => x.iter_mut().for_each(|v| *v = *v * sigmoid(*v)),
        }
    }

    /// Multiplies `grad` by the derivative, evaluated at the pre-activation values `pre`.
    pub fn backward<T: Scalar>(self, pre: &[T], grad: &mut [T]) {
        match self {
            Activation::Relu => {
                for (g, &p) in grad.iter_mut().zip(pre) {
                    if p <= T::zero() {
                        *g = T::zero();
                    }
                }
            }
            Activation::Silu => {
                for (g, &p) in grad.iter_mut().zip(pre) {
                    let s = sigmoid(p);
                    *g = *g * (s + p * s * (T::one() - s));
                }
            }
        }
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Convolution with stride 1 and "same" zero padding; `k` is odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    /// Spacing between kernel taps; 1 is a plain convolution.
    pub dilation: usize,
}

impl Conv {
    pub fn new(cin: usize, cout: usize, k: usize) -> Self {
        Self {
            cin,
            cout,
            k,
            dilation: 1,
        }
    }

    pub fn dilated(self, dilation: usize) -> Self {
        Self { dilation, ..self }
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.k * self.k
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.cout
    }

    fn im2col<T: Scalar>(&self, x: &[T], h: usize, w: usize) -> Vec<T> {
        let (k, pad, dil) = (self.k, self.k / 2, self.dilation as isize);
        let hw = h * w;
        let mut cols = vec![T::zero(); self.cin * k * k * hw];
        for c in 0..self.cin {
            let plane = &x[c * hw..(c + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((c * k + ky) * k + kx) * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + (ky as isize - pad as isize) * dil;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let src = &plane[sy as usize * w..][..w];
                        let dst = &mut row[y * w..][..w];
                        let dx = (kx as isize - pad as isize) * dil;
                        let lo = (-dx).max(0) as usize;
                        let hi = (w as isize - dx).min(w as isize) as usize;
                        if lo < hi {
                            let s0 = (lo as isize + dx) as usize;
                            dst[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im<T: Scalar>(&self, cols: &[T], h: usize, w: usize, dx_out: &mut [T]) {
        let (k, pad, dil) = (self.k, self.k / 2, self.dilation as isize);
        let hw = h * w;
        for c in 0..self.cin {
            let plane = &mut dx_out[c * hw..(c + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((c * k + ky) * k + kx) * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + (ky as isize - pad as isize) * dil;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[sy as usize * w..][..w];
                        let src = &row[y * w..][..w];
                        let dx = (kx as isize - pad as isize) * dil;
                        let lo = (-dx).max(0) as usize;
                        let hi = (w as isize - dx).min(w as isize) as usize;
                        for x in lo..hi {
                            let d = &mut dst[(x as isize + dx) as usize];
                            *d = *d + src[x];
                        }
                    }
                }
            }
        }
    }

    /// Returns the output `(cout, h, w)` and the column buffer needed by [`Conv::backward`].
    pub fn forward<T: Scalar>(&self, params: &[T], x: &[T], h: usize, w: usize) -> (Vec<T>, Vec<T>) {
        let hw = h * w;
        debug_assert_eq!(x.len(), self.cin * hw);
        let (weight, bias) = params[..self.param_len()].split_at(self.weight_len());
        let cols = if self.k == 1 {
            x.to_vec()
        } else {
            self.im2col(x, h, w)
        };
        let mut out = vec![T::zero(); self.cout * hw];
        for (o, &b) in out.chunks_mut(hw).zip(bias) {
            o.iter_mut().for_each(|v| *v = b);
        }
        let kk = self.cin * self.k * self.k;
        T::gemm(self.cout, kk, hw, weight, (kk as isize, 1), &cols, (hw as isize, 1), T::one(), &mut out);
        (out, cols)
    }

    /// Accumulates parameter gradients into `dparams`; returns the input gradient when `need_dx`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward<T: Scalar>(
        &self,
        params: &[T],
        cols: &[T],
        dout: &[T],
        h: usize,
        w: usize,
        dparams: &mut [T],
        need_dx: bool,
    ) -> Option<Vec<T>> {
        let hw = h * w;
        let kk = self.cin * self.k * self.k;
        let (dweight, dbias) = dparams[..self.param_len()].split_at_mut(self.weight_len());
        // dW += dout · colsᵀ
        T::gemm(self.cout, hw, kk, dout, (hw as isize, 1), cols, (1, hw as isize), T::one(), dweight);
        for (db, d) in dbias.iter_mut().zip(dout.chunks(hw)) {
            *db = *db + d.iter().copied().sum::<T>();
        }
        if !need_dx {
            return None;
        }
        let weight = &params[..self.weight_len()];
        // dcols = Wᵀ · dout
        let mut dcols = vec![T::zero(); kk * hw];
        T::gemm(kk, self.cout, hw, weight, (1, kk as isize), dout, (hw as isize, 1), T::zero(), &mut dcols);
        if self.k == 1 {
            return Some(dcols);
        }
        let mut dx = vec![T::zero(); self.cin * hw];
        self.col2im(&dcols, h, w, &mut dx);
        Some(dx)
    }
}

/// 2×2 average pooling with stride 2 over `(c, h, w)`; odd trailing rows/columns are dropped.
pub fn avgpool2<T: Scalar>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let q = T::of(0.25);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let p = &x[ch * h * w..];
        for y in 0..oh {
            for x2 in 0..ow {
                let i = 2 * y * w + 2 * x2;
                out.push((p[i] + p[i + 1] + p[i + w] + p[i + w + 1]) * q);
            }
        }
    }
    out
}

pub fn avgpool2_backward<T: Scalar>(dout: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let q = T::of(0.25);
    let mut dx = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            for x2 in 0..ow {
                let g = dout[(ch * oh + y) * ow + x2] * q;
                let base = ch * h * w + 2 * y * w + 2 * x2;
                for off in [0, 1, w, w + 1] {
                    dx[base + off] = g;
                }
            }
        }
    }
    dx
}

/// Fully connected layer, weight `(out, in)` row-major followed by bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn param_len(&self) -> usize {
        self.input * self.output + self.output
    }

    pub fn forward<T: Scalar>(&self, params: &[T], x: &[T]) -> Vec<T> {
        let (w, b) = params[..self.param_len()].split_at(self.input * self.output);
        (0..self.output)
            .map(|o| {
                w[o * self.input..(o + 1) * self.input]
                    .iter()
                    .zip(x)
                    .fold(b[o], |acc, (&wi, &xi)| acc + wi * xi)
            })
            .collect()
    }

    pub fn backward<T: Scalar>(&self, params: &[T], x: &[T], dout: &[T], dparams: &mut [T]) -> Vec<T> {
        let n_w = self.input * self.output;
        let w = &params[..n_w];
        let (dw, db) = dparams[..self.param_len()].split_at_mut(n_w);
        let mut dx = vec![T::zero(); self.input];
        for (o, &g) in dout.iter().enumerate() {
            db[o] = db[o] + g;
            let row = o * self.input;
            for i in 0..self.input {
                dw[row + i] = dw[row + i] + g * x[i];
                dx[i] = dx[i] + g * w[row + i];
            }
        }
        dx
    }
}

/// He-style uniform initialization for a conv or linear weight block with the given fan-in;
/// biases start at zero.
pub fn init_uniform<R: rand::Rng + ?Sized>(weights: &mut [f32], fan_in: usize, rng: &mut R) {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt() as f32;
    for w in weights {
        *w = rng.random_range(-bound..=bound);
    }
}

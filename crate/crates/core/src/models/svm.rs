use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub gamma: f64,
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            c: 1.0,
            tol: 1e-3,
            max_iter: 100_000,
        }
    }
}

/// RBF-kernel SVM; `decision(x) = sum_t coef_t K(sv_t, x) - rho`, positive for the `true` class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svm {
    pub dim: usize,
    pub gamma: f64,
    /// Flat `n_sv × dim`.
    pub support: Vec<f64>,
    /// `alpha_t * y_t` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

impl Svm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support
            .chunks(self.dim)
            .zip(&self.coef)
            .map(|(s, c)| c * rbf(self.gamma, s, x))
            .sum::<f64>()
            - self.rho
    }

    pub fn n_support(&self) -> usize {
        self.coef.len()
    }

    /// Soft-margin dual solved by SMO with maximal-violating-pair working set selection,
    /// stopping once the KKT violation drops below `params.tol`.
    pub fn train(x: &[f64], dim: usize, labels: &[bool], params: &SvmParams) -> Result<Self, ModelError> {
        let n = labels.len();
        if dim == 0 || x.len() != n * dim {
            return Err(ModelError::Precondition("feature array shape mismatch".into()));
        }
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            return Err(ModelError::Precondition("SVM training needs both classes".into()));
        }
        if !(params.gamma > 0.0 && params.c > 0.0) {
            return Err(ModelError::Config("gamma and C must be positive".into()));
        }
        let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
        let row = |i: usize| &x[i * dim..(i + 1) * dim];
        let kernel_row = |i: usize| -> Vec<f64> { (0..n).map(|t| rbf(params.gamma, row(i), row(t))).collect() };
        let c = params.c;
        let mut alpha = vec![0.0f64; n];
        let mut grad = vec![-1.0f64; n];
        let mut iter = 0;
        loop {
            let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
            let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
            for t in 0..n {
                let v = -y[t] * grad[t];
                let up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
                let low = (y[t] < 0.0 && alpha[t] < c) || (y[t] > 0.0 && alpha[t] > 0.0);
                if up && v > gmax {
                    gmax = v;
                    i = t;
                }
                if low && v < gmin {
                    gmin = v;
                    j = t;
                }
            }
            if gmax - gmin < params.tol {
                break;
            }
            if iter >= params.max_iter {
                return Err(ModelError::Training {
                    epoch: 0,
                    batch: iter,
                    msg: format!("SMO did not converge in {} iterations (gap {})", params.max_iter, gmax - gmin),
                });
            }
            iter += 1;
            let ki = kernel_row(i);
            let kj = kernel_row(j);
            let quad = (ki[i] + kj[j] - 2.0 * ki[j]).max(1e-12);
            let (old_i, old_j) = (alpha[i], alpha[j]);
            if y[i] != y[j] {
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            for t in 0..n {
                grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
            }
        }

        // rho from free vectors, or the midpoint of the feasible interval
        let (mut sum, mut nfree) = (0.0, 0usize);
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        for t in 0..n {
            let yg = y[t] * grad[t];
            if alpha[t] > 0.0 && alpha[t] < c {
                sum += yg;
                nfree += 1;
            } else if (alpha[t] >= c && y[t] < 0.0) || (alpha[t] <= 0.0 && y[t] > 0.0) {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        }
        let rho = if nfree > 0 { sum / nfree as f64 } else { 0.5 * (ub + lb) };
        let mut support = Vec::new();
        let mut coef = Vec::new();
        for t in 0..n {
            if alpha[t] > 0.0 {
                support.extend_from_slice(row(t));
                coef.push(alpha[t] * y[t]);
            }
        }
        Ok(Self {
            dim,
            gamma: params.gamma,
            support,
            coef,
            rho,
            iterations: iter,
        })
    }
}

/// Sigmoid calibration `P(true | f) = 1 / (1 + exp(a f + b))` fitted by Newton's method with
/// Platt's smoothed targets.
pub fn platt_fit(decisions: &[f64], labels: &[bool]) -> (f64, f64) {
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let t: Vec<f64> = labels.iter().map(|&l| if l { hi } else { lo }).collect();
    let (mut a, mut b) = (0.0f64, ((n_neg + 1.0) / (n_pos + 1.0)).ln());
    let sigma = 1e-12;
    let objective = |a: f64, b: f64| -> f64 {
        decisions
            .iter()
            .zip(&t)
            .map(|(&f, &ti)| {
                let fab = f * a + b;
                if fab >= 0.0 {
                    ti * fab + (1.0 + (-fab).exp()).ln()
                } else {
                    (ti - 1.0) * fab + (1.0 + fab.exp()).ln()
                }
            })
            .sum()
    };
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (sigma, sigma, 0.0, 0.0, 0.0);
        for (&f, &ti) in decisions.iter().zip(&t) {
            let fab = f * a + b;
            let (p, q) = if fab >= 0.0 {
                let e = (-fab).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = fab.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = ti - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < 1e-10 {
            break;
        }
    }
    (a, b)
}

pub fn platt_prob(a: f64, b: f64, f: f64) -> f64 {
    let fab = a * f + b;
    if fab >= 0.0 {
        let e = (-fab).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + fab.exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<f64>, Vec<bool>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..10 {
            let t = i as f64 / 10.0;
            x.extend([1.0 + t, 2.0 - t]);
            y.push(true);
            x.extend([-1.0 - t, -2.0 + t]);
            y.push(false);
        }
        (x, y)
    }

    #[test]
    fn separable_set_fully_fit() {
        let (x, y) = toy();
        let svm = Svm::train(&x, 2, &y, &SvmParams::default()).unwrap();
        for (row, &l) in x.chunks(2).zip(&y) {
            assert_eq!(svm.decision(row) > 0.0, l);
        }
    }

    #[test]
    fn flipped_labels_flip_sign() {
        let (x, y) = toy();
        let flipped: Vec<bool> = y.iter().map(|l| !l).collect();
        let a = Svm::train(&x, 2, &y, &SvmParams::default()).unwrap();
        let b = Svm::train(&x, 2, &flipped, &SvmParams::default()).unwrap();
        for row in x.chunks(2) {
            assert!((a.decision(row) + b.decision(row)).abs() < 1e-2);
        }
    }

    #[test]
    fn contradictory_points_converge() {
        let x = vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let y = vec![true, false, true, false];
        let svm = Svm::train(&x, 2, &y, &SvmParams::default()).unwrap();
        assert!(svm.decision(&[0.0, 0.0]).is_finite());
        assert!(Svm::train(&x, 2, &[true; 4], &SvmParams::default()).is_err());
    }

    #[test]
    fn platt_orders_probabilities() {
        let f = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let l = [false, false, true, false, true, true];
        let (a, b) = platt_fit(&f, &l);
        assert!(a < 0.0);
        assert!(platt_prob(a, b, 2.0) > platt_prob(a, b, -2.0));
    }
}

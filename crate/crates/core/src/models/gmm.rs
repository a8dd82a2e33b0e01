use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;

pub const VAR_FLOOR: f64 = 1e-6;
pub const MAX_ITER: usize = 200;
pub const TOL: f64 = 1e-6;

/// Diagonal-covariance Gaussian mixture; means and variances are `K×D` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub vars: Vec<f64>,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl Mixture {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    /// `log(w_k) + log N(x; mu_k, diag(var_k))` for every component.
    fn component_logs(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let c = -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();
        for (k, o) in out.iter_mut().enumerate() {
            let mu = &self.means[k * d..(k + 1) * d];
            let var = &self.vars[k * d..(k + 1) * d];
            let mut s = c;
            for i in 0..d {
                let diff = x[i] - mu[i];
                s -= 0.5 * (var[i].ln() + diff * diff / var[i]);
            }
            *o = self.weights[k].ln() + s;
        }
    }

    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.components()];
        self.component_logs(x, &mut buf);
        log_sum_exp(&buf)
    }

    /// Mean per-point log-likelihood of a flat `N×D` array.
    pub fn mean_log_likelihood(&self, data: &[f64]) -> f64 {
        let n = data.len() / self.dim;
        data.chunks(self.dim).map(|x| self.log_likelihood(x)).sum::<f64>() / n as f64
    }
}

/// Row indices: the first uniform, each next one with probability proportional to the squared
/// distance to the nearest row already chosen.
fn kmeans_pp(data: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = data.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = (0..n).map(|i| d2(row(i), row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        };
        chosen.push(next);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(d2(row(i), row(next)));
        }
    }
    chosen
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub mixture: Mixture,
    /// Mean log-likelihood after every EM iteration.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

/// EM for a `k`-component diagonal mixture over the rows of the flat `N×dim` array `data`.
/// Means start at rows picked by k-means++ seeding with `seed`; variances at the data variance.
pub fn fit_skin_gmm(data: &[f64], dim: usize, k: usize, seed: u64) -> Result<GmmFit, ModelError> {
    if k == 0 || dim == 0 {
        return Err(ModelError::Precondition("components and dimension must be positive".into()));
    }
    if data.len() % dim != 0 {
        return Err(ModelError::Precondition("data length is not a multiple of the dimension".into()));
    }
    let n = data.len() / dim;
    if n < 10 * k {
        return Err(ModelError::Precondition(format!(
            "{n} points is too few for {k} components (need {})",
            10 * k
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::Precondition("non-finite data".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean_all = vec![0.0; dim];
    for x in data.chunks(dim) {
        for i in 0..dim {
            mean_all[i] += x[i] / n as f64;
        }
    }
    let mut var_all = vec![0.0; dim];
    for x in data.chunks(dim) {
        for i in 0..dim {
            var_all[i] += (x[i] - mean_all[i]).powi(2) / n as f64;
        }
    }
    let idx = kmeans_pp(data, dim, k, &mut rng);
    let mut mix = Mixture {
        dim,
        weights: vec![1.0 / k as f64; k],
        means: idx.iter().flat_map(|&i| data[i * dim..(i + 1) * dim].to_vec()).collect(),
        vars: (0..k).flat_map(|_| var_all.iter().map(|v| v.max(VAR_FLOOR))).collect(),
    };

    let mut lls = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    let mut converged = false;
    let mut resp = vec![0.0; n * k];
    for _ in 0..MAX_ITER {
        // E step
        for (x, r) in data.chunks(dim).zip(resp.chunks_mut(k)) {
            mix.component_logs(x, r);
            let lse = log_sum_exp(r);
            r.iter_mut().for_each(|v| *v = (*v - lse).exp());
        }
        // M step
        for c in 0..k {
            let nk: f64 = resp.chunks(k).map(|r| r[c]).sum();
            if nk <= 1e-12 {
                mix.weights[c] = 0.0;
                continue;
            }
            mix.weights[c] = nk / n as f64;
            let mut mu = vec![0.0; dim];
            for (x, r) in data.chunks(dim).zip(resp.chunks(k)) {
                for i in 0..dim {
                    mu[i] += r[c] * x[i];
                }
            }
            mu.iter_mut().for_each(|m| *m /= nk);
            let mut var = vec![0.0; dim];
            for (x, r) in data.chunks(dim).zip(resp.chunks(k)) {
                for i in 0..dim {
                    var[i] += r[c] * (x[i] - mu[i]).powi(2);
                }
            }
            for i in 0..dim {
                mix.means[c * dim + i] = mu[i];
                mix.vars[c * dim + i] = (var[i] / nk).max(VAR_FLOOR);
            }
        }
        let ll = mix.mean_log_likelihood(data);
        lls.push(ll);
        if (ll - prev).abs() < TOL {
            converged = true;
            break;
        }
        prev = ll;
    }
    Ok(GmmFit {
        mixture: mix,
        log_likelihoods: lls,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn constant_data_hits_floor() {
        let data = vec![0.3; 40];
        let fit = fit_skin_gmm(&data, 2, 1, 0).unwrap();
        assert!((fit.mixture.means[0] - 0.3).abs() < 1e-12);
        assert_eq!(fit.mixture.vars, vec![VAR_FLOOR; 2]);
        assert!(fit_skin_gmm(&data, 2, 3, 0).is_err());
        assert!(fit_skin_gmm(&data, 2, 0, 0).is_err());
    }

    #[test]
    fn recovers_two_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut data = Vec::new();
        for i in 0..400 {
            let c = if i % 2 == 0 { 1.0 } else { -1.0 };
            data.push(c + noise.sample(&mut rng));
        }
        let fit = fit_skin_gmm(&data, 1, 2, 9).unwrap();
        let mut means = fit.mixture.means.clone();
        means.sort_by(f64::total_cmp);
        assert!((means[0] + 1.0).abs() < 0.02 && (means[1] - 1.0).abs() < 0.02, "{means:?}");
        assert!((fit.mixture.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for w in fit.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }
}

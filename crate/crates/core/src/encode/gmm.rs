use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::kmeans::{train_codebook_with, KMeansConfig, SearchMode};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel<T> {
    pub weights: Array1<T>,
    pub means: Array2<T>,
    pub variances: Array2<T>,
}

impl<T: Real> GmmModel<T> {
    pub fn new(weights: Array1<T>, means: Array2<T>, variances: Array2<T>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.nrows() != k || variances.dim() != means.dim() {
            return Err(Error::InvalidInput("inconsistent GMM parameter shapes".into()));
        }
        if variances.iter().any(|v| !(v.as_f64() > 0.0)) {
            return Err(Error::InvalidInput("GMM variances must be positive".into()));
        }
        let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
        if weights.iter().any(|w| w.as_f64() < 0.0) || (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!("GMM weights must be a distribution (sum {total})")));
        }
        Ok(Self { weights, means, variances })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    /// Per-row component log-densities `ln w_k + ln N(x | μ_k, Σ_k)`, n×K.
    pub(crate) fn weighted_log_densities(&self, x: ArrayView2<'_, T>) -> Array2<f64> {
        let (k, d) = self.means.dim();
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let consts: Vec<f64> = (0..k)
            .map(|c| {
                let logdet: f64 = self.variances.row(c).iter().map(|v| v.as_f64().ln()).sum();
                self.weights[c].as_f64().ln() - 0.5 * (d as f64 * ln2pi + logdet)
            })
            .collect();
        let mut out = Array2::<f64>::zeros((x.nrows(), k));
        for (i, row) in x.rows().into_iter().enumerate() {
            for c in 0..k {
                let mut q = 0.0;
                for j in 0..d {
                    let diff = row[j].as_f64() - self.means[[c, j]].as_f64();
                    q += diff * diff / self.variances[[c, j]].as_f64();
                }
                out[[i, c]] = consts[c] - 0.5 * q;
            }
        }
        out
    }

    /// Posteriors γ_k(x) (n×K) and the total log-likelihood.
    pub fn posteriors(&self, x: ArrayView2<'_, T>) -> (Array2<f64>, f64) {
        let mut lp = self.weighted_log_densities(x);
        let mut total = 0.0;
        for mut row in lp.rows_mut() {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
            let lse = m + s.ln();
            total += lse;
            row.mapv_inplace(|v| (v - lse).exp());
        }
        (lp, total)
    }

    /// `Σ_x ln p(x)`.
    pub fn log_likelihood(&self, x: ArrayView2<'_, T>) -> f64 {
        self.posteriors(x).1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop when the mean per-sample log-likelihood improves by less.
    pub tol: f64,
    /// Variance floor relative to the mean per-dimension data variance.
    pub variance_floor: f64,
}

impl GmmConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, seed, max_iter: 200, tol: 1e-6, variance_floor: 1e-4 }
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit<T> {
    pub model: GmmModel<T>,
    /// Mean per-sample log-likelihood after initialisation and each EM step.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

pub fn train_gmm<T: Real>(descriptors: ArrayView2<'_, T>, k: usize, seed: u64) -> Result<GmmModel<T>> {
    Ok(train_gmm_with(descriptors, &GmmConfig::new(k, seed))?.model)
}

/// EM for a diagonal GMM, initialised from k-means.
pub fn train_gmm_with<T: Real>(x: ArrayView2<'_, T>, cfg: &GmmConfig) -> Result<GmmFit<T>> {
    let (n, d) = x.dim();
    if cfg.k == 0 {
        return Err(Error::InvalidInput("GMM needs at least one component".into()));
    }
    if n <= cfg.k {
        return Err(Error::InsufficientData(format!("{n} descriptors for {} components", cfg.k)));
    }
    let xf = x.mapv(|v| v.as_f64());
    let data_var = xf.var_axis(ndarray::Axis(0), 0.0).mean().unwrap_or(0.0);
    let floor = (cfg.variance_floor * data_var).max(f64::MIN_POSITIVE);

    let km = train_codebook_with(xf.view(), &KMeansConfig::new(cfg.k, SearchMode::Exact, cfg.seed))?;
    let centers = km.codebook.centers;
    // Hard responsibilities from the k-means partition.
    let mut resp = Array2::<f64>::zeros((n, cfg.k));
    for (i, row) in xf.rows().into_iter().enumerate() {
        let (c, _) = super::kmeans::nearest(&centers, row);
        resp[[i, c]] = 1.0;
    }
    let mut model = m_step(&xf, &resp, floor, d)?;
    let mut history = vec![model.log_likelihood(xf.view()) / n as f64];
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let (post, _) = model.posteriors(xf.view());
        let next = m_step(&xf, &post, floor, d)?;
        let ll = next.log_likelihood(xf.view()) / n as f64;
        let gain = ll - history[history.len() - 1];
        model = next;
        history.push(ll);
        if gain.abs() < cfg.tol {
            converged = true;
            break;
        }
    }
    let model = GmmModel {
        weights: model.weights.mapv(T::lit),
        means: model.means.mapv(T::lit),
        variances: model.variances.mapv(T::lit),
    };
    Ok(GmmFit { model, log_likelihoods: history, converged })
}

fn m_step(x: &Array2<f64>, resp: &Array2<f64>, floor: f64, d: usize) -> Result<GmmModel<f64>> {
    let n = x.nrows();
    let k = resp.ncols();
    let nk = resp.sum_axis(ndarray::Axis(0));
    let mut weights = Array1::<f64>::zeros(k);
    let mut means = Array2::<f64>::zeros((k, d));
    let mut vars = Array2::<f64>::zeros((k, d));
    let sum_nk: f64 = nk.sum();
    for c in 0..k {
        // A component with no responsibility keeps a tiny weight at the
        // data mean so the model stays well defined.
        let w = nk[c].max(1e-10);
        weights[c] = w;
        for i in 0..n {
            let r = resp[[i, c]];
            if r != 0.0 {
                for j in 0..d {
                    means[[c, j]] += r * x[[i, j]];
                }
            }
        }
        if nk[c] > 0.0 {
            means.row_mut(c).mapv_inplace(|v| v / nk[c]);
        } else {
            means.row_mut(c).assign(&x.mean_axis(ndarray::Axis(0)).expect("n > 0"));
        }
        for i in 0..n {
            let r = resp[[i, c]];
            if r != 0.0 {
                for j in 0..d {
                    let diff = x[[i, j]] - means[[c, j]];
                    vars[[c, j]] += r * diff * diff;
                }
            }
        }
        for j in 0..d {
            let v = if nk[c] > 0.0 { vars[[c, j]] / nk[c] } else { 0.0 };
            vars[[c, j]] = v.max(floor);
        }
    }
    let total = sum_nk.max(weights.sum());
    weights.mapv_inplace(|w| w / total);
    let s = weights.sum();
    weights.mapv_inplace(|w| w / s);
    Ok(GmmModel { weights, means, variances: vars })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_component_closed_form() {
        let x = array![[0.0f64, 1.0], [2.0, 1.0], [4.0, 4.0]];
        let m = train_gmm(x.view(), 1, 0).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-15);
        assert!((m.means[[0, 0]] - 2.0).abs() < 1e-12 && (m.means[[0, 1]] - 2.0).abs() < 1e-12);
        assert!((m.variances[[0, 0]] - 8.0 / 3.0).abs() < 1e-12);
        assert!((m.variances[[0, 1]] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn needs_more_samples_than_components() {
        let x = array![[0.0], [1.0]];
        assert!(matches!(train_gmm(x.view(), 2, 0), Err(Error::InsufficientData(_))));
    }
}

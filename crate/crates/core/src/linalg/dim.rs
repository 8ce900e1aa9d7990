//! Intrinsic-dimensionality estimators.

use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimMethod {
    Eig,
    Mle,
    Gmst,
    Cdm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimEstimate {
    pub value: f64,
    pub method: DimMethod,
    /// `max(1, round(value))`, clamped to the ambient dimension.
    pub rounded: usize,
}

impl DimEstimate {
    fn new(value: f64, method: DimMethod, ambient: usize) -> Self {
        let rounded = (value.round().max(1.0) as usize).min(ambient.max(1));
        Self { value, method, rounded }
    }
}

/// Smallest d whose leading eigenvalues hold at least `energy` of the total.
pub fn estimate_dim_eig<T: Real>(eigenvalues: &[T], energy: f64) -> Result<DimEstimate> {
    if eigenvalues.is_empty() {
        return Err(Error::InvalidInput("empty spectrum".into()));
    }
    if !(energy > 0.0 && energy <= 1.0) {
        return Err(Error::InvalidInput(format!("energy {energy} outside (0, 1]")));
    }
    let vals: Vec<f64> = eigenvalues.iter().map(|v| v.as_f64().max(0.0)).collect();
    if vals.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidInput("eigenvalues must be sorted descending".into()));
    }
    let total: f64 = vals.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateSpectrum("all eigenvalues are zero".into()));
    }
    let mut acc = 0.0;
    for (i, v) in vals.iter().enumerate() {
        acc += v;
        // Relative slack so that energy = 1.0 is reachable despite rounding.
        if acc / total >= energy - 1e-12 {
            return Ok(DimEstimate::new((i + 1) as f64, DimMethod::Eig, vals.len()));
        }
    }
    Ok(DimEstimate::new(vals.len() as f64, DimMethod::Eig, vals.len()))
}

pub fn estimate_dim_mle<T: Real>(data: &FeatureMatrix<T>, k_min: usize, k_max: usize) -> Result<DimEstimate> {
    estimate_dim_mle_rows(data.rows(), k_min, k_max)
}

/// Levina–Bickel MLE, averaged over points and then over k ∈ [k_min, k_max].
pub fn estimate_dim_mle_rows<T: Real>(x: ArrayView2<'_, T>, k_min: usize, k_max: usize) -> Result<DimEstimate> {
    let n = x.nrows();
    if k_min < 2 || k_max < k_min {
        return Err(Error::InvalidInput(format!("invalid k range [{k_min}, {k_max}]")));
    }
    if n <= k_max {
        return Err(Error::InsufficientData(format!(
            "MLE with k_max = {k_max} needs more than {k_max} samples, got {n}"
        )));
    }
    let rows = to_f64_rows(x);
    // Sorted k_max nearest-neighbour distances per point.
    let mut knn: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut min_pos = f64::INFINITY;
    let mut dist = vec![0.0; n - 1];
    for i in 0..n {
        let mut c = 0;
        for j in 0..n {
            if j != i {
                dist[c] = euclid(&rows[i], &rows[j]);
                c += 1;
            }
        }
        dist.select_nth_unstable_by(k_max - 1, |a, b| a.total_cmp(b));
        let mut near = dist[..k_max].to_vec();
        near.sort_by(|a, b| a.total_cmp(b));
        if let Some(p) = near.iter().find(|&&d| d > 0.0) {
            min_pos = min_pos.min(*p);
        }
        knn.push(near);
    }
    if !min_pos.is_finite() {
        return Err(Error::DegenerateData("all neighbour distances are zero".into()));
    }
    let fill = min_pos * 1e-6;
    for near in &mut knn {
        for d in near.iter_mut() {
            if *d == 0.0 {
                *d = fill;
            }
        }
    }
    let mut total = 0.0;
    for k in k_min..=k_max {
        let mut sum = 0.0;
        for near in &knn {
            let tk = near[k - 1];
            let s: f64 = near[..k - 1].iter().map(|tj| (tk / tj).ln()).sum();
            let mean_log = s / (k - 1) as f64;
            // All k neighbours equidistant: the estimate diverges; cap it at
            // the ambient dimension rather than propagate infinity.
            sum += if mean_log > 0.0 { 1.0 / mean_log } else { x.ncols() as f64 };
        }
        total += sum / n as f64;
    }
    let value = total / (k_max - k_min + 1) as f64;
    Ok(DimEstimate::new(value, DimMethod::Mle, x.ncols()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FractalMethod {
    Gmst,
    Cdm,
}

/// Parameters of the fractal estimators. Percentiles are in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractalParams {
    pub seed: u64,
    /// GMST: resamples per subsample size.
    pub resamples: usize,
    /// CDM: lower and upper pairwise-distance percentiles bounding the fit.
    pub cdm_low_percentile: f64,
    pub cdm_high_percentile: f64,
    /// CDM: number of log-spaced radii in the fit.
    pub cdm_points: usize,
}

impl Default for FractalParams {
    fn default() -> Self {
        Self { seed: 0, resamples: 5, cdm_low_percentile: 0.1, cdm_high_percentile: 10.0, cdm_points: 20 }
    }
}

pub fn estimate_dim_fractal<T: Real>(
    data: &FeatureMatrix<T>,
    method: FractalMethod,
    params: &FractalParams,
) -> Result<DimEstimate> {
    estimate_dim_fractal_rows(data.rows(), method, params)
}

pub fn estimate_dim_fractal_rows<T: Real>(
    x: ArrayView2<'_, T>,
    method: FractalMethod,
    params: &FractalParams,
) -> Result<DimEstimate> {
    let n = x.nrows();
    if n < 50 {
        return Err(Error::InsufficientData(format!("fractal estimators need n >= 50, got {n}")));
    }
    let rows = to_f64_rows(x);
    if rows.iter().all(|r| r == &rows[0]) {
        return Err(Error::DegenerateData("all points are equal".into()));
    }
    let value = match method {
        FractalMethod::Gmst => gmst(&rows, params)?,
        FractalMethod::Cdm => cdm(&rows, params)?,
    };
    let method = match method {
        FractalMethod::Gmst => DimMethod::Gmst,
        FractalMethod::Cdm => DimMethod::Cdm,
    };
    Ok(DimEstimate::new(value, method, x.ncols()))
}

fn gmst(rows: &[Vec<f64>], params: &FractalParams) -> Result<f64> {
    let n = rows.len();
    let mut rng = Pcg64Mcg::seed_from_u64(params.seed);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for size in [n / 8, n / 4, n / 2, n] {
        for _ in 0..params.resamples.max(1) {
            let idx = sample(&mut rng, n, size).into_vec();
            let len = mst_length(rows, &idx);
            if len > 0.0 {
                xs.push((size as f64).ln());
                ys.push(len.ln());
            }
        }
    }
    let slope = ls_slope(&xs, &ys).ok_or_else(|| Error::DegenerateData("GMST fit failed".into()))?;
    if slope >= 1.0 {
        return Err(Error::DegenerateData(format!("GMST slope {slope} >= 1")));
    }
    Ok(1.0 / (1.0 - slope))
}

/// Total Euclidean MST length over the selected points (Prim, O(m²)).
fn mst_length(rows: &[Vec<f64>], idx: &[usize]) -> f64 {
    let m = idx.len();
    if m < 2 {
        return 0.0;
    }
    let mut in_tree = vec![false; m];
    let mut best = vec![f64::INFINITY; m];
    best[0] = 0.0;
    let mut total = 0.0;
    for _ in 0..m {
        let mut u = usize::MAX;
        let mut bu = f64::INFINITY;
        for v in 0..m {
            if !in_tree[v] && best[v] < bu {
                bu = best[v];
                u = v;
            }
        }
        in_tree[u] = true;
        total += bu;
        let ru = &rows[idx[u]];
        for v in 0..m {
            if !in_tree[v] {
                let d = euclid(ru, &rows[idx[v]]);
                if d < best[v] {
                    best[v] = d;
                }
            }
        }
    }
    total
}

fn cdm(rows: &[Vec<f64>], params: &FractalParams) -> Result<f64> {
    let n = rows.len();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(euclid(&rows[i], &rows[j]));
        }
    }
    d.sort_by(|a, b| a.total_cmp(b));
    let lo = percentile(&d, params.cdm_low_percentile);
    let hi = percentile(&d, params.cdm_high_percentile);
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::DegenerateData("pairwise-distance range is empty".into()));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let pts = params.cdm_points.max(2);
    let total = d.len() as f64;
    let mut xs = Vec::with_capacity(pts);
    let mut ys = Vec::with_capacity(pts);
    for i in 0..pts {
        let lr = a + (b - a) * i as f64 / (pts - 1) as f64;
        let r = lr.exp();
        let count = d.partition_point(|&x| x <= r);
        if count > 0 {
            xs.push(lr);
            ys.push((count as f64 / total).ln());
        }
    }
    ls_slope(&xs, &ys).ok_or_else(|| Error::DegenerateData("CDM fit failed".into()))
}

/// Linear-interpolated percentile of sorted data (numpy's default).
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn to_f64_rows<T: Real>(x: ArrayView2<'_, T>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eig_examples() {
        assert_eq!(estimate_dim_eig(&[99.0, 1.0], 0.99).unwrap().rounded, 1);
        assert_eq!(estimate_dim_eig(&[1.0, 1.0, 1.0, 1.0], 1.0).unwrap().rounded, 4);
        assert!(matches!(estimate_dim_eig(&[0.0f64, 0.0], 0.5), Err(Error::DegenerateSpectrum(_))));
        assert!(estimate_dim_eig(&[1.0, 2.0], 0.5).is_err());
    }

    #[test]
    fn percentile_matches_numpy_linear() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 50.0), 2.5);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 4.0);
    }

    #[test]
    fn mst_of_collinear_points() {
        let rows = vec![vec![0.0], vec![3.0], vec![1.0], vec![2.0]];
        assert_eq!(mst_length(&rows, &[0, 1, 2, 3]), 3.0);
    }

    #[test]
    fn mle_needs_enough_points() {
        let x = ndarray::Array2::<f64>::zeros((5, 2));
        assert!(matches!(estimate_dim_mle_rows(x.view(), 6, 12), Err(Error::InsufficientData(_))));
    }
}

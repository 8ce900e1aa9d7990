use std::collections::BTreeMap;

use ndarray::{concatenate, s, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;

use crate::error::{Error, Result};
use crate::linalg::{fit_pca_rows, singular_values};
use crate::matrix::FeatureMatrix;
use crate::scalar::Real;

/// Default cap on subspace dimensions.
pub const DEFAULT_D_MAX: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fold {
    A,
    B,
    /// Singleton classes: always in the training side.
    Train,
}

/// Two-fold, class-stratified fold assignment driven by `seed`.
fn assign_folds(labels: &[String], seed: u64) -> Vec<Fold> {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l.as_str()).or_default().push(i);
    }
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    let mut folds = vec![Fold::Train; labels.len()];
    let mut flip = false;
    for idx in by_class.values_mut() {
        if idx.len() < 2 {
            continue;
        }
        idx.shuffle(&mut rng);
        for &i in idx.iter() {
            folds[i] = if flip { Fold::B } else { Fold::A };
            flip = !flip;
        }
    }
    folds
}

/// Picks the SA subspace dimension by two-fold cross-validated 1-NN error
/// on the labeled source data; ties resolve to the smallest d.
pub fn select_dim_sa<T: Real>(source: &FeatureMatrix<T>, d_max: usize, seed: u64) -> Result<usize> {
    let labels =
        source.labels().ok_or_else(|| Error::MissingLabels("dimension selection needs labeled source data".into()))?;
    let n = source.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 source samples, got {n}")));
    }
    let cap = d_max.min(n - 1).min(source.dim()).max(1);
    let classes: std::collections::HashSet<&String> = labels.iter().collect();
    if classes.len() < 2 {
        return Ok(1);
    }
    let pca = fit_pca_rows(source.rows(), cap)?;
    let z = pca.project_rows(source.rows())?;
    let folds = assign_folds(labels, seed);

    let mut dist = vec![0.0f64; n * n];
    let mut best = (f64::INFINITY, 1);
    for d in 0..cap {
        let col = z.column(d);
        for i in 0..n {
            for j in 0..n {
                let diff = (col[i] - col[j]).as_f64();
                dist[i * n + j] += diff * diff;
            }
        }
        let mut err_sum = 0.0;
        let mut used = 0;
        for test_fold in [Fold::A, Fold::B] {
            let mut wrong = 0usize;
            let mut total = 0usize;
            for i in (0..n).filter(|&i| folds[i] == test_fold) {
                let mut arg = usize::MAX;
                let mut bd = f64::INFINITY;
                for j in (0..n).filter(|&j| folds[j] != test_fold) {
                    if dist[i * n + j] < bd {
                        bd = dist[i * n + j];
                        arg = j;
                    }
                }
                if arg != usize::MAX {
                    total += 1;
                    if labels[arg] != labels[i] {
                        wrong += 1;
                    }
                }
            }
            if total > 0 {
                err_sum += wrong as f64 / total as f64;
                used += 1;
            }
        }
        let err = if used > 0 { err_sum / used as f64 } else { 0.0 };
        if err < best.0 {
            best = (err, d + 1);
        }
    }
    Ok(best.1)
}

/// Per-dimension subspace disagreement `D(d) = ½(sin α_d + sin β_d)`,
/// for `d = 1..=d_cap`; α, β are the largest principal angles between the
/// source (resp. target) and the pooled PCA subspaces of dimension d.
pub fn subspace_disagreement<T: Real>(
    source: &FeatureMatrix<T>,
    target: &FeatureMatrix<T>,
    d_cap: usize,
) -> Result<Vec<f64>> {
    if source.dim() != target.dim() {
        return Err(Error::InvalidInput(format!(
            "source dimension {} differs from target dimension {}",
            source.dim(),
            target.dim()
        )));
    }
    let degenerate = |e: Error| match e {
        Error::DegenerateSpectrum(m) => Error::DegenerateData(m),
        other => other,
    };
    let ps = fit_pca_rows(source.rows(), d_cap).map_err(degenerate)?;
    let pt = fit_pca_rows(target.rows(), d_cap).map_err(degenerate)?;
    let pooled =
        concatenate(Axis(0), &[source.rows(), target.rows()]).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let pp = fit_pca_rows(pooled.view(), d_cap).map_err(degenerate)?;
    let mut out = Vec::with_capacity(d_cap);
    for d in 1..=d_cap {
        let sin_max = |x: &ndarray::Array2<T>| -> Result<f64> {
            let c = x.slice(s![.., ..d]).t().dot(&pp.basis.slice(s![.., ..d]));
            let sv = singular_values(c.view())?;
            let cos = sv[sv.len() - 1].as_f64().clamp(0.0, 1.0);
            Ok((1.0 - cos * cos).max(0.0).sqrt())
        };
        out.push(0.5 * (sin_max(&ps.basis)? + sin_max(&pt.basis)?));
    }
    Ok(out)
}

/// GFK dimension by the subspace disagreement measure: the first d at which
/// `D(d)` saturates at 1, minus one, clamped to `[1, d_cap]`; `d_cap` when
/// it never saturates.
pub fn select_dim_sdm<T: Real>(source: &FeatureMatrix<T>, target: &FeatureMatrix<T>, d_cap: usize) -> Result<usize> {
    let cap = d_cap.min(source.len().saturating_sub(1)).min(target.len().saturating_sub(1)).min(source.dim());
    if cap == 0 {
        return Err(Error::InsufficientData("SDM needs at least 2 samples per domain".into()));
    }
    let dis = subspace_disagreement(source, target, cap)?;
    Ok(match dis.iter().position(|v| (v - 1.0).abs() < 1e-6) {
        Some(i) => i.clamp(1, cap),
        None => cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_stratified_and_seeded() {
        let labels: Vec<String> = ["a", "a", "a", "a", "b", "b", "c"].iter().map(|s| s.to_string()).collect();
        let f1 = assign_folds(&labels, 7);
        assert_eq!(f1, assign_folds(&labels, 7));
        assert_eq!(f1[6], Fold::Train);
        let a_count = f1[..4].iter().filter(|f| **f == Fold::A).count();
        assert_eq!(a_count, 2);
        assert_ne!(f1[4], f1[5]);
    }
}

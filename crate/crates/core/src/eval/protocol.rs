use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{evaluate_accuracy, nn_classify, Metric};
use crate::adapt::{learn_gfk, learn_sa, AlignmentModel};
use crate::linalg::fit_pca;
use crate::synth::rng;
use crate::{Error, FeatureMatrix, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplesPerClass {
    All,
    Count(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum AdaptMethod {
    Sa { source_dim: usize, target_dim: usize },
    Gfk { dim: usize },
}

/// Fit both PCA subspaces on all samples and learn the alignment.
pub fn learn_alignment<T: Real>(
    source: &FeatureMatrix<T>,
    target: &FeatureMatrix<T>,
    method: AdaptMethod,
) -> Result<AlignmentModel<T>> {
    match method {
        AdaptMethod::Sa { source_dim, target_dim } => {
            let s = fit_pca(source, source_dim)?;
            let t = fit_pca(target, target_dim)?;
            Ok(AlignmentModel::Sa(learn_sa(&s, &t)?))
        }
        AdaptMethod::Gfk { dim } => {
            let s = fit_pca(source, dim)?;
            let t = fit_pca(target, dim)?;
            Ok(AlignmentModel::Gfk(learn_gfk(&s, &t, dim)?))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub samples_per_class: SamplesPerClass,
    pub repetitions: usize,
    pub seed: u64,
    pub metric: Metric,
    pub adapt: Option<AdaptMethod>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub mean_accuracy: f64,
    /// Sample standard deviation over repetitions (0 for a single run).
    pub std_dev: f64,
    pub repetitions: usize,
    pub per_class_accuracy: BTreeMap<String, f64>,
    pub accuracies: Vec<f64>,
}

/// Repeatedly subsample labelled source images per class and classify every
/// target image. The alignment is learned once from all samples of both domains.
pub fn run_protocol<T: Real>(
    source: &FeatureMatrix<T>,
    target: &FeatureMatrix<T>,
    cfg: &ProtocolConfig,
) -> Result<ProtocolResult> {
    let src_labels = source.labels().ok_or_else(|| Error::MissingLabels("source set has no labels".into()))?;
    let tgt_labels =
        target.labels().ok_or_else(|| Error::MissingLabels("target set needs ground-truth labels".into()))?;
    if cfg.repetitions == 0 {
        return Err(Error::InvalidInput("repetitions must be at least 1".into()));
    }

    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in src_labels.iter().enumerate() {
        by_class.entry(l.as_str()).or_default().push(i);
    }
    let repetitions = match cfg.samples_per_class {
        SamplesPerClass::All => 1,
        SamplesPerClass::Count(0) => return Err(Error::InvalidInput("samples per class must be positive".into())),
        SamplesPerClass::Count(k) => {
            if let Some((c, v)) = by_class.iter().find(|(_, v)| v.len() < k) {
                return Err(Error::InsufficientData(format!(
                    "class '{c}' has {} source samples, {k} requested",
                    v.len()
                )));
            }
            cfg.repetitions
        }
    };

    let model = match cfg.adapt {
        Some(m) => Some(learn_alignment(source, target, m)?),
        None => None,
    };
    let truth: HashMap<String, String> = target.ids().iter().cloned().zip(tgt_labels.iter().cloned()).collect();

    let mut r = rng(cfg.seed);
    let mut accuracies = Vec::with_capacity(repetitions);
    let mut class_hits: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for _ in 0..repetitions {
        let train = match cfg.samples_per_class {
            SamplesPerClass::All => source.clone(),
            SamplesPerClass::Count(k) => {
                let mut idx = Vec::with_capacity(k * by_class.len());
                for rows in by_class.values() {
                    let mut pick: Vec<usize> = sample(&mut r, rows.len(), k).into_iter().map(|j| rows[j]).collect();
                    pick.sort_unstable();
                    idx.extend(pick);
                }
                source.select(&idx)
            }
        };
        let preds = nn_classify(&train, target, cfg.metric, model.as_ref())?;
        accuracies.push(evaluate_accuracy(&preds, &truth)?);
        for p in &preds {
            let t = &truth[&p.sample_id];
            let e = class_hits.entry(t.clone()).or_default();
            e.1 += 1;
            if *t == p.predicted_label {
                e.0 += 1;
            }
        }
    }

    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let std_dev = if accuracies.len() > 1 {
        (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let per_class_accuracy =
        class_hits.into_iter().map(|(c, (hit, tot))| (c, 100.0 * hit as f64 / tot as f64)).collect();
    Ok(ProtocolResult { mean_accuracy: mean, std_dev, repetitions, per_class_accuracy, accuracies })
}

/// One line of a classification results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub detector: String,
    pub descriptor: String,
    pub representation: String,
    pub classifier: String,
    pub acc_one_mean: f64,
    pub acc_one_std: f64,
    pub acc_all: f64,
}

impl TableRow {
    pub const HEADER: &'static str =
        "detector\tdescriptor\trepresentation\tclassifier\tacc_one_mean\tacc_one_std\tacc_all";

    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{:.2}\t{:.2}\t{:.2}",
            self.detector,
            self.descriptor,
            self.representation,
            self.classifier,
            self.acc_one_mean,
            self.acc_one_std,
            self.acc_all
        )
    }
}

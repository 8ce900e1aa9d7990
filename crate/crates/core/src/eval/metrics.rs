use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::Prediction;
use crate::{Error, Result};

/// Percentage of predictions whose label matches `truth`.
pub fn evaluate_accuracy(preds: &[Prediction], truth: &HashMap<String, String>) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::InsufficientData("no predictions to evaluate".into()));
    }
    let mut correct = 0usize;
    for p in preds {
        let t = truth
            .get(&p.sample_id)
            .ok_or_else(|| Error::InvalidInput(format!("no ground truth for sample '{}'", p.sample_id)))?;
        if *t == p.predicted_label {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / preds.len() as f64)
}

/// Stable ordering by (score, id); `higher_is_better` flips the score order only.
pub fn rank_by_score(ids: &[String], scores: &[f64], higher_is_better: bool) -> Vec<(String, f64)> {
    let mut idx: Vec<usize> = (0..ids.len()).collect();
    idx.sort_by(|&a, &b| {
        let o = scores[a].total_cmp(&scores[b]);
        let o = if higher_is_better { o.reverse() } else { o };
        match o {
            Ordering::Equal => ids[a].cmp(&ids[b]),
            o => o,
        }
    });
    idx.into_iter().map(|i| (ids[i].clone(), scores[i])).collect()
}

/// Mean of precision@rank at each relevant hit, normalised by the number of
/// relevant items (unretrieved ones contribute zero). `None` if nothing is relevant.
pub fn average_precision(ranking: &[String], relevant: &HashSet<String>) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, id) in ranking.iter().enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    Some(sum / relevant.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapAveraging {
    /// Average AP within each class, then across classes.
    #[default]
    PerClass,
    /// Plain mean over queries.
    PerQuery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub map: f64,
    pub per_query: BTreeMap<String, f64>,
    pub per_class: BTreeMap<String, f64>,
    /// Queries without any relevant item; left out of every average.
    pub excluded: Vec<String>,
}

pub fn mean_average_precision(
    rankings: &BTreeMap<String, Vec<String>>,
    relevance: &HashMap<String, HashSet<String>>,
    classes: &HashMap<String, String>,
    averaging: MapAveraging,
) -> Result<MapReport> {
    let mut per_query = BTreeMap::new();
    let mut excluded = Vec::new();
    let empty = HashSet::new();
    for (q, ranking) in rankings {
        match average_precision(ranking, relevance.get(q).unwrap_or(&empty)) {
            Some(ap) => {
                per_query.insert(q.clone(), ap);
            }
            None => {
                tracing::warn!(query = %q, "query has no relevant items; excluded from mAP");
                excluded.push(q.clone());
            }
        }
    }
    if per_query.is_empty() {
        return Err(Error::InsufficientData("no query has a relevant item".into()));
    }
    let mut grouped: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (q, ap) in &per_query {
        let class = classes.get(q).cloned().unwrap_or_else(|| q.clone());
        grouped.entry(class).or_default().push(*ap);
    }
    let per_class: BTreeMap<String, f64> =
        grouped.into_iter().map(|(c, v)| (c, v.iter().sum::<f64>() / v.len() as f64)).collect();
    let map = match averaging {
        MapAveraging::PerClass => per_class.values().sum::<f64>() / per_class.len() as f64,
        MapAveraging::PerQuery => per_query.values().sum::<f64>() / per_query.len() as f64,
    };
    Ok(MapReport { map, per_query, per_class, excluded })
}

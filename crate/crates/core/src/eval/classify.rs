use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::adapt::AlignmentModel;
use crate::{Error, FeatureMatrix, Real, Result};

/// How a training (source) sample is compared with a test (target) sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Euclidean,
    SaSim,
    EsaDist,
    GfkSim,
}

impl Metric {
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::SaSim | Metric::GfkSim)
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::SaSim => "sa-sim",
            Metric::EsaDist => "esa-dist",
            Metric::GfkSim => "gfk-sim",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "sa-sim" | "sa" => Ok(Metric::SaSim),
            "esa-dist" | "esa" => Ok(Metric::EsaDist),
            "gfk-sim" | "gfk" => Ok(Metric::GfkSim),
            other => Err(Error::InvalidInput(format!("unknown metric '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub predicted_label: String,
    pub nearest_source_id: String,
    /// Distance or similarity, depending on the metric.
    pub score: f64,
}

/// Label each test row with the label of its best training row.
/// Ties go to the lowest training index.
pub fn nn_classify<T: Real>(
    train: &FeatureMatrix<T>,
    test: &FeatureMatrix<T>,
    metric: Metric,
    model: Option<&AlignmentModel<T>>,
) -> Result<Vec<Prediction>> {
    if train.is_empty() {
        return Err(Error::InsufficientData("training set is empty".into()));
    }
    let labels = train.labels().ok_or_else(|| Error::MissingLabels("training set has no labels".into()))?;
    if train.dim() != test.dim() {
        return Err(Error::InvalidInput(format!(
            "training dimension {} differs from test dimension {}",
            train.dim(),
            test.dim()
        )));
    }

    // Bring both sides into the space the metric compares in; `higher`
    // says which direction wins.
    let (a, b, kind): (Array2<T>, Array2<T>, Kind) = match (metric, model) {
        (Metric::Euclidean, _) => (train.rows().to_owned(), test.rows().to_owned(), Kind::Distance),
        (Metric::SaSim | Metric::EsaDist, Some(AlignmentModel::Sa(m))) => {
            let a = m.map_source_rows(train.rows())?;
            let b = m.map_target_rows(test.rows())?;
            let kind = if metric == Metric::SaSim { Kind::Dot } else { Kind::Distance };
            (a, b, kind)
        }
        (Metric::GfkSim, Some(AlignmentModel::Gfk(m))) => {
            if m.ambient_dim() != train.dim() {
                return Err(Error::InvalidInput(format!(
                    "kernel dimension {} differs from feature dimension {}",
                    m.ambient_dim(),
                    train.dim()
                )));
            }
            let a = (&train.rows() - &m.source_mean).dot(&m.g);
            let b = &test.rows() - &m.target_mean;
            (a, b, Kind::Dot)
        }
        (m, _) => return Err(Error::MissingModel(m.name().into())),
    };

    let mut out = Vec::with_capacity(test.len());
    for (t, q) in b.rows().into_iter().enumerate() {
        let (best, score) = best_match(&a, q, kind);
        out.push(Prediction {
            sample_id: test.ids()[t].clone(),
            predicted_label: labels[best].clone(),
            nearest_source_id: train.ids()[best].clone(),
            score,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy)]
enum Kind {
    Distance,
    Dot,
}

fn best_match<T: Real>(a: &Array2<T>, q: ArrayView1<'_, T>, kind: Kind) -> (usize, f64) {
    let mut best = 0;
    let mut best_val = f64::NAN;
    for (i, r) in a.rows().into_iter().enumerate() {
        let v = match kind {
            Kind::Distance => r.iter().zip(q.iter()).map(|(x, y)| (*x - *y) * (*x - *y)).sum::<T>().as_f64(),
            Kind::Dot => -r.dot(&q).as_f64(),
        };
        // Strict comparison keeps the lowest index on ties.
        if i == 0 || v < best_val {
            best = i;
            best_val = v;
        }
    }
    let score = match kind {
        Kind::Distance => best_val.sqrt(),
        Kind::Dot => -best_val,
    };
    (best, score)
}

use std::collections::HashSet;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// Modern photographs; labeled.
    Source,
    /// Historical photographs; queries.
    Target,
}

/// Row-major sample matrix with ids, optional labels and a domain tag.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    rows: Array2<T>,
    ids: Vec<String>,
    labels: Option<Vec<String>>,
    domain: Domain,
}

impl<T: Real> FeatureMatrix<T> {
    pub fn new(rows: Array2<T>, ids: Vec<String>, labels: Option<Vec<String>>, domain: Domain) -> Result<Self> {
        if rows.ncols() == 0 {
            return Err(Error::InvalidInput("feature dimension must be at least 1".into()));
        }
        if ids.len() != rows.nrows() {
            return Err(Error::InvalidInput(format!("{} ids for {} rows", ids.len(), rows.nrows())));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate sample id {id:?}")));
            }
        }
        if let Some(l) = &labels {
            if l.len() != rows.nrows() {
                return Err(Error::InvalidInput(format!("{} labels for {} rows", l.len(), rows.nrows())));
            }
        }
        Ok(Self { rows, ids, labels, domain })
    }

    /// Builds a matrix with generated ids `{prefix}{index}`.
    pub fn from_rows(rows: Array2<T>, prefix: &str, domain: Domain) -> Result<Self> {
        let ids = (0..rows.nrows()).map(|i| format!("{prefix}{i}")).collect();
        Self::new(rows, ids, None, domain)
    }

    pub fn with_labels(self, labels: Vec<String>) -> Result<Self> {
        Self::new(self.rows, self.ids, Some(labels), self.domain)
    }

    pub fn rows(&self) -> ArrayView2<'_, T> {
        self.rows.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, T> {
        self.rows.row(i)
    }

    pub fn into_rows(self) -> Array2<T> {
        self.rows
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Sub-matrix of the given row indices, preserving ids and labels.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            rows: self.rows.select(Axis(0), idx),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i].clone()).collect()),
            domain: self.domain,
        }
    }

    /// Converts the element type, e.g. f32 storage to f64 computation.
    pub fn cast<U: Real>(&self) -> FeatureMatrix<U> {
        FeatureMatrix {
            rows: self.rows.mapv(|v| U::lit(v.as_f64())),
            ids: self.ids.clone(),
            labels: self.labels.clone(),
            domain: self.domain,
        }
    }
}

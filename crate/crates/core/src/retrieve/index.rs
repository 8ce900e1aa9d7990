use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::adapt::SaModel;
use crate::corpus::{FeatureStore, StoreReader};
use crate::encode::whitening_scales;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexMode {
    Raw,
    Adapted,
}

/// Whether archive vectors are mapped into the target space once, when the
/// adapted index is built, or on the fly for every query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapMode {
    #[default]
    Eager,
    Lazy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub position: usize,
    pub score: f64,
}

/// A learned SA model plus the whitening derived from the query-side PCA.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment<T> {
    pub model: SaModel<T>,
    /// Target eigenvalues after the relative floor.
    pub whitening: Array1<T>,
    scales: Array1<T>,
}

impl<T: Real> Alignment<T> {
    pub fn new(model: SaModel<T>, target_eigenvalues: &Array1<T>) -> Result<Self> {
        if target_eigenvalues.len() != model.target_dim() {
            return Err(Error::InvalidInput(format!(
                "{} whitening eigenvalues for a {}-dimensional target subspace",
                target_eigenvalues.len(),
                model.target_dim()
            )));
        }
        let scales = whitening_scales(target_eigenvalues)?;
        let whitening = scales.mapv(|s| T::one() / (s * s));
        Ok(Self { model, whitening, scales })
    }

    pub fn target_dim(&self) -> usize {
        self.model.target_dim()
    }

    /// Archive (source-domain) vector → whitened, unit-norm target coordinates.
    pub fn map_archive(&self, x: ArrayView1<'_, T>) -> Array1<T> {
        let c = &x - &self.model.source.mean;
        self.finish(self.model.x_a.t().dot(&c))
    }

    /// Query (target-domain) vector → whitened, unit-norm target coordinates.
    pub fn map_query(&self, q: ArrayView1<'_, T>) -> Array1<T> {
        let c = &q - &self.model.target.mean;
        self.finish(self.model.target.basis.t().dot(&c))
    }

    fn finish(&self, mut v: Array1<T>) -> Array1<T> {
        v *= &self.scales;
        normalize(&mut v);
        v
    }
}

pub(crate) fn normalize<T: Real>(v: &mut Array1<T>) {
    let n = v.iter().map(|x| *x * *x).sum::<T>().sqrt();
    if n > T::zero() {
        v.mapv_inplace(|x| x / n);
    }
}

/// Squared Euclidean distance with four independent accumulators.
#[inline]
pub(crate) fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for j in 0..4 {
            let d = x[j] - y[j];
            acc[j] += d * d;
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += (*x - *y) * (*x - *y);
    }
    s
}

#[derive(Debug)]
struct Archive<T> {
    ids: Vec<String>,
    relevant: Vec<bool>,
    labels: Option<Vec<String>>,
    position: HashMap<String, usize>,
    /// Unit-norm raw vectors; absent in a compact adapted index.
    vectors: Option<Array2<T>>,
    dim: usize,
}

/// Flat-scan index over the archive. Cloning is cheap; adapting returns a
/// new index, so readers holding the old one are never disturbed.
#[derive(Debug, Clone)]
pub struct RetrievalIndex<T> {
    archive: Arc<Archive<T>>,
    alignment: Option<Arc<Alignment<T>>>,
    adapted: Option<Arc<Array2<T>>>,
}

pub fn build_index(store: &FeatureStore) -> Result<RetrievalIndex<f32>> {
    RetrievalIndex::new(store.ids.clone(), store.data.clone(), store.relevant.clone(), store.labels.clone())
}

impl<T: Real> RetrievalIndex<T> {
    /// Raw-mode index; rows are L2-normalised.
    pub fn new(
        ids: Vec<String>,
        mut vectors: Array2<T>,
        relevant: Vec<bool>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::InvalidInput("cannot index an empty store".into()));
        }
        if vectors.nrows() != ids.len()
            || relevant.len() != ids.len()
            || labels.as_ref().is_some_and(|l| l.len() != ids.len())
        {
            return Err(Error::InvalidInput("ids, vectors, flags and labels differ in length".into()));
        }
        let mut position = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if position.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate archive id '{id}'")));
            }
        }
        for mut row in vectors.rows_mut() {
            let n = row.iter().map(|x| *x * *x).sum::<T>().sqrt();
            if n > T::zero() {
                row.mapv_inplace(|x| x / n);
            }
        }
        let vectors = vectors.as_standard_layout().into_owned();
        let dim = vectors.ncols();
        Ok(Self {
            archive: Arc::new(Archive { ids, relevant, labels, position, vectors: Some(vectors), dim }),
            alignment: None,
            adapted: None,
        })
    }

    pub fn len(&self) -> usize {
        self.archive.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.archive.ids.is_empty()
    }

    /// Ambient (raw feature) dimension.
    pub fn dim(&self) -> usize {
        self.archive.dim
    }

    pub fn mode(&self) -> IndexMode {
        if self.alignment.is_some() {
            IndexMode::Adapted
        } else {
            IndexMode::Raw
        }
    }

    pub fn ids(&self) -> &[String] {
        &self.archive.ids
    }

    pub fn relevant_flags(&self) -> &[bool] {
        &self.archive.relevant
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.archive.labels.as_deref()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.archive.position.get(id).copied()
    }

    pub fn alignment(&self) -> Option<&Arc<Alignment<T>>> {
        self.alignment.as_ref()
    }

    /// Unit-norm raw vector of an archive item.
    pub fn raw_vector(&self, position: usize) -> Result<ArrayView1<'_, T>> {
        let v = self
            .archive
            .vectors
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("compact index holds no raw vectors".into()))?;
        Ok(v.row(position))
    }

    /// Bytes held by indexed vectors (raw and adapted) plus the model.
    pub fn resident_bytes(&self) -> usize {
        let sz = std::mem::size_of::<T>();
        let raw = self.archive.vectors.as_ref().map_or(0, |v| v.len() * sz);
        let adapted = self.adapted.as_ref().map_or(0, |v| v.len() * sz);
        let model = self.alignment.as_ref().map_or(0, |a| {
            let m = &a.model;
            (m.source.basis.len() + m.target.basis.len() + m.x_a.len() + m.m.len() + 4 * m.ambient_dim()) * sz
        });
        raw + adapted + model
    }

    /// Raw view of the same archive, dropping any adaptation.
    pub fn raw(&self) -> Self {
        Self { archive: Arc::clone(&self.archive), alignment: None, adapted: None }
    }

    /// Adapted-mode index sharing this index's archive.
    pub fn adapted(&self, alignment: Arc<Alignment<T>>, mode: MapMode) -> Result<Self> {
        if alignment.model.ambient_dim() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "model dimension {} differs from index dimension {}",
                alignment.model.ambient_dim(),
                self.dim()
            )));
        }
        let raw = self
            .archive
            .vectors
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("compact index cannot be re-adapted".into()))?;
        let adapted = match mode {
            MapMode::Lazy => None,
            MapMode::Eager => {
                let mut out = Array2::zeros((self.len(), alignment.target_dim()));
                for (mut o, r) in out.rows_mut().into_iter().zip(raw.rows()) {
                    o.assign(&alignment.map_archive(r));
                }
                Some(Arc::new(out))
            }
        };
        Ok(Self { archive: Arc::clone(&self.archive), alignment: Some(alignment), adapted })
    }

    /// Eager adapted index that keeps only target-space vectors, mapping the
    /// store row by row so the raw payload is never resident.
    pub fn adapted_compact(reader: StoreReader, alignment: Arc<Alignment<T>>) -> Result<Self> {
        let mut reader = reader;
        let n = reader.header.n;
        let dim = reader.header.dim;
        if alignment.model.ambient_dim() != dim {
            return Err(Error::InvalidInput(format!(
                "model dimension {} differs from store dimension {dim}",
                alignment.model.ambient_dim()
            )));
        }
        let mut out = Array2::zeros((n, alignment.target_dim()));
        let mut row = 0;
        while let Some(chunk) = reader.next_chunk(1024)? {
            for r in chunk.rows() {
                let mut v: Array1<T> = r.mapv(|x| T::lit(x as f64));
                normalize(&mut v);
                out.row_mut(row).assign(&alignment.map_archive(v.view()));
                row += 1;
            }
        }
        let ids = std::mem::take(&mut reader.ids);
        let position = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let archive = Archive {
            ids,
            relevant: std::mem::take(&mut reader.relevant),
            labels: reader.labels.take(),
            position,
            vectors: None,
            dim,
        };
        Ok(Self { archive: Arc::new(archive), alignment: Some(alignment), adapted: Some(Arc::new(out)) })
    }

    /// Distance from `q` (a raw, D-dimensional query) to every archive item in
    /// the index's active space. Raw: Euclidean on unit vectors. Adapted:
    /// Euclidean between whitened target-space projections.
    pub fn scores(&self, q: ArrayView1<'_, T>) -> Result<Vec<T>> {
        if q.len() != self.dim() {
            return Err(Error::InvalidInput(format!("query dimension {} but index dimension {}", q.len(), self.dim())));
        }
        let mut qn = q.to_owned();
        normalize(&mut qn);
        match &self.alignment {
            None => Ok(self.scan(self.archive.vectors.as_ref().expect("raw index keeps vectors"), &qn)),
            Some(a) => {
                let qa = a.map_query(qn.view());
                match &self.adapted {
                    Some(m) => Ok(self.scan(m, &qa)),
                    None => {
                        let raw = self.archive.vectors.as_ref().expect("lazy index keeps vectors");
                        Ok(raw
                            .rows()
                            .into_iter()
                            .map(|r| {
                                let v = a.map_archive(r);
                                sq_dist(v.as_slice().expect("owned"), qa.as_slice().expect("owned")).sqrt()
                            })
                            .collect())
                    }
                }
            }
        }
    }

    /// Raw-space distances to an arbitrary probe, used as given (not normalised).
    pub fn probe_scores(&self, probe: ArrayView1<'_, T>) -> Result<Vec<T>> {
        let raw = self
            .archive
            .vectors
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("compact index holds no raw vectors".into()))?;
        if probe.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "probe dimension {} but index dimension {}",
                probe.len(),
                self.dim()
            )));
        }
        Ok(self.scan(raw, &probe.to_owned()))
    }

    fn scan(&self, m: &Array2<T>, q: &Array1<T>) -> Vec<T> {
        let qs = q.as_slice().expect("owned vector is contiguous");
        m.axis_iter(Axis(0)).map(|r| sq_dist(r.as_slice().expect("standard layout"), qs).sqrt()).collect()
    }

    /// Order by (score, id) ascending.
    pub fn cmp_items(&self, scores: &[T], a: usize, b: usize) -> Ordering {
        scores[a].as_f64().total_cmp(&scores[b].as_f64()).then_with(|| self.archive.ids[a].cmp(&self.archive.ids[b]))
    }

    /// Best `k` items for already-computed scores; `k` beyond the size truncates.
    pub fn top_k(&self, scores: &[T], k: usize) -> Vec<Hit> {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        let k = k.min(idx.len());
        if k == 0 {
            return Vec::new();
        }
        if k < idx.len() {
            idx.select_nth_unstable_by(k - 1, |&a, &b| self.cmp_items(scores, a, b));
            idx.truncate(k);
        }
        idx.sort_by(|&a, &b| self.cmp_items(scores, a, b));
        idx.into_iter()
            .map(|i| Hit { id: self.archive.ids[i].clone(), position: i, score: scores[i].as_f64() })
            .collect()
    }

    pub fn query_topk(&self, q: ArrayView1<'_, T>, k: usize) -> Result<Vec<Hit>> {
        Ok(self.top_k(&self.scores(q)?, k))
    }

    /// 0-based ranks of the given items under the (score, id) order, without
    /// sorting the whole archive.
    pub fn ranks_of(&self, scores: &[T], items: &[usize]) -> Vec<usize> {
        items
            .iter()
            .map(|&p| (0..scores.len()).filter(|&i| self.cmp_items(scores, i, p) == Ordering::Less).count())
            .collect()
    }
}

/// AP from the 0-based ranks of every relevant item.
pub fn average_precision_from_ranks(ranks: &[usize]) -> Option<f64> {
    if ranks.is_empty() {
        return None;
    }
    let mut r = ranks.to_vec();
    r.sort_unstable();
    Some(r.iter().enumerate().map(|(i, &rank)| (i + 1) as f64 / (rank + 1) as f64).sum::<f64>() / r.len() as f64)
}

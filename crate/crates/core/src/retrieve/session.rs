use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::index::{normalize, sq_dist, Alignment, Hit, RetrievalIndex};
use crate::adapt::learn_sa;
use crate::corpus::{write_model, StoredModel};
use crate::linalg::{estimate_dim_mle_rows, fit_pca_rows, DimEstimate};
use crate::{Error, Real, Result};

/// Number of images the user selects per round.
pub const SELECTIONS_PER_ROUND: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRound {
    pub query_id: String,
    pub selected_ids: Vec<String>,
    /// 1-based round counter k, assigned when recorded.
    #[serde(default)]
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Distinct images needed in each domain before dimensions are estimated.
    pub min_distinct: usize,
    pub mle_k_min: usize,
    pub mle_k_max: usize,
    /// Re-learn the alignment every this many new distinct queries after the
    /// first one. `None` keeps the first model.
    pub relearn_every: Option<usize>,
    /// Re-estimate both dimensions before each re-learn.
    pub reestimate_dims: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { min_distinct: 15, mle_k_min: 6, mle_k_max: 12, relearn_every: None, reestimate_dims: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionState {
    NotReady,
    Estimated,
    Adapted,
}

/// Something that happened to a session. Query, feedback and re-adapt events
/// are inputs; the rest are consequences recorded for audit and replay checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SessionEvent {
    Query { query_id: String, vector: Vec<f64> },
    Feedback { query_id: String, selected_ids: Vec<String>, round: usize },
    ReadaptRequested,
    DimsEstimated { d_s: DimEstimate, d_t: DimEstimate },
    Adapted { round: usize, n_s: usize, n_t: usize, source_dim: usize, target_dim: usize, model_hash: String },
    AdaptationFailed { round: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub state: SessionState,
    pub round: usize,
    pub n_s: usize,
    pub n_t: usize,
    pub d_hat_s: Option<DimEstimate>,
    pub d_hat_t: Option<DimEstimate>,
    pub k_star: Option<usize>,
    pub model_hash: Option<String>,
}

#[derive(Debug, Clone)]
struct Item<T> {
    id: String,
    vector: Array1<T>,
}

/// Interactive-retrieval state. Every operation returns a new session and
/// leaves its input untouched.
#[derive(Debug, Clone)]
pub struct Session<T> {
    pub config: SessionConfig,
    issued: HashMap<String, Array1<T>>,
    /// Queries with feedback, in order of first feedback.
    queries: Vec<Item<T>>,
    /// Distinct selected archive images, in order of first selection.
    sources: Vec<Item<T>>,
    seen_sources: HashSet<String>,
    seen_queries: HashMap<String, usize>,
    pub feedback: Vec<FeedbackRound>,
    pub d_hat_s: Option<DimEstimate>,
    pub d_hat_t: Option<DimEstimate>,
    pub alignment: Option<Arc<Alignment<T>>>,
    pub model_hash: Option<String>,
    /// Round at which the first model was learned.
    pub k_star: Option<usize>,
    /// n_t when the current model was learned.
    learned_at_n_t: usize,
}

impl<T: Real> Session<T> {
    pub fn new(config: SessionConfig) -> Self {
        Self {
            config,
            issued: HashMap::new(),
            queries: Vec::new(),
            sources: Vec::new(),
            seen_sources: HashSet::new(),
            seen_queries: HashMap::new(),
            feedback: Vec::new(),
            d_hat_s: None,
            d_hat_t: None,
            alignment: None,
            model_hash: None,
            k_star: None,
            learned_at_n_t: 0,
        }
    }

    pub fn round(&self) -> usize {
        self.feedback.len()
    }

    pub fn n_s(&self) -> usize {
        self.sources.len()
    }

    pub fn n_t(&self) -> usize {
        self.queries.len()
    }

    pub fn state(&self) -> SessionState {
        match (&self.alignment, &self.d_hat_s) {
            (Some(_), _) => SessionState::Adapted,
            (None, Some(_)) => SessionState::Estimated,
            _ => SessionState::NotReady,
        }
    }

    pub fn status(&self) -> SessionStatus {
        SessionStatus {
            state: self.state(),
            round: self.round(),
            n_s: self.n_s(),
            n_t: self.n_t(),
            d_hat_s: self.d_hat_s,
            d_hat_t: self.d_hat_t,
            k_star: self.k_star,
            model_hash: self.model_hash.clone(),
        }
    }

    pub fn query_vector(&self, id: &str) -> Option<ArrayView1<'_, T>> {
        self.issued.get(id).map(|v| v.view())
    }

    /// Register a query. Re-issuing an id replaces nothing: the first vector wins.
    pub fn issue_query(&self, id: &str, vector: ArrayView1<'_, T>) -> Result<Self> {
        if let Some(v) = self.issued.values().next() {
            if v.len() != vector.len() {
                return Err(Error::InvalidInput(format!(
                    "query dimension {} but session uses {}",
                    vector.len(),
                    v.len()
                )));
            }
        }
        let mut s = self.clone();
        if !s.issued.contains_key(id) {
            let mut v = vector.to_owned();
            normalize(&mut v);
            s.issued.insert(id.to_string(), v);
        }
        Ok(s)
    }

    /// Append one round of exactly three distinct archive selections.
    pub fn record_feedback(&self, index: &RetrievalIndex<T>, fb: &FeedbackRound) -> Result<Self> {
        if fb.selected_ids.len() != SELECTIONS_PER_ROUND {
            return Err(Error::InvalidFeedback(format!(
                "exactly {SELECTIONS_PER_ROUND} selections are required, got {}",
                fb.selected_ids.len()
            )));
        }
        let distinct: HashSet<&String> = fb.selected_ids.iter().collect();
        if distinct.len() != SELECTIONS_PER_ROUND {
            return Err(Error::InvalidFeedback("selections must be distinct".into()));
        }
        let q = self
            .issued
            .get(&fb.query_id)
            .ok_or_else(|| Error::InvalidInput(format!("query '{}' was not issued in this session", fb.query_id)))?;
        let mut picked = Vec::with_capacity(SELECTIONS_PER_ROUND);
        for id in &fb.selected_ids {
            let p = index.position(id).ok_or_else(|| Error::InvalidInput(format!("unknown archive id '{id}'")))?;
            picked.push((id.clone(), index.raw_vector(p)?.to_owned()));
        }

        let mut s = self.clone();
        if !s.seen_queries.contains_key(&fb.query_id) {
            s.seen_queries.insert(fb.query_id.clone(), s.queries.len());
            s.queries.push(Item { id: fb.query_id.clone(), vector: q.clone() });
        }
        for (id, v) in picked {
            if s.seen_sources.insert(id.clone()) {
                s.sources.push(Item { id, vector: v });
            }
        }
        s.feedback.push(FeedbackRound { round: self.round() + 1, ..fb.clone() });
        Ok(s)
    }

    fn stack(items: &[Item<T>]) -> Array2<T> {
        let d = items[0].vector.len();
        let mut m = Array2::zeros((items.len(), d));
        for (mut r, it) in m.rows_mut().into_iter().zip(items) {
            r.assign(&it.vector);
        }
        m
    }

    /// MLE dimensions of the collected source images and the queries.
    pub fn estimate_session_dims(&self) -> Result<Self> {
        let need = self.config.min_distinct.max(self.config.mle_k_max + 1);
        if self.n_s() < need || self.n_t() < need {
            return Err(Error::NotReady(format!(
                "{} distinct source and {} distinct query images collected; {need} of each needed",
                self.n_s(),
                self.n_t()
            )));
        }
        let (k0, k1) = (self.config.mle_k_min, self.config.mle_k_max);
        let mut s = self.clone();
        s.d_hat_s = Some(estimate_dim_mle_rows(Self::stack(&self.sources).view(), k0, k1)?);
        s.d_hat_t = Some(estimate_dim_mle_rows(Self::stack(&self.queries).view(), k0, k1)?);
        Ok(s)
    }

    pub fn conditions_met(&self) -> bool {
        match (self.d_hat_s, self.d_hat_t) {
            (Some(ds), Some(dt)) => self.n_s() > ds.rounded && self.n_t() > dt.rounded,
            _ => false,
        }
    }

    fn learn(&self) -> Result<Alignment<T>> {
        let (ds, dt) = match (self.d_hat_s, self.d_hat_t) {
            (Some(a), Some(b)) => (a.rounded, b.rounded),
            _ => return Err(Error::NotReady("dimensions not estimated".into())),
        };
        let failed = |e: Error| Error::AdaptationFailed(e.to_string());
        let s = fit_pca_rows(Self::stack(&self.sources).view(), ds).map_err(failed)?;
        let t = fit_pca_rows(Self::stack(&self.queries).view(), dt).map_err(failed)?;
        let model = learn_sa(&s, &t).map_err(failed)?;
        Alignment::new(model, &t.eigenvalues).map_err(failed)
    }

    fn install(&self, a: Alignment<T>) -> (Self, SessionEvent) {
        let mut s = self.clone();
        let hash = model_hash(&a);
        let ev = SessionEvent::Adapted {
            round: self.round(),
            n_s: self.n_s(),
            n_t: self.n_t(),
            source_dim: a.model.source.dim(),
            target_dim: a.target_dim(),
            model_hash: hash.clone(),
        };
        s.alignment = Some(Arc::new(a));
        s.model_hash = Some(hash);
        s.k_star.get_or_insert(self.round());
        s.learned_at_n_t = self.n_t();
        (s, ev)
    }

    /// Learn the alignment if the sample-count conditions hold and no model
    /// exists yet; otherwise return the session unchanged.
    pub fn maybe_learn_alignment(&self) -> Result<(Self, Option<SessionEvent>)> {
        if self.alignment.is_some() || !self.conditions_met() {
            return Ok((self.clone(), None));
        }
        let (s, ev) = self.install(self.learn()?);
        Ok((s, Some(ev)))
    }

    /// Explicit re-adaptation from everything collected so far.
    pub fn relearn(&self) -> Result<(Self, Vec<SessionEvent>)> {
        let mut events = Vec::new();
        let mut base = self.clone();
        if self.config.reestimate_dims || self.d_hat_s.is_none() {
            base = base.estimate_session_dims()?;
            if let (Some(d_s), Some(d_t)) = (base.d_hat_s, base.d_hat_t) {
                events.push(SessionEvent::DimsEstimated { d_s, d_t });
            }
        }
        if !base.conditions_met() {
            return Err(Error::NotReady(format!(
                "n_s = {} and n_t = {} do not exceed the estimated dimensions",
                base.n_s(),
                base.n_t()
            )));
        }
        let (s, ev) = base.install(base.learn()?);
        events.push(ev);
        Ok((s, events))
    }

    /// Record feedback and run the automatic pipeline: estimate dimensions
    /// once enough images are in, learn at the first round satisfying the
    /// conditions, and re-learn periodically if configured.
    pub fn apply_feedback(&self, index: &RetrievalIndex<T>, fb: &FeedbackRound) -> Result<(Self, Vec<SessionEvent>)> {
        let mut s = self.record_feedback(index, fb)?;
        let rec = s.feedback.last().expect("just recorded");
        let mut events = vec![SessionEvent::Feedback {
            query_id: rec.query_id.clone(),
            selected_ids: rec.selected_ids.clone(),
            round: rec.round,
        }];
        if s.d_hat_s.is_none() {
            match s.estimate_session_dims() {
                Ok(next) => {
                    s = next;
                    events.push(SessionEvent::DimsEstimated {
                        d_s: s.d_hat_s.expect("set"),
                        d_t: s.d_hat_t.expect("set"),
                    });
                }
                Err(Error::NotReady(_)) => return Ok((s, events)),
                Err(e) => return Err(e),
            }
        }
        let outcome = if s.alignment.is_none() {
            s.maybe_learn_alignment().map(|(n, ev)| (n, ev.into_iter().collect::<Vec<_>>()))
        } else {
            match s.config.relearn_every {
                Some(every) if every > 0 && s.n_t() >= s.learned_at_n_t + every => s.relearn(),
                _ => Ok((s.clone(), Vec::new())),
            }
        };
        match outcome {
            Ok((next, evs)) => {
                events.extend(evs);
                Ok((next, events))
            }
            Err(e @ (Error::AdaptationFailed(_) | Error::NotReady(_))) => {
                tracing::warn!(error = %e, "adaptation skipped; session stays in its current mode");
                events.push(SessionEvent::AdaptationFailed { round: s.round(), message: e.to_string() });
                Ok((s, events))
            }
            Err(e) => Err(e),
        }
    }

    /// Naive baseline: nearest accumulated query, then the mean of its
    /// selected images as the probe.
    pub fn baseline_neighbor_query(
        &self,
        index: &RetrievalIndex<T>,
        q: ArrayView1<'_, T>,
        k: usize,
    ) -> Result<Vec<Hit>> {
        Ok(index.top_k(&self.baseline_scores(index, q)?, k))
    }

    pub fn baseline_scores(&self, index: &RetrievalIndex<T>, q: ArrayView1<'_, T>) -> Result<Vec<T>> {
        if self.queries.is_empty() {
            return Err(Error::NotReady("no query has feedback yet".into()));
        }
        let mut qn = q.to_owned();
        normalize(&mut qn);
        let qs = qn.as_slice().expect("owned");
        let mut best = 0;
        let mut best_d = T::infinity();
        for (i, it) in self.queries.iter().enumerate() {
            let d = sq_dist(it.vector.as_slice().expect("owned"), qs);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        let qid = &self.queries[best].id;
        let round = self.feedback.iter().rev().find(|f| &f.query_id == qid).expect("query has feedback");
        let mut probe = Array1::<T>::zeros(index.dim());
        for id in &round.selected_ids {
            let p = index.position(id).ok_or_else(|| Error::InvalidInput(format!("unknown archive id '{id}'")))?;
            probe += &index.raw_vector(p)?;
        }
        probe /= T::from_count(round.selected_ids.len());
        index.probe_scores(probe.view())
    }
}

/// SHA-256 over the serialised SA model followed by the whitening eigenvalues.
pub fn model_hash<T: Real>(a: &Alignment<T>) -> String {
    let mut bytes = Vec::new();
    write_model(&mut bytes, &StoredModel::Sa(a.model.clone())).expect("writing to memory");
    for v in a.whitening.iter() {
        bytes.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

//! Simulated relevance-feedback sessions: an oracle stands in for the user
//! and the report tracks mAP before, during and after adaptation.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::index::{average_precision_from_ranks, MapMode, RetrievalIndex};
use super::session::{FeedbackRound, Session, SessionConfig, SELECTIONS_PER_ROUND};
use crate::eval::MapAveraging;
use crate::synth::rng;
use crate::{Error, FeatureMatrix, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Oracle {
    /// Picks the three best-ranked relevant items, topping up from the rest
    /// of the relevant set if fewer than three are in the result list.
    Cooperative,
    /// Like `Cooperative`, but each selection is replaced by a non-relevant
    /// item from the result list with probability `error_rate`.
    Noisy { error_rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    /// Feedback queries per session; the remaining queries are held out for scoring.
    pub schedule_len: usize,
    pub top_k: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub oracle: Oracle,
    pub session: SessionConfig,
    pub map_mode: MapMode,
    /// Spacing (in queries) of the mAP-vs-query-count curve.
    pub curve_every: usize,
    pub averaging: MapAveraging,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            schedule_len: 60,
            top_k: 50,
            repetitions: 10,
            seed: 0,
            oracle: Oracle::Cooperative,
            session: SessionConfig::default(),
            map_mode: MapMode::Eager,
            curve_every: 5,
            averaging: MapAveraging::PerClass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(v: &[f64]) -> Self {
        if v.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std =
            if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionReport {
    pub pre_map: f64,
    /// mAP with the session's final index (adapted if adaptation happened).
    pub post_map: f64,
    /// mAP with the first model, at the trigger round.
    pub trigger_map: Option<f64>,
    pub naive_map: f64,
    pub k_star: Option<usize>,
    pub n_s: usize,
    pub n_t: usize,
    pub source_dim: Option<usize>,
    pub target_dim: Option<usize>,
    /// (queries so far, mAP on held-out queries).
    pub curve: Vec<(usize, f64)>,
    pub model_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub queries: usize,
    pub map: MeanStd,
    /// Repetitions already adapted at this count.
    pub adapted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub pre: MeanStd,
    pub post: MeanStd,
    pub trigger: MeanStd,
    pub naive: MeanStd,
    pub curve: Vec<CurvePoint>,
    /// Latest trigger over repetitions: from here on every curve point is adapted.
    pub last_trigger: Option<usize>,
    pub skipped_queries: usize,
    pub repetitions: Vec<RepetitionReport>,
}

impl SessionReport {
    /// Largest drop between consecutive curve points from `last_trigger` on.
    pub fn max_curve_drop(&self) -> Option<f64> {
        let start = self.last_trigger?;
        let pts: Vec<f64> = self.curve.iter().filter(|p| p.queries >= start).map(|p| p.map.mean).collect();
        Some(pts.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max))
    }
}

struct Scorer<'a> {
    labels: Vec<&'a str>,
    relevant: Vec<&'a [usize]>,
    averaging: MapAveraging,
}

impl Scorer<'_> {
    fn map<T: Real>(
        &self,
        test: &[usize],
        mut scores: impl FnMut(usize) -> Result<Vec<T>>,
        index: &RetrievalIndex<T>,
    ) -> Result<f64> {
        let mut per: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for &q in test {
            let s = scores(q)?;
            let ap = average_precision_from_ranks(&index.ranks_of(&s, self.relevant[q]))
                .expect("test queries have relevant items");
            per.entry(self.labels[q]).or_default().push(ap);
        }
        Ok(match self.averaging {
            MapAveraging::PerClass => {
                per.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).sum::<f64>() / per.len() as f64
            }
            MapAveraging::PerQuery => {
                let all: Vec<f64> = per.into_values().flatten().collect();
                all.iter().sum::<f64>() / all.len() as f64
            }
        })
    }
}

/// Replay `cfg.repetitions` sessions. `archive_labels[i]` is the location of
/// archive item i (`None` for distractors); every query must be labelled.
pub fn simulate_session<T: Real>(
    index: &RetrievalIndex<T>,
    archive_labels: &[Option<String>],
    queries: &FeatureMatrix<T>,
    cfg: &SimulationConfig,
) -> Result<SessionReport> {
    if archive_labels.len() != index.len() {
        return Err(Error::InvalidInput(format!(
            "{} archive labels for {} indexed items",
            archive_labels.len(),
            index.len()
        )));
    }
    let qlabels = queries.labels().ok_or_else(|| Error::MissingLabels("simulation queries need locations".into()))?;
    if cfg.repetitions == 0 || cfg.curve_every == 0 {
        return Err(Error::InvalidInput("repetitions and curve spacing must be positive".into()));
    }
    let raw = index.raw();
    let mut by_label: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, l) in archive_labels.iter().enumerate() {
        if let Some(l) = l {
            by_label.entry(l.as_str()).or_default().push(i);
        }
    }
    let empty: Vec<usize> = Vec::new();
    let scorer = Scorer {
        labels: qlabels.iter().map(String::as_str).collect(),
        relevant: qlabels.iter().map(|l| by_label.get(l.as_str()).unwrap_or(&empty).as_slice()).collect(),
        averaging: cfg.averaging,
    };
    let usable: Vec<usize> = (0..queries.len()).filter(|&q| scorer.relevant[q].len() >= SELECTIONS_PER_ROUND).collect();
    let skipped = queries.len() - usable.len();
    if skipped > 0 {
        tracing::warn!(skipped, "queries with fewer than three relevant items are skipped");
    }
    if usable.len() <= cfg.schedule_len {
        return Err(Error::InsufficientData(format!(
            "{} usable queries leave none held out after a schedule of {}",
            usable.len(),
            cfg.schedule_len
        )));
    }

    let mut reps = Vec::with_capacity(cfg.repetitions);
    for rep in 0..cfg.repetitions {
        let mut r = rng(cfg.seed.wrapping_add(rep as u64));
        let mut order = usable.clone();
        order.shuffle(&mut r);
        let (schedule, test) = order.split_at(cfg.schedule_len);
        let eval = |idx: &RetrievalIndex<T>| scorer.map(test, |q| idx.scores(queries.row(q)), idx);
        let pre = eval(&raw)?;

        let mut session = Session::<T>::new(cfg.session.clone());
        let mut current = raw.clone();
        let mut curve = Vec::new();
        let mut trigger_map = None;
        for (n, &q) in schedule.iter().enumerate() {
            let qid = &queries.ids()[q];
            session = session.issue_query(qid, queries.row(q))?;
            let hits = current.query_topk(queries.row(q), cfg.top_k)?;
            let picks =
                select(&hits.iter().map(|h| h.position).collect::<Vec<_>>(), scorer.relevant[q], cfg.oracle, &mut r);
            let fb = FeedbackRound {
                query_id: qid.clone(),
                selected_ids: picks.iter().map(|&p| index.ids()[p].clone()).collect(),
                round: 0,
            };
            let before = session.model_hash.clone();
            session = session.apply_feedback(&raw, &fb)?.0;
            if session.model_hash != before {
                let a = Arc::clone(session.alignment.as_ref().expect("hash implies model"));
                current = raw.adapted(a, cfg.map_mode)?;
            }
            let count = n + 1;
            let adapted_now = before.is_none() && session.model_hash.is_some();
            let on_grid = count % cfg.curve_every == 0 || count == cfg.schedule_len;
            if adapted_now || on_grid {
                let m = if session.alignment.is_some() { eval(&current)? } else { pre };
                if adapted_now {
                    trigger_map = Some(m);
                }
                if on_grid {
                    curve.push((count, m));
                }
            }
        }
        let post = curve.last().map(|c| c.1).unwrap_or(pre);
        let naive = scorer.map(test, |q| session.baseline_scores(&raw, queries.row(q)), &raw)?;
        let a = session.alignment.as_ref();
        reps.push(RepetitionReport {
            pre_map: pre,
            post_map: post,
            trigger_map,
            naive_map: naive,
            k_star: session.k_star,
            n_s: session.n_s(),
            n_t: session.n_t(),
            source_dim: a.map(|a| a.model.source.dim()),
            target_dim: a.map(|a| a.target_dim()),
            curve,
            model_hash: session.model_hash.clone(),
        });
        tracing::debug!(rep, pre, post, naive, k_star = ?session.k_star, "simulated session");
    }

    let col =
        |f: &dyn Fn(&RepetitionReport) -> Option<f64>| MeanStd::of(&reps.iter().filter_map(f).collect::<Vec<_>>());
    let points: Vec<usize> = reps[0].curve.iter().map(|c| c.0).collect();
    let curve = points
        .iter()
        .enumerate()
        .map(|(i, &queries)| CurvePoint {
            queries,
            map: MeanStd::of(&reps.iter().map(|r| r.curve[i].1).collect::<Vec<_>>()),
            adapted: reps.iter().filter(|r| r.k_star.is_some_and(|k| k <= queries)).count(),
        })
        .collect();
    let last_trigger = reps.iter().map(|r| r.k_star).collect::<Option<Vec<_>>>().and_then(|v| v.into_iter().max());
    Ok(SessionReport {
        pre: col(&|r| Some(r.pre_map)),
        post: col(&|r| Some(r.post_map)),
        trigger: col(&|r| r.trigger_map),
        naive: col(&|r| Some(r.naive_map)),
        curve,
        last_trigger,
        skipped_queries: skipped,
        repetitions: reps,
    })
}

fn select(hits: &[usize], relevant: &[usize], oracle: Oracle, r: &mut impl Rng) -> Vec<usize> {
    let is_rel = |p: &usize| relevant.binary_search(p).is_ok();
    let mut picks: Vec<usize> = hits.iter().copied().filter(is_rel).take(SELECTIONS_PER_ROUND).collect();
    for &p in relevant {
        if picks.len() == SELECTIONS_PER_ROUND {
            break;
        }
        if !picks.contains(&p) {
            picks.push(p);
        }
    }
    if let Oracle::Noisy { error_rate } = oracle {
        let wrong: Vec<usize> = hits.iter().copied().filter(|p| !is_rel(p)).collect();
        for i in 0..picks.len() {
            if r.random::<f64>() < error_rate {
                let free: Vec<usize> = wrong.iter().copied().filter(|p| !picks.contains(p)).collect();
                if let Some(&w) = free.get(r.random_range(0..free.len().max(1))) {
                    picks[i] = w;
                }
            }
        }
    }
    picks
}

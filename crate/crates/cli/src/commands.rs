//! Batch subcommands. Each writes its artifacts plus `resolved-config.json`
//! into its run directory and returns a one-line summary for stdout.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use serde_json::json;

use eraseek_core::adapt::{select_dim_sa, select_dim_sdm, AlignmentModel};
use eraseek_core::corpus::{
    load_features, load_manifest, load_model, merge_distractors, read_text_matrix, sample_descriptors, save_features,
    save_model, Era, FeatureStore, ManifestEntry, StoredModel,
};
use eraseek_core::encode::{
    bow_histogram, compute_idf, encode_bow, encode_fv, train_codebook_with, train_gmm_with, GmmConfig, KMeansConfig,
    SearchMode,
};
use eraseek_core::eval::{
    evaluate_accuracy, nn_classify, run_protocol, AdaptMethod, MapAveraging, Metric, ProtocolConfig, ProtocolResult,
    SamplesPerClass, TableRow,
};
use eraseek_core::linalg::{
    estimate_dim_eig, estimate_dim_fractal, estimate_dim_mle, fit_pca, DimEstimate, FractalMethod, FractalParams,
};
use eraseek_core::retrieve::{
    average_precision_from_ranks, build_index, simulate_session, Alignment, MapMode, Oracle, RetrievalIndex,
    SessionReport, SimulationConfig,
};
use eraseek_core::{Domain, Error, FeatureMatrix};

use crate::args::*;

pub const RESOLVED_CONFIG: &str = "resolved-config.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub eraseek_version: String,
    #[serde(flatten)]
    pub command: Command,
}

impl ResolvedConfig {
    pub fn new(command: Command) -> Self {
        Self { eraseek_version: env!("CARGO_PKG_VERSION").to_string(), command }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Schema { line: e.line(), message: e.to_string() })
            .with_context(|| format!("parsing resolved config {}", path.display()))
    }
}

/// Output directory of one run.
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating run directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> anyhow::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_text(&self, name: &str, text: &str) -> anyhow::Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }
}

/// Run a batch command. `serve` is handled by the caller.
pub fn run(cmd: &Command) -> anyhow::Result<String> {
    let dir = RunDir::create(cmd.out())?;
    dir.write_json(RESOLVED_CONFIG, &ResolvedConfig::new(cmd.clone()))?;
    match cmd {
        Command::Encode(a) => encode(a, &dir),
        Command::TrainCodebook(a) => train_codebook(a, &dir),
        Command::TrainGmm(a) => train_gmm(a, &dir),
        Command::FitSubspace(a) => fit_subspace(a, &dir),
        Command::EstimateDim(a) => estimate_dim(a, &dir),
        Command::Adapt(a) => adapt(a, &dir),
        Command::Classify(a) => classify(a, &dir),
        Command::Eval(a) => eval(a, &dir),
        Command::Index(a) => index(a, &dir),
        Command::Retrieve(a) => retrieve(a, &dir),
        Command::SimulateSession(a) => simulate(a, &dir),
        Command::Report(a) => report(a, &dir),
        Command::Serve(_) => bail!("serve is not a batch command"),
    }
}

// ---------------------------------------------------------------- inputs

/// A `.feat` store, or a text matrix whose rows get ids `r0`, `r1`, ...
pub fn load_store(path: &Path) -> anyhow::Result<FeatureStore> {
    if path.extension().is_some_and(|e| e == "feat") {
        return Ok(load_features(path)?);
    }
    let data = read_text_matrix(path)?;
    let ids = (0..data.nrows()).map(|i| format!("r{i}")).collect();
    Ok(FeatureStore::new("text", ids, data)?)
}

fn matrix64(store: &FeatureStore, domain: Domain) -> anyhow::Result<FeatureMatrix<f64>> {
    let labels = store.labels.as_ref().filter(|l| l.iter().all(|s| !s.is_empty())).cloned();
    Ok(FeatureMatrix::new(store.data.mapv(f64::from), store.ids.clone(), labels, domain)?)
}

fn matrix32(store: &FeatureStore, domain: Domain) -> anyhow::Result<FeatureMatrix<f32>> {
    let labels = store.labels.as_ref().filter(|l| l.iter().all(|s| !s.is_empty())).cloned();
    Ok(FeatureMatrix::new(store.data.clone(), store.ids.clone(), labels, domain)?)
}

fn entries(manifest: &Path, era: EraFilter) -> anyhow::Result<Vec<ManifestEntry>> {
    let m = load_manifest(manifest)?;
    let keep = |e: &ManifestEntry| match era {
        EraFilter::All => true,
        EraFilter::Old => e.era == Era::Old,
        EraFilter::New => e.era == Era::New,
    };
    let out: Vec<_> = m.entries.into_iter().filter(keep).collect();
    if out.is_empty() {
        return Err(Error::InsufficientData(format!("no manifest entries for era {era:?}")).into());
    }
    Ok(out)
}

/// Local descriptors of one image; the uri is resolved against the manifest's directory.
fn descriptors(manifest: &Path, entry: &ManifestEntry) -> anyhow::Result<ndarray::Array2<f32>> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let path = base.join(&entry.uri);
    let data = if path.extension().is_some_and(|e| e == "feat") {
        load_features(&path)?.data
    } else {
        read_text_matrix(&path)?
    };
    Ok(data)
}

fn descriptor_sample(manifest: &Path, era: EraFilter, wanted: usize, seed: u64) -> anyhow::Result<FeatureMatrix<f32>> {
    let mut stores = Vec::new();
    for e in entries(manifest, era)? {
        let d = descriptors(manifest, &e)?;
        let ids = (0..d.nrows()).map(|j| format!("{}#{j}", e.id)).collect();
        stores.push(FeatureStore::new("descriptors", ids, d)?);
    }
    let total: usize = stores.iter().map(FeatureStore::len).sum();
    let count = wanted.min(total);
    if count < wanted {
        tracing::warn!(wanted, total, "fewer descriptors available than requested; using all");
    }
    Ok(sample_descriptors(&stores, count, seed)?)
}

fn search(s: SearchArg) -> SearchMode {
    match s {
        SearchArg::Exact => SearchMode::Exact,
        SearchArg::Approximate => SearchMode::Approximate,
    }
}

pub fn metric(m: MetricArg) -> Metric {
    match m {
        MetricArg::Euclidean => Metric::Euclidean,
        MetricArg::SaSim => Metric::SaSim,
        MetricArg::EsaDist => Metric::EsaDist,
        MetricArg::GfkSim => Metric::GfkSim,
    }
}

pub fn map_mode(m: MapModeArg) -> MapMode {
    match m {
        MapModeArg::Eager => MapMode::Eager,
        MapModeArg::Lazy => MapMode::Lazy,
    }
}

fn averaging(a: AveragingArg) -> MapAveraging {
    match a {
        AveragingArg::PerClass => MapAveraging::PerClass,
        AveragingArg::PerQuery => MapAveraging::PerQuery,
    }
}

/// Load an SA model as a retrieval alignment (whitened by the target eigenvalues).
pub fn load_alignment(path: &Path) -> anyhow::Result<Arc<Alignment<f32>>> {
    match load_model::<f32>(path)? {
        StoredModel::Sa(m) => {
            let eig = m.target.eigenvalues.clone();
            Ok(Arc::new(Alignment::new(m, &eig)?))
        }
        other => {
            Err(Error::InvalidInput(format!("{} holds a {:?} model, not SA", path.display(), other.kind())).into())
        }
    }
}

// --------------------------------------------------------------- encoding

fn encode(a: &EncodeArgs, dir: &RunDir) -> anyhow::Result<String> {
    let list = entries(&a.manifest, a.era)?;
    let model = load_model::<f32>(&a.model)?;
    let mut descs = Vec::with_capacity(list.len());
    for e in &list {
        descs.push(descriptors(&a.manifest, e)?);
    }
    let (rows, degenerate, scheme) = match (a.scheme, model) {
        (SchemeArg::Fv, StoredModel::Gmm(g)) => {
            let mut rows = Vec::new();
            let mut degenerate = Vec::new();
            for (e, d) in list.iter().zip(&descs) {
                let v = encode_fv(d.view(), &g)?;
                if v.degenerate {
                    degenerate.push(e.id.clone());
                }
                rows.push(v.values);
            }
            (rows, degenerate, "fv")
        }
        (SchemeArg::Bow | SchemeArg::BowTfidf, StoredModel::Codebook(cb)) => {
            let idf = match (a.scheme, &a.idf) {
                (SchemeArg::Bow, _) => None,
                (_, Some(p)) => {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    Some(Array1::from_vec(serde_json::from_str::<Vec<f32>>(&text)?))
                }
                (_, None) => {
                    let hists = descs.iter().map(|d| bow_histogram(d.view(), &cb)).collect::<Result<Vec<_>, _>>()?;
                    let idf = compute_idf(&hists)?;
                    dir.write_json("idf.json", &idf.to_vec())?;
                    Some(idf)
                }
            };
            let mut rows = Vec::new();
            let mut degenerate = Vec::new();
            for (e, d) in list.iter().zip(&descs) {
                let v = encode_bow(d.view(), &cb, idf.as_ref())?;
                if v.degenerate {
                    degenerate.push(e.id.clone());
                }
                rows.push(v.values);
            }
            (rows, degenerate, if idf.is_some() { "bow-tfidf" } else { "bow" })
        }
        (s, m) => {
            return Err(Error::InvalidInput(format!("scheme {s:?} cannot use a {:?} model", m.kind())).into());
        }
    };
    let dim = rows[0].len();
    if let Some(want) = a.expect_dim {
        if want != dim {
            return Err(Error::InvalidDimension(format!("encoding has dimension {dim}, expected {want}")).into());
        }
    }
    let mut data = ndarray::Array2::<f32>::zeros((rows.len(), dim));
    for (mut r, v) in data.rows_mut().into_iter().zip(&rows) {
        r.assign(v);
    }
    let mut store = FeatureStore::new(scheme, list.iter().map(|e| e.id.clone()).collect(), data)?;
    store.labels = Some(list.iter().map(|e| e.class_label.clone().unwrap_or_default()).collect());
    store.relevant = list.iter().map(|e| !e.distractor).collect();
    store.meta = json!({ "era": a.era, "degenerate": degenerate });
    save_features(dir.path("features.feat"), &store)?;
    dir.write_json(
        "summary.json",
        &json!({ "images": store.len(), "dim": dim, "scheme": scheme, "degenerate": degenerate.len() }),
    )?;
    Ok(format!("encoded {} images as {scheme} (dim {dim})", store.len()))
}

fn train_codebook(a: &TrainCodebookArgs, dir: &RunDir) -> anyhow::Result<String> {
    let x = descriptor_sample(&a.manifest, a.era, a.sample, a.seed)?;
    let cfg = KMeansConfig { max_iter: a.max_iter, ..KMeansConfig::new(a.k, search(a.search), a.seed) };
    let fit = train_codebook_with(x.rows(), &cfg)?;
    save_model(dir.path("codebook.model"), &StoredModel::Codebook(fit.codebook))?;
    let last = fit.distortion.last().copied();
    dir.write_json(
        "summary.json",
        &json!({ "k": a.k, "descriptors": x.len(), "iterations": fit.iterations, "converged": fit.converged, "distortion": last }),
    )?;
    Ok(format!("codebook of {} words from {} descriptors", a.k, x.len()))
}

fn train_gmm(a: &TrainGmmArgs, dir: &RunDir) -> anyhow::Result<String> {
    let x = descriptor_sample(&a.manifest, a.era, a.sample, a.seed)?;
    let cfg = GmmConfig { max_iter: a.max_iter, ..GmmConfig::new(a.k, a.seed) };
    let fit = train_gmm_with(x.rows(), &cfg)?;
    let fv_dim = 2 * fit.model.components() * fit.model.dim();
    save_model(dir.path("gmm.model"), &StoredModel::Gmm(fit.model))?;
    dir.write_json(
        "summary.json",
        &json!({
            "k": a.k, "descriptors": x.len(), "converged": fit.converged,
            "log_likelihood": fit.log_likelihoods.last(), "fisher_vector_dim": fv_dim,
        }),
    )?;
    Ok(format!("GMM with {} components; Fisher vectors will have dimension {fv_dim}", a.k))
}

// --------------------------------------------------------------- subspaces

fn fit_subspace(a: &FitSubspaceArgs, dir: &RunDir) -> anyhow::Result<String> {
    let m = matrix64(&load_store(&a.features)?, Domain::Source)?;
    let s = fit_pca(&m, a.dim)?;
    dir.write_json("summary.json", &json!({ "dim": a.dim, "eigenvalues": s.eigenvalues.to_vec() }))?;
    save_model(dir.path("subspace.model"), &StoredModel::Subspace(s))?;
    Ok(format!("{}-dimensional subspace of R^{}", a.dim, m.dim()))
}

fn dim_estimate(m: &FeatureMatrix<f64>, a: &EstimateDimArgs) -> anyhow::Result<DimEstimate> {
    let params = FractalParams { seed: a.seed, ..FractalParams::default() };
    Ok(match a.method {
        DimMethodArg::Mle => estimate_dim_mle(m, a.k_min, a.k_max)?,
        DimMethodArg::Gmst => estimate_dim_fractal(m, FractalMethod::Gmst, &params)?,
        DimMethodArg::Cdm => estimate_dim_fractal(m, FractalMethod::Cdm, &params)?,
        DimMethodArg::Eig => {
            let full = fit_pca(m, (m.len() - 1).min(m.dim()))?;
            estimate_dim_eig(full.eigenvalues.as_slice().expect("contiguous"), a.energy)?
        }
    })
}

fn estimate_dim(a: &EstimateDimArgs, dir: &RunDir) -> anyhow::Result<String> {
    let m = matrix64(&load_store(&a.features)?, Domain::Source)?;
    let est = dim_estimate(&m, a)?;
    dir.write_json("estimate.json", &est)?;
    Ok(format!("{:.4}", est.value))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentChoice {
    pub method: AdaptArg,
    pub source_dim: usize,
    pub target_dim: usize,
    /// How the dimensions were chosen: given, mle, cv or sdm.
    pub selection: String,
    pub estimates: Option<(DimEstimate, DimEstimate)>,
}

impl AlignmentChoice {
    pub fn method(&self) -> AdaptMethod {
        match self.method {
            AdaptArg::Gfk => AdaptMethod::Gfk { dim: self.source_dim },
            _ => AdaptMethod::Sa { source_dim: self.source_dim, target_dim: self.target_dim },
        }
    }
}

/// Dimensions for an alignment: explicit flags win, otherwise ESA uses MLE
/// per domain, SA cross-validation on the source, GFK the SDM criterion.
pub fn choose_alignment(
    source: &FeatureMatrix<f64>,
    target: &FeatureMatrix<f64>,
    method: AdaptArg,
    d: &DimArgs,
) -> anyhow::Result<AlignmentChoice> {
    let cap = |m: &FeatureMatrix<f64>, v: usize| v.min(m.len().saturating_sub(1)).min(m.dim()).max(1);
    let mut estimates = None;
    let (s, t, selection) = match method {
        AdaptArg::None => bail!(Error::InvalidInput("no adaptation method selected".into())),
        AdaptArg::Esa => {
            let es = estimate_dim_mle(source, d.k_min, d.k_max)?;
            let et = estimate_dim_mle(target, d.k_min, d.k_max)?;
            estimates = Some((es, et));
            let given = d.source_dim.is_some() || d.target_dim.is_some();
            let s = d.source_dim.unwrap_or(cap(source, es.rounded));
            let t = d.target_dim.unwrap_or(cap(target, et.rounded));
            (s, t, if given { "given" } else { "mle" })
        }
        AdaptArg::Sa => match (d.dim, d.source_dim, d.target_dim) {
            (_, Some(s), Some(t)) => (s, t, "given"),
            (Some(k), s, t) => (s.unwrap_or(k), t.unwrap_or(k), "given"),
            (None, s, t) => {
                let k = select_dim_sa(source, d.d_max, d.seed)?;
                (s.unwrap_or(k), t.unwrap_or(k), "cv")
            }
        },
        AdaptArg::Gfk => match d.dim {
            Some(k) => (k, k, "given"),
            None => {
                let k = select_dim_sdm(source, target, d.d_max)?;
                (k, k, "sdm")
            }
        },
    };
    Ok(AlignmentChoice { method, source_dim: s, target_dim: t, selection: selection.into(), estimates })
}

fn stored(model: AlignmentModel<f64>) -> StoredModel<f64> {
    match model {
        AlignmentModel::Sa(m) => StoredModel::Sa(m),
        AlignmentModel::Gfk(m) => StoredModel::Gfk(m),
    }
}

fn adapt(a: &AdaptArgs, dir: &RunDir) -> anyhow::Result<String> {
    let source = matrix64(&load_store(&a.source)?, Domain::Source)?;
    let target = matrix64(&load_store(&a.target)?, Domain::Target)?;
    let choice = choose_alignment(&source, &target, a.method, &a.dims)?;
    let model = eraseek_core::eval::learn_alignment(&source, &target, choice.method())?;
    save_model(dir.path("alignment.model"), &stored(model))?;
    dir.write_json("summary.json", &choice)?;
    Ok(format!(
        "{:?} alignment with d_S = {}, d_T = {} ({})",
        a.method, choice.source_dim, choice.target_dim, choice.selection
    ))
}

// ----------------------------------------------------------- classification

fn load_alignment_model(path: &Path) -> anyhow::Result<AlignmentModel<f64>> {
    match load_model::<f64>(path)? {
        StoredModel::Sa(m) => Ok(AlignmentModel::Sa(m)),
        StoredModel::Gfk(m) => Ok(AlignmentModel::Gfk(m)),
        other => Err(Error::InvalidInput(format!("{} holds a {:?} model", path.display(), other.kind())).into()),
    }
}

fn classify(a: &ClassifyArgs, dir: &RunDir) -> anyhow::Result<String> {
    let source = matrix64(&load_store(&a.source)?, Domain::Source)?;
    let target_store = load_store(&a.target)?;
    let target = matrix64(&target_store, Domain::Target)?;
    let model = a.model.as_deref().map(load_alignment_model).transpose()?;
    let preds = nn_classify(&source, &target, metric(a.metric), model.as_ref())?;
    let mut lines = String::new();
    for p in &preds {
        lines.push_str(&serde_json::to_string(p)?);
        lines.push('\n');
    }
    dir.write_text("predictions.jsonl", &lines)?;
    let accuracy = match target.labels() {
        Some(l) => {
            let truth: HashMap<String, String> = target.ids().iter().cloned().zip(l.iter().cloned()).collect();
            Some(evaluate_accuracy(&preds, &truth)?)
        }
        None => None,
    };
    dir.write_json(
        "summary.json",
        &json!({ "metric": metric(a.metric).name(), "samples": preds.len(), "accuracy": accuracy }),
    )?;
    Ok(match accuracy {
        Some(acc) => format!("{} predictions, accuracy {acc:.2}%", preds.len()),
        None => format!("{} predictions", preds.len()),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalResult {
    pub row: TableRow,
    pub one: ProtocolResult,
    pub all: ProtocolResult,
    pub alignment: Option<AlignmentChoice>,
}

fn eval(a: &EvalArgs, dir: &RunDir) -> anyhow::Result<String> {
    let source = matrix64(&load_store(&a.source)?, Domain::Source)?;
    let target = matrix64(&load_store(&a.target)?, Domain::Target)?;
    let choice = match a.adapt {
        AdaptArg::None => None,
        m => Some(choose_alignment(&source, &target, m, &a.dims)?),
    };
    let base = ProtocolConfig {
        samples_per_class: SamplesPerClass::Count(1),
        repetitions: a.repetitions,
        seed: a.dims.seed,
        metric: metric(a.metric),
        adapt: choice.as_ref().map(AlignmentChoice::method),
    };
    let one = run_protocol(&source, &target, &base)?;
    let all =
        run_protocol(&source, &target, &ProtocolConfig { samples_per_class: SamplesPerClass::All, ..base.clone() })?;
    let classifier = match a.adapt {
        AdaptArg::None => format!("NN ({})", metric(a.metric).name()),
        m => format!("NN + {} ({})", format!("{m:?}").to_uppercase(), metric(a.metric).name()),
    };
    let row = TableRow {
        detector: a.detector.clone(),
        descriptor: a.descriptor.clone(),
        representation: a.representation.clone(),
        classifier,
        acc_one_mean: one.mean_accuracy,
        acc_one_std: one.std_dev,
        acc_all: all.mean_accuracy,
    };
    dir.write_text("row.tsv", &format!("{}\n{}\n", TableRow::HEADER, row.to_tsv()))?;
    let line = row.to_tsv();
    dir.write_json("result.json", &EvalResult { row, one, all, alignment: choice })?;
    Ok(line)
}

// ---------------------------------------------------------------- retrieval

fn index(a: &IndexArgs, dir: &RunDir) -> anyhow::Result<String> {
    let mut store = load_store(&a.features)?;
    if let Some(d) = &a.distractors {
        store = merge_distractors(&store, &load_store(d)?)?;
    }
    let idx = build_index(&store)?;
    let adapted_bytes = match &a.model {
        Some(p) => Some(idx.adapted(load_alignment(p)?, MapMode::Eager)?.resident_bytes()),
        None => None,
    };
    save_features(dir.path("index.feat"), &store)?;
    let relevant = store.relevant.iter().filter(|r| **r).count();
    dir.write_json(
        "summary.json",
        &json!({
            "items": store.len(), "relevant": relevant, "distractors": store.len() - relevant, "dim": store.dim(),
            "raw_resident_bytes": idx.resident_bytes(), "adapted_resident_bytes": adapted_bytes,
        }),
    )?;
    Ok(format!("indexed {} items ({} relevant)", store.len(), relevant))
}

/// Archive label of every item; distractors and unlabelled items are `None`.
pub fn archive_labels(store_labels: Option<&[String]>, relevant: &[bool]) -> Vec<Option<String>> {
    (0..relevant.len())
        .map(|i| store_labels.and_then(|l| l.get(i)).filter(|l| relevant[i] && !l.is_empty()).cloned())
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub mode: String,
    pub map: Option<f64>,
    pub per_class: BTreeMap<String, f64>,
    pub scored_queries: usize,
    pub excluded: Vec<String>,
}

/// mAP of an index over labelled queries; relevance is label equality.
pub fn index_map(
    idx: &RetrievalIndex<f32>,
    labels: &[Option<String>],
    queries: &FeatureMatrix<f32>,
    avg: MapAveraging,
) -> anyhow::Result<RetrievalMetrics> {
    scored_map(idx, labels, queries, avg, |q| idx.scores(q))
}

/// mAP with caller-supplied scores over `idx`'s items (ties broken as in `idx`).
pub fn scored_map(
    idx: &RetrievalIndex<f32>,
    labels: &[Option<String>],
    queries: &FeatureMatrix<f32>,
    avg: MapAveraging,
    mut score: impl FnMut(ndarray::ArrayView1<'_, f32>) -> eraseek_core::Result<Vec<f32>>,
) -> anyhow::Result<RetrievalMetrics> {
    let qlabels = queries.labels().ok_or_else(|| Error::MissingLabels("queries are unlabelled".into()))?;
    let mut by_label: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            by_label.entry(l).or_default().push(i);
        }
    }
    let mut per: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut excluded = Vec::new();
    for (q, l) in qlabels.iter().enumerate() {
        let Some(rel) = by_label.get(l.as_str()) else {
            excluded.push(queries.ids()[q].clone());
            continue;
        };
        let scores = score(queries.row(q))?;
        let ap = average_precision_from_ranks(&idx.ranks_of(&scores, rel)).expect("non-empty relevant set");
        per.entry(l.clone()).or_default().push(ap);
    }
    let scored: usize = per.values().map(Vec::len).sum();
    let map = (scored > 0).then(|| match avg {
        MapAveraging::PerClass => {
            per.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).sum::<f64>() / per.len() as f64
        }
        MapAveraging::PerQuery => per.values().flatten().sum::<f64>() / scored as f64,
    });
    Ok(RetrievalMetrics {
        mode: format!("{:?}", idx.mode()).to_lowercase(),
        map,
        per_class: per.into_iter().map(|(c, v)| (c, v.iter().sum::<f64>() / v.len() as f64)).collect(),
        scored_queries: scored,
        excluded,
    })
}

fn retrieve(a: &RetrieveArgs, dir: &RunDir) -> anyhow::Result<String> {
    let store = load_store(&a.index)?;
    let raw = build_index(&store)?;
    let idx = match &a.model {
        Some(p) => raw.adapted(load_alignment(p)?, map_mode(a.map_mode))?,
        None => raw,
    };
    let qstore = load_store(&a.queries)?;
    let queries = matrix32(&qstore, Domain::Target)?;
    let mut lines = String::new();
    for q in 0..queries.len() {
        let hits = idx.query_topk(queries.row(q), a.k)?;
        let hits: Vec<_> = hits.iter().map(|h| json!({ "id": h.id, "score": h.score })).collect();
        lines.push_str(&serde_json::to_string(&json!({ "query_id": queries.ids()[q], "hits": hits }))?);
        lines.push('\n');
    }
    dir.write_text("results.jsonl", &lines)?;
    let labels = archive_labels(store.labels.as_deref(), &store.relevant);
    let summary = if queries.labels().is_some() && labels.iter().any(Option::is_some) {
        let m = index_map(&idx, &labels, &queries, averaging(a.averaging))?;
        dir.write_json("metrics.json", &m)?;
        match m.map {
            Some(v) => format!("{} queries ranked; mAP {v:.4} ({} mode)", queries.len(), m.mode),
            None => format!("{} queries ranked; no query has relevant items", queries.len()),
        }
    } else {
        format!("{} queries ranked", queries.len())
    };
    Ok(summary)
}

fn simulate(a: &SimulateArgs, dir: &RunDir) -> anyhow::Result<String> {
    let store = load_store(&a.index)?;
    let idx = build_index(&store)?;
    let labels = archive_labels(store.labels.as_deref(), &store.relevant);
    let queries = matrix32(&load_store(&a.queries)?, Domain::Target)?;
    let cfg = SimulationConfig {
        schedule_len: a.schedule,
        top_k: a.top_k,
        repetitions: a.repetitions,
        seed: a.seed,
        oracle: match a.oracle {
            OracleArg::Cooperative => Oracle::Cooperative,
            OracleArg::Noisy => Oracle::Noisy { error_rate: a.error_rate },
        },
        session: a.session.config(),
        map_mode: map_mode(a.map_mode),
        curve_every: a.curve_every,
        averaging: averaging(a.averaging),
    };
    let report = simulate_session(&idx, &labels, &queries, &cfg)?;
    dir.write_json("report.json", &report)?;
    dir.write_text("curve.tsv", &curve_tsv(&report, None))?;
    Ok(format!(
        "pre {:.4} ± {:.4}, post {:.4} ± {:.4}, naive {:.4} ± {:.4}",
        report.pre.mean, report.pre.std, report.post.mean, report.post.std, report.naive.mean, report.naive.std
    ))
}

fn curve_tsv(r: &SessionReport, run: Option<&str>) -> String {
    let mut s = String::new();
    if run.is_none() {
        s.push_str("queries\tmap_mean\tmap_std\tadapted_reps\n");
    }
    for p in &r.curve {
        if let Some(run) = run {
            s.push_str(run);
            s.push('\t');
        }
        s.push_str(&format!("{}\t{:.6}\t{:.6}\t{}\n", p.queries, p.map.mean, p.map.std, p.adapted));
    }
    s
}

// ------------------------------------------------------------------ report

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string())
}

fn report(a: &ReportArgs, dir: &RunDir) -> anyhow::Result<String> {
    if a.evals.is_empty() && a.retrievals.is_empty() && a.simulations.is_empty() {
        bail!(Error::InvalidInput("report needs at least one --eval, --retrieval or --simulation run".into()));
    }
    let mut written = Vec::new();
    if !a.evals.is_empty() {
        let mut tsv = format!("{}\n", TableRow::HEADER);
        let mut md = String::from(
            "| Detector | Descriptor | Representation | Classifier | Acc. one | Acc. all |\n|---|---|---|---|---|---|\n",
        );
        for d in &a.evals {
            let r: EvalResult = read_json(&d.join("result.json"))?;
            let row = r.row;
            tsv.push_str(&row.to_tsv());
            tsv.push('\n');
            md.push_str(&format!(
                "| {} | {} | {} | {} | {:.1} ± {:.1} | {:.1} |\n",
                row.detector,
                row.descriptor,
                row.representation,
                row.classifier,
                row.acc_one_mean,
                row.acc_one_std,
                row.acc_all
            ));
        }
        dir.write_text("classification.tsv", &tsv)?;
        dir.write_text("classification.md", &md)?;
        written.push("classification");
    }
    if !a.retrievals.is_empty() {
        let mut tsv = String::from("run\tmode\tmap\tqueries\n");
        for d in &a.retrievals {
            let m: RetrievalMetrics = read_json(&d.join("metrics.json"))?;
            let map = m.map.map_or("-".to_string(), |v| format!("{v:.4}"));
            tsv.push_str(&format!("{}\t{}\t{map}\t{}\n", run_name(d), m.mode, m.scored_queries));
        }
        dir.write_text("retrieval.tsv", &tsv)?;
        written.push("retrieval");
    }
    if !a.simulations.is_empty() {
        let mut tsv =
            String::from("run\tpre_mean\tpre_std\tpost_mean\tpost_std\tnaive_mean\tnaive_std\tlast_trigger\n");
        let mut curve = String::from("run\tqueries\tmap_mean\tmap_std\tadapted_reps\n");
        for d in &a.simulations {
            let r: SessionReport = read_json(&d.join("report.json"))?;
            let name = run_name(d);
            tsv.push_str(&format!(
                "{name}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\n",
                r.pre.mean,
                r.pre.std,
                r.post.mean,
                r.post.std,
                r.naive.mean,
                r.naive.std,
                r.last_trigger.map_or("-".to_string(), |k| k.to_string())
            ));
            curve.push_str(&curve_tsv(&r, Some(&name)));
        }
        dir.write_text("interactive.tsv", &tsv)?;
        dir.write_text("curve.tsv", &curve)?;
        written.push("interactive");
    }
    Ok(format!("wrote {} tables", written.join(", ")))
}

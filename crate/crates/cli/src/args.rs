//! Command-line surface. Every argument struct is also the serialised form
//! of the resolved config written next to the command's outputs.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "eraseek", version, about = "Cross-era location retrieval with subspace domain adaptation")]
pub struct Cli {
    /// Re-run the command recorded in a resolved-config file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// With --config: write outputs here instead of the recorded run directory.
    #[arg(long, value_name = "DIR", requires = "config")]
    pub out: Option<PathBuf>,
    /// Log level filter (also read from RUST_LOG).
    #[arg(long, default_value = "info")]
    pub log: String,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Encode per-image local descriptors into BOW or Fisher vectors.
    Encode(EncodeArgs),
    /// Train a k-means visual vocabulary.
    TrainCodebook(TrainCodebookArgs),
    /// Train a diagonal GMM for Fisher vectors.
    TrainGmm(TrainGmmArgs),
    /// Fit a PCA subspace to a feature store.
    FitSubspace(FitSubspaceArgs),
    /// Estimate the intrinsic dimensionality of a feature set.
    EstimateDim(EstimateDimArgs),
    /// Learn an SA / ESA / GFK alignment between two feature stores.
    Adapt(AdaptArgs),
    /// Nearest-neighbour classification of target samples.
    Classify(ClassifyArgs),
    /// Acc. one / Acc. all classification protocols.
    Eval(EvalArgs),
    /// Build a retrieval index store, optionally merging distractors.
    Index(IndexArgs),
    /// Rank the index for every query and score mAP.
    Retrieve(RetrieveArgs),
    /// Simulate interactive relevance-feedback sessions.
    SimulateSession(SimulateArgs),
    /// Serve interactive sessions over HTTP.
    Serve(ServeArgs),
    /// Collect run outputs into result tables and curve data.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Encode(_) => "encode",
            Command::TrainCodebook(_) => "train-codebook",
            Command::TrainGmm(_) => "train-gmm",
            Command::FitSubspace(_) => "fit-subspace",
            Command::EstimateDim(_) => "estimate-dim",
            Command::Adapt(_) => "adapt",
            Command::Classify(_) => "classify",
            Command::Eval(_) => "eval",
            Command::Index(_) => "index",
            Command::Retrieve(_) => "retrieve",
            Command::SimulateSession(_) => "simulate-session",
            Command::Serve(_) => "serve",
            Command::Report(_) => "report",
        }
    }

    pub fn out(&self) -> &PathBuf {
        match self {
            Command::Encode(a) => &a.out,
            Command::TrainCodebook(a) => &a.out,
            Command::TrainGmm(a) => &a.out,
            Command::FitSubspace(a) => &a.out,
            Command::EstimateDim(a) => &a.out,
            Command::Adapt(a) => &a.out,
            Command::Classify(a) => &a.out,
            Command::Eval(a) => &a.out,
            Command::Index(a) => &a.out,
            Command::Retrieve(a) => &a.out,
            Command::SimulateSession(a) => &a.out,
            Command::Serve(a) => &a.out,
            Command::Report(a) => &a.out,
        }
    }

    pub fn set_out(&mut self, dir: PathBuf) {
        let slot = match self {
            Command::Encode(a) => &mut a.out,
            Command::TrainCodebook(a) => &mut a.out,
            Command::TrainGmm(a) => &mut a.out,
            Command::FitSubspace(a) => &mut a.out,
            Command::EstimateDim(a) => &mut a.out,
            Command::Adapt(a) => &mut a.out,
            Command::Classify(a) => &mut a.out,
            Command::Eval(a) => &mut a.out,
            Command::Index(a) => &mut a.out,
            Command::Retrieve(a) => &mut a.out,
            Command::SimulateSession(a) => &mut a.out,
            Command::Serve(a) => &mut a.out,
            Command::Report(a) => &mut a.out,
        };
        *slot = dir;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EraFilter {
    All,
    Old,
    New,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    Bow,
    BowTfidf,
    Fv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchArg {
    Exact,
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DimMethodArg {
    Mle,
    Gmst,
    Cdm,
    Eig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptArg {
    None,
    Sa,
    Esa,
    Gfk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricArg {
    Euclidean,
    #[value(alias = "sa")]
    SaSim,
    #[value(alias = "esa")]
    EsaDist,
    #[value(alias = "gfk")]
    GfkSim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleArg {
    Cooperative,
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapModeArg {
    Eager,
    Lazy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AveragingArg {
    PerClass,
    PerQuery,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EncodeArgs {
    /// JSONL manifest; each entry's uri names its descriptor file (text matrix or .feat).
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "fv")]
    pub scheme: SchemeArg,
    /// Codebook (bow, bow-tfidf) or GMM (fv) model file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub era: EraFilter,
    /// Reuse idf weights from an earlier run instead of computing them here.
    #[arg(long)]
    pub idf: Option<PathBuf>,
    /// Fail unless the encoding has this dimension (8192 for K = d = 64 Fisher vectors).
    #[arg(long)]
    pub expect_dim: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainCodebookArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub era: EraFilter,
    #[arg(long, default_value_t = 3000)]
    pub k: usize,
    /// Descriptors sampled for training (all of them if fewer are available).
    #[arg(long, default_value_t = 200_000)]
    pub sample: usize,
    #[arg(long, value_enum, default_value = "approximate")]
    pub search: SearchArg,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainGmmArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub era: EraFilter,
    #[arg(long, default_value_t = 64)]
    pub k: usize,
    #[arg(long, default_value_t = 200_000)]
    pub sample: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FitSubspaceArgs {
    /// Feature store (.feat) or whitespace-separated text matrix.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EstimateDimArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, value_enum, default_value = "mle")]
    pub method: DimMethodArg,
    #[arg(long, default_value_t = 6)]
    pub k_min: usize,
    #[arg(long, default_value_t = 12)]
    pub k_max: usize,
    /// Retained-variance fraction for the eigenvalue method.
    #[arg(long, default_value_t = 0.95)]
    pub energy: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DimArgs {
    /// Subspace dimension for SA / GFK (default: chosen automatically).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Source dimension override for SA / ESA.
    #[arg(long)]
    pub source_dim: Option<usize>,
    /// Target dimension override for SA / ESA.
    #[arg(long)]
    pub target_dim: Option<usize>,
    #[arg(long, default_value_t = 6)]
    pub k_min: usize,
    #[arg(long, default_value_t = 12)]
    pub k_max: usize,
    /// Upper bound for automatic SA / GFK dimension search.
    #[arg(long, default_value_t = eraseek_core::adapt::DEFAULT_D_MAX)]
    pub d_max: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AdaptArgs {
    /// Labelled source (modern) feature store.
    #[arg(long)]
    pub source: PathBuf,
    /// Target (historical) feature store.
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_enum, default_value = "esa")]
    pub method: AdaptArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub dims: DimArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_enum, default_value = "euclidean")]
    pub metric: MetricArg,
    /// Alignment model from `adapt` (required by the adaptive metrics).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_enum, default_value = "euclidean")]
    pub metric: MetricArg,
    #[arg(long, value_enum, default_value = "none")]
    pub adapt: AdaptArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub dims: DimArgs,
    /// Repetitions of the one-sample-per-class protocol.
    #[arg(long, default_value_t = 100)]
    pub repetitions: usize,
    /// Labels of the result-table row.
    #[arg(long, default_value = "-")]
    pub detector: String,
    #[arg(long, default_value = "-")]
    pub descriptor: String,
    #[arg(long, default_value = "-")]
    pub representation: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct IndexArgs {
    /// Relevant archive images.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub distractors: Option<PathBuf>,
    /// Optional alignment to report the adapted index footprint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Query feature store; labels, if present, enable mAP scoring.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// SA / ESA alignment for adapted-mode retrieval.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "eager")]
    pub map_mode: MapModeArg,
    #[arg(long, value_enum, default_value = "per-class")]
    pub averaging: AveragingArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SessionArgs {
    #[arg(long, default_value_t = 15)]
    pub min_distinct: usize,
    #[arg(long, default_value_t = 6)]
    pub mle_k_min: usize,
    #[arg(long, default_value_t = 12)]
    pub mle_k_max: usize,
    /// Re-learn the alignment after this many new feedback queries.
    #[arg(long)]
    pub relearn_every: Option<usize>,
    /// Keep the first dimension estimates when re-learning.
    #[arg(long)]
    pub freeze_dims: bool,
}

impl SessionArgs {
    pub fn config(&self) -> eraseek_core::retrieve::SessionConfig {
        eraseek_core::retrieve::SessionConfig {
            min_distinct: self.min_distinct,
            mle_k_min: self.mle_k_min,
            mle_k_max: self.mle_k_max,
            relearn_every: self.relearn_every,
            reestimate_dims: !self.freeze_dims,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Labelled query store.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = 60)]
    pub schedule: usize,
    #[arg(long, default_value_t = 50)]
    pub top_k: usize,
    #[arg(long, default_value_t = 10)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "cooperative")]
    pub oracle: OracleArg,
    #[arg(long, default_value_t = 0.1)]
    pub error_rate: f64,
    #[arg(long, default_value_t = 5)]
    pub curve_every: usize,
    #[arg(long, value_enum, default_value = "eager")]
    pub map_mode: MapModeArg,
    #[arg(long, value_enum, default_value = "per-class")]
    pub averaging: AveragingArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub session: SessionArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ServeArgs {
    /// Archive index store.
    #[arg(long)]
    pub index: PathBuf,
    /// Query-image store; query requests may name these ids.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Manifest whose uris back the thumbnail endpoint (relative to the manifest).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Codebook or GMM for encoding uploaded descriptors.
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[arg(long, value_enum, default_value = "eager")]
    pub map_mode: MapModeArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub session: SessionArgs,
    /// Run directory; session logs live in its sessions/ subdirectory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// `eval` run directories (one table row each).
    #[arg(long = "eval")]
    pub evals: Vec<PathBuf>,
    /// `retrieve` run directories.
    #[arg(long = "retrieval")]
    pub retrievals: Vec<PathBuf>,
    /// `simulate-session` run directories.
    #[arg(long = "simulation")]
    pub simulations: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

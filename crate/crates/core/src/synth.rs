//! Seeded synthetic data: manifold samples with known intrinsic dimension,
//! Gaussian blobs, and two-domain corpora with a controlled domain shift.
//!
//! All generators draw from [`Pcg64Mcg`] so fixtures are reproducible
//! across platforms.

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64Mcg;

use crate::matrix::{Domain, FeatureMatrix};

pub fn rng(seed: u64) -> Pcg64Mcg {
    Pcg64Mcg::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

pub fn uniform(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random::<f64>())
}

/// Random `n×k` matrix with orthonormal columns (Gram–Schmidt on Gaussians).
pub fn random_orthonormal(rng: &mut impl Rng, n: usize, k: usize) -> Array2<f64> {
    assert!(k <= n, "cannot fit {k} orthonormal columns in R^{n}");
    let mut m = gaussian(rng, n, k);
    crate::linalg::orthonormalize(&mut m).expect("Gaussian columns are independent");
    m
}

/// `n` uniform samples from the unit cube `[0,1]^m`, isometrically embedded
/// in `R^ambient`.
pub fn embedded_cube(n: usize, m: usize, ambient: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    let q = random_orthonormal(&mut r, ambient, m);
    uniform(&mut r, n, m).dot(&q.t())
}

/// Matrix exponential by scaling and squaring of a Taylor series.
pub fn expm(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let norm = a.iter().map(|v| v.abs()).fold(0.0, f64::max) * n as f64;
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);
    let mut term = Array2::<f64>::eye(n);
    let mut sum = Array2::<f64>::eye(n);
    for k in 1..=24 {
        term = term.dot(&scaled) / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = sum.dot(&sum);
    }
    sum
}

/// Rotation `exp(K)` for a random skew-symmetric `K` whose RMS rotation
/// angle is `angle` radians.
pub fn random_rotation(rng: &mut impl Rng, k: usize, angle: f64) -> Array2<f64> {
    if k < 2 || angle == 0.0 {
        return Array2::eye(k);
    }
    let g = gaussian(rng, k, k);
    let mut skew = &g - &g.t();
    let ms = skew.iter().map(|v| v * v).sum::<f64>() / (k * k) as f64;
    skew *= angle / (ms * k as f64 / 2.0).sqrt();
    expm(&skew)
}

/// Isotropic Gaussian clusters around the given centres, `per` samples each;
/// returns samples and their cluster index.
pub fn blobs(centers: &Array2<f64>, per: usize, spread: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let k = centers.nrows();
    let mut x = gaussian(&mut r, k * per, centers.ncols()) * spread;
    let mut y = Vec::with_capacity(k * per);
    for c in 0..k {
        for i in 0..per {
            let mut row = x.row_mut(c * per + i);
            row += &centers.row(c);
            y.push(c);
        }
    }
    (x, y)
}

/// Parameters of the two-domain classification corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftParams {
    pub classes: usize,
    pub dim: usize,
    /// Dimension of the subspace carrying class structure.
    pub class_dim: usize,
    /// Dimension of the subspace (containing the class subspace) that the
    /// target rotation acts on.
    pub rotated_dim: usize,
    pub per_class: usize,
    pub class_spread: f64,
    pub within_spread: f64,
    pub ambient_noise: f64,
    pub offset: f64,
    pub angle: f64,
    pub target_noise: f64,
}

impl Default for ShiftParams {
    fn default() -> Self {
        Self {
            classes: 10,
            dim: 100,
            class_dim: 10,
            rotated_dim: 20,
            per_class: 20,
            class_spread: 1.0,
            within_spread: 0.3,
            ambient_noise: 0.05,
            offset: 4.0,
            angle: 0.7,
            target_noise: 0.1,
        }
    }
}

/// Labeled source and target sets; the target is the source distribution
/// rotated on a `rotated_dim` subspace plus Gaussian noise.
pub fn shifted_classes(p: &ShiftParams, seed: u64) -> (FeatureMatrix<f64>, FeatureMatrix<f64>) {
    let mut r = rng(seed);
    let q = random_orthonormal(&mut r, p.dim, p.rotated_dim.max(p.class_dim));
    let sub = q.slice(s![.., ..p.class_dim]).to_owned();
    let w = q.slice(s![.., ..p.rotated_dim]).to_owned();
    let rot = random_rotation(&mut r, p.rotated_dim, p.angle);
    let mut offset: Array1<f64> = w.dot(&gaussian(&mut r, p.rotated_dim, 1).column(0));
    offset *= p.offset / offset.dot(&offset).sqrt();
    let means = gaussian(&mut r, p.classes, p.class_dim) * p.class_spread;
    let labels: Vec<String> = (0..p.classes * p.per_class).map(|i| format!("c{}", i / p.per_class)).collect();
    let draw = |r: &mut Pcg64Mcg| {
        let n = p.classes * p.per_class;
        let mut z = gaussian(r, n, p.class_dim) * p.within_spread;
        for i in 0..n {
            let mut row = z.row_mut(i);
            row += &means.row(i / p.per_class);
        }
        let mut x = z.dot(&sub.t()) + gaussian(r, n, p.dim) * p.ambient_noise;
        x += &offset;
        x
    };
    let xs = draw(&mut r);
    let x0 = draw(&mut r);
    // x ↦ x + W (R − I) Wᵀ x
    let delta = x0.dot(&w).dot(&(&rot - &Array2::<f64>::eye(p.rotated_dim)).t()).dot(&w.t());
    let xt = &x0 + &delta + gaussian(&mut r, x0.nrows(), p.dim) * p.target_noise;
    let n = xs.nrows();
    let src_ids = (0..n).map(|i| format!("s{i}")).collect();
    let tgt_ids = (0..n).map(|i| format!("t{i}")).collect();
    (
        FeatureMatrix::new(xs, src_ids, Some(labels.clone()), Domain::Source).expect("valid corpus"),
        FeatureMatrix::new(xt, tgt_ids, Some(labels), Domain::Target).expect("valid corpus"),
    )
}

/// Parameters of the cross-domain retrieval corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalParams {
    pub dim: usize,
    pub locations: usize,
    /// Relevant archive (source) images per location.
    pub archive_per_location: usize,
    /// Historical (target) images per location.
    pub queries_per_location: usize,
    pub distractors: usize,
    /// Dimension of location identity.
    pub location_dim: usize,
    /// Dimension of per-image viewpoint variation.
    pub viewpoint_dim: usize,
    pub location_spread: f64,
    pub viewpoint_spread: f64,
    pub source_noise: f64,
    pub target_noise: f64,
    pub target_offset: f64,
    /// Rotation angle applied to the target on the location subspace plus
    /// `location_dim` extra directions; zero disables it.
    pub angle: f64,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            dim: 128,
            locations: 100,
            archive_per_location: 5,
            queries_per_location: 4,
            distractors: 10_000,
            location_dim: 8,
            viewpoint_dim: 32,
            location_spread: 1.0,
            viewpoint_spread: 0.4,
            source_noise: 0.05,
            target_noise: 0.3,
            target_offset: 2.0,
            angle: 0.0,
        }
    }
}

/// Archive (relevant images first, then unlabeled distractors) and labeled
/// queries; every row is L2-normalised.
#[derive(Debug, Clone)]
pub struct RetrievalCorpus {
    pub archive: FeatureMatrix<f64>,
    /// Location of each archive row; `None` for distractors.
    pub archive_locations: Vec<Option<String>>,
    pub queries: FeatureMatrix<f64>,
}

pub fn retrieval_corpus(p: &RetrievalParams, seed: u64) -> RetrievalCorpus {
    let mut r = rng(seed);
    let extra = if p.angle != 0.0 { p.location_dim } else { 0 };
    let q = random_orthonormal(&mut r, p.dim, p.location_dim + p.viewpoint_dim + extra);
    let loc = q.slice(s![.., ..p.location_dim]).to_owned();
    let view = q.slice(s![.., p.location_dim..p.location_dim + p.viewpoint_dim]).to_owned();
    let mut rot_basis = loc.clone();
    if extra > 0 {
        rot_basis = ndarray::concatenate(Axis(1), &[loc.view(), q.slice(s![.., p.location_dim + p.viewpoint_dim..])])
            .expect("matching rows");
    }
    let rot = random_rotation(&mut r, rot_basis.ncols(), p.angle);
    let mut offset = gaussian(&mut r, p.dim, 1).column(0).to_owned();
    offset *= p.target_offset / offset.dot(&offset).sqrt();
    let means = gaussian(&mut r, p.locations, p.location_dim) * p.location_spread;

    let image = |r: &mut Pcg64Mcg, m: &Array2<f64>| -> Array2<f64> {
        m.dot(&loc.t()) + (gaussian(r, m.nrows(), p.viewpoint_dim) * p.viewpoint_spread).dot(&view.t())
    };
    let repeat = |per: usize| -> Array2<f64> {
        let idx: Vec<usize> = (0..p.locations * per).map(|i| i / per).collect();
        means.select(Axis(0), &idx)
    };

    let n_rel = p.locations * p.archive_per_location;
    let rel = image(&mut r, &repeat(p.archive_per_location)) + gaussian(&mut r, n_rel, p.dim) * p.source_noise;
    let dis_means = gaussian(&mut r, p.distractors, p.location_dim) * p.location_spread;
    let dis = image(&mut r, &dis_means) + gaussian(&mut r, p.distractors, p.dim) * p.source_noise;
    let n_q = p.locations * p.queries_per_location;
    let q0 = image(&mut r, &repeat(p.queries_per_location));
    let delta = q0.dot(&rot_basis).dot(&(&rot - &Array2::<f64>::eye(rot.nrows())).t()).dot(&rot_basis.t());
    let mut qx = &q0 + &delta + gaussian(&mut r, n_q, p.dim) * p.target_noise;
    qx += &offset;

    let mut archive = ndarray::concatenate(Axis(0), &[rel.view(), dis.view()]).expect("same dim");
    normalize_rows(&mut archive);
    normalize_rows(&mut qx);
    let mut ids = Vec::with_capacity(archive.nrows());
    let mut locs = Vec::with_capacity(archive.nrows());
    for i in 0..n_rel {
        ids.push(format!("m{i:05}"));
        locs.push(Some(format!("loc{:03}", i / p.archive_per_location)));
    }
    for i in 0..p.distractors {
        ids.push(format!("x{i:06}"));
        locs.push(None);
    }
    let q_ids = (0..n_q).map(|i| format!("h{i:04}")).collect();
    let q_labels = (0..n_q).map(|i| format!("loc{:03}", i / p.queries_per_location)).collect();
    RetrievalCorpus {
        archive: FeatureMatrix::new(archive, ids, None, Domain::Source).expect("valid archive"),
        archive_locations: locs,
        queries: FeatureMatrix::new(qx, q_ids, Some(q_labels), Domain::Target).expect("valid queries"),
    }
}

pub fn normalize_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row /= n;
        }
    }
}

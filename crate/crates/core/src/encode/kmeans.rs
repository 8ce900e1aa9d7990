use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Exact,
    /// Best-bin-first search over a randomized k-d forest of the centres.
    Approximate,
}

/// Visual vocabulary: k cluster centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook<T> {
    pub centers: Array2<T>,
}

impl<T: Real> Codebook<T> {
    pub fn new(centers: Array2<T>) -> Result<Self> {
        if centers.nrows() == 0 || centers.ncols() == 0 {
            return Err(Error::InvalidInput("codebook needs at least one centre".into()));
        }
        Ok(Self { centers })
    }

    pub fn k(&self) -> usize {
        self.centers.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    /// Index of the nearest centre (ties → lowest index).
    pub fn assign(&self, x: ArrayView1<'_, T>) -> usize {
        nearest(&self.centers, x).0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub mode: SearchMode,
    pub seed: u64,
    pub max_iter: usize,
    /// Convergence threshold on the largest centre displacement.
    pub tol: f64,
    pub trees: usize,
    /// Centres examined per approximate query.
    pub checks: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, mode: SearchMode, seed: u64) -> Self {
        Self { k, mode, seed, max_iter: 100, tol: 1e-6, trees: 4, checks: 64 }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit<T> {
    pub codebook: Codebook<T>,
    /// Sum of squared distances to the assigned centre, before each update.
    pub distortion: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn train_codebook<T: Real>(
    descriptors: ArrayView2<'_, T>,
    k: usize,
    mode: SearchMode,
    seed: u64,
) -> Result<Codebook<T>> {
    Ok(train_codebook_with(descriptors, &KMeansConfig::new(k, mode, seed))?.codebook)
}

/// k-means++ initialisation followed by Lloyd iterations.
pub fn train_codebook_with<T: Real>(x: ArrayView2<'_, T>, cfg: &KMeansConfig) -> Result<KMeansFit<T>> {
    let (n, dim) = x.dim();
    if cfg.k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if n < cfg.k {
        return Err(Error::InsufficientData(format!("{n} descriptors for {} centres", cfg.k)));
    }
    if dim == 0 {
        return Err(Error::InvalidInput("descriptors have dimension 0".into()));
    }
    let mut rng = Pcg64Mcg::seed_from_u64(cfg.seed);
    let mut centers = kmeans_pp(x, cfg.k, &mut rng)?;
    let mut assign = vec![0usize; n];
    let mut dist2 = vec![0.0f64; n];
    let mut distortion = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iter.max(1) {
        iterations += 1;
        match cfg.mode {
            SearchMode::Exact => {
                for i in 0..n {
                    let (c, d) = nearest(&centers, x.row(i));
                    assign[i] = c;
                    dist2[i] = d;
                }
            }
            SearchMode::Approximate => {
                let forest = KdForest::build(centers.view(), cfg.trees, &mut rng);
                for i in 0..n {
                    let (c, d) = forest.search(centers.view(), x.row(i), cfg.checks);
                    assign[i] = c;
                    dist2[i] = d;
                }
            }
        }
        distortion.push(dist2.iter().sum());

        let mut sums = Array2::<f64>::zeros((cfg.k, dim));
        let mut counts = vec![0usize; cfg.k];
        for i in 0..n {
            counts[assign[i]] += 1;
            let mut row = sums.row_mut(assign[i]);
            for (s, v) in row.iter_mut().zip(x.row(i)) {
                *s += v.as_f64();
            }
        }
        let mut new_centers = centers.clone();
        let mut taken = vec![false; n];
        for c in 0..cfg.k {
            if counts[c] > 0 {
                for j in 0..dim {
                    new_centers[[c, j]] = T::lit(sums[[c, j]] / counts[c] as f64);
                }
            } else {
                // Empty cluster: move it onto the worst-served descriptor.
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dist2[a].total_cmp(&dist2[b]).then(b.cmp(&a)))
                    .expect("n >= k");
                taken[far] = true;
                dist2[far] = 0.0;
                new_centers.row_mut(c).assign(&x.row(far));
            }
        }
        let shift =
            centers.rows().into_iter().zip(new_centers.rows()).map(|(a, b)| sq_dist(a, b).sqrt()).fold(0.0, f64::max);
        centers = new_centers;
        if shift < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(KMeansFit { codebook: Codebook { centers }, distortion, iterations, converged })
}

fn kmeans_pp<T: Real>(x: ArrayView2<'_, T>, k: usize, rng: &mut impl Rng) -> Result<Array2<T>> {
    let n = x.nrows();
    let mut centers = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(Error::InsufficientData(format!("only {c} distinct descriptors for {k} centres")));
        }
        let pick = WeightedIndex::new(&d2).map_err(|e| Error::DegenerateData(e.to_string()))?.sample(rng);
        centers.row_mut(c).assign(&x.row(pick));
        for i in 0..n {
            let d = sq_dist(x.row(i), x.row(pick));
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    Ok(centers)
}

pub(crate) fn sq_dist<T: Real>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(p, q)| {
            let d = (*p - *q).as_f64();
            d * d
        })
        .sum()
}

pub(crate) fn nearest<T: Real>(centers: &Array2<T>, x: ArrayView1<'_, T>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centers.rows().into_iter().enumerate() {
        let d = sq_dist(row, x);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

enum KdNode {
    Leaf(Vec<usize>),
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// Randomized k-d forest over a fixed point set.
pub struct KdForest {
    nodes: Vec<KdNode>,
    roots: Vec<usize>,
}

const LEAF_SIZE: usize = 8;
const TOP_DIMS: usize = 5;

struct Branch {
    bound: f64,
    node: usize,
}

impl PartialEq for Branch {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound
    }
}
impl Eq for Branch {}
impl PartialOrd for Branch {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Branch {
    // Min-heap on the lower bound.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.node.cmp(&self.node))
    }
}

impl KdForest {
    pub fn build<T: Real>(points: ArrayView2<'_, T>, trees: usize, rng: &mut impl Rng) -> Self {
        let mut forest = KdForest { nodes: Vec::new(), roots: Vec::new() };
        for _ in 0..trees.max(1) {
            let idx: Vec<usize> = (0..points.nrows()).collect();
            let root = forest.build_node(points, idx, rng);
            forest.roots.push(root);
        }
        forest
    }

    fn build_node<T: Real>(&mut self, p: ArrayView2<'_, T>, idx: Vec<usize>, rng: &mut impl Rng) -> usize {
        if idx.len() <= LEAF_SIZE {
            self.nodes.push(KdNode::Leaf(idx));
            return self.nodes.len() - 1;
        }
        let dim = p.ncols();
        let mut mean = vec![0.0; dim];
        let mut var = vec![0.0; dim];
        for &i in &idx {
            for j in 0..dim {
                mean[j] += p[[i, j]].as_f64();
            }
        }
        let cnt = idx.len() as f64;
        mean.iter_mut().for_each(|m| *m /= cnt);
        for &i in &idx {
            for j in 0..dim {
                let d = p[[i, j]].as_f64() - mean[j];
                var[j] += d * d;
            }
        }
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| var[b].total_cmp(&var[a]));
        let top = TOP_DIMS.min(dim);
        let split_dim = order[rng.random_range(0..top)];
        if var[split_dim] <= 0.0 {
            self.nodes.push(KdNode::Leaf(idx));
            return self.nodes.len() - 1;
        }
        let value = mean[split_dim];
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| p[[i, split_dim]].as_f64() < value);
        if l.is_empty() || r.is_empty() {
            self.nodes.push(KdNode::Leaf(idx));
            return self.nodes.len() - 1;
        }
        let slot = self.nodes.len();
        self.nodes.push(KdNode::Leaf(Vec::new()));
        let left = self.build_node(p, l, rng);
        let right = self.build_node(p, r, rng);
        self.nodes[slot] = KdNode::Split { dim: split_dim, value, left, right };
        slot
    }

    /// Approximate nearest point: examines at most `checks` points (always
    /// at least one full leaf). Returns index and squared distance.
    pub fn search<T: Real>(&self, points: ArrayView2<'_, T>, q: ArrayView1<'_, T>, checks: usize) -> (usize, f64) {
        let mut heap = BinaryHeap::new();
        for &r in &self.roots {
            heap.push(Branch { bound: 0.0, node: r });
        }
        let mut seen = vec![false; points.nrows()];
        let mut examined = 0usize;
        let mut best = (usize::MAX, f64::INFINITY);
        while let Some(Branch { bound, node }) = heap.pop() {
            // Min-heap: nothing left can beat the current best.
            if bound >= best.1 || (examined >= checks && best.0 != usize::MAX) {
                break;
            }
            let mut cur = node;
            let cur_bound = bound;
            loop {
                match &self.nodes[cur] {
                    KdNode::Split { dim, value, left, right } => {
                        let diff = q[*dim].as_f64() - value;
                        let (near, far) = if diff < 0.0 { (*left, *right) } else { (*right, *left) };
                        heap.push(Branch { bound: cur_bound.max(diff * diff), node: far });
                        cur = near;
                    }
                    KdNode::Leaf(items) => {
                        for &i in items {
                            if seen[i] {
                                continue;
                            }
                            seen[i] = true;
                            examined += 1;
                            let d = sq_dist(points.row(i), q);
                            if d < best.1 || (d == best.1 && i < best.0) {
                                best = (i, d);
                            }
                        }
                        break;
                    }
                }
            }
        }
        best
    }
}

/// Nearest-centre assignment for every row, exact or approximate.
pub fn assign_all<T: Real>(cb: &Codebook<T>, x: ArrayView2<'_, T>, mode: SearchMode, seed: u64) -> Vec<usize> {
    match mode {
        SearchMode::Exact => x.rows().into_iter().map(|r| cb.assign(r)).collect(),
        SearchMode::Approximate => {
            let mut rng = Pcg64Mcg::seed_from_u64(seed);
            let f = KdForest::build(cb.centers.view(), 4, &mut rng);
            x.rows().into_iter().map(|r| f.search(cb.centers.view(), r, 64).0).collect()
        }
    }
}

/// Total squared distance of each row to its nearest centre.
pub fn distortion<T: Real>(cb: &Codebook<T>, x: ArrayView2<'_, T>) -> f64 {
    x.rows().into_iter().map(|r| nearest(&cb.centers, r).1).sum()
}

//! Lloyd's k-means with seeded random restarts.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major set of equal-length feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("feature dimension must be positive"));
        }
        if data.len() % dim != 0 {
            return Err(Error::arg(format!(
                "{} values do not split into rows of {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::arg("no points"))?;
        let mut data = Vec::with_capacity(dim * rows.len());
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::arg(format!(
                    "point {i} has dimension {}, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub restarts: usize,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 300,
            restarts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub dim: usize,
    /// `k × dim`, row-major.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations_run: usize,
    /// Inertia after every assignment step of the winning run.
    pub inertia_trace: Vec<f64>,
}

impl ClusterModel {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    /// Member count of every cluster.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &a in &self.assignments {
            counts[a] += 1;
        }
        counts
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid; ties go to the lowest index.
#[inline]
fn nearest(centroids: &[f64], dim: usize, p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(centroid, p);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

pub fn predict(model: &ClusterModel, point: &[f64]) -> Result<usize> {
    if point.len() != model.dim {
        return Err(Error::arg(format!(
            "point has dimension {}, model expects {}",
            point.len(),
            model.dim
        )));
    }
    Ok(nearest(&model.centroids, model.dim, point).0)
}

/// Best-inertia model over `params.restarts` runs, each started from `k`
/// distinct points drawn uniformly from a generator seeded by `params.seed`.
pub fn kmeans(points: &FeatureMatrix, params: &KMeansParams) -> Result<ClusterModel> {
    check_k(points, params.k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<ClusterModel> = None;
    for _ in 0..params.restarts.max(1) {
        let picks = sample(&mut rng, points.len(), params.k);
        let init: Vec<f64> = picks.iter().flat_map(|i| points.row(i).to_vec()).collect();
        let model = lloyd(points, init, params.k, params.max_iter);
        if best.as_ref().is_none_or(|b| model.inertia < b.inertia) {
            best = Some(model);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Single Lloyd run from caller-supplied centroids (`k × dim`, row-major).
pub fn kmeans_from(points: &FeatureMatrix, init: &[f64], max_iter: usize) -> Result<ClusterModel> {
    if points.is_empty() {
        return Err(Error::arg("no points"));
    }
    if init.is_empty() || init.len() % points.dim() != 0 {
        return Err(Error::arg("initial centroids do not match the point dimension"));
    }
    let k = init.len() / points.dim();
    Ok(lloyd(points, init.to_vec(), k, max_iter))
}

/// Labellings above this count are not enumerated by [`kmeans_exhaustive`].
pub const EXHAUSTIVE_PARTITION_LIMIT: usize = 1 << 20;

/// Runs Lloyd from every `k`-subset of the points and, when there are at
/// most [`EXHAUSTIVE_PARTITION_LIMIT`] labellings, from the means of every
/// partition into `k` nonempty groups. Point-subset starts alone can all
/// stall in the same local optimum; the partition starts include the
/// optimal partition, which Lloyd leaves in place. Only sensible for a
/// handful of points.
pub fn kmeans_exhaustive(points: &FeatureMatrix, k: usize, max_iter: usize) -> Result<ClusterModel> {
    check_k(points, k)?;
    let n = points.len();
    let mut best: Option<ClusterModel> = None;
    let mut consider = |model: ClusterModel| {
        if best.as_ref().is_none_or(|b| model.inertia < b.inertia) {
            best = Some(model);
        }
    };
    let small = (k as f64).powi(n as i32) <= EXHAUSTIVE_PARTITION_LIMIT as f64;
    if small {
        for_each_partition(n, k, |labels| {
            consider(lloyd(points, group_means(points, labels, k), k, max_iter));
        });
    }
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        let init: Vec<f64> = subset.iter().flat_map(|&i| points.row(i).to_vec()).collect();
        consider(lloyd(points, init, k, max_iter));
        // next combination in lexicographic order
        let Some(i) = (0..k).rev().find(|&i| subset[i] < n - k + i) else {
            break;
        };
        subset[i] += 1;
        for j in i + 1..k {
            subset[j] = subset[j - 1] + 1;
        }
    }
    Ok(best.expect("at least one subset"))
}

/// Calls `f` with every labelling of `n` points into exactly `k` nonempty
/// groups, each partition once (labels appear in first-use order).
fn for_each_partition(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    fn rec(labels: &mut Vec<usize>, n: usize, k: usize, used: usize, f: &mut dyn FnMut(&[usize])) {
        let i = labels.len();
        if i == n {
            if used == k {
                f(labels);
            }
            return;
        }
        // not enough points left to open the remaining groups
        if k - used > n - i {
            return;
        }
        for l in 0..(used + 1).min(k) {
            labels.push(l);
            rec(labels, n, k, used.max(l + 1), f);
            labels.pop();
        }
    }
    rec(&mut Vec::with_capacity(n), n, k, 0, &mut f);
}

fn group_means(points: &FeatureMatrix, labels: &[usize], k: usize) -> Vec<f64> {
    let dim = points.dim();
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.rows().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (c, &cnt) in counts.iter().enumerate() {
        for s in &mut sums[c * dim..(c + 1) * dim] {
            *s /= cnt as f64;
        }
    }
    sums
}

fn check_k(points: &FeatureMatrix, k: usize) -> Result<()> {
    if points.is_empty() {
        return Err(Error::arg("no points"));
    }
    if k == 0 || k > points.len() {
        return Err(Error::arg(format!(
            "k = {k} must lie in 1..={}",
            points.len()
        )));
    }
    Ok(())
}

fn assign(points: &FeatureMatrix, centroids: &[f64], out: &mut [usize]) -> f64 {
    let dim = points.dim();
    let mut inertia = 0.0;
    for (slot, p) in out.iter_mut().zip(points.rows()) {
        let (c, d) = nearest(centroids, dim, p);
        *slot = c;
        inertia += d;
    }
    inertia
}

fn update(points: &FeatureMatrix, assignments: &[usize], centroids: &mut [f64], k: usize) {
    let dim = points.dim();
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.rows().zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p) {
            *s += v;
        }
    }

    let mut taken = Vec::new();
    for c in 0..k {
        let dst = &mut centroids[c * dim..(c + 1) * dim];
        if counts[c] > 0 {
            let n = counts[c] as f64;
            for (d, s) in dst.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                *d = s / n;
            }
        } else {
            taken.push(c);
        }
    }
    if taken.is_empty() {
        return;
    }

    // Reseed each empty cluster with the point farthest from its (updated)
    // centroid, never reusing a point.
    let mut used: Vec<usize> = Vec::new();
    for c in taken {
        let mut far = None;
        let mut far_d = -1.0;
        for (i, (p, &a)) in points.rows().zip(assignments).enumerate() {
            if used.contains(&i) {
                continue;
            }
            let d = sq_dist(p, &centroids[a * dim..(a + 1) * dim]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        if let Some(i) = far {
            used.push(i);
            centroids[c * dim..(c + 1) * dim].copy_from_slice(points.row(i));
        }
    }
}

fn lloyd(points: &FeatureMatrix, mut centroids: Vec<f64>, k: usize, max_iter: usize) -> ClusterModel {
    let n = points.len();
    let mut assignments = vec![0usize; n];
    let mut inertia = assign(points, &centroids, &mut assignments);
    let mut trace = vec![inertia];
    let mut scratch = vec![0usize; n];
    let mut iterations = 0;
    while iterations < max_iter {
        update(points, &assignments, &mut centroids, k);
        iterations += 1;
        inertia = assign(points, &centroids, &mut scratch);
        trace.push(inertia);
        if scratch == assignments {
            break;
        }
        std::mem::swap(&mut assignments, &mut scratch);
    }
    ClusterModel {
        k,
        dim: points.dim(),
        centroids,
        assignments,
        inertia,
        iterations_run: iterations,
        inertia_trace: trace,
    }
}

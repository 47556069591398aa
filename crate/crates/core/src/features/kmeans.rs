use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FeatureError, PatchSet, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves further than this (Euclidean).
    pub tol: f64,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig { k, max_iter: 100, tol: 1e-6, seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: PatchSet,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centroid, one entry per assignment pass.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
#[inline]
pub(crate) fn nearest(x: &[f64], centroids: &PatchSet) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.rows().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn count_distinct(points: &PatchSet, limit: usize) -> usize {
    let mut seen: Vec<&[f64]> = Vec::new();
    for p in points.rows() {
        if !seen.iter().any(|s| *s == p) {
            seen.push(p);
            if seen.len() >= limit {
                break;
            }
        }
    }
    seen.len()
}

/// k-means++ seeding: first centre uniform, each next one drawn with probability ∝ D².
fn seed_plus_plus(points: &PatchSet, k: usize, rng: &mut ChaCha8Rng) -> PatchSet {
    let n = points.len();
    let mut centroids = PatchSet::new(points.dim());
    centroids.push(points.row(rng.gen_range(0..n)));
    let mut d2: Vec<f64> = points.rows().map(|p| sq_dist(p, centroids.row(0))).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            pick = Some(i);
            if target < d {
                break;
            }
            target -= d;
        }
        let pick = pick.expect("fewer distinct points than k");
        centroids.push(points.row(pick));
        let c = centroids.row(centroids.len() - 1).to_vec();
        for (p, d) in points.rows().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(p, &c));
        }
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded at
/// the point currently worst served by its centroid.
pub fn kmeans(points: &PatchSet, config: &KMeansConfig) -> Result<KMeansFit> {
    let k = config.k;
    if k == 0 {
        return Err(FeatureError::InvalidParameter("k must be positive".into()));
    }
    if points.len() < k {
        return Err(FeatureError::InsufficientData(format!(
            "k-means with k={k} needs at least {k} points, got {}",
            points.len()
        )));
    }
    if count_distinct(points, k) < k {
        return Err(FeatureError::InsufficientData(format!("fewer than {k} distinct points")));
    }
    let dim = points.dim();
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centroids = seed_plus_plus(points, k, &mut rng);
    let mut history = Vec::new();
    let mut assignments = vec![0usize; n];
    let mut converged = false;
    let mut iterations = 0;

    const BLOCK: usize = 1024;
    while iterations < config.max_iter {
        iterations += 1;
        let blocks: Vec<Vec<(usize, f64)>> = par::map_range(n.div_ceil(BLOCK), |b| {
            (b * BLOCK..((b + 1) * BLOCK).min(n)).map(|i| nearest(points.row(i), &centroids)).collect()
        });
        let mut objective = 0.0;
        let mut worst = Vec::with_capacity(n);
        for (i, (j, d)) in blocks.into_iter().flatten().enumerate() {
            assignments[i] = j;
            objective += d;
            worst.push(d);
        }
        history.push(objective);

        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (p, &j) in points.rows().zip(&assignments) {
            counts[j] += 1;
            sums[j * dim..(j + 1) * dim].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        let mut updated = PatchSet::new(dim);
        let mut buf = vec![0.0; dim];
        for j in 0..k {
            if counts[j] == 0 {
                // farthest point from its centroid, lowest index on ties
                let (far, _) = worst
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| counts[assignments[i]] > 1)
                    .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
                worst[far] = 0.0;
                let src = assignments[far];
                counts[src] -= 1;
                sums[src * dim..(src + 1) * dim]
                    .iter_mut()
                    .zip(points.row(far))
                    .for_each(|(s, v)| *s -= v);
                assignments[far] = j;
                counts[j] = 1;
                sums[j * dim..(j + 1) * dim].copy_from_slice(points.row(far));
            }
        }
        let mut shift = 0.0f64;
        for j in 0..k {
            for (b, s) in buf.iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                *b = s / counts[j] as f64;
            }
            shift = shift.max(sq_dist(&buf, centroids.row(j)).sqrt());
            updated.push(&buf);
        }
        centroids = updated;
        if shift < config.tol {
            converged = true;
            break;
        }
    }
    Ok(KMeansFit { centroids, assignments, objective_history: history, iterations, converged })
}

//! Embedding-space geometry: cosine distance, adaptive cluster count, and
//! seeded k-means. Generic over the scalar type so the kernel runs on f32 or
//! f64 vectors alike; the crate-root aliases pin the default.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::num::Real;

/// Scales a vector to unit L2 norm in place. Zero vectors stay zero.
pub fn l2_normalize<T: Real>(v: &mut [T]) {
    let norm = v
        .iter()
        .fold(T::zero(), |acc, &x| acc + x * x)
        .sqrt();
    if norm > T::zero() {
        for x in v.iter_mut() {
            *x = *x / norm;
        }
    }
}

/// Cosine distance `1 - cos(a, b)`, in [0, 2]. A zero vector is maximally
/// uninformative: its distance to anything is 1.
pub fn cosine_distance<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len(), "dimension mismatch");
    let mut dot = T::zero();
    let mut norm_a = T::zero();
    let mut norm_b = T::zero();
    for (&x, &y) in a.iter().zip(b.iter()) {
        dot = dot + x * y;
        norm_a = norm_a + x * x;
        norm_b = norm_b + y * y;
    }
    if norm_a == T::zero() || norm_b == T::zero() {
        return T::one();
    }
    T::one() - dot / (norm_a.sqrt() * norm_b.sqrt())
}

/// Adaptive cluster count: `clamp(round(N / target), kmin, kmax)`, except
/// that strata smaller than `kmin` collapse to a single degenerate cluster.
pub fn choose_k(n: usize, target: usize, kmin: usize, kmax: usize) -> usize {
    if n < kmin {
        return 1;
    }
    let rounded = ((n as f64 / target as f64) + 0.5).floor() as usize;
    rounded.clamp(kmin, kmax)
}

/// K-means output: per-point cluster labels (compact, empty clusters
/// dropped) and the surviving centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans<T> {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<T>>,
    pub iterations: usize,
}

impl<T> KMeans<T> {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Point indices per cluster, in ascending index order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.centroids.len()];
        for (point, &cluster) in self.assignments.iter().enumerate() {
            members[cluster].push(point);
        }
        members
    }
}

fn nearest_centroid<T: Real>(point: &[T], centroids: &[Vec<T>]) -> usize {
    let mut best = 0;
    let mut best_dist = cosine_distance(point, &centroids[0]);
    for (idx, centroid) in centroids.iter().enumerate().skip(1) {
        let dist = cosine_distance(point, centroid);
        if dist < best_dist {
            best = idx;
            best_dist = dist;
        }
    }
    best
}

/// Greedy farthest-point initialization: a seeded random first pick, then
/// repeatedly the point with the largest distance to its nearest chosen
/// centroid (ties to the lowest index).
fn init_centroids<T: Real>(points: &[Vec<T>], k: usize, seed: u64) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.gen_range(0..points.len());
    let mut centroids = vec![points[first].clone()];
    let mut min_dist: Vec<T> = points
        .iter()
        .map(|p| cosine_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let mut best = 0;
        for idx in 1..points.len() {
            if min_dist[idx] > min_dist[best] {
                best = idx;
            }
        }
        centroids.push(points[best].clone());
        for (idx, point) in points.iter().enumerate() {
            let dist = cosine_distance(point, centroids.last().expect("just pushed"));
            if dist < min_dist[idx] {
                min_dist[idx] = dist;
            }
        }
    }
    centroids
}

fn mean_centroid<T: Real>(points: &[Vec<T>], member_ids: &[usize], dim: usize) -> Vec<T> {
    let mut centroid = vec![T::zero(); dim];
    for &idx in member_ids {
        for (slot, &value) in centroid.iter_mut().zip(points[idx].iter()) {
            *slot = *slot + value;
        }
    }
    let count = T::from_usize(member_ids.len()).expect("small count fits any float");
    for slot in centroid.iter_mut() {
        *slot = *slot / count;
    }
    l2_normalize(&mut centroid);
    centroid
}

fn shift<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}

/// Seeded k-means with cosine geometry on length-normalized copies of the
/// input. Runs at most 100 iterations or until the largest centroid shift
/// falls below 1e-6. Empty clusters are repaired once per iteration by
/// reseeding at the point farthest from its current centroid; clusters still
/// empty at the end (identical input vectors, k too large) are dropped, so
/// the returned k may be smaller than requested.
pub fn kmeans<T: Real>(points: &[Vec<T>], k: usize, seed: u64) -> KMeans<T> {
    assert!(k >= 1, "k must be at least 1");
    assert!(points.len() >= k, "need at least k points");
    let dim = points[0].len();
    assert!(points.iter().all(|p| p.len() == dim), "dimension mismatch");

    let points: Vec<Vec<T>> = points
        .iter()
        .map(|p| {
            let mut copy = p.clone();
            l2_normalize(&mut copy);
            copy
        })
        .collect();

    let epsilon = T::from_f64(1e-6).expect("epsilon fits any float");
    let mut centroids = init_centroids(&points, k, seed);
    let mut assignments = vec![0usize; points.len()];
    let mut iterations = 0;

    for _ in 0..100 {
        iterations += 1;
        for (idx, point) in points.iter().enumerate() {
            assignments[idx] = nearest_centroid(point, &centroids);
        }

        let mut members = vec![Vec::new(); centroids.len()];
        for (point, &cluster) in assignments.iter().enumerate() {
            members[cluster].push(point);
        }

        // One repair pass: reseed each empty cluster at the point farthest
        // from its assigned centroid.
        for cluster in 0..centroids.len() {
            if !members[cluster].is_empty() {
                continue;
            }
            let mut donor = None;
            let mut donor_dist = T::neg_infinity();
            for (idx, point) in points.iter().enumerate() {
                let dist = cosine_distance(point, &centroids[assignments[idx]]);
                if dist > donor_dist {
                    donor = Some(idx);
                    donor_dist = dist;
                }
            }
            let donor = donor.expect("points are non-empty");
            let previous = assignments[donor];
            members[previous].retain(|&idx| idx != donor);
            members[cluster].push(donor);
            assignments[donor] = cluster;
            centroids[cluster] = points[donor].clone();
        }

        let mut max_shift = T::zero();
        for (cluster, member_ids) in members.iter().enumerate() {
            if member_ids.is_empty() {
                continue;
            }
            let updated = mean_centroid(&points, member_ids, dim);
            let moved = shift(&centroids[cluster], &updated);
            if moved > max_shift {
                max_shift = moved;
            }
            centroids[cluster] = updated;
        }
        if max_shift < epsilon {
            break;
        }
    }

    for (idx, point) in points.iter().enumerate() {
        assignments[idx] = nearest_centroid(point, &centroids);
    }

    // Drop empty clusters, relabeling compactly in centroid order.
    let mut kept = Vec::new();
    let mut relabel = vec![usize::MAX; centroids.len()];
    for (cluster, centroid) in centroids.into_iter().enumerate() {
        if assignments.iter().any(|&a| a == cluster) {
            relabel[cluster] = kept.len();
            kept.push(centroid);
        }
    }
    for label in assignments.iter_mut() {
        *label = relabel[*label];
    }

    KMeans {
        assignments,
        centroids: kept,
        iterations,
    }
}

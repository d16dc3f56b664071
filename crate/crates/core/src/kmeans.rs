//! Seeded k-means (k-means++ initialization, Lloyd iterations) used to place
//! radial-basis-function centers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 300;
pub const SHIFT_TOL: f64 = 1e-9;
pub const MAX_RESEED_ATTEMPTS: usize = 10;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

pub(crate) fn distinct_count(points: &[Vec<f64>]) -> usize {
    let mut sorted: Vec<&Vec<f64>> = points.iter().collect();
    sorted.sort_by(|a, b| lex_cmp(a, b));
    sorted.dedup_by(|a, b| lex_cmp(a, b).is_eq());
    sorted.len()
}

/// Draw an index with probability proportional to `weights`.
fn weighted_pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut target = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            if target < *w {
                return Some(i);
            }
            target -= w;
        }
    }
    weights.iter().rposition(|w| *w > 0.0)
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let i = weighted_pick(rng, &d2).expect("enough distinct points for k centers");
        let c = points[i].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// Cluster `points` into `k` groups and return the centroids in
/// lexicographic order. Identical inputs and seed give identical output.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k-means needs k >= 1".into()));
    }
    let dim = points.first().map(Vec::len).unwrap_or(0);
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::ShapeMismatch("k-means points have mixed dimensions".into()));
    }
    let distinct = distinct_count(points);
    if distinct < k {
        return Err(Error::InvalidArgument(format!(
            "{k} centers requested but only {distinct} distinct points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_init(points, k, &mut rng);
    let mut labels = vec![0usize; points.len()];
    let mut reseeds = 0;

    for _ in 0..MAX_ITERATIONS {
        let mut dists = vec![0.0; points.len()];
        for (i, p) in points.iter().enumerate() {
            let (l, d) = nearest(p, &centers);
            labels[i] = l;
            dists[i] = d;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            if reseeds >= MAX_RESEED_ATTEMPTS {
                return Err(Error::DegenerateClustering {
                    attempts: MAX_RESEED_ATTEMPTS,
                });
            }
            reseeds += 1;
            match weighted_pick(&mut rng, &dists) {
                Some(i) => centers[empty] = points[i].clone(),
                None => {
                    return Err(Error::DegenerateClustering {
                        attempts: reseeds,
                    })
                }
            }
            continue;
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&new, &centers[c]).sqrt());
            centers[c] = new;
        }
        if shift < SHIFT_TOL {
            break;
        }
    }
    centers.sort_by(|a, b| lex_cmp(a, b));
    Ok(centers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_clusters() {
        let mut pts = vec![vec![0.0, 0.0]; 4];
        pts.extend(vec![vec![1.0, 1.0]; 4]);
        for seed in 0..20 {
            let c = kmeans(&pts, 2, seed).unwrap();
            assert_eq!(c, vec![vec![0.0, 0.0], vec![1.0, 1.0]]);
        }
    }

    #[test]
    fn rejects_more_centers_than_distinct_points() {
        let pts = vec![vec![0.0]; 5];
        assert!(kmeans(&pts, 2, 0).is_err());
        assert!(kmeans(&pts, 0, 0).is_err());
    }

    #[test]
    fn seeded_runs_are_identical_and_sorted() {
        let pts: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![t.sin() * 3.0, (1.3 * t).cos() * 2.0]
            })
            .collect();
        let a = kmeans(&pts, 12, 7).unwrap();
        assert_eq!(a, kmeans(&pts, 12, 7).unwrap());
        assert!(a.windows(2).all(|w| lex_cmp(&w[0], &w[1]).is_le()));
        assert_eq!(a.len(), 12);
    }

    #[test]
    fn k_equal_to_distinct_count_returns_the_points() {
        let pts = vec![vec![2.0], vec![0.0], vec![1.0], vec![1.0]];
        assert_eq!(kmeans(&pts, 3, 3).unwrap(), vec![vec![0.0], vec![1.0], vec![2.0]]);
    }
}

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{self, streams, Rng};

pub const MAX_ITERS: usize = 300;
pub const REL_TOL: f64 = 1e-6;

/// Result of k-means clustering.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment {
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index of every point.
    pub assignments: Vec<usize>,
    /// Sum of squared distances of points to their centroids.
    pub inertia: f64,
    /// Inertia after every assignment step of the winning restart.
    pub history: Vec<f64>,
    /// Restart that produced the result.
    pub restart: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, lowest index on ties.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, sq_dist(p, &centroids[0]));
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding: each further centre is drawn with probability
/// proportional to its squared distance from the nearest chosen one.
fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = d2.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if u < acc {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.gen_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn lloyd(
    points: &[Vec<f64>],
    mut centroids: Vec<Vec<f64>>,
) -> (Vec<Vec<f64>>, Vec<usize>, Vec<f64>) {
    let (k, dim) = (centroids.len(), points[0].len());
    let mut assignments = vec![0; points.len()];
    let mut history = Vec::new();
    for _ in 0..MAX_ITERS {
        let mut inertia = 0.0;
        for (a, p) in assignments.iter_mut().zip(points) {
            let (j, d) = nearest(p, &centroids);
            *a = j;
            inertia += d;
        }
        let converged = history.last().is_some_and(|&prev: &f64| {
            (prev - inertia).abs() <= REL_TOL * prev.max(f64::MIN_POSITIVE)
        });
        history.push(inertia);
        if converged {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignments.iter().zip(points) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            // an emptied cluster keeps its previous centre
            if n > 0 {
                *c = s.into_iter().map(|x| x / n as f64).collect();
            }
        }
    }
    (centroids, assignments, history)
}

/// Euclidean k-means with k-means++ seeding; Lloyd iterations run until the
/// relative inertia change drops below `1e-6` or 300 iterations, and the
/// best of `restarts` runs by inertia is returned. Deterministic in `seed`.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<ClusterAssignment> {
    if k == 0 || restarts == 0 {
        return Err(Error::Config("k and restarts must be positive".into()));
    }
    if points.len() < k {
        return Err(Error::Config(format!(
            "{} points cannot form {k} clusters",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::dim("kmeans points", &[dim], &[0]));
    }
    let mut best: Option<ClusterAssignment> = None;
    for restart in 0..restarts {
        let mut rng = rng::substream(seed, streams::KMEANS, restart as u64);
        let init = seed_centroids(points, k, &mut rng);
        let (centroids, assignments, history) = lloyd(points, init);
        let inertia = *history.last().expect("at least one iteration");
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(ClusterAssignment {
                centroids,
                assignments,
                inertia,
                history,
                restart,
            });
        }
    }
    Ok(best.expect("restarts > 0"))
}

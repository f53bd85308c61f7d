//! Lloyd's k-means with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    /// Independent seeded restarts; the lowest final inertia wins.
    pub n_init: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 300,
            tol: 1e-9,
            n_init: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    pub dim: usize,
    pub centroids: Vec<Vec<f64>>,
    pub seed: u64,
    pub iterations: usize,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub inertia_history: Vec<f64>,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(centroids: &[Vec<f64>], v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, v);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn distinct_count(vectors: &[Vec<f64>]) -> usize {
    let mut keys: Vec<Vec<u64>> = vectors
        .iter()
        .map(|v| v.iter().map(|x| (x + 0.0).to_bits()).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn plus_plus_seeds(vectors: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![vectors[rng.random_range(0..vectors.len())].clone()];
    let mut d2: Vec<f64> = vectors.iter().map(|v| squared_distance(v, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = d2.iter().rposition(|&d| d > 0.0).unwrap();
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && u < d {
                    chosen = i;
                    break;
                }
                u -= d;
            }
            chosen
        } else {
            rng.random_range(0..vectors.len())
        };
        let c = vectors[pick].clone();
        for (d, v) in d2.iter_mut().zip(vectors) {
            *d = d.min(squared_distance(v, &c));
        }
        centroids.push(c);
    }
    centroids
}

struct Run {
    centroids: Vec<Vec<f64>>,
    iterations: usize,
    history: Vec<f64>,
}

fn lloyd(vectors: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, cfg: &KMeansConfig) -> Run {
    let dim = vectors[0].len();
    let mut labels = vec![0usize; vectors.len()];
    let mut dists = vec![0.0; vectors.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        for (i, v) in vectors.iter().enumerate() {
            (labels[i], dists[i]) = nearest(&centroids, v);
        }
        history.push(dists.iter().sum());
        if iterations == cfg.max_iter {
            break;
        }
        iterations += 1;

        let mut sums = vec![vec![0.0; dim]; cfg.k];
        let mut counts = vec![0usize; cfg.k];
        for (v, &l) in vectors.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(v) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..cfg.k {
            let new = if counts[c] > 0 {
                sums[c].iter().map(|s| s / counts[c] as f64).collect()
            } else {
                // Empty cluster: move onto the point farthest from its own centroid.
                let far = (0..vectors.len())
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap();
                dists[far] = 0.0;
                vectors[far].clone()
            };
            shift = shift.max(squared_distance(&new, &centroids[c]).sqrt());
            centroids[c] = new;
        }
        if shift <= cfg.tol {
            for (i, v) in vectors.iter().enumerate() {
                (labels[i], dists[i]) = nearest(&centroids, v);
            }
            history.push(dists.iter().sum());
            break;
        }
    }
    Run {
        centroids,
        iterations,
        history,
    }
}

pub fn kmeans_fit(vectors: &[Vec<f64>], cfg: &KMeansConfig) -> Result<KMeansModel> {
    if vectors.is_empty() {
        return Err(Error::config("k-means needs at least one vector"));
    }
    let dim = vectors[0].len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::Shape {
            expected: dim,
            found: bad.len(),
        });
    }
    if cfg.k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    let distinct = distinct_count(vectors);
    if cfg.k > distinct {
        return Err(Error::config(format!(
            "k = {} exceeds {distinct} distinct vectors",
            cfg.k
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<Run> = None;
    for _ in 0..cfg.n_init.max(1) {
        let seeds = plus_plus_seeds(vectors, cfg.k, &mut rng);
        let run = lloyd(vectors, seeds, cfg);
        let better = best
            .as_ref()
            .is_none_or(|b| run.history.last().unwrap() < b.history.last().unwrap());
        if better {
            best = Some(run);
        }
    }
    let run = best.unwrap();
    Ok(KMeansModel {
        k: cfg.k,
        dim,
        inertia: *run.history.last().unwrap(),
        centroids: run.centroids,
        seed: cfg.seed,
        iterations: run.iterations,
        inertia_history: run.history,
    })
}

impl KMeansModel {
    pub fn assign(&self, v: &[f64]) -> Result<usize> {
        if v.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok(nearest(&self.centroids, v).0)
    }

    pub fn inertia_of(&self, vectors: &[Vec<f64>]) -> f64 {
        vectors.iter().map(|v| nearest(&self.centroids, v).1).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimum inertia over every assignment of points to `k` non-empty clusters.
    fn brute_force_inertia(points: &[Vec<f64>], k: usize) -> f64 {
        let n = points.len();
        let mut best = f64::INFINITY;
        let total = k.pow(n as u32);
        for code in 0..total {
            let mut labels = vec![0; n];
            let mut c = code;
            for l in labels.iter_mut() {
                *l = c % k;
                c /= k;
            }
            if (0..k).any(|j| !labels.contains(&j)) {
                continue;
            }
            let mut inertia = 0.0;
            for j in 0..k {
                let members: Vec<&Vec<f64>> = points
                    .iter()
                    .zip(&labels)
                    .filter(|(_, &l)| l == j)
                    .map(|(p, _)| p)
                    .collect();
                let dim = points[0].len();
                let mean: Vec<f64> = (0..dim)
                    .map(|d| members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64)
                    .collect();
                inertia += members.iter().map(|m| squared_distance(m, &mean)).sum::<f64>();
            }
            best = best.min(inertia);
        }
        best
    }

    fn random_points(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect()
    }

    #[test]
    fn k1_is_mean() {
        let pts = random_points(1, 9, 3);
        let m = kmeans_fit(&pts, &KMeansConfig::new(1, 0)).unwrap();
        for d in 0..3 {
            let mean = pts.iter().map(|p| p[d]).sum::<f64>() / 9.0;
            assert!((m.centroids[0][d] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let pts = random_points(2, 6, 2);
        let m = kmeans_fit(&pts, &KMeansConfig::new(6, 0)).unwrap();
        assert_eq!(m.inertia, 0.0);
        for p in &pts {
            assert!(m.centroids.iter().any(|c| c == p));
        }
    }

    #[test]
    fn six_planar_points_match_exhaustive_partition() {
        let pts: Vec<Vec<f64>> = [[0.0, 0.0], [0.5, 0.2], [0.1, 0.9], [5.0, 5.0], [5.5, 4.2], [4.8, 5.9]]
            .iter()
            .map(|p| p.to_vec())
            .collect();
        let m = kmeans_fit(&pts, &KMeansConfig::new(2, 3)).unwrap();
        assert!((m.inertia - brute_force_inertia(&pts, 2)).abs() < 1e-9);
    }

    #[test]
    fn random_small_sets_match_exhaustive_partition() {
        // One Lloyd run can stop in a local optimum; enough restarts find the global one.
        for seed in 0..30 {
            let n = 4 + (seed as usize % 5);
            let k = 2 + (seed as usize % 2);
            let pts = random_points(100 + seed, n, 2);
            let single = kmeans_fit(
                &pts,
                &KMeansConfig {
                    n_init: 1,
                    ..KMeansConfig::new(k, seed)
                },
            )
            .unwrap();
            let oracle = brute_force_inertia(&pts, k);
            assert!(
                single.inertia >= oracle - 1e-9,
                "seed {seed}: {} below {oracle}",
                single.inertia
            );
            let m = kmeans_fit(
                &pts,
                &KMeansConfig {
                    n_init: 50,
                    ..KMeansConfig::new(k, seed)
                },
            )
            .unwrap();
            assert!(
                (m.inertia - oracle).abs() < 1e-9,
                "seed {seed}: {} vs {oracle}",
                m.inertia
            );
            assert!((m.inertia - m.inertia_of(&pts)).abs() < 1e-9);
            for (c, centroid) in m.centroids.iter().enumerate() {
                let members: Vec<&Vec<f64>> = pts.iter().filter(|p| m.assign(p).unwrap() == c).collect();
                if members.is_empty() {
                    continue;
                }
                for d in 0..2 {
                    let mean = members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64;
                    assert!(
                        (centroid[d] - mean).abs() < 1e-9,
                        "seed {seed}: centroid {c} is not its members' mean"
                    );
                }
            }
        }
    }

    #[test]
    fn inertia_is_monotone() {
        let pts = random_points(5, 200, 4);
        let m = kmeans_fit(&pts, &KMeansConfig::new(8, 1)).unwrap();
        for w in m.inertia_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        assert_eq!(m.centroids.len(), 8);
        assert!((m.inertia - m.inertia_of(&pts)).abs() < 1e-9);
    }

    #[test]
    fn too_many_clusters_is_config_error() {
        let pts = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![2.0, 0.0]];
        assert!(matches!(
            kmeans_fit(&pts, &KMeansConfig::new(3, 0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn assign_rules() {
        let m = KMeansModel {
            k: 5,
            dim: 1,
            centroids: vec![vec![10.0], vec![-1.0], vec![20.0], vec![3.0], vec![1.0]],
            seed: 0,
            iterations: 0,
            inertia: 0.0,
            inertia_history: vec![],
        };
        assert_eq!(m.assign(&[3.0]).unwrap(), 3);
        // equidistant from centroid 1 (-1) and 4 (1)
        assert_eq!(m.assign(&[0.0]).unwrap(), 1);
        assert!(matches!(m.assign(&[0.0, 1.0]), Err(Error::Shape { .. })));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let v = [rng.random_range(-30.0..30.0)];
            let scan = (0..5)
                .min_by(|&a, &b| {
                    squared_distance(&m.centroids[a], &v)
                        .total_cmp(&squared_distance(&m.centroids[b], &v))
                        .then(a.cmp(&b))
                })
                .unwrap();
            assert_eq!(m.assign(&v).unwrap(), scan);
        }
    }

    #[test]
    fn relabeling_permutes_assignments() {
        let pts = random_points(7, 50, 3);
        let m = kmeans_fit(&pts, &KMeansConfig::new(4, 2)).unwrap();
        let perm = [2, 0, 3, 1];
        let mut permuted = m.clone();
        for (old, &new) in perm.iter().enumerate() {
            permuted.centroids[new] = m.centroids[old].clone();
        }
        for p in &pts {
            assert_eq!(permuted.assign(p).unwrap(), perm[m.assign(p).unwrap()]);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let pts = random_points(8, 100, 3);
        let cfg = KMeansConfig::new(5, 9);
        assert_eq!(kmeans_fit(&pts, &cfg).unwrap(), kmeans_fit(&pts, &cfg).unwrap());
    }
}

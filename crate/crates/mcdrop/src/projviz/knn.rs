//! Exact k-nearest-neighbor graph and its fuzzy membership calibration.

use super::VizError;

/// Directed kNN graph: each node has exactly k out-edges, no self-edges,
/// neighbors ordered by (distance, index).
#[derive(Debug, Clone)]
pub struct KnnGraph {
    pub n: usize,
    pub k: usize,
    /// neighbors[i] = [(j, d_ij); k]
    pub neighbors: Vec<Vec<(usize, f64)>>,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Exhaustive kNN over the rows. O(n^2 d), which is the point: it doubles
/// as its own ground truth at this scale.
pub fn knn_graph(rows: &[Vec<f64>], k: usize) -> Result<KnnGraph, VizError> {
    let n = rows.len();
    if n <= k {
        return Err(VizError::TooFewPoints { n, k });
    }
    let neighbors = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut dists: Vec<(usize, f64)> = rows
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, other)| (j, euclidean(row, other)))
                .collect();
            dists.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            dists.truncate(k);
            dists
        })
        .collect();
    Ok(KnnGraph { n, k, neighbors })
}

/// Symmetric weighted graph produced by the smooth-kNN calibration.
#[derive(Debug, Clone)]
pub struct FuzzyGraph {
    pub n: usize,
    /// Undirected edges (i, j, weight) with i < j, weight in (0, 1].
    pub edges: Vec<(usize, usize, f64)>,
}

/// Per-point calibration parameters, exposed for inspection.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
}

const BISECTION_ITERS: usize = 64;

/// Smooth-kNN weights: per point, rho is the nearest-neighbor distance and
/// sigma solves sum_j exp(-max(0, d_ij - rho)/sigma) = log2(k). Directed
/// weights are then symmetrized as a + b - a*b.
pub fn fuzzy_weights(knn: &KnnGraph) -> (FuzzyGraph, Calibration) {
    let n = knn.n;
    let target = (knn.k as f64).log2();
    let mut rho = vec![0.0; n];
    let mut sigma = vec![1.0; n];

    for i in 0..n {
        let dists: Vec<f64> = knn.neighbors[i].iter().map(|&(_, d)| d).collect();
        rho[i] = dists.first().copied().unwrap_or(0.0);
        let weight_sum = |s: f64| -> f64 {
            dists
                .iter()
                .map(|&d| (-((d - rho[i]).max(0.0)) / s).exp())
                .sum::<f64>()
        };
        // Bracket the root, then bisect. weight_sum is increasing in sigma.
        let mut lo = 1e-12;
        let mut hi = 1.0;
        let mut iters = 0;
        while weight_sum(hi) < target && iters < BISECTION_ITERS {
            hi *= 2.0;
            iters += 1;
        }
        for _ in 0..BISECTION_ITERS {
            let mid = 0.5 * (lo + hi);
            if weight_sum(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        if (weight_sum(s) - target).abs() > 1e-3 {
            // Degenerate neighborhood (e.g. many duplicates): fall back to
            // the mean neighbor distance.
            let mean = dists.iter().sum::<f64>() / dists.len().max(1) as f64;
            sigma[i] = if mean > 0.0 { mean } else { 1.0 };
        } else {
            sigma[i] = s;
        }
    }

    // Directed membership weights.
    let mut directed = std::collections::HashMap::new();
    for i in 0..n {
        for &(j, d) in &knn.neighbors[i] {
            let w = (-((d - rho[i]).max(0.0)) / sigma[i]).exp();
            directed.insert((i, j), w);
        }
    }
    // Symmetrize. A weight that underflowed to zero is no edge at all.
    let mut edges = Vec::new();
    for i in 0..n {
        for &(j, _) in &knn.neighbors[i] {
            let (lo, hi_) = if i < j { (i, j) } else { (j, i) };
            if i > j && directed.contains_key(&(j, i)) {
                continue; // already handled from the other side
            }
            let a = directed.get(&(lo, hi_)).copied().unwrap_or(0.0);
            let b = directed.get(&(hi_, lo)).copied().unwrap_or(0.0);
            let w = a + b - a * b;
            if w > 0.0 {
                edges.push((lo, hi_, w));
            }
        }
    }
    edges.sort_by_key(|e| (e.0, e.1));
    edges.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    (FuzzyGraph { n, edges }, Calibration { rho, sigma })
}

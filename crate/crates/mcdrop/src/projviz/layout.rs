//! Stochastic-gradient 2-D layout of the fuzzy graph: attraction along
//! weighted edges, repulsion against negatively sampled non-neighbors.
//!
//! All per-point state is keyed by document id: initial coordinates come
//! from a stream keyed by (seed, id) and negative-sampling streams by
//! (seed, epoch, id_i, id_j). Permuting the input rows therefore permutes
//! the output rows and changes nothing else.

use rand::Rng;

use super::knn::FuzzyGraph;
use crate::rng;

/// Curve constants fitted for min_dist 0.1, spread 1.0.
pub const CURVE_A: f64 = 1.5769434603113077;
pub const CURVE_B: f64 = 0.8950608781227859;

/// Per-component displacement clip.
pub const MOVE_CLIP: f64 = 4.0;

#[derive(Debug, Clone)]
pub struct LayoutConfig {
    pub epochs: usize,
    pub negative_samples: usize,
    pub learning_rate: f64,
    pub repulsion_strength: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            epochs: 200,
            negative_samples: 5,
            learning_rate: 1.0,
            repulsion_strength: 1.0,
        }
    }
}

fn clip(v: f64) -> f64 {
    v.clamp(-MOVE_CLIP, MOVE_CLIP)
}

/// Lays out the graph in 2-D. `ids[i]` names node i; nodes must already be
/// in canonical (id-sorted) order for permutation invariance.
pub fn layout(graph: &FuzzyGraph, ids: &[u64], cfg: &LayoutConfig, seed: u64) -> Vec<[f64; 2]> {
    let n = graph.n;
    debug_assert_eq!(ids.len(), n);
    let mut coords: Vec<[f64; 2]> = ids
        .iter()
        .map(|&id| {
            let mut r = rng::stream(seed, &[rng::tag::LAYOUT, id]);
            [rng::next_gaussian(&mut r), rng::next_gaussian(&mut r)]
        })
        .collect();
    if n < 2 {
        return coords;
    }

    let (a, b) = (CURVE_A, CURVE_B);
    for epoch in 0..cfg.epochs {
        let alpha = cfg.learning_rate * (1.0 - epoch as f64 / cfg.epochs as f64);
        for &(i, j, w) in &graph.edges {
            // Attraction along the edge, scaled by membership weight.
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let d2 = dx * dx + dy * dy;
            if d2 > 0.0 {
                let coeff = -2.0 * a * b * d2.powf(b - 1.0) / (1.0 + a * d2.powf(b));
                let mx = clip(coeff * dx) * alpha * w;
                let my = clip(coeff * dy) * alpha * w;
                coords[i][0] += mx;
                coords[i][1] += my;
                coords[j][0] -= mx;
                coords[j][1] -= my;
            }
            // Repulsion from sampled non-neighbors, for both endpoints.
            let mut neg_rng = rng::stream(seed, &[rng::tag::LAYOUT, epoch as u64, ids[i], ids[j]]);
            for &anchor in &[i, j] {
                for _ in 0..cfg.negative_samples {
                    let other = neg_rng.gen_range(0..n);
                    if other == anchor {
                        continue;
                    }
                    let dx = coords[anchor][0] - coords[other][0];
                    let dy = coords[anchor][1] - coords[other][1];
                    let d2 = dx * dx + dy * dy;
                    if d2 == 0.0 {
                        continue;
                    }
                    let coeff =
                        2.0 * cfg.repulsion_strength * b / ((0.001 + d2) * (1.0 + a * d2.powf(b)));
                    coords[anchor][0] += clip(coeff * dx) * alpha;
                    coords[anchor][1] += clip(coeff * dy) * alpha;
                }
            }
        }
    }
    coords
}

//! Sample-space visualization: project each document's vector of
//! probability samples to 2-D, overlay predictive means, bins, and
//! confusion outcomes, estimate the density of the projected space, and
//! render everything to SVG.
//!
//! Internals run in canonical (id-sorted) order and derive all randomness
//! from id-keyed streams, so permuting the input rows permutes the output
//! rows and changes nothing else.

mod kde;
mod knn;
mod layout;
mod svg;

pub use kde::{contour_levels, contour_segments, kde2d, scott_bandwidth, DensityGrid};
pub use knn::{euclidean, fuzzy_weights, knn_graph, Calibration, FuzzyGraph, KnnGraph};
pub use layout::{layout, LayoutConfig, CURVE_A, CURVE_B, MOVE_CLIP};
pub use svg::{render, RenderConfig};

use std::collections::BTreeMap;

use crate::evalharness::Outcome;
use crate::mcd::{PredictiveSummary, SampleVector};

#[derive(Debug, thiserror::Error)]
pub enum VizError {
    #[error("need more than k_nn={k} points, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("no points to project")]
    EmptyPoints,
    #[error("bandwidth {0} must be positive")]
    BadBandwidth(f64),
    #[error("grid size {0} too small")]
    GridTooSmall(usize),
    #[error("duplicate document id {0}")]
    DuplicateId(u64),
    #[error("sample rows have inconsistent widths: {0} vs {1}")]
    RaggedRows(usize, usize),
    #[error("sample for document {id} is {value}, outside (0, 1)")]
    BadSample { id: u64, value: f64 },
    #[error("id mismatch between inputs: {0}")]
    IdMismatch(String),
}

/// n documents by K probability samples.
#[derive(Debug, Clone)]
pub struct SampleMatrix {
    pub ids: Vec<u64>,
    pub rows: Vec<Vec<f64>>,
}

impl SampleMatrix {
    pub fn new(ids: Vec<u64>, rows: Vec<Vec<f64>>) -> Result<Self, VizError> {
        let mut seen = std::collections::HashSet::new();
        for &id in &ids {
            if !seen.insert(id) {
                return Err(VizError::DuplicateId(id));
            }
        }
        let width = rows.first().map_or(0, Vec::len);
        for (id, row) in ids.iter().zip(&rows) {
            if row.len() != width {
                return Err(VizError::RaggedRows(width, row.len()));
            }
            for &v in row {
                if !(v > 0.0 && v < 1.0) {
                    return Err(VizError::BadSample { id: *id, value: v });
                }
            }
        }
        Ok(SampleMatrix { ids, rows })
    }

    pub fn from_vectors(vectors: &[SampleVector]) -> Result<Self, VizError> {
        SampleMatrix::new(
            vectors.iter().map(|v| v.doc_id).collect(),
            vectors.iter().map(|v| v.samples.clone()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// One rendered document: 2-D position plus everything the glyph encodes.
#[derive(Debug, Clone)]
pub struct VizPoint {
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub mean: f64,
    pub bin: u8,
    pub outcome: Outcome,
    pub label_text: String,
}

/// Settings for the projection-and-render pipeline.
#[derive(Debug, Clone)]
pub struct VizConfig {
    pub k_nn: usize,
    pub layout: LayoutConfig,
    pub grid: usize,
    /// Explicit KDE bandwidth; Scott's rule when absent.
    pub bandwidth: Option<f64>,
    pub seed: u64,
    pub render: RenderConfig,
}

impl Default for VizConfig {
    fn default() -> Self {
        VizConfig {
            k_nn: 15,
            layout: LayoutConfig::default(),
            grid: 100,
            bandwidth: None,
            seed: 0,
            render: RenderConfig::default(),
        }
    }
}

/// Projects sample rows to 2-D. Output is aligned with the input rows;
/// internally everything happens in id-sorted order.
pub fn project(samples: &SampleMatrix, cfg: &VizConfig) -> Result<Vec<(u64, f64, f64)>, VizError> {
    if samples.is_empty() {
        return Err(VizError::EmptyPoints);
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by_key(|&i| samples.ids[i]);
    let canon_ids: Vec<u64> = order.iter().map(|&i| samples.ids[i]).collect();
    let canon_rows: Vec<Vec<f64>> = order.iter().map(|&i| samples.rows[i].clone()).collect();

    let knn = knn_graph(&canon_rows, cfg.k_nn)?;
    let (fuzzy, _) = fuzzy_weights(&knn);
    let coords = layout(&fuzzy, &canon_ids, &cfg.layout, cfg.seed);

    let mut by_input: Vec<(u64, f64, f64)> = vec![(0, 0.0, 0.0); samples.len()];
    for (canon_pos, &input_idx) in order.iter().enumerate() {
        by_input[input_idx] = (
            canon_ids[canon_pos],
            coords[canon_pos][0],
            coords[canon_pos][1],
        );
    }
    Ok(by_input)
}

/// Everything the renderer produced, plus the intermediates callers dump to
/// disk.
#[derive(Debug)]
pub struct VizResult {
    pub svg: String,
    pub points: Vec<VizPoint>,
    pub grid: DensityGrid,
    /// (id, x, y) in ascending id order.
    pub coords: Vec<(u64, f64, f64)>,
}

/// Full pipeline: project, estimate density, assemble points, render.
/// `summaries` and `outcomes` must cover exactly the sample ids; `labels`
/// may omit ids (missing labels render as the id alone).
pub fn visualize(
    samples: &SampleMatrix,
    summaries: &[PredictiveSummary],
    outcomes: &[(u64, Outcome)],
    labels: &[(u64, String)],
    cfg: &VizConfig,
) -> Result<VizResult, VizError> {
    if samples.is_empty() {
        return Err(VizError::EmptyPoints);
    }
    let summary_map = unique_map(summaries.iter().map(|s| (s.doc_id, s)))?;
    let outcome_map = unique_map(outcomes.iter().map(|&(id, o)| (id, o)))?;
    let label_map = unique_map(labels.iter().map(|(id, t)| (*id, t.as_str())))?;

    let mut missing = Vec::new();
    for &id in &samples.ids {
        if !summary_map.contains_key(&id) {
            missing.push(format!("doc {id} has samples but no summary"));
        }
        if !outcome_map.contains_key(&id) {
            missing.push(format!("doc {id} has samples but no outcome"));
        }
    }
    let sample_ids: std::collections::HashSet<u64> = samples.ids.iter().copied().collect();
    for id in summary_map.keys() {
        if !sample_ids.contains(id) {
            missing.push(format!("doc {id} has a summary but no samples"));
        }
    }
    for id in outcome_map.keys() {
        if !sample_ids.contains(id) {
            missing.push(format!("doc {id} has an outcome but no samples"));
        }
    }
    if !missing.is_empty() {
        return Err(VizError::IdMismatch(missing.join("; ")));
    }

    let mut coords = project(samples, cfg)?;
    coords.sort_by_key(|&(id, _, _)| id);

    let xy: Vec<(f64, f64)> = coords.iter().map(|&(_, x, y)| (x, y)).collect();
    let bandwidth = cfg.bandwidth.unwrap_or_else(|| scott_bandwidth(&xy));
    let grid = kde2d(&xy, bandwidth, cfg.grid)?;

    let points: Vec<VizPoint> = coords
        .iter()
        .map(|&(id, x, y)| {
            let s = summary_map[&id];
            VizPoint {
                id,
                x,
                y,
                mean: s.mean,
                bin: s.bin,
                outcome: outcome_map[&id],
                label_text: label_map.get(&id).copied().unwrap_or("").to_string(),
            }
        })
        .collect();

    let svg = render(&points, Some(&grid), &cfg.render);
    Ok(VizResult {
        svg,
        points,
        grid,
        coords,
    })
}

fn unique_map<V>(items: impl Iterator<Item = (u64, V)>) -> Result<BTreeMap<u64, V>, VizError> {
    let mut map = BTreeMap::new();
    for (id, v) in items {
        if map.insert(id, v).is_some() {
            return Err(VizError::DuplicateId(id));
        }
    }
    Ok(map)
}

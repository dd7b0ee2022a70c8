//! Monte Carlo dropout inference: K stochastic forward passes per document,
//! the predictive mean over those passes, and spread/bin summaries.
//!
//! Each pass k draws its mask set from a stream keyed by (seed, doc id, k),
//! so the sample vector is identical whether the passes run sequentially or
//! on a thread pool.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::evalharness::Outcome;
use crate::layers::{
    draw_masks, lstm_forward, FeatureSequence, LayerError, ModelConfig, ModelParameters, PROB_EPS,
};
use crate::rng;

/// Default number of stochastic passes.
pub const DEFAULT_K: usize = 500;

#[derive(Debug, thiserror::Error)]
pub enum McdError {
    #[error("K must be at least 1")]
    ZeroPasses,
    #[error("empty sample vector")]
    EmptySamples,
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error("sample io: {0}")]
    Io(#[from] std::io::Error),
}

/// The K stochastic probability outputs for one document, ordered by pass
/// index.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleVector {
    pub doc_id: u64,
    pub samples: Vec<f64>,
}

/// Summary of one document's predictive distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    pub doc_id: u64,
    pub mean: f64,
    /// Population standard deviation of the samples.
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    /// Quarter of [0,1] the mean falls in; a mean of exactly 1 stays in bin 3.
    pub bin: u8,
    /// Predicted label: mean >= 0.5 reads as 1.
    pub label: u8,
}

/// Runs K dropout passes for one document. Pass k draws masks from the
/// stream keyed by (seed, doc_id, k); samples are clamped to the open unit
/// interval at the same epsilon the loss uses.
pub fn mc_forward(
    params: &ModelParameters,
    cfg: &ModelConfig,
    doc_id: u64,
    seq: &FeatureSequence,
    k: usize,
    seed: u64,
) -> Result<SampleVector, McdError> {
    if k == 0 {
        return Err(McdError::ZeroPasses);
    }
    let samples: Result<Vec<f64>, LayerError> = (0..k)
        .into_par_iter()
        .map(|pass| {
            let mask_seed = rng::derive_key(seed, &[rng::tag::MC, doc_id, pass as u64]);
            let masks = draw_masks(cfg, params, mask_seed)?;
            let out = lstm_forward(params, cfg, seq, &masks)?;
            Ok(out.probability.clamp(PROB_EPS, 1.0 - PROB_EPS))
        })
        .collect();
    Ok(SampleVector {
        doc_id,
        samples: samples?,
    })
}

/// Arithmetic mean of the samples, summed left to right.
pub fn predictive_mean(s: &SampleVector) -> Result<f64, McdError> {
    if s.samples.is_empty() {
        return Err(McdError::EmptySamples);
    }
    let mut sum = 0.0;
    for &v in &s.samples {
        sum += v;
    }
    Ok(sum / s.samples.len() as f64)
}

/// Bin index for a mean probability: four equal bins over [0,1], with the
/// top edge clamped so a mean of 1 lands in bin 3.
pub fn probability_bin(mean: f64) -> u8 {
    (mean.min(1.0 - PROB_EPS) * 4.0).floor() as u8
}

/// Full predictive summary for one sample vector.
pub fn summarize(s: &SampleVector) -> Result<PredictiveSummary, McdError> {
    let mean = predictive_mean(s)?;
    let k = s.samples.len() as f64;
    let var = s
        .samples
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / k;
    let min = s.samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = s.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(PredictiveSummary {
        doc_id: s.doc_id,
        mean,
        std_dev: var.sqrt(),
        min,
        max,
        bin: probability_bin(mean),
        label: u8::from(mean >= 0.5),
    })
}

/// Writes the raw sample dump: one `doc_id,k,probability` row per pass.
pub fn write_samples_csv(path: &Path, vectors: &[SampleVector]) -> Result<(), McdError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "doc_id,k,probability")?;
    for v in vectors {
        for (k, p) in v.samples.iter().enumerate() {
            writeln!(f, "{},{},{}", v.doc_id, k, p)?;
        }
    }
    Ok(())
}

/// Writes one summary row per document: `doc_id,mean,std,bin,label,outcome`.
pub fn write_summary_csv(
    path: &Path,
    summaries: &[PredictiveSummary],
    outcomes: &[Outcome],
) -> Result<(), McdError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "doc_id,mean,std,bin,label,outcome")?;
    for (s, o) in summaries.iter().zip(outcomes) {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            s.doc_id, s.mean, s.std_dev, s.bin, s.label, o
        )?;
    }
    Ok(())
}

//! Evaluation protocol: stratified 5-fold cross-validation, classification
//! metrics in percent, confusion outcomes for the visualization, and the
//! logistic-regression baseline on TF-IDF rows.

use std::fmt;

use rand::Rng;

use crate::numcore::sigmoid;
use crate::rng;
use crate::textpipe::SparseVec;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("need at least {k} documents for {k}-fold split, got {n}")]
    TooFewDocs { n: usize, k: usize },
    #[error("fold count must be at least 2")]
    BadFoldCount,
    #[error("prediction/label length mismatch: {preds} vs {labels}")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("label {0} is not 0 or 1")]
    BadLabel(u8),
    #[error("empty training data")]
    EmptyData,
}

/// Confusion outcome of one prediction against its true label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    TrueNegative,
    FalseNegative,
}

impl Outcome {
    pub fn code(self) -> &'static str {
        match self {
            Outcome::TruePositive => "TP",
            Outcome::FalsePositive => "FP",
            Outcome::TrueNegative => "TN",
            Outcome::FalseNegative => "FN",
        }
    }

    pub fn parse(s: &str) -> Option<Outcome> {
        match s {
            "TP" => Some(Outcome::TruePositive),
            "FP" => Some(Outcome::FalsePositive),
            "TN" => Some(Outcome::TrueNegative),
            "FN" => Some(Outcome::FalseNegative),
            _ => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Table lookup: (pred, label) to TP/FP/TN/FN.
pub fn outcome(pred: u8, label: u8) -> Result<Outcome, EvalError> {
    if pred > 1 {
        return Err(EvalError::BadLabel(pred));
    }
    if label > 1 {
        return Err(EvalError::BadLabel(label));
    }
    Ok(match (pred, label) {
        (1, 1) => Outcome::TruePositive,
        (1, 0) => Outcome::FalsePositive,
        (0, 0) => Outcome::TrueNegative,
        (0, 1) => Outcome::FalseNegative,
        _ => unreachable!(),
    })
}

/// Stratified fold assignment for a labeled corpus.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    /// assignments[i] is the fold of `ids[i]`.
    pub ids: Vec<u64>,
    pub assignments: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldPlan {
    /// Doc ids belonging to fold `fold`.
    pub fn fold_ids(&self, fold: usize) -> Vec<u64> {
        self.ids
            .iter()
            .zip(&self.assignments)
            .filter(|(_, &f)| f == fold)
            .map(|(&id, _)| id)
            .collect()
    }

    pub fn fold_of(&self, id: u64) -> Option<usize> {
        self.ids
            .iter()
            .position(|&x| x == id)
            .map(|i| self.assignments[i])
    }
}

/// Deterministic stratified k-fold split. Within each class, ids are
/// shuffled by a seed-derived stream and dealt round-robin, which keeps
/// every fold's class count within one document of the exact ratio.
pub fn kfold_split(docs: &[(u64, u8)], k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::BadFoldCount);
    }
    if docs.len() < k {
        return Err(EvalError::TooFewDocs { n: docs.len(), k });
    }
    if let Some(&(_, y)) = docs.iter().find(|(_, y)| *y > 1) {
        return Err(EvalError::BadLabel(y));
    }
    let mut ids = Vec::with_capacity(docs.len());
    let mut assignments = Vec::with_capacity(docs.len());
    let mut cursor = 0usize;
    for class in [0u8, 1u8] {
        let mut members: Vec<u64> = docs
            .iter()
            .filter(|(_, y)| *y == class)
            .map(|(id, _)| *id)
            .collect();
        members.sort_unstable();
        let mut r = rng::stream(seed, &[rng::tag::FOLD, u64::from(class)]);
        for i in (1..members.len()).rev() {
            let j = r.gen_range(0..=i);
            members.swap(i, j);
        }
        for id in members {
            ids.push(id);
            assignments.push(cursor % k);
            cursor += 1;
        }
    }
    Ok(FoldPlan {
        ids,
        assignments,
        k,
        seed,
    })
}

/// Metrics for one evaluation, in percent, with the confusion counts they
/// came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricEntry {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl MetricEntry {
    pub fn n(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Standard binary metrics with positive class 1; 0/0 ratios read as 0.
pub fn metrics(preds: &[u8], labels: &[u8]) -> Result<MetricEntry, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in preds.iter().zip(labels) {
        match outcome(p, y)? {
            Outcome::TruePositive => tp += 1,
            Outcome::FalsePositive => fp += 1,
            Outcome::TrueNegative => tn += 1,
            Outcome::FalseNegative => fn_ += 1,
        }
    }
    let n = preds.len() as f64;
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let accuracy = if n == 0.0 { 0.0 } else { (tp + tn) as f64 / n };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MetricEntry {
        accuracy: accuracy * 100.0,
        precision: precision * 100.0,
        recall: recall * 100.0,
        f1: f1 * 100.0,
        tp,
        fp,
        tn,
        fn_,
    })
}

/// Per-fold metrics with mean and (population) std across folds.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub per_fold: Vec<MetricEntry>,
}

impl MetricReport {
    pub fn mean_std(&self, field: impl Fn(&MetricEntry) -> f64) -> (f64, f64) {
        let n = self.per_fold.len() as f64;
        let mean = self.per_fold.iter().map(&field).sum::<f64>() / n;
        let var = self
            .per_fold
            .iter()
            .map(|e| {
                let d = field(e) - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        (mean, var.sqrt())
    }

    /// One formatted line per metric, percent with one decimal and the std
    /// in brackets: `74.0 [10.7]`.
    pub fn formatted_row(&self) -> String {
        let cell = |f: fn(&MetricEntry) -> f64| {
            let (m, s) = self.mean_std(f);
            format!("{m:.1} [{s:.1}]")
        };
        format!(
            "{}\t{}\t{}\t{}",
            cell(|e| e.accuracy),
            cell(|e| e.precision),
            cell(|e| e.recall),
            cell(|e| e.f1)
        )
    }
}

/// Logistic-regression weights for sparse TF-IDF rows.
#[derive(Debug, Clone)]
pub struct LogReg {
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Full-batch gradient descent on L2-regularized log-loss. The seed only
/// sets the (tiny) initial weights; the trajectory is deterministic.
pub fn logreg_train(
    rows: &[SparseVec],
    labels: &[u8],
    l2: f64,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<LogReg, EvalError> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(EvalError::EmptyData);
    }
    if let Some(&y) = labels.iter().find(|&&y| y > 1) {
        return Err(EvalError::BadLabel(y));
    }
    let dim = rows[0].dim;
    let mut r = rng::stream(seed, &[rng::tag::LOGREG]);
    let mut weights: Vec<f64> = (0..dim)
        .map(|_| rng::next_gaussian(&mut r) * 0.01)
        .collect();
    let mut bias = 0.0;
    let n = rows.len() as f64;

    for _ in 0..epochs {
        let mut grad_w = vec![0.0; dim];
        let mut grad_b = 0.0;
        for (row, &y) in rows.iter().zip(labels) {
            let z = bias
                + row
                    .entries
                    .iter()
                    .map(|&(i, v)| v * weights[i])
                    .sum::<f64>();
            let err = sigmoid(z) - f64::from(y);
            for &(i, v) in &row.entries {
                grad_w[i] += err * v;
            }
            grad_b += err;
        }
        for i in 0..dim {
            weights[i] -= lr * (grad_w[i] / n + l2 * weights[i]);
        }
        bias -= lr * (grad_b / n + l2 * bias);
    }
    Ok(LogReg { weights, bias })
}

pub fn logreg_predict(model: &LogReg, x: &SparseVec) -> f64 {
    let z = model.bias
        + x.entries
            .iter()
            .map(|&(i, v)| v * model.weights[i])
            .sum::<f64>();
    sigmoid(z)
}

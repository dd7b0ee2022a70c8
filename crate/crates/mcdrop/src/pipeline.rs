//! End-to-end workflows behind the CLI commands: configuration files, the
//! preprocess/train/evaluate/visualize run, the hyperparameter search, and
//! the standalone visualization path. Also writes the run manifest that
//! pins every seed and setting an artifact depended on.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::evalharness::{
    kfold_split, logreg_predict, logreg_train, metrics, outcome, EvalError, MetricEntry,
    MetricReport, Outcome,
};
use crate::layers::{
    save_checkpoint, FeatureMode, FeatureSequence, LayerError, ModelConfig, ModelParameters,
};
use crate::mcd::{
    mc_forward, summarize, write_samples_csv, write_summary_csv, McdError, PredictiveSummary,
    SampleVector,
};
use crate::optim::{
    random_search, train, HyperConfig, Optimizer, SearchDraw, SearchSpace, TrainConfig, TrainError,
};
use crate::projviz::{visualize, LayoutConfig, RenderConfig, SampleMatrix, VizConfig, VizError};
use crate::rng;
use crate::textpipe::{clean, read_corpus, tfidf, tokenize, Document, TextError, Vocabulary};

const TRAIN_TAG: u64 = 0x7472_6169; // "trai"

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("corpus file not found: {0}")]
    MissingCorpus(PathBuf),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Mcd(#[from] McdError),
    #[error(transparent)]
    Viz(#[from] VizError),
    #[error("input: {0}")]
    Input(String),
}

impl PipelineError {
    /// CLI exit code: 2 for input problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Train(TrainError::Numeric { .. }) => 3,
            PipelineError::Layer(LayerError::Num(_)) => 3,
            PipelineError::Mcd(McdError::Layer(LayerError::Num(_))) => 3,
            _ => 2,
        }
    }
}

/// Everything one `run` needs, resolved from a config file plus overrides.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub mode: FeatureMode,
    pub vocab_cap: usize,
    pub model: ModelConfig,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub k_samples: usize,
    pub folds: usize,
    pub logreg_l2: f64,
    pub logreg_epochs: usize,
    pub logreg_lr: f64,
    pub k_nn: usize,
    pub layout_epochs: usize,
    pub negative_samples: usize,
    pub grid: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: PathBuf::new(),
            mode: FeatureMode::VectorInput,
            vocab_cap: crate::textpipe::DEFAULT_VOCAB_CAP,
            model: ModelConfig::default(),
            optimizer: Optimizer::Adam,
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 30,
            k_samples: crate::mcd::DEFAULT_K,
            folds: 5,
            logreg_l2: 1e-4,
            logreg_epochs: 300,
            logreg_lr: 0.5,
            k_nn: 15,
            layout_epochs: 200,
            negative_samples: 5,
            grid: 100,
            seed: 42,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Flat key-value config with `[section]` headers and `#` comments.
fn parse_sections(text: &str) -> Result<BTreeMap<String, String>, PipelineError> {
    let mut map = BTreeMap::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(PipelineError::Config(format!(
                "line {}: expected 'key = value', got '{raw}'",
                lineno + 1
            )));
        };
        let full = format!("{section}.{}", key.trim());
        if map.insert(full.clone(), value.trim().to_string()).is_some() {
            return Err(PipelineError::Config(format!("duplicate key '{full}'")));
        }
    }
    Ok(map)
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut map = parse_sections(&text)?;
        let mut cfg = RunConfig::default();

        let mut take = |key: &str| map.remove(key);
        macro_rules! parse_into {
            ($key:expr, $slot:expr) => {
                if let Some(v) = take($key) {
                    $slot = v.parse().map_err(|_| {
                        PipelineError::Config(format!("bad value '{v}' for {}", $key))
                    })?;
                }
            };
        }

        if let Some(v) = take("corpus.path") {
            cfg.corpus = PathBuf::from(v);
        }
        if let Some(v) = take("features.mode") {
            cfg.mode = match v.as_str() {
                "tfidf" => FeatureMode::VectorInput,
                "embedding" => FeatureMode::Embedding,
                other => {
                    return Err(PipelineError::Config(format!(
                        "features.mode must be tfidf or embedding, got '{other}'"
                    )))
                }
            };
        }
        parse_into!("features.vocab_cap", cfg.vocab_cap);
        parse_into!("features.max_seq_len", cfg.model.max_seq_len);
        parse_into!("model.units", cfg.model.units);
        parse_into!("model.dropout", cfg.model.dropout);
        parse_into!("model.recurrent_dropout", cfg.model.recurrent_dropout);
        parse_into!("model.dense_dropout", cfg.model.dense_dropout);
        parse_into!("model.embedding_dim", cfg.model.embedding_dim);
        parse_into!("model.activation", cfg.model.activation);
        parse_into!("train.optimizer", cfg.optimizer);
        parse_into!("train.learning_rate", cfg.learning_rate);
        parse_into!("train.batch_size", cfg.batch_size);
        parse_into!("train.epochs", cfg.epochs);
        parse_into!("mc.k_samples", cfg.k_samples);
        parse_into!("eval.folds", cfg.folds);
        parse_into!("eval.logreg_l2", cfg.logreg_l2);
        parse_into!("eval.logreg_epochs", cfg.logreg_epochs);
        parse_into!("eval.logreg_lr", cfg.logreg_lr);
        parse_into!("viz.k_nn", cfg.k_nn);
        parse_into!("viz.layout_epochs", cfg.layout_epochs);
        parse_into!("viz.negative_samples", cfg.negative_samples);
        parse_into!("viz.grid", cfg.grid);
        parse_into!("run.seed", cfg.seed);
        if let Some(v) = take("run.out_dir") {
            cfg.out_dir = PathBuf::from(v);
        }

        if let Some(unknown) = map.keys().next() {
            return Err(PipelineError::Config(format!("unknown key '{unknown}'")));
        }
        cfg.model.mode = cfg.mode;
        Ok(cfg)
    }

    /// Canonical text form: every resolved setting, one per line. This is
    /// what the manifest records and hashes.
    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "corpus.path = {}", self.corpus.display());
        let _ = writeln!(
            s,
            "features.mode = {}",
            match self.mode {
                FeatureMode::VectorInput => "tfidf",
                FeatureMode::Embedding => "embedding",
            }
        );
        let _ = writeln!(s, "features.vocab_cap = {}", self.vocab_cap);
        let _ = writeln!(s, "features.max_seq_len = {}", self.model.max_seq_len);
        let _ = writeln!(s, "model.units = {}", self.model.units);
        let _ = writeln!(s, "model.dropout = {}", self.model.dropout);
        let _ = writeln!(
            s,
            "model.recurrent_dropout = {}",
            self.model.recurrent_dropout
        );
        let _ = writeln!(s, "model.dense_dropout = {}", self.model.dense_dropout);
        let _ = writeln!(s, "model.embedding_dim = {}", self.model.embedding_dim);
        let _ = writeln!(s, "model.activation = {}", self.model.activation);
        let _ = writeln!(s, "train.optimizer = {}", self.optimizer);
        let _ = writeln!(s, "train.learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "train.batch_size = {}", self.batch_size);
        let _ = writeln!(s, "train.epochs = {}", self.epochs);
        let _ = writeln!(s, "mc.k_samples = {}", self.k_samples);
        let _ = writeln!(s, "eval.folds = {}", self.folds);
        let _ = writeln!(s, "eval.logreg_l2 = {}", self.logreg_l2);
        let _ = writeln!(s, "eval.logreg_epochs = {}", self.logreg_epochs);
        let _ = writeln!(s, "eval.logreg_lr = {}", self.logreg_lr);
        let _ = writeln!(s, "viz.k_nn = {}", self.k_nn);
        let _ = writeln!(s, "viz.layout_epochs = {}", self.layout_epochs);
        let _ = writeln!(s, "viz.negative_samples = {}", self.negative_samples);
        let _ = writeln!(s, "viz.grid = {}", self.grid);
        let _ = writeln!(s, "run.seed = {}", self.seed);
        s
    }
}

/// Per-fold artifact bundle plus the final metric reports.
#[derive(Debug)]
pub struct RunOutcome {
    pub lstm_report: MetricReport,
    pub logreg_report: MetricReport,
    /// Per-document (id, predicted, label, summary), across all folds.
    pub documents: Vec<(u64, u8, u8, PredictiveSummary)>,
}

/// One fold's working set after preprocessing and featurization.
struct FoldData {
    train_seqs: Vec<(FeatureSequence, u8)>,
    test_seqs: Vec<(u64, FeatureSequence, u8)>,
    train_rows: Vec<crate::textpipe::SparseVec>,
    test_rows: Vec<crate::textpipe::SparseVec>,
    train_labels: Vec<u8>,
    vocab: Vocabulary,
}

fn featurize_fold(
    docs: &[Document],
    tokens: &[Vec<String>],
    test_ids: &[u64],
    cfg: &RunConfig,
) -> Result<FoldData, PipelineError> {
    let is_test: Vec<bool> = docs.iter().map(|d| test_ids.contains(&d.id)).collect();
    let train_tokens: Vec<Vec<String>> = tokens
        .iter()
        .zip(&is_test)
        .filter(|(_, &t)| !t)
        .map(|(t, _)| t.clone())
        .collect();
    let vocab = Vocabulary::build(&train_tokens, cfg.vocab_cap);
    if vocab.is_empty() {
        return Err(PipelineError::Input(
            "training folds produced an empty vocabulary".into(),
        ));
    }

    let train_docs: Vec<(&Document, &Vec<String>)> = docs
        .iter()
        .zip(tokens)
        .zip(&is_test)
        .filter(|(_, &t)| !t)
        .map(|((d, tk), _)| (d, tk))
        .collect();
    let test_docs: Vec<(&Document, &Vec<String>)> = docs
        .iter()
        .zip(tokens)
        .zip(&is_test)
        .filter(|(_, &t)| t)
        .map(|((d, tk), _)| (d, tk))
        .collect();

    let train_rows = tfidf(
        &train_docs
            .iter()
            .map(|(_, t)| (*t).clone())
            .collect::<Vec<_>>(),
        &vocab,
    )?;
    let test_rows = tfidf(
        &test_docs
            .iter()
            .map(|(_, t)| (*t).clone())
            .collect::<Vec<_>>(),
        &vocab,
    )?;

    let seq_for = |tokens: &Vec<String>, row: &crate::textpipe::SparseVec| match cfg.mode {
        FeatureMode::VectorInput => FeatureSequence::Vector(row.to_dense()),
        FeatureMode::Embedding => FeatureSequence::Tokens(vocab.encode(tokens)),
    };

    let train_seqs = train_docs
        .iter()
        .zip(&train_rows)
        .map(|((d, tk), row)| (seq_for(tk, row), d.label))
        .collect();
    let test_seqs = test_docs
        .iter()
        .zip(&test_rows)
        .map(|((d, tk), row)| (d.id, seq_for(tk, row), d.label))
        .collect();
    let train_labels = train_docs.iter().map(|(d, _)| d.label).collect();

    Ok(FoldData {
        train_seqs,
        test_seqs,
        train_rows,
        test_rows,
        train_labels,
        vocab,
    })
}

/// The full workflow: preprocess, stratified k-fold train/evaluate, Monte
/// Carlo inference on each test fold, metric reports, and one SVG per fold.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, PipelineError> {
    if !cfg.corpus.exists() {
        return Err(PipelineError::MissingCorpus(cfg.corpus.clone()));
    }
    fs::create_dir_all(&cfg.out_dir)?;
    let docs = read_corpus(&cfg.corpus)?;
    if docs.is_empty() {
        return Err(PipelineError::Input("corpus has no documents".into()));
    }

    let tokens: Vec<Vec<String>> = docs.par_iter().map(|d| tokenize(&clean(&d.text))).collect();

    let id_labels: Vec<(u64, u8)> = docs.iter().map(|d| (d.id, d.label)).collect();
    let plan = kfold_split(
        &id_labels,
        cfg.folds,
        rng::derive_key(cfg.seed, &[rng::tag::FOLD]),
    )?;

    let mut model_cfg = cfg.model.clone();
    model_cfg.mode = cfg.mode;
    model_cfg.validate()?;

    let mut lstm_entries = Vec::new();
    let mut logreg_entries = Vec::new();
    let mut documents = Vec::new();

    for fold in 0..cfg.folds {
        let test_ids = plan.fold_ids(fold);
        let data = featurize_fold(&docs, &tokens, &test_ids, cfg)?;

        let input_width = match cfg.mode {
            FeatureMode::VectorInput => data.vocab.len(),
            FeatureMode::Embedding => model_cfg.embedding_dim,
        };
        let init_seed = rng::derive_key(cfg.seed, &[rng::tag::INIT, fold as u64]);
        let params = ModelParameters::init(&model_cfg, input_width, data.vocab.len(), init_seed);
        let trained = train(
            params,
            &model_cfg,
            &data.train_seqs,
            &TrainConfig {
                optimizer: cfg.optimizer,
                learning_rate: cfg.learning_rate,
                batch_size: cfg.batch_size,
                epochs: cfg.epochs,
                seed: rng::derive_key(cfg.seed, &[TRAIN_TAG, fold as u64]),
            },
        )?;

        // Stochastic inference on the held-out fold.
        let mc_seed = rng::derive_key(cfg.seed, &[rng::tag::MC, fold as u64]);
        let vectors: Result<Vec<SampleVector>, McdError> = data
            .test_seqs
            .par_iter()
            .map(|(id, seq, _)| {
                mc_forward(
                    &trained.params,
                    &model_cfg,
                    *id,
                    seq,
                    cfg.k_samples,
                    mc_seed,
                )
            })
            .collect();
        let vectors = vectors?;
        let summaries: Vec<PredictiveSummary> =
            vectors.iter().map(summarize).collect::<Result<_, _>>()?;

        let labels: Vec<u8> = data.test_seqs.iter().map(|(_, _, y)| *y).collect();
        let preds: Vec<u8> = summaries.iter().map(|s| s.label).collect();
        lstm_entries.push(metrics(&preds, &labels)?);

        // Logistic-regression baseline on the same TF-IDF features.
        let logreg = logreg_train(
            &data.train_rows,
            &data.train_labels,
            cfg.logreg_l2,
            cfg.logreg_epochs,
            cfg.logreg_lr,
            rng::derive_key(cfg.seed, &[rng::tag::LOGREG, fold as u64]),
        )?;
        let lr_preds: Vec<u8> = data
            .test_rows
            .iter()
            .map(|row| u8::from(logreg_predict(&logreg, row) >= 0.5))
            .collect();
        logreg_entries.push(metrics(&lr_preds, &labels)?);

        let outcomes: Vec<(u64, Outcome)> = data
            .test_seqs
            .iter()
            .zip(&preds)
            .map(|((id, _, y), &p)| Ok((*id, outcome(p, *y)?)))
            .collect::<Result<_, EvalError>>()?;

        for ((id, _, y), (p, s)) in data.test_seqs.iter().zip(preds.iter().zip(&summaries)) {
            documents.push((*id, *p, *y, s.clone()));
        }

        // Fold artifacts.
        let label_snippets: Vec<(u64, String)> = docs
            .iter()
            .filter(|d| test_ids.contains(&d.id))
            .map(|d| (d.id, d.text.chars().take(60).collect()))
            .collect();
        write_fold_artifacts(
            cfg,
            fold,
            &trained.params,
            &data.vocab,
            &vectors,
            &summaries,
            &outcomes,
            &label_snippets,
        )?;
    }

    let lstm_report = MetricReport {
        per_fold: lstm_entries,
    };
    let logreg_report = MetricReport {
        per_fold: logreg_entries,
    };
    write_metric_files(cfg, &lstm_report, &logreg_report)?;
    write_manifest(cfg, docs.len())?;

    Ok(RunOutcome {
        lstm_report,
        logreg_report,
        documents,
    })
}

#[allow(clippy::too_many_arguments)]
fn write_fold_artifacts(
    cfg: &RunConfig,
    fold: usize,
    params: &ModelParameters,
    vocab: &Vocabulary,
    vectors: &[SampleVector],
    summaries: &[PredictiveSummary],
    outcomes: &[(u64, Outcome)],
    labels: &[(u64, String)],
) -> Result<(), PipelineError> {
    let out = &cfg.out_dir;
    write_samples_csv(&out.join(format!("samples_fold{fold}.csv")), vectors)?;
    let ordered_outcomes: Vec<Outcome> = outcomes.iter().map(|&(_, o)| o).collect();
    write_summary_csv(
        &out.join(format!("summary_fold{fold}.csv")),
        summaries,
        &ordered_outcomes,
    )?;
    save_checkpoint(&out.join(format!("model_fold{fold}.ckpt")), params)?;
    vocab.save(&out.join(format!("vocab_fold{fold}.tsv")))?;

    let mut lf = fs::File::create(out.join(format!("labels_fold{fold}.tsv")))?;
    for (id, text) in labels {
        writeln!(lf, "{id}\t{text}")?;
    }

    let matrix = SampleMatrix::from_vectors(vectors)?;
    let viz_cfg = VizConfig {
        k_nn: cfg.k_nn.min(matrix.len().saturating_sub(1)).max(1),
        layout: LayoutConfig {
            epochs: cfg.layout_epochs,
            negative_samples: cfg.negative_samples,
            ..LayoutConfig::default()
        },
        grid: cfg.grid,
        bandwidth: None,
        seed: rng::derive_key(cfg.seed, &[rng::tag::LAYOUT, fold as u64]),
        render: RenderConfig::default(),
    };
    let viz = visualize(&matrix, summaries, outcomes, labels, &viz_cfg)?;
    fs::write(out.join(format!("fold{fold}.svg")), viz.svg.as_bytes())?;

    let mut cf = fs::File::create(out.join(format!("coords_fold{fold}.csv")))?;
    writeln!(cf, "id,x,y")?;
    for (id, x, y) in &viz.coords {
        writeln!(cf, "{id},{x},{y}")?;
    }
    Ok(())
}

fn write_metric_files(
    cfg: &RunConfig,
    lstm: &MetricReport,
    logreg: &MetricReport,
) -> Result<(), PipelineError> {
    let mut csv = String::from("model,fold,accuracy,precision,recall,f1,tp,fp,tn,fn\n");
    let mut push_rows = |name: &str, report: &MetricReport| {
        for (i, e) in report.per_fold.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{name},{i},{},{},{},{},{},{},{},{}",
                e.accuracy, e.precision, e.recall, e.f1, e.tp, e.fp, e.tn, e.fn_
            );
        }
        let (am, asd) = report.mean_std(|e| e.accuracy);
        let (pm, psd) = report.mean_std(|e| e.precision);
        let (rm, rsd) = report.mean_std(|e| e.recall);
        let (fm, fsd) = report.mean_std(|e| e.f1);
        let _ = writeln!(
            csv,
            "{name},mean,{am},{pm},{rm},{fm},,,,\n{name},std,{asd},{psd},{rsd},{fsd},,,,"
        );
    };
    push_rows("mcd_lstm", lstm);
    push_rows("logreg", logreg);
    fs::write(cfg.out_dir.join("metrics.csv"), csv)?;

    let mut txt = String::new();
    let _ = writeln!(
        txt,
        "{:<12}{:>16}{:>16}{:>16}{:>16}",
        "Model", "Accuracy", "Precision", "Recall", "F1"
    );
    for (name, report) in [("MCD LSTM", lstm), ("LR", logreg)] {
        let cell = |f: fn(&MetricEntry) -> f64| {
            let (m, s) = report.mean_std(f);
            format!("{m:.1} [{s:.1}]")
        };
        let _ = writeln!(
            txt,
            "{:<12}{:>16}{:>16}{:>16}{:>16}",
            name,
            cell(|e| e.accuracy),
            cell(|e| e.precision),
            cell(|e| e.recall),
            cell(|e| e.f1)
        );
    }
    fs::write(cfg.out_dir.join("metrics.txt"), txt)?;
    Ok(())
}

fn write_manifest(cfg: &RunConfig, n_docs: usize) -> Result<(), PipelineError> {
    let resolved = cfg.resolved_text();
    let hash: String = Sha256::digest(resolved.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let mut m = String::new();
    let _ = writeln!(m, "tool = mcdrop {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "config_sha256 = {hash}");
    let _ = writeln!(m, "documents = {n_docs}");
    let _ = writeln!(m, "root_seed = {}", cfg.seed);
    let _ = writeln!(m, "--- resolved configuration ---");
    m.push_str(&resolved);
    fs::write(cfg.out_dir.join("manifest.txt"), m)?;
    Ok(())
}

/// Random hyperparameter search wired to a corpus: each draw trains on a
/// stratified 80% split and scores deterministic-forward accuracy on the
/// held-out 20%.
pub fn search(
    cfg: &RunConfig,
    budget: usize,
) -> Result<(SearchDraw, Vec<SearchDraw>), PipelineError> {
    if !cfg.corpus.exists() {
        return Err(PipelineError::MissingCorpus(cfg.corpus.clone()));
    }
    let docs = read_corpus(&cfg.corpus)?;
    let tokens: Vec<Vec<String>> = docs.par_iter().map(|d| tokenize(&clean(&d.text))).collect();
    let id_labels: Vec<(u64, u8)> = docs.iter().map(|d| (d.id, d.label)).collect();
    // Fold 0 of a stratified 5-fold split is the 20% validation holdout.
    let plan = kfold_split(
        &id_labels,
        5,
        rng::derive_key(cfg.seed, &[rng::tag::SEARCH, rng::tag::FOLD]),
    )?;
    let val_ids = plan.fold_ids(0);
    let data = featurize_fold(&docs, &tokens, &val_ids, cfg)?;

    let space = SearchSpace::standard(budget);
    let root = cfg.seed;
    let base_cfg = cfg.clone();
    let evaluate = move |draw: usize, hyper: &HyperConfig| -> Result<f64, String> {
        score_hyper_config(
            &base_cfg,
            &data,
            hyper,
            rng::derive_key(root, &[rng::tag::SEARCH, draw as u64]),
        )
        .map_err(|e| e.to_string())
    };
    Ok(random_search(&space, evaluate, cfg.seed)?)
}

/// Trains one candidate configuration and returns holdout accuracy under
/// deterministic (all-ones-mask) inference.
fn score_hyper_config(
    cfg: &RunConfig,
    data: &FoldData,
    hyper: &HyperConfig,
    seed: u64,
) -> Result<f64, PipelineError> {
    let model_cfg = ModelConfig {
        mode: cfg.mode,
        units: hyper.units,
        dropout: hyper.dropout,
        recurrent_dropout: hyper.dropout,
        dense_dropout: hyper.dropout,
        embedding_dim: cfg.model.embedding_dim,
        activation: hyper.activation,
        max_seq_len: cfg.model.max_seq_len,
    };
    let input_width = match cfg.mode {
        FeatureMode::VectorInput => data.vocab.len(),
        FeatureMode::Embedding => model_cfg.embedding_dim,
    };
    let params = ModelParameters::init(
        &model_cfg,
        input_width,
        data.vocab.len(),
        rng::derive_key(seed, &[rng::tag::INIT]),
    );
    let trained = train(
        params,
        &model_cfg,
        &data.train_seqs,
        &TrainConfig {
            optimizer: hyper.optimizer,
            learning_rate: cfg.learning_rate,
            batch_size: hyper.batch_size,
            epochs: hyper.epochs,
            seed: rng::derive_key(seed, &[TRAIN_TAG]),
        },
    )?;
    let masks = crate::layers::unit_masks(&trained.params);
    let mut correct = 0usize;
    for (_, seq, y) in &data.test_seqs {
        let p = crate::layers::lstm_forward(&trained.params, &model_cfg, seq, &masks)?.probability;
        if (p >= 0.5) == (*y == 1) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.test_seqs.len() as f64)
}

/// Writes the search leaderboard CSV: draw index, config fields, score.
pub fn write_leaderboard(path: &Path, board: &[SearchDraw]) -> Result<(), PipelineError> {
    let mut f = fs::File::create(path)?;
    writeln!(
        f,
        "draw_index,optimizer,batch_size,activation,epochs,units,dropout,score"
    )?;
    for d in board {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            d.index,
            d.config.optimizer,
            d.config.batch_size,
            d.config.activation,
            d.config.epochs,
            d.config.units,
            d.config.dropout,
            d.score
        )?;
    }
    Ok(())
}

/// Reads a `doc_id,k,probability` sample dump back into sample vectors.
pub fn read_samples_csv(path: &Path) -> Result<Vec<SampleVector>, PipelineError> {
    let text = fs::read_to_string(path)?;
    let mut order: Vec<u64> = Vec::new();
    let mut by_id: BTreeMap<u64, Vec<(usize, f64)>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != "doc_id,k,probability" {
                return Err(PipelineError::Input(format!(
                    "{}: expected header 'doc_id,k,probability', got '{line}'",
                    path.display()
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (id, k, p) = (
            parts.next().unwrap_or(""),
            parts.next().unwrap_or(""),
            parts.next().unwrap_or(""),
        );
        let id: u64 = id
            .parse()
            .map_err(|_| PipelineError::Input(format!("bad doc_id '{id}'")))?;
        let k: usize = k
            .parse()
            .map_err(|_| PipelineError::Input(format!("bad pass index '{k}'")))?;
        let p: f64 = p
            .parse()
            .map_err(|_| PipelineError::Input(format!("bad probability '{p}'")))?;
        if !by_id.contains_key(&id) {
            order.push(id);
        }
        by_id.entry(id).or_default().push((k, p));
    }
    let mut out = Vec::new();
    for id in order {
        let mut samples = by_id.remove(&id).unwrap();
        samples.sort_by_key(|&(k, _)| k);
        out.push(SampleVector {
            doc_id: id,
            samples: samples.into_iter().map(|(_, p)| p).collect(),
        });
    }
    Ok(out)
}

/// Summaries plus per-document outcomes, as stored in the summary CSV.
pub type SummaryRows = (Vec<PredictiveSummary>, Vec<(u64, Outcome)>);

/// Reads the summary CSV written by [`write_summary_csv`].
pub fn read_summary_csv(path: &Path) -> Result<SummaryRows, PipelineError> {
    let text = fs::read_to_string(path)?;
    let mut summaries = Vec::new();
    let mut outcomes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(PipelineError::Input(format!(
                "summary row has {} fields, expected 6: '{line}'",
                fields.len()
            )));
        }
        let parse_err =
            |what: &str, v: &str| PipelineError::Input(format!("bad {what} '{v}' in summary file"));
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| parse_err("doc_id", fields[0]))?;
        let mean: f64 = fields[1]
            .parse()
            .map_err(|_| parse_err("mean", fields[1]))?;
        let std_dev: f64 = fields[2].parse().map_err(|_| parse_err("std", fields[2]))?;
        let bin: u8 = fields[3].parse().map_err(|_| parse_err("bin", fields[3]))?;
        let label: u8 = fields[4]
            .parse()
            .map_err(|_| parse_err("label", fields[4]))?;
        let out = Outcome::parse(fields[5]).ok_or_else(|| parse_err("outcome", fields[5]))?;
        summaries.push(PredictiveSummary {
            doc_id: id,
            mean,
            std_dev,
            min: 0.0,
            max: 1.0,
            bin,
            label,
        });
        outcomes.push((id, out));
    }
    Ok((summaries, outcomes))
}

/// Reads an `id<TAB>snippet` label file.
pub fn read_labels_tsv(path: &Path) -> Result<Vec<(u64, String)>, PipelineError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, snippet) = line
            .split_once('\t')
            .ok_or_else(|| PipelineError::Input(format!("label line missing tab: '{line}'")))?;
        let id: u64 = id
            .parse()
            .map_err(|_| PipelineError::Input(format!("bad label id '{id}'")))?;
        out.push((id, snippet.to_string()));
    }
    Ok(out)
}

/// The standalone visualization path: CSV inputs to SVG plus a coordinate
/// dump next to it.
pub fn viz_from_files(
    samples_path: &Path,
    summary_path: &Path,
    labels_path: Option<&Path>,
    out_svg: &Path,
    seed: u64,
    k_nn: usize,
) -> Result<(), PipelineError> {
    let vectors = read_samples_csv(samples_path)?;
    if vectors.is_empty() {
        return Err(PipelineError::Input(format!(
            "{}: no sample rows",
            samples_path.display()
        )));
    }
    let (summaries, outcomes) = read_summary_csv(summary_path)?;
    let labels = match labels_path {
        Some(p) => read_labels_tsv(p)?,
        None => Vec::new(),
    };
    let matrix = SampleMatrix::from_vectors(&vectors)?;
    let cfg = VizConfig {
        k_nn: k_nn.min(matrix.len().saturating_sub(1)).max(1),
        seed,
        ..VizConfig::default()
    };
    let viz = visualize(&matrix, &summaries, &outcomes, &labels, &cfg)?;
    fs::write(out_svg, viz.svg.as_bytes())?;

    let coords_path = out_svg.with_extension("coords.csv");
    let mut cf = fs::File::create(coords_path)?;
    writeln!(cf, "id,x,y")?;
    for (id, x, y) in &viz.coords {
        writeln!(cf, "{id},{x},{y}")?;
    }
    Ok(())
}

/// Preprocess-only path: cleans every document and writes a corpus CSV with
/// the cleaned text.
pub fn clean_corpus(corpus: &Path, out: &Path) -> Result<usize, PipelineError> {
    if !corpus.exists() {
        return Err(PipelineError::MissingCorpus(corpus.to_path_buf()));
    }
    let docs = read_corpus(corpus)?;
    let mut f = fs::File::create(out)?;
    writeln!(f, "id,text,label")?;
    for d in &docs {
        // Cleaned text is lowercase alphanumerics and spaces, so no quoting
        // is needed.
        writeln!(f, "{},{},{}", d.id, clean(&d.text), d.label)?;
    }
    Ok(docs.len())
}

/// Computes the metric report for a `doc_id,pred,label` CSV.
pub fn metrics_from_file(path: &Path) -> Result<MetricEntry, PipelineError> {
    let text = fs::read_to_string(path)?;
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(PipelineError::Input(format!(
                "prediction row needs doc_id,pred,label: '{line}'"
            )));
        }
        preds.push(
            fields[1]
                .parse()
                .map_err(|_| PipelineError::Input(format!("bad pred '{}'", fields[1])))?,
        );
        labels.push(
            fields[2]
                .parse()
                .map_err(|_| PipelineError::Input(format!("bad label '{}'", fields[2])))?,
        );
    }
    Ok(metrics(&preds, &labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parser_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(
            &path,
            "# demo\n[corpus]\npath = corpus.csv\n\n[model]\nunits = 8\ndropout = 0.3\n\n[run]\nseed = 7\nout_dir = results\n",
        )
        .unwrap();
        let cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!(cfg.corpus, PathBuf::from("corpus.csv"));
        assert_eq!(cfg.model.units, 8);
        assert_eq!(cfg.model.dropout, 0.3);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.out_dir, PathBuf::from("results"));
        // Untouched keys keep defaults.
        assert_eq!(cfg.folds, 5);
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "[model]\nunitz = 8\n").unwrap();
        let err = RunConfig::from_file(&path).unwrap_err();
        assert!(err.to_string().contains("model.unitz"), "{err}");
    }

    #[test]
    fn bad_value_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "[train]\nepochs = soon\n").unwrap();
        assert!(RunConfig::from_file(&path).is_err());
    }

    #[test]
    fn missing_corpus_is_input_error() {
        let cfg = RunConfig {
            corpus: PathBuf::from("/nonexistent/nope.csv"),
            ..RunConfig::default()
        };
        let err = run(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("nope.csv"));
    }

    #[test]
    fn sample_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.csv");
        let vectors = vec![
            SampleVector {
                doc_id: 3,
                samples: vec![0.25, 0.75, 0.625],
            },
            SampleVector {
                doc_id: 9,
                samples: vec![0.1, 0.9, 0.5],
            },
        ];
        write_samples_csv(&path, &vectors).unwrap();
        let read = read_samples_csv(&path).unwrap();
        assert_eq!(read.len(), 2);
        assert_eq!(read[0].doc_id, 3);
        assert_eq!(read[0].samples, vectors[0].samples);
        assert_eq!(read[1].samples, vectors[1].samples);
    }

    #[test]
    fn summary_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        let summaries = vec![PredictiveSummary {
            doc_id: 4,
            mean: 0.625,
            std_dev: 0.125,
            min: 0.5,
            max: 0.75,
            bin: 2,
            label: 1,
        }];
        write_summary_csv(&path, &summaries, &[Outcome::FalsePositive]).unwrap();
        let (s, o) = read_summary_csv(&path).unwrap();
        assert_eq!(s[0].doc_id, 4);
        assert_eq!(s[0].mean, 0.625);
        assert_eq!(o[0], (4, Outcome::FalsePositive));
    }

    #[test]
    fn end_to_end_tiny_run() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("tiny.csv");
        crate::synth::write_csv(&corpus, &crate::synth::generate(40, 11)).unwrap();
        let cfg = RunConfig {
            corpus,
            out_dir: dir.path().join("out"),
            model: ModelConfig {
                units: 8,
                ..ModelConfig::default()
            },
            epochs: 5,
            k_samples: 20,
            grid: 30,
            layout_epochs: 40,
            ..RunConfig::default()
        };
        let outcome = run(&cfg).unwrap();
        assert_eq!(outcome.lstm_report.per_fold.len(), 5);
        for fold in 0..5 {
            assert!(cfg.out_dir.join(format!("fold{fold}.svg")).exists());
            assert!(cfg.out_dir.join(format!("samples_fold{fold}.csv")).exists());
        }
        assert!(cfg.out_dir.join("metrics.csv").exists());
        assert!(cfg.out_dir.join("metrics.txt").exists());
        assert!(cfg.out_dir.join("manifest.txt").exists());
    }

    #[test]
    fn rerun_is_bitwise_identical() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("tiny.csv");
        crate::synth::write_csv(&corpus, &crate::synth::generate(30, 2)).unwrap();
        let make_cfg = |out: PathBuf| RunConfig {
            corpus: corpus.clone(),
            out_dir: out,
            model: ModelConfig {
                units: 6,
                ..ModelConfig::default()
            },
            epochs: 3,
            k_samples: 10,
            grid: 25,
            layout_epochs: 30,
            ..RunConfig::default()
        };
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        run(&make_cfg(out_a.clone())).unwrap();
        run(&make_cfg(out_b.clone())).unwrap();
        for name in [
            "metrics.csv",
            "fold0.svg",
            "samples_fold3.csv",
            "summary_fold1.csv",
        ] {
            let a = fs::read(out_a.join(name)).unwrap();
            let b = fs::read(out_b.join(name)).unwrap();
            assert_eq!(a, b, "artifact {name} differs between reruns");
        }
    }
}

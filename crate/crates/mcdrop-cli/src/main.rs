//! mcdrop: train a variational-dropout LSTM text classifier, run Monte
//! Carlo dropout inference for per-document uncertainty, and render the
//! projected sample space.
//!
//! Exit codes: 0 success, 2 input error, 3 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mcdrop::pipeline::{
    clean_corpus, metrics_from_file, run, search, viz_from_files, write_leaderboard, PipelineError,
    RunConfig,
};

#[derive(Parser)]
#[command(
    name = "mcdrop",
    version,
    about = "Uncertainty-aware text classification with Monte Carlo dropout"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full workflow: preprocess, k-fold train/evaluate, MC inference,
    /// metric report, and one SVG per fold.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the root seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the number of stochastic passes per document.
        #[arg(long)]
        k_samples: Option<usize>,
        /// Override the number of cross-validation folds.
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Random hyperparameter search; writes a leaderboard CSV.
    Search {
        #[arg(long)]
        config: PathBuf,
        /// Number of random draws.
        #[arg(long, default_value_t = 20)]
        budget: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Leaderboard output path.
        #[arg(long, default_value = "leaderboard.csv")]
        out: PathBuf,
    },
    /// Render an SVG from previously dumped samples and summaries.
    Viz {
        /// Sample dump CSV (doc_id,k,probability).
        #[arg(long)]
        samples: PathBuf,
        /// Summary CSV with outcomes (doc_id,mean,std,bin,label,outcome).
        #[arg(long)]
        summary: PathBuf,
        /// Optional id<TAB>snippet label file.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value = "viz.svg")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 15)]
        k_nn: usize,
    },
    /// Preprocess only: write the corpus with cleaned text.
    Clean {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "cleaned.csv")]
        out: PathBuf,
    },
    /// Metric report for a doc_id,pred,label CSV.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
    },
}

fn stage_of(err: &PipelineError) -> &'static str {
    match err {
        PipelineError::Config(_) => "config",
        PipelineError::MissingCorpus(_) | PipelineError::Text(_) => "preprocess",
        PipelineError::Train(_) | PipelineError::Layer(_) => "train",
        PipelineError::Mcd(_) => "mc-inference",
        PipelineError::Eval(_) => "evaluate",
        PipelineError::Viz(_) => "visualize",
        PipelineError::Io(_) | PipelineError::Input(_) => "io",
    }
}

fn main() -> ExitCode {
    // MCDROP_THREADS caps the worker pool; results do not depend on it.
    if let Ok(threads) = std::env::var("MCDROP_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }

    let cli = Cli::parse();
    let result = dispatch(cli.command);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("mcdrop: {} stage failed: {err}", stage_of(&err));
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Run {
            config,
            seed,
            out,
            k_samples,
            folds,
        } => {
            let mut cfg = RunConfig::from_file(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            if let Some(k) = k_samples {
                cfg.k_samples = k;
            }
            if let Some(f) = folds {
                cfg.folds = f;
            }
            let outcome = run(&cfg)?;
            let (acc, std) = outcome.lstm_report.mean_std(|e| e.accuracy);
            let (lr_acc, lr_std) = outcome.logreg_report.mean_std(|e| e.accuracy);
            println!("MCD LSTM accuracy: {acc:.1} [{std:.1}]");
            println!("LR baseline accuracy: {lr_acc:.1} [{lr_std:.1}]");
            println!("artifacts written to {}", cfg.out_dir.display());
            Ok(())
        }
        Command::Search {
            config,
            budget,
            seed,
            out,
        } => {
            let mut cfg = RunConfig::from_file(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (best, board) = search(&cfg, budget)?;
            write_leaderboard(&out, &board)?;
            println!(
                "best draw {}: units={} dropout={} batch={} epochs={} {} {} -> score {:.4}",
                best.index,
                best.config.units,
                best.config.dropout,
                best.config.batch_size,
                best.config.epochs,
                best.config.optimizer,
                best.config.activation,
                best.score
            );
            println!("leaderboard written to {}", out.display());
            Ok(())
        }
        Command::Viz {
            samples,
            summary,
            labels,
            out,
            seed,
            k_nn,
        } => {
            viz_from_files(&samples, &summary, labels.as_deref(), &out, seed, k_nn)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Clean { corpus, out } => {
            let n = clean_corpus(&corpus, &out)?;
            println!("cleaned {n} documents into {}", out.display());
            Ok(())
        }
        Command::Metrics { pred } => {
            let m = metrics_from_file(&pred)?;
            println!(
                "n={} accuracy={:.1} precision={:.1} recall={:.1} f1={:.1} (tp={} fp={} tn={} fn={})",
                m.n(),
                m.accuracy,
                m.precision,
                m.recall,
                m.f1,
                m.tp,
                m.fp,
                m.tn,
                m.fn_
            );
            Ok(())
        }
    }
}

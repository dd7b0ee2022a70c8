//! Training loop and random hyperparameter search.
//!
//! Mini-batch training builds one graph per batch: every sequence gets a
//! freshly drawn mask set, per-sequence losses are averaged, and a single
//! backward sweep yields the batch gradient. Gradients are clipped at a
//! global norm of 5.0 before the optimizer step to keep recurrent blowups
//! from turning into NaN aborts.

use rand::Rng;

use crate::layers::{
    bce_loss_node, draw_masks, forward_into, Activation, FeatureSequence, LayerError, ModelConfig,
    ModelParameters, ParamNodes,
};
use crate::numcore::{Graph, Tensor};
use crate::rng;

pub const GRAD_CLIP_NORM: f64 = 5.0;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training data is empty")]
    EmptyData,
    #[error("label {0} is not 0 or 1")]
    BadLabel(u8),
    #[error("optimizer state shape mismatch for '{name}'")]
    StateShapeMismatch { name: String },
    #[error("empty search domain '{0}'")]
    EmptyDomain(&'static str),
    #[error("search budget must be at least 1")]
    ZeroBudget,
    #[error("numeric failure at epoch {epoch}, batch {batch} ({source}); last gradient norms: {grad_norms}")]
    Numeric {
        epoch: usize,
        batch: usize,
        grad_norms: String,
        source: LayerError,
    },
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error("search evaluation failed on draw {draw}: {message}")]
    EvalFailed { draw: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Adam,
    RmsProp,
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Optimizer::Adam => "adam",
            Optimizer::RmsProp => "rmsprop",
        })
    }
}

impl std::str::FromStr for Optimizer {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "adam" => Ok(Optimizer::Adam),
            "rmsprop" => Ok(Optimizer::RmsProp),
            other => Err(format!("unknown optimizer '{other}'")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::Adam,
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 30,
            seed: 0,
        }
    }
}

/// First/second-moment slots aligned to a parameter list.
#[derive(Debug, Clone)]
pub struct MomentState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl MomentState {
    pub fn zeros_like(params: &ModelParameters) -> Self {
        let shapes: Vec<Tensor> = params
            .named_tensors()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape().to_vec()))
            .collect();
        MomentState {
            m: shapes.clone(),
            v: shapes,
            step: 0,
        }
    }
}

/// Bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut [(&'static str, &mut Tensor)],
    grads: &[Tensor],
    state: &mut MomentState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<(), TrainError> {
    check_aligned(params, grads, state)?;
    state.step += 1;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    for (k, (_, p)) in params.iter_mut().enumerate() {
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        let g = grads[k].data();
        for i in 0..g.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// RMSProp update with decay 0.9, in place. Only the second moment is used.
pub fn rmsprop_step(
    params: &mut [(&'static str, &mut Tensor)],
    grads: &[Tensor],
    state: &mut MomentState,
    lr: f64,
    eps: f64,
) -> Result<(), TrainError> {
    check_aligned(params, grads, state)?;
    state.step += 1;
    const DECAY: f64 = 0.9;
    for (k, (_, p)) in params.iter_mut().enumerate() {
        let v = state.v[k].data_mut();
        let g = grads[k].data();
        for i in 0..g.len() {
            v[i] = DECAY * v[i] + (1.0 - DECAY) * g[i] * g[i];
            p.data_mut()[i] -= lr * g[i] / (v[i].sqrt() + eps);
        }
    }
    Ok(())
}

fn check_aligned(
    params: &[(&'static str, &mut Tensor)],
    grads: &[Tensor],
    state: &MomentState,
) -> Result<(), TrainError> {
    for (k, (name, p)) in params.iter().enumerate() {
        let ok = grads
            .get(k)
            .map(|g| g.shape() == p.shape())
            .unwrap_or(false)
            && state
                .m
                .get(k)
                .map(|m| m.shape() == p.shape())
                .unwrap_or(false);
        if !ok {
            return Err(TrainError::StateShapeMismatch {
                name: (*name).to_string(),
            });
        }
    }
    Ok(())
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let sq: f64 = grads
        .iter()
        .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// Trained parameters plus the per-epoch mean loss.
#[derive(Debug)]
pub struct TrainedModel {
    pub params: ModelParameters,
    pub loss_history: Vec<f64>,
}

/// Trains in place from the given initial parameters. Dropout is active: a
/// fresh mask set is drawn per sequence per optimizer step. The whole
/// trajectory is a function of `cfg.seed`.
pub fn train(
    mut params: ModelParameters,
    model_cfg: &ModelConfig,
    data: &[(FeatureSequence, u8)],
    cfg: &TrainConfig,
) -> Result<TrainedModel, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyData);
    }
    if let Some(&(_, y)) = data.iter().find(|(_, y)| *y > 1) {
        return Err(TrainError::BadLabel(y));
    }
    let n = data.len();
    let batch = cfg.batch_size.max(1);
    let mut state = MomentState::zeros_like(&params);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut last_grad_norms = String::from("none");

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut shuffle_rng = rng::stream(cfg.seed, &[rng::tag::SHUFFLE, epoch as u64]);
        for i in (1..n).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        for (step_idx, chunk) in order.chunks(batch).enumerate() {
            let step = |params: &ModelParameters| -> Result<(f64, Vec<Tensor>), LayerError> {
                let mut graph = Graph::new();
                let nodes = ParamNodes::register(&mut graph, params)?;
                let mut losses = Vec::with_capacity(chunk.len());
                for &idx in chunk {
                    let (seq, y) = &data[idx];
                    let mask_seed = rng::derive_key(
                        cfg.seed,
                        &[rng::tag::MASK, epoch as u64, step_idx as u64, idx as u64],
                    );
                    let masks = draw_masks(model_cfg, params, mask_seed)?;
                    let (prob, _) = forward_into(&mut graph, &nodes, model_cfg, seq, &masks)?;
                    losses.push(bce_loss_node(&mut graph, prob, *y)?);
                }
                let mut total = losses[0];
                for &l in &losses[1..] {
                    total = graph.add(total, l)?;
                }
                let mean = graph.scale(total, 1.0 / chunk.len() as f64)?;
                let grads = graph.backward(mean)?;
                let grad_tensors = nodes
                    .named()
                    .iter()
                    .map(|(_, id)| grads.wrt(&graph, *id))
                    .collect();
                Ok((graph.value(mean).as_scalar()?, grad_tensors))
            };

            let (batch_loss, mut grad_tensors) =
                step(&params).map_err(|source| TrainError::Numeric {
                    epoch,
                    batch: step_idx,
                    grad_norms: last_grad_norms.clone(),
                    source,
                })?;

            clip_global_norm(&mut grad_tensors, GRAD_CLIP_NORM);
            last_grad_norms = params
                .named_tensors()
                .iter()
                .zip(&grad_tensors)
                .map(|((name, _), g)| {
                    let norm = g.data().iter().map(|v| v * v).sum::<f64>().sqrt();
                    format!("{name}={norm:.3e}")
                })
                .collect::<Vec<_>>()
                .join(" ");

            let mut views = params.named_tensors_mut();
            match cfg.optimizer {
                Optimizer::Adam => adam_step(
                    &mut views,
                    &grad_tensors,
                    &mut state,
                    cfg.learning_rate,
                    0.9,
                    0.999,
                    1e-8,
                )?,
                Optimizer::RmsProp => rmsprop_step(
                    &mut views,
                    &grad_tensors,
                    &mut state,
                    cfg.learning_rate,
                    1e-8,
                )?,
            }
            epoch_loss += batch_loss * chunk.len() as f64;
        }
        history.push(epoch_loss / n as f64);
    }
    Ok(TrainedModel {
        params,
        loss_history: history,
    })
}

/// One point in the hyperparameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperConfig {
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub activation: Activation,
    pub epochs: usize,
    pub units: usize,
    pub dropout: f64,
}

/// Per-hyperparameter domains for the random search.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    pub optimizers: Vec<Optimizer>,
    pub batch_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub epochs: Vec<usize>,
    pub units: Vec<usize>,
    pub dropout_rates: Vec<f64>,
    pub budget: usize,
}

impl SearchSpace {
    /// The standard search grid: Adam/rmsprop; batch 4..=128 step 4;
    /// tanh/relu/linear; epochs 10..=100 step 5; units 128..1024 doubling;
    /// dropout 0.1..=0.8 step 0.05.
    pub fn standard(budget: usize) -> Self {
        SearchSpace {
            optimizers: vec![Optimizer::Adam, Optimizer::RmsProp],
            batch_sizes: (1..=32).map(|i| i * 4).collect(),
            activations: vec![Activation::Tanh, Activation::Relu, Activation::Linear],
            epochs: (2..=20).map(|i| i * 5).collect(),
            units: vec![128, 256, 512, 1024],
            dropout_rates: (2..=16).map(|i| i as f64 * 0.05).collect(),
            budget,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        if self.budget == 0 {
            return Err(TrainError::ZeroBudget);
        }
        if self.optimizers.is_empty() {
            return Err(TrainError::EmptyDomain("optimizers"));
        }
        if self.batch_sizes.is_empty() {
            return Err(TrainError::EmptyDomain("batch_sizes"));
        }
        if self.activations.is_empty() {
            return Err(TrainError::EmptyDomain("activations"));
        }
        if self.epochs.is_empty() {
            return Err(TrainError::EmptyDomain("epochs"));
        }
        if self.units.is_empty() {
            return Err(TrainError::EmptyDomain("units"));
        }
        if self.dropout_rates.is_empty() {
            return Err(TrainError::EmptyDomain("dropout_rates"));
        }
        Ok(())
    }

    /// Uniform independent draw; stream keyed by (seed, draw index) so the
    /// sampled trajectory is schedule-independent.
    pub fn draw(&self, seed: u64, index: usize) -> HyperConfig {
        let mut r = rng::stream(seed, &[rng::tag::SEARCH, index as u64]);
        let pick = |r: &mut rand_chacha::ChaCha8Rng, len: usize| r.gen_range(0..len);
        HyperConfig {
            optimizer: self.optimizers[pick(&mut r, self.optimizers.len())],
            batch_size: self.batch_sizes[pick(&mut r, self.batch_sizes.len())],
            activation: self.activations[pick(&mut r, self.activations.len())],
            epochs: self.epochs[pick(&mut r, self.epochs.len())],
            units: self.units[pick(&mut r, self.units.len())],
            dropout: self.dropout_rates[pick(&mut r, self.dropout_rates.len())],
        }
    }
}

/// One evaluated draw in the leaderboard.
#[derive(Debug, Clone)]
pub struct SearchDraw {
    pub index: usize,
    pub config: HyperConfig,
    pub score: f64,
}

/// Random search: `budget` independent draws, best validation score wins,
/// ties broken by earliest draw. The evaluator receives the draw index so
/// it can derive a per-evaluation seed.
pub fn random_search(
    space: &SearchSpace,
    mut eval: impl FnMut(usize, &HyperConfig) -> Result<f64, String>,
    seed: u64,
) -> Result<(SearchDraw, Vec<SearchDraw>), TrainError> {
    space.validate()?;
    let mut leaderboard = Vec::with_capacity(space.budget);
    for index in 0..space.budget {
        let config = space.draw(seed, index);
        let score = eval(index, &config).map_err(|message| TrainError::EvalFailed {
            draw: index,
            message,
        })?;
        leaderboard.push(SearchDraw {
            index,
            config,
            score,
        });
    }
    let best = leaderboard
        .iter()
        .cloned()
        .reduce(|best, cand| if cand.score > best.score { cand } else { best })
        .expect("budget >= 1");
    Ok((best, leaderboard))
}

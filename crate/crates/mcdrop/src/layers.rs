//! Neural layers: trainable embedding, LSTM with variational dropout, dense
//! sigmoid head, and the binary cross-entropy loss.
//!
//! Dropout here is the fixed-per-sequence kind: one mask per site is drawn
//! before a forward pass and reused at every timestep of that pass. Masks
//! use inverted scaling (kept units multiplied by 1/(1-p)) so a rate of 0
//! reduces to the deterministic network with no special casing.

use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::numcore::{Graph, NodeId, NumError, Tensor};
use crate::rng;

/// Clamp bound for probabilities entering a logarithm.
pub const PROB_EPS: f64 = 1e-12;

const CHECKPOINT_MAGIC: &[u8; 4] = b"MCDP";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum LayerError {
    #[error("dropout rate {0} outside [0, 1)")]
    RateOutOfRange(f64),
    #[error("empty input sequence")]
    EmptySequence,
    #[error("token id {token} out of vocabulary (size {vocab})")]
    TokenOutOfVocab { token: usize, vocab: usize },
    #[error("input vector has length {got}, model expects {expected}")]
    VectorLengthMismatch { got: usize, expected: usize },
    #[error("embedding-mode model is missing its embedding matrix")]
    MissingEmbedding,
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

/// How documents reach the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// Token ids looked up in a trainable embedding matrix, one per timestep.
    Embedding,
    /// One fixed-length real vector (TF-IDF row), treated as a single timestep.
    VectorInput,
}

/// Dense-head activation applied before the output sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Linear,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        })
    }
}

impl std::str::FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(format!("unknown activation '{other}'")),
        }
    }
}

/// Architecture and dropout-rate settings.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub mode: FeatureMode,
    /// LSTM hidden units.
    pub units: usize,
    /// Input-site dropout rate; also the embedding word-type mask rate.
    pub dropout: f64,
    /// Recurrent-state dropout rate.
    pub recurrent_dropout: f64,
    /// Dense-input dropout rate.
    pub dense_dropout: f64,
    /// Embedding dimensionality (embedding mode only).
    pub embedding_dim: usize,
    pub activation: Activation,
    /// Sequences longer than this are truncated.
    pub max_seq_len: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), LayerError> {
        for rate in [self.dropout, self.recurrent_dropout, self.dense_dropout] {
            if !(0.0..1.0).contains(&rate) {
                return Err(LayerError::RateOutOfRange(rate));
            }
        }
        Ok(())
    }

    pub fn has_dropout(&self) -> bool {
        self.dropout > 0.0 || self.recurrent_dropout > 0.0 || self.dense_dropout > 0.0
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mode: FeatureMode::VectorInput,
            units: 32,
            dropout: 0.5,
            recurrent_dropout: 0.5,
            dense_dropout: 0.5,
            embedding_dim: 32,
            activation: Activation::Linear,
            max_seq_len: 64,
        }
    }
}

/// One document as the network sees it.
#[derive(Debug, Clone)]
pub enum FeatureSequence {
    /// Token ids, one timestep each.
    Tokens(Vec<usize>),
    /// A single fixed-length feature vector (one timestep).
    Vector(Vec<f64>),
}

impl FeatureSequence {
    pub fn is_empty(&self) -> bool {
        match self {
            FeatureSequence::Tokens(t) => t.is_empty(),
            FeatureSequence::Vector(v) => v.is_empty(),
        }
    }
}

/// Network weights. Gate blocks in `w_input`, `w_recurrent`, and `bias` are
/// column-ordered (input, forget, cell, output) everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    /// |V| x d embedding matrix, embedding mode only.
    pub embedding: Option<Tensor>,
    /// d_in x 4H.
    pub w_input: Tensor,
    /// H x 4H.
    pub w_recurrent: Tensor,
    /// 1 x 4H.
    pub bias: Tensor,
    /// H x 1.
    pub w_dense: Tensor,
    /// 1 x 1.
    pub b_dense: Tensor,
}

impl ModelParameters {
    /// Xavier-uniform initialization. `input_width` is the embedding dim in
    /// embedding mode or the feature-vector length in vector mode;
    /// `vocab_size` sizes the embedding table and is ignored in vector mode.
    pub fn init(cfg: &ModelConfig, input_width: usize, vocab_size: usize, seed: u64) -> Self {
        let h = cfg.units;
        let mut r = rng::stream(seed, &[rng::tag::INIT]);
        let xavier = |rows: usize, cols: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let scale = (6.0 / (rows + cols) as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale)
                .collect();
            Tensor::new(vec![rows, cols], data).expect("sized by construction")
        };
        let embedding = match cfg.mode {
            FeatureMode::Embedding => {
                let data = (0..vocab_size * cfg.embedding_dim)
                    .map(|_| (r.gen::<f64>() * 2.0 - 1.0) * 0.05)
                    .collect();
                Some(Tensor::new(vec![vocab_size, cfg.embedding_dim], data).unwrap())
            }
            FeatureMode::VectorInput => None,
        };
        let w_input = xavier(input_width, 4 * h, &mut r);
        let w_recurrent = xavier(h, 4 * h, &mut r);
        // Forget-gate bias starts at 1 so early training does not flush state.
        let mut bias = Tensor::zeros(vec![1, 4 * h]);
        for j in h..2 * h {
            bias.data_mut()[j] = 1.0;
        }
        let w_dense = xavier(h, 1, &mut r);
        let b_dense = Tensor::zeros(vec![1, 1]);
        ModelParameters {
            embedding,
            w_input,
            w_recurrent,
            bias,
            w_dense,
            b_dense,
        }
    }

    pub fn units(&self) -> usize {
        self.w_recurrent.shape()[0]
    }

    pub fn input_width(&self) -> usize {
        self.w_input.shape()[0]
    }

    pub fn vocab_size(&self) -> Option<usize> {
        self.embedding.as_ref().map(|e| e.shape()[0])
    }

    /// Named views in checkpoint order.
    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = Vec::with_capacity(6);
        if let Some(e) = &self.embedding {
            out.push(("embedding", e));
        }
        out.push(("w_input", &self.w_input));
        out.push(("w_recurrent", &self.w_recurrent));
        out.push(("bias", &self.bias));
        out.push(("w_dense", &self.w_dense));
        out.push(("b_dense", &self.b_dense));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let mut out = Vec::with_capacity(6);
        if let Some(e) = &mut self.embedding {
            out.push(("embedding", e));
        }
        out.push(("w_input", &mut self.w_input));
        out.push(("w_recurrent", &mut self.w_recurrent));
        out.push(("bias", &mut self.bias));
        out.push(("w_dense", &mut self.w_dense));
        out.push(("b_dense", &mut self.b_dense));
        out
    }
}

/// One concrete dropout realization: a mask per site, each constant across
/// all timesteps of a single forward pass. Entries are 0 or 1/(1-p).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub input: Vec<f64>,
    pub recurrent: Vec<f64>,
    pub dense: Vec<f64>,
    /// Word-type mask over embedding rows, embedding mode only.
    pub embedding: Option<Vec<f64>>,
}

/// Inverted-scaling Bernoulli mask: each entry is 0 with probability `rate`,
/// else 1/(1-rate), so the expected entry is exactly 1.
pub fn dropout_mask<R: Rng>(len: usize, rate: f64, rng: &mut R) -> Result<Vec<f64>, LayerError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(LayerError::RateOutOfRange(rate));
    }
    if rate == 0.0 {
        return Ok(vec![1.0; len]);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok((0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect())
}

/// Draws the full mask set for one stochastic pass. Deterministic given seed.
pub fn draw_masks(
    cfg: &ModelConfig,
    params: &ModelParameters,
    seed: u64,
) -> Result<MaskSet, LayerError> {
    cfg.validate()?;
    let mut r = rng::stream(seed, &[rng::tag::MASK]);
    let input = dropout_mask(params.input_width(), cfg.dropout, &mut r)?;
    let recurrent = dropout_mask(params.units(), cfg.recurrent_dropout, &mut r)?;
    let dense = dropout_mask(params.units(), cfg.dense_dropout, &mut r)?;
    let embedding = match params.vocab_size() {
        Some(v) => Some(dropout_mask(v, cfg.dropout, &mut r)?),
        None => None,
    };
    Ok(MaskSet {
        input,
        recurrent,
        dense,
        embedding,
    })
}

/// All-ones masks: the deterministic network.
pub fn unit_masks(params: &ModelParameters) -> MaskSet {
    MaskSet {
        input: vec![1.0; params.input_width()],
        recurrent: vec![1.0; params.units()],
        dense: vec![1.0; params.units()],
        embedding: params.vocab_size().map(|v| vec![1.0; v]),
    }
}

/// Graph leaves for each parameter tensor, reused across the sequences of a
/// batch so their gradients accumulate.
#[derive(Debug, Clone)]
pub struct ParamNodes {
    pub embedding: Option<NodeId>,
    pub w_input: NodeId,
    pub w_recurrent: NodeId,
    pub bias: NodeId,
    pub w_dense: NodeId,
    pub b_dense: NodeId,
}

impl ParamNodes {
    pub fn register(graph: &mut Graph, params: &ModelParameters) -> Result<Self, LayerError> {
        let embedding = match &params.embedding {
            Some(e) => Some(graph.leaf(e.clone())?),
            None => None,
        };
        Ok(ParamNodes {
            embedding,
            w_input: graph.leaf(params.w_input.clone())?,
            w_recurrent: graph.leaf(params.w_recurrent.clone())?,
            bias: graph.leaf(params.bias.clone())?,
            w_dense: graph.leaf(params.w_dense.clone())?,
            b_dense: graph.leaf(params.b_dense.clone())?,
        })
    }

    /// (name, node) pairs in the same order as `ModelParameters::named_tensors`.
    pub fn named(&self) -> Vec<(&'static str, NodeId)> {
        let mut out = Vec::with_capacity(6);
        if let Some(e) = self.embedding {
            out.push(("embedding", e));
        }
        out.push(("w_input", self.w_input));
        out.push(("w_recurrent", self.w_recurrent));
        out.push(("bias", self.bias));
        out.push(("w_dense", self.w_dense));
        out.push(("b_dense", self.b_dense));
        out
    }
}

/// Which mask leaves each timestep consumed; the variational-dropout
/// instrument. Within one pass all entries must alias the same node.
#[derive(Debug, Clone, Default)]
pub struct PassTrace {
    pub input_mask_nodes: Vec<NodeId>,
    pub recurrent_mask_nodes: Vec<NodeId>,
}

/// Unrolls the LSTM over `seq` inside an existing graph. Returns the output
/// probability node and the per-timestep mask-usage trace.
pub fn forward_into(
    graph: &mut Graph,
    nodes: &ParamNodes,
    cfg: &ModelConfig,
    seq: &FeatureSequence,
    masks: &MaskSet,
) -> Result<(NodeId, PassTrace), LayerError> {
    if seq.is_empty() {
        return Err(LayerError::EmptySequence);
    }
    let h = cfg.units;

    let input_mask = graph.leaf(Tensor::row_vector(masks.input.clone()))?;
    let rec_mask = graph.leaf(Tensor::row_vector(masks.recurrent.clone()))?;
    let dense_mask = graph.leaf(Tensor::row_vector(masks.dense.clone()))?;

    // Timestep inputs, each a 1 x d_in node.
    let xs: Vec<NodeId> = match seq {
        FeatureSequence::Vector(v) => {
            let expected = graph.value(nodes.w_input).shape()[0];
            if v.len() != expected {
                return Err(LayerError::VectorLengthMismatch {
                    got: v.len(),
                    expected,
                });
            }
            vec![graph.leaf(Tensor::row_vector(v.clone()))?]
        }
        FeatureSequence::Tokens(tokens) => {
            let table = nodes.embedding.ok_or(LayerError::MissingEmbedding)?;
            let vocab = graph.value(table).shape()[0];
            let word_mask = masks.embedding.as_deref();
            let mut xs = Vec::new();
            for &tok in tokens.iter().take(cfg.max_seq_len) {
                if tok >= vocab {
                    return Err(LayerError::TokenOutOfVocab { token: tok, vocab });
                }
                let e = graph.row(table, tok)?;
                let x = match word_mask {
                    Some(m) => graph.scale(e, m[tok])?,
                    None => e,
                };
                xs.push(x);
            }
            xs
        }
    };

    let mut trace = PassTrace::default();
    let mut h_state = graph.leaf(Tensor::zeros(vec![1, h]))?;
    let mut c_state = graph.leaf(Tensor::zeros(vec![1, h]))?;

    for x in xs {
        trace.input_mask_nodes.push(input_mask);
        trace.recurrent_mask_nodes.push(rec_mask);

        let xm = graph.mul(x, input_mask)?;
        let hm = graph.mul(h_state, rec_mask)?;
        let zx = graph.matmul(xm, nodes.w_input)?;
        let zh = graph.matmul(hm, nodes.w_recurrent)?;
        let zs = graph.add(zx, zh)?;
        let z = graph.add(zs, nodes.bias)?;

        let gi = graph.slice_cols(z, 0, h)?;
        let gf = graph.slice_cols(z, h, h)?;
        let gc = graph.slice_cols(z, 2 * h, h)?;
        let go = graph.slice_cols(z, 3 * h, h)?;

        let i = graph.sigmoid(gi)?;
        let f = graph.sigmoid(gf)?;
        let cand = graph.tanh(gc)?;
        let o = graph.sigmoid(go)?;

        let keep = graph.mul(f, c_state)?;
        let write = graph.mul(i, cand)?;
        c_state = graph.add(keep, write)?;
        let ct = graph.tanh(c_state)?;
        h_state = graph.mul(o, ct)?;
    }

    let hd = graph.mul(h_state, dense_mask)?;
    let zd = graph.matmul(hd, nodes.w_dense)?;
    let logit = graph.add(zd, nodes.b_dense)?;
    let act = match cfg.activation {
        Activation::Tanh => graph.tanh(logit)?,
        Activation::Relu => graph.relu(logit)?,
        Activation::Linear => logit,
    };
    let prob = graph.sigmoid(act)?;
    Ok((prob, trace))
}

/// A completed stochastic forward pass with its retained graph.
#[derive(Debug)]
pub struct ForwardPass {
    pub graph: Graph,
    pub params: ParamNodes,
    pub prob_node: NodeId,
    pub probability: f64,
    pub trace: PassTrace,
}

/// Runs one forward pass on a fresh graph.
pub fn lstm_forward(
    params: &ModelParameters,
    cfg: &ModelConfig,
    seq: &FeatureSequence,
    masks: &MaskSet,
) -> Result<ForwardPass, LayerError> {
    let mut graph = Graph::new();
    let nodes = ParamNodes::register(&mut graph, params)?;
    let (prob_node, trace) = forward_into(&mut graph, &nodes, cfg, seq, masks)?;
    let probability = graph.value(prob_node).as_scalar()?;
    Ok(ForwardPass {
        graph,
        params: nodes,
        prob_node,
        probability,
        trace,
    })
}

/// Binary cross-entropy on a probability, with the input clamped to
/// [PROB_EPS, 1-PROB_EPS] before the logarithms.
pub fn bce_loss(p: f64, y: u8) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let y = f64::from(y);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Graph form of [`bce_loss`]; gradients flow through the clamp's interior.
pub fn bce_loss_node(graph: &mut Graph, prob: NodeId, y: u8) -> Result<NodeId, LayerError> {
    let pc = graph.clamp(prob, PROB_EPS, 1.0 - PROB_EPS)?;
    let ln_p = graph.ln(pc)?;
    let one = graph.scalar(1.0)?;
    let omp = graph.sub(one, pc)?;
    let ln_omp = graph.ln(omp)?;
    let a = graph.scale(ln_p, -f64::from(y))?;
    let b = graph.scale(ln_omp, -(1.0 - f64::from(y)))?;
    Ok(graph.add(a, b)?)
}

/// Writes parameters as a versioned binary of named tensors. Values are
/// stored as raw f64 bits so a load reproduces the file bitwise.
pub fn save_checkpoint(path: &Path, params: &ModelParameters) -> Result<(), LayerError> {
    let named = params.named_tensors();
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, tensor) in named {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<ModelParameters, LayerError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = 0usize;
    let take = |cur: &mut usize, n: usize| -> Result<&[u8], LayerError> {
        if *cur + n > bytes.len() {
            return Err(LayerError::Format("truncated checkpoint".into()));
        }
        let s = &bytes[*cur..*cur + n];
        *cur += n;
        Ok(s)
    };
    if take(&mut cur, 4)? != CHECKPOINT_MAGIC {
        return Err(LayerError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(LayerError::Format(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap());
    let mut tensors: Vec<(String, Tensor)> = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = u32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut cur, name_len)?.to_vec())
            .map_err(|_| LayerError::Format("tensor name is not utf-8".into()))?;
        let ndim = u32::from_le_bytes(take(&mut cur, 4)?.try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u64::from_le_bytes(take(&mut cur, 8)?.try_into().unwrap()) as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let bits = u64::from_le_bytes(take(&mut cur, 8)?.try_into().unwrap());
            data.push(f64::from_bits(bits));
        }
        let tensor = Tensor::new(shape, data).map_err(|e| LayerError::Format(e.to_string()))?;
        tensors.push((name, tensor));
    }
    let find = |name: &str| -> Result<Tensor, LayerError> {
        tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| LayerError::Format(format!("missing tensor '{name}'")))
    };
    Ok(ModelParameters {
        w_input: find("w_input")?,
        w_recurrent: find("w_recurrent")?,
        bias: find("bias")?,
        w_dense: find("w_dense")?,
        b_dense: find("b_dense")?,
        embedding: tensors
            .iter()
            .find(|(n, _)| n == "embedding")
            .map(|(_, t)| t.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::sigmoid;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            mode: FeatureMode::VectorInput,
            units: 2,
            dropout: 0.0,
            recurrent_dropout: 0.0,
            dense_dropout: 0.0,
            embedding_dim: 0,
            activation: Activation::Linear,
            max_seq_len: 64,
        }
    }

    #[test]
    fn rate_zero_mask_is_all_ones() {
        let mut r = rng::stream(7, &[rng::tag::MASK]);
        let m = dropout_mask(16, 0.0, &mut r).unwrap();
        assert_eq!(m, vec![1.0; 16]);
    }

    #[test]
    fn mask_is_deterministic_given_seed() {
        let cfg = ModelConfig {
            dropout: 0.5,
            recurrent_dropout: 0.5,
            dense_dropout: 0.5,
            ..small_cfg()
        };
        let params = ModelParameters::init(&cfg, 8, 0, 3);
        let a = draw_masks(&cfg, &params, 99).unwrap();
        let b = draw_masks(&cfg, &params, 99).unwrap();
        assert_eq!(a, b);
        let c = draw_masks(&cfg, &params, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn mask_entries_are_zero_or_scaled() {
        let mut r = rng::stream(1, &[rng::tag::MASK]);
        let m = dropout_mask(1000, 0.3, &mut r).unwrap();
        for &v in &m {
            assert!(v == 0.0 || (v - 1.0 / 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn mask_mean_is_unbiased() {
        let mut r = rng::stream(5, &[rng::tag::MASK]);
        let m = dropout_mask(100_000, 0.5, &mut r).unwrap();
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn rate_one_rejected() {
        let mut r = rng::stream(1, &[rng::tag::MASK]);
        assert!(dropout_mask(4, 1.0, &mut r).is_err());
        assert!(dropout_mask(4, 1.5, &mut r).is_err());
    }

    #[test]
    fn zero_network_outputs_half() {
        let cfg = small_cfg();
        let params = ModelParameters {
            embedding: None,
            w_input: Tensor::zeros(vec![3, 8]),
            w_recurrent: Tensor::zeros(vec![2, 8]),
            bias: Tensor::zeros(vec![1, 8]),
            w_dense: Tensor::zeros(vec![2, 1]),
            b_dense: Tensor::zeros(vec![1, 1]),
        };
        let seq = FeatureSequence::Vector(vec![0.3, -0.2, 0.9]);
        let masks = unit_masks(&params);
        let pass = lstm_forward(&params, &cfg, &seq, &masks).unwrap();
        assert_eq!(pass.probability, 0.5);
    }

    #[test]
    fn hand_unrolled_single_step_oracle() {
        // 2-unit, 2-input LSTM, one timestep, rate-0 masks, hand-set weights.
        let cfg = small_cfg();
        let w_input = Tensor::from_rows(&[
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
            vec![-0.1, -0.2, -0.3, -0.4, -0.5, -0.6, -0.7, -0.8],
        ])
        .unwrap();
        let w_recurrent = Tensor::from_rows(&[vec![0.05; 8], vec![-0.05; 8]]).unwrap();
        let bias = Tensor::row_vector(vec![0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08]);
        let w_dense = Tensor::from_rows(&[vec![1.5], vec![-2.0]]).unwrap();
        let b_dense = Tensor::scalar(0.25);
        let params = ModelParameters {
            embedding: None,
            w_input: w_input.clone(),
            w_recurrent,
            bias: bias.clone(),
            w_dense,
            b_dense,
        };
        let x = [1.0, 0.5];
        let seq = FeatureSequence::Vector(x.to_vec());
        let masks = unit_masks(&params);
        let pass = lstm_forward(&params, &cfg, &seq, &masks).unwrap();

        // Independent step-by-step arithmetic (h0 = c0 = 0).
        let mut z = [0.0f64; 8];
        for (j, zj) in z.iter_mut().enumerate() {
            *zj = w_input.at(0, j) * x[0] + w_input.at(1, j) * x[1] + bias.data()[j];
        }
        let i = [sigmoid(z[0]), sigmoid(z[1])];
        let f = [sigmoid(z[2]), sigmoid(z[3])];
        let cand = [z[4].tanh(), z[5].tanh()];
        let o = [sigmoid(z[6]), sigmoid(z[7])];
        let _ = f; // c0 = 0, forget path contributes nothing
        let c = [i[0] * cand[0], i[1] * cand[1]];
        let h = [o[0] * c[0].tanh(), o[1] * c[1].tanh()];
        let logit = 1.5 * h[0] - 2.0 * h[1] + 0.25;
        let expected = sigmoid(logit);

        assert!(
            (pass.probability - expected).abs() < 1e-12,
            "{} vs {}",
            pass.probability,
            expected
        );
    }

    #[test]
    fn rate_zero_forward_is_pure() {
        let cfg = small_cfg();
        let params = ModelParameters::init(&cfg, 3, 0, 11);
        let seq = FeatureSequence::Vector(vec![0.4, -1.0, 0.2]);
        let masks = unit_masks(&params);
        let a = lstm_forward(&params, &cfg, &seq, &masks)
            .unwrap()
            .probability;
        let b = lstm_forward(&params, &cfg, &seq, &masks)
            .unwrap()
            .probability;
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn mask_identity_constant_across_timesteps() {
        let cfg = ModelConfig {
            mode: FeatureMode::Embedding,
            units: 4,
            dropout: 0.5,
            recurrent_dropout: 0.5,
            dense_dropout: 0.5,
            embedding_dim: 3,
            activation: Activation::Linear,
            max_seq_len: 64,
        };
        let params = ModelParameters::init(&cfg, cfg.embedding_dim, 10, 21);
        let masks = draw_masks(&cfg, &params, 77).unwrap();
        let seq = FeatureSequence::Tokens(vec![1, 4, 7, 2, 9, 3]);
        let pass = lstm_forward(&params, &cfg, &seq, &masks).unwrap();
        assert_eq!(pass.trace.input_mask_nodes.len(), 6);
        for win in pass.trace.input_mask_nodes.windows(2) {
            assert_eq!(win[0], win[1]);
        }
        for win in pass.trace.recurrent_mask_nodes.windows(2) {
            assert_eq!(win[0], win[1]);
        }
    }

    #[test]
    fn masks_differ_across_seeds() {
        let cfg = ModelConfig {
            units: 64,
            dropout: 0.5,
            recurrent_dropout: 0.5,
            dense_dropout: 0.5,
            ..small_cfg()
        };
        let params = ModelParameters::init(&cfg, 64, 0, 1);
        let a = draw_masks(&cfg, &params, 1).unwrap();
        let b = draw_masks(&cfg, &params, 2).unwrap();
        assert_ne!(a.input, b.input);
        assert_ne!(a.recurrent, b.recurrent);
    }

    #[test]
    fn empty_sequence_rejected() {
        let cfg = small_cfg();
        let params = ModelParameters::init(&cfg, 3, 0, 1);
        let masks = unit_masks(&params);
        let err = lstm_forward(&params, &cfg, &FeatureSequence::Tokens(vec![]), &masks);
        assert!(matches!(err, Err(LayerError::EmptySequence)));
    }

    #[test]
    fn token_out_of_vocab_rejected() {
        let cfg = ModelConfig {
            mode: FeatureMode::Embedding,
            embedding_dim: 3,
            dropout: 0.0,
            recurrent_dropout: 0.0,
            dense_dropout: 0.0,
            ..small_cfg()
        };
        let params = ModelParameters::init(&cfg, cfg.embedding_dim, 5, 1);
        let masks = unit_masks(&params);
        let err = lstm_forward(&params, &cfg, &FeatureSequence::Tokens(vec![2, 9]), &masks);
        assert!(matches!(
            err,
            Err(LayerError::TokenOutOfVocab { token: 9, vocab: 5 })
        ));
    }

    #[test]
    fn bce_known_points() {
        assert!((bce_loss(0.5, 1) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_loss(1.0 - 1e-12, 1) < 1e-11);
        assert!((bce_loss(0.9, 0) - std::f64::consts::LN_10).abs() < 1e-12);
    }

    #[test]
    fn bce_node_matches_value_form() {
        let mut g = Graph::new();
        for (p, y) in [(0.5, 1u8), (0.9, 0), (0.123, 1), (0.999, 0)] {
            let pn = g.scalar(p).unwrap();
            let ln = bce_loss_node(&mut g, pn, y).unwrap();
            let v = g.value(ln).as_scalar().unwrap();
            assert!((v - bce_loss(p, y)).abs() < 1e-15);
        }
    }

    #[test]
    fn gradients_flow_to_every_parameter() {
        let cfg = ModelConfig {
            mode: FeatureMode::Embedding,
            units: 3,
            dropout: 0.4,
            recurrent_dropout: 0.4,
            dense_dropout: 0.4,
            embedding_dim: 2,
            activation: Activation::Tanh,
            max_seq_len: 64,
        };
        let params = ModelParameters::init(&cfg, cfg.embedding_dim, 6, 9);
        let masks = draw_masks(&cfg, &params, 31).unwrap();
        let seq = FeatureSequence::Tokens(vec![0, 3, 5, 1]);
        let mut pass = lstm_forward(&params, &cfg, &seq, &masks).unwrap();
        let loss = bce_loss_node(&mut pass.graph, pass.prob_node, 1).unwrap();
        let grads = pass.graph.backward(loss).unwrap();
        for (name, id) in pass.params.named() {
            let g = grads.wrt(&pass.graph, id);
            assert!(g.is_finite(), "{name} gradient not finite");
        }
    }

    #[test]
    fn checkpoint_roundtrips_bitwise() {
        let cfg = ModelConfig {
            mode: FeatureMode::Embedding,
            units: 3,
            embedding_dim: 2,
            ..small_cfg()
        };
        let params = ModelParameters::init(&cfg, cfg.embedding_dim, 7, 13);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &params).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        for ((an, at), (bn, bt)) in params
            .named_tensors()
            .iter()
            .zip(loaded.named_tensors().iter())
        {
            assert_eq!(an, bn);
            assert_eq!(at.shape(), bt.shape());
            for (x, y) in at.data().iter().zip(bt.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // Saving the loaded copy reproduces the file bytes.
        let path2 = dir.path().join("model2.ckpt");
        save_checkpoint(&path2, &loaded).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }
}

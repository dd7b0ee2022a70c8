//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! A `Graph` is a tape: every operation appends one node recording its
//! inputs, op kind, and output tensor. Creation order is a topological
//! order, so the backward pass is a single reverse sweep that visits each
//! reachable node exactly once. Graphs are rebuilt per forward pass, which
//! is what makes recurrent unrolling over variable-length sequences
//! straightforward.

use super::tensor::{sigmoid, Tensor};
use super::NumError;

/// Handle to a node in one particular [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul,
    Add,
    Sub,
    Mul,
    Sigmoid,
    Tanh,
    Relu,
    Ln,
    Clamp { lo: f64, hi: f64 },
    SliceCols { start: usize, len: usize },
    Row { index: usize },
    Scale { factor: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
}

/// Gradients aligned to a graph's nodes, produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    slots: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.slots.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient w.r.t. `id`; a node the loss never touched gets zeros.
    pub fn wrt(&self, graph: &Graph, id: NodeId) -> Tensor {
        match self.get(id) {
            Some(t) => t.clone(),
            None => Tensor::zeros(graph.value(id).shape().to_vec()),
        }
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor) -> Result<NodeId, NumError> {
        if !value.is_finite() {
            return Err(NumError::NonFinite { op: op_name(&op) });
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs, value });
        Ok(id)
    }

    /// Registers an input tensor (parameter or constant) as a graph leaf.
    pub fn leaf(&mut self, value: Tensor) -> Result<NodeId, NumError> {
        self.push(Op::Leaf, vec![], value)
    }

    pub fn scalar(&mut self, v: f64) -> Result<NodeId, NumError> {
        self.leaf(Tensor::scalar(v))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul, vec![a, b], value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        let value = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        self.push(Op::Add, vec![a, b], value)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        let value = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        self.push(Op::Sub, vec![a, b], value)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        let value = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        self.push(Op::Mul, vec![a, b], value)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId, NumError> {
        let value = self.value(x).map(sigmoid);
        self.push(Op::Sigmoid, vec![x], value)
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId, NumError> {
        let value = self.value(x).map(f64::tanh);
        self.push(Op::Tanh, vec![x], value)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, NumError> {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(Op::Relu, vec![x], value)
    }

    pub fn ln(&mut self, x: NodeId) -> Result<NodeId, NumError> {
        let value = self.value(x).map(f64::ln);
        self.push(Op::Ln, vec![x], value)
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId, NumError> {
        let value = self.value(x).map(|v| v.clamp(lo, hi));
        self.push(Op::Clamp { lo, hi }, vec![x], value)
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, NumError> {
        let value = self.value(x).slice_cols(start, len)?;
        self.push(Op::SliceCols { start, len }, vec![x], value)
    }

    /// Row lookup, the embedding-table gather. Backward scatters into the row.
    pub fn row(&mut self, x: NodeId, index: usize) -> Result<NodeId, NumError> {
        let value = self.value(x).row(index)?;
        self.push(Op::Row { index }, vec![x], value)
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId, NumError> {
        let value = self.value(x).map(|v| v * factor);
        self.push(Op::Scale { factor }, vec![x], value)
    }

    /// Reverse sweep from a scalar loss node. Seeds 1.0 at the loss and
    /// accumulates gradients for every node the loss depends on.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, NumError> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(NumError::NotScalar {
                shape: loss_value.shape().to_vec(),
            });
        }
        let mut slots: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        slots[loss.0] = Some(Tensor::filled(loss_value.shape().to_vec(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(upstream) = slots[i].clone() else {
                continue;
            };
            let node = &self.nodes[i];
            match node.op {
                Op::Leaf => {}
                Op::MatMul => {
                    let a = &self.nodes[node.inputs[0].0].value;
                    let b = &self.nodes[node.inputs[1].0].value;
                    let da = upstream.matmul(&b.transpose())?;
                    let db = a.transpose().matmul(&upstream)?;
                    accumulate(&mut slots, node.inputs[0], da)?;
                    accumulate(&mut slots, node.inputs[1], db)?;
                }
                Op::Add => {
                    for &inp in &node.inputs {
                        let g = reduce_to(&upstream, self.nodes[inp.0].value.shape());
                        accumulate(&mut slots, inp, g)?;
                    }
                }
                Op::Sub => {
                    let ga = reduce_to(&upstream, self.nodes[node.inputs[0].0].value.shape());
                    let gb = reduce_to(
                        &upstream.map(|v| -v),
                        self.nodes[node.inputs[1].0].value.shape(),
                    );
                    accumulate(&mut slots, node.inputs[0], ga)?;
                    accumulate(&mut slots, node.inputs[1], gb)?;
                }
                Op::Mul => {
                    let a = &self.nodes[node.inputs[0].0].value;
                    let b = &self.nodes[node.inputs[1].0].value;
                    let ga = reduce_to(&upstream.zip_map(b, "mul", |g, v| g * v)?, a.shape());
                    let gb = reduce_to(&upstream.zip_map(a, "mul", |g, v| g * v)?, b.shape());
                    accumulate(&mut slots, node.inputs[0], ga)?;
                    accumulate(&mut slots, node.inputs[1], gb)?;
                }
                Op::Sigmoid => {
                    let s = &node.value;
                    let g = upstream.zip_map(s, "mul", |g, s| g * s * (1.0 - s))?;
                    accumulate(&mut slots, node.inputs[0], g)?;
                }
                Op::Tanh => {
                    let t = &node.value;
                    let g = upstream.zip_map(t, "mul", |g, t| g * (1.0 - t * t))?;
                    accumulate(&mut slots, node.inputs[0], g)?;
                }
                Op::Relu => {
                    let x = &self.nodes[node.inputs[0].0].value;
                    let g = upstream.zip_map(x, "mul", |g, x| if x > 0.0 { g } else { 0.0 })?;
                    accumulate(&mut slots, node.inputs[0], g)?;
                }
                Op::Ln => {
                    let x = &self.nodes[node.inputs[0].0].value;
                    let g = upstream.zip_map(x, "mul", |g, x| g / x)?;
                    accumulate(&mut slots, node.inputs[0], g)?;
                }
                Op::Clamp { lo, hi } => {
                    let x = &self.nodes[node.inputs[0].0].value;
                    let g = upstream.zip_map(
                        x,
                        "mul",
                        |g, x| if x > lo && x < hi { g } else { 0.0 },
                    )?;
                    accumulate(&mut slots, node.inputs[0], g)?;
                }
                Op::SliceCols { start, len } => {
                    let x = &self.nodes[node.inputs[0].0].value;
                    let mut g = Tensor::zeros(x.shape().to_vec());
                    for r in 0..upstream.nrows() {
                        for c in 0..len {
                            g.set(r, start + c, upstream.at(r, c));
                        }
                    }
                    accumulate(&mut slots, node.inputs[0], g)?;
                }
                Op::Row { index } => {
                    let x = &self.nodes[node.inputs[0].0].value;
                    let mut g = Tensor::zeros(x.shape().to_vec());
                    for c in 0..upstream.ncols() {
                        g.set(index, c, upstream.at(0, c));
                    }
                    accumulate(&mut slots, node.inputs[0], g)?;
                }
                Op::Scale { factor } => {
                    let g = upstream.map(|v| v * factor);
                    accumulate(&mut slots, node.inputs[0], g)?;
                }
            }
        }
        Ok(Gradients { slots })
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul => "matmul",
        Op::Add => "add",
        Op::Sub => "sub",
        Op::Mul => "mul",
        Op::Sigmoid => "sigmoid",
        Op::Tanh => "tanh",
        Op::Relu => "relu",
        Op::Ln => "ln",
        Op::Clamp { .. } => "clamp",
        Op::SliceCols { .. } => "slice_cols",
        Op::Row { .. } => "row",
        Op::Scale { .. } => "scale",
    }
}

/// Sums a broadcast gradient back down to the target shape. Only the
/// nonscalar-to-scalar direction exists because broadcast is scalar-only.
fn reduce_to(grad: &Tensor, target_shape: &[usize]) -> Tensor {
    if grad.shape() == target_shape {
        grad.clone()
    } else {
        let n: usize = target_shape.iter().product();
        debug_assert_eq!(n, 1);
        let mut t = Tensor::zeros(target_shape.to_vec());
        t.data_mut()[0] = grad.sum();
        t
    }
}

fn accumulate(slots: &mut [Option<Tensor>], id: NodeId, grad: Tensor) -> Result<(), NumError> {
    if !grad.is_finite() {
        return Err(NumError::NonFinite { op: "backward" });
    }
    match &mut slots[id.0] {
        Some(existing) => {
            let summed = existing.zip_map(&grad, "add", |a, b| a + b)?;
            *existing = summed;
        }
        slot @ None => *slot = Some(grad),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite differences over leaf entries, independent of backward().
    fn finite_diff(
        build: impl Fn(&mut Graph, &[Tensor]) -> NodeId,
        leaves: &[Tensor],
        which: usize,
        step: f64,
    ) -> Tensor {
        let mut grad = Tensor::zeros(leaves[which].shape().to_vec());
        for i in 0..leaves[which].len() {
            let mut plus = leaves.to_vec();
            plus[which].data_mut()[i] += step;
            let mut minus = leaves.to_vec();
            minus[which].data_mut()[i] -= step;
            let f = |ts: &[Tensor]| {
                let mut g = Graph::new();
                let loss = build(&mut g, ts);
                g.value(loss).as_scalar().unwrap()
            };
            grad.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * step);
        }
        grad
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn product_rule() {
        let mut g = Graph::new();
        let x = g.scalar(3.0).unwrap();
        let y = g.scalar(4.0).unwrap();
        let loss = g.mul(x, y).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().as_scalar().unwrap(), 4.0);
        assert_eq!(grads.get(y).unwrap().as_scalar().unwrap(), 3.0);
    }

    #[test]
    fn disconnected_leaf_gets_zeros() {
        let mut g = Graph::new();
        let x = g.scalar(3.0).unwrap();
        let unused = g.leaf(Tensor::row_vector(vec![1.0, 2.0])).unwrap();
        let loss = g.mul(x, x).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(unused).is_none());
        assert_eq!(grads.wrt(&g, unused), Tensor::zeros(vec![1, 2]));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::row_vector(vec![1.0, 2.0])).unwrap();
        assert!(matches!(g.backward(x), Err(NumError::NotScalar { .. })));
    }

    #[test]
    fn sigmoid_dot_matches_finite_differences() {
        // loss = sigmoid(w . x), checked against central differences.
        let w = Tensor::row_vector(vec![0.3, -0.7, 0.5]);
        let x = Tensor::from_rows(&[vec![1.0], vec![2.0], vec![-0.5]]).unwrap();
        let build = |g: &mut Graph, ts: &[Tensor]| {
            let w = g.leaf(ts[0].clone()).unwrap();
            let x = g.leaf(ts[1].clone()).unwrap();
            let z = g.matmul(w, x).unwrap();
            g.sigmoid(z).unwrap()
        };
        let leaves = vec![w, x];
        let mut g = Graph::new();
        let wid = g.leaf(leaves[0].clone()).unwrap();
        let xid = g.leaf(leaves[1].clone()).unwrap();
        let z = g.matmul(wid, xid).unwrap();
        let loss = g.sigmoid(z).unwrap();
        let grads = g.backward(loss).unwrap();

        for (which, id) in [(0, wid), (1, xid)] {
            let fd = finite_diff(build, &leaves, which, 1e-5);
            let an = grads.wrt(&g, id);
            for (a, f) in an.data().iter().zip(fd.data()) {
                assert!(rel_err(*a, *f) < 1e-6, "analytic {a} vs fd {f}");
            }
        }
    }

    #[test]
    fn random_graph_gradient_check() {
        // Small random expression mixing every differentiable op.
        use crate::rng;
        use rand::Rng;
        for seed in 0..10u64 {
            let mut r = rng::stream(seed, &[rng::tag::INIT]);
            let a_t = Tensor::from_rows(&[
                (0..3).map(|_| r.gen::<f64>() - 0.5).collect(),
                (0..3).map(|_| r.gen::<f64>() - 0.5).collect(),
            ])
            .unwrap();
            let b_t = Tensor::from_rows(&[
                (0..2).map(|_| r.gen::<f64>() - 0.5).collect(),
                (0..2).map(|_| r.gen::<f64>() - 0.5).collect(),
                (0..2).map(|_| r.gen::<f64>() - 0.5).collect(),
            ])
            .unwrap();
            let build = |g: &mut Graph, ts: &[Tensor]| {
                let a = g.leaf(ts[0].clone()).unwrap();
                let b = g.leaf(ts[1].clone()).unwrap();
                let m = g.matmul(a, b).unwrap(); // 2x2
                let s = g.sigmoid(m).unwrap();
                let t = g.tanh(m).unwrap();
                let u = g.mul(s, t).unwrap();
                let r1 = g.relu(u).unwrap();
                let c = g.scalar(1.5).unwrap();
                let shifted = g.add(r1, c).unwrap();
                let l = g.ln(shifted).unwrap();
                let flat = g.slice_cols(l, 0, 2).unwrap();
                let col = g.slice_cols(flat, 0, 1).unwrap();
                let row0 = g.row(col, 0).unwrap();
                let row1 = g.row(col, 1).unwrap();
                let summed = g.add(row0, row1).unwrap();
                g.scale(summed, 0.7).unwrap()
            };
            let leaves = vec![a_t, b_t];
            let mut g = Graph::new();
            let loss = build(&mut g, &leaves);
            let grads = g.backward(loss).unwrap();
            for which in 0..2 {
                let fd = finite_diff(build, &leaves, which, 1e-5);
                let an = grads.wrt(&g, NodeId(which));
                for (a, f) in an.data().iter().zip(fd.data()) {
                    assert!(
                        rel_err(*a, *f) < 1e-4,
                        "seed {seed}: analytic {a} vs fd {f}"
                    );
                }
            }
        }
    }

    #[test]
    fn backward_is_linear_in_the_loss() {
        // backward(a*L1 + b*L2) == a*backward(L1) + b*backward(L2)
        let (a, b) = (2.5, -1.25);
        let xs = Tensor::row_vector(vec![0.4, -0.9, 1.3]);

        let build = |g: &mut Graph| {
            let x = g.leaf(xs.clone()).unwrap();
            let s = g.sigmoid(x).unwrap();
            let t = g.tanh(x).unwrap();
            let ssum = {
                let c0 = g.slice_cols(s, 0, 1).unwrap();
                let c1 = g.slice_cols(s, 1, 1).unwrap();
                let c2 = g.slice_cols(s, 2, 1).unwrap();
                let p = g.add(c0, c1).unwrap();
                g.add(p, c2).unwrap()
            };
            let tsum = {
                let c0 = g.slice_cols(t, 0, 1).unwrap();
                let c1 = g.slice_cols(t, 1, 1).unwrap();
                let c2 = g.slice_cols(t, 2, 1).unwrap();
                let p = g.add(c0, c1).unwrap();
                g.add(p, c2).unwrap()
            };
            (x, ssum, tsum)
        };

        let mut g1 = Graph::new();
        let (x1, l1, _) = build(&mut g1);
        let g1grad = g1.backward(l1).unwrap().wrt(&g1, x1);

        let mut g2 = Graph::new();
        let (x2, _, l2) = build(&mut g2);
        let g2grad = g2.backward(l2).unwrap().wrt(&g2, x2);

        let mut g3 = Graph::new();
        let (x3, l31, l32) = build(&mut g3);
        let s1 = g3.scale(l31, a).unwrap();
        let s2 = g3.scale(l32, b).unwrap();
        let combined = g3.add(s1, s2).unwrap();
        let g3grad = g3.backward(combined).unwrap().wrt(&g3, x3);

        for i in 0..3 {
            let expect = a * g1grad.data()[i] + b * g2grad.data()[i];
            assert!(
                (g3grad.data()[i] - expect).abs() < 1e-10,
                "slot {i}: {} vs {expect}",
                g3grad.data()[i]
            );
        }
    }

    #[test]
    fn identical_graphs_are_bitwise_identical() {
        let run = || {
            let mut g = Graph::new();
            let a = g
                .leaf(Tensor::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap())
                .unwrap();
            let b = g
                .leaf(Tensor::from_rows(&[vec![0.5], vec![0.7]]).unwrap())
                .unwrap();
            let m = g.matmul(a, b).unwrap();
            let s = g.sigmoid(m).unwrap();
            let r0 = g.row(s, 0).unwrap();
            let r1 = g.row(s, 1).unwrap();
            let loss = g.add(r0, r1).unwrap();
            let grads = g.backward(loss).unwrap();
            (
                g.value(loss).as_scalar().unwrap().to_bits(),
                grads
                    .wrt(&g, a)
                    .data()
                    .iter()
                    .map(|v| v.to_bits())
                    .collect::<Vec<_>>(),
            )
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut g = Graph::new();
        let x = g.scalar(0.0).unwrap();
        assert!(matches!(g.ln(x), Err(NumError::NonFinite { .. })));
        assert!(g.leaf(Tensor::scalar(f64::NAN)).is_err());
    }
}

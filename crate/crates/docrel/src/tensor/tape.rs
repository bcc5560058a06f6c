//! Operation tape for reverse-mode differentiation.
//!
//! A [`Tape`] records every forward operation in topological order (inputs
//! always precede the node they feed). [`Tape::backward`] recomputes the
//! gradient buffers from scratch on every call, so running it twice over the
//! same tape yields identical gradients. Parameters live outside the tape;
//! training builds a fresh tape per step.

use super::{sigmoid, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    MatMul(NodeId, NodeId),
    MatVec(NodeId, NodeId),
    Dot(NodeId, NodeId),
    Sum(NodeId),
    Concat(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    Slice {
        input: NodeId,
        start: usize,
    },
    Gather {
        input: NodeId,
        indices: Vec<usize>,
    },
    EmbedRow {
        table: NodeId,
        row: usize,
    },
    Sigmoid(NodeId),
    Tanh(NodeId),
    Elu(NodeId),
    LeakyRelu(NodeId, f64),
    Softplus(NodeId),
    LogSumExp(NodeId),
    MaxStack {
        inputs: Vec<NodeId>,
        argmax: Vec<usize>,
    },
    LseStack(Vec<NodeId>),
    SoftmaxMasked {
        input: NodeId,
        mask: Vec<bool>,
    },
    SoftmaxMaskedRows {
        input: NodeId,
        mask: Vec<bool>,
    },
    RenormRows(NodeId),
    OuterSum(NodeId, NodeId),
    LayerNorm {
        input: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: f64,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Recorded computation graph with per-node gradient buffers.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Option<Vec<Vec<f64>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops all recorded nodes and gradients.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.grads = None;
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient buffer of a node, if `backward` has been run on this tape.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.as_ref().map(|g| g[id.0].as_slice())
    }

    /// Records a leaf node (parameter or constant).
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.leaf(Tensor::scalar(value))
    }

    fn binary_same_shape(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
    ) -> Result<(), TensorError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(TensorError::Shape {
                op: op_name,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.binary_same_shape("add", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor { shape, data }, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.binary_same_shape("sub", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x - y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor { shape, data }, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.binary_same_shape("mul", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor { shape, data }, Op::Mul(a, b)))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let t = Tensor {
            shape: v.shape().to_vec(),
            data: v.data().iter().map(|x| -x).collect(),
        };
        self.push(t, Op::Neg(a))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let v = self.value(a);
        let t = Tensor {
            shape: v.shape().to_vec(),
            data: v.data().iter().map(|x| factor * x).collect(),
        };
        self.push(t, Op::Scale(a, factor))
    }

    /// Matrix product of an m×k and a k×n tensor.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rank() != 2 || vb.rank() != 2 || va.shape()[1] != vb.shape()[0] {
            return Err(TensorError::MatMul {
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let (m, k) = va.dims2();
        let n = vb.shape()[1];
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = va.data()[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += aip * vb.data()[p * n + j];
                }
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![m, n],
                data,
            },
            Op::MatMul(a, b),
        ))
    }

    /// Matrix-vector product of an m×n tensor and a length-n vector.
    pub fn matvec(&mut self, a: NodeId, x: NodeId) -> Result<NodeId, TensorError> {
        let (va, vx) = (self.value(a), self.value(x));
        if va.rank() != 2 || vx.rank() != 1 || va.shape()[1] != vx.shape()[0] {
            return Err(TensorError::MatMul {
                lhs: va.shape().to_vec(),
                rhs: vx.shape().to_vec(),
            });
        }
        let (m, n) = va.dims2();
        let mut data = vec![0.0; m];
        for i in 0..m {
            let row = &va.data()[i * n..(i + 1) * n];
            data[i] = row.iter().zip(vx.data()).map(|(w, v)| w * v).sum();
        }
        Ok(self.push(Tensor::vector(data), Op::MatVec(a, x)))
    }

    /// Inner product of two equal-length vectors.
    pub fn dot(&mut self, u: NodeId, v: NodeId) -> Result<NodeId, TensorError> {
        let (vu, vv) = (self.value(u), self.value(v));
        if vu.rank() != 1 || vv.rank() != 1 || vu.len() != vv.len() {
            return Err(TensorError::Shape {
                op: "dot",
                lhs: vu.shape().to_vec(),
                rhs: vv.shape().to_vec(),
            });
        }
        let s: f64 = vu.data().iter().zip(vv.data()).map(|(x, y)| x * y).sum();
        Ok(self.push(Tensor::scalar(s), Op::Dot(u, v)))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Concatenates scalars and vectors into one vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Empty { op: "concat" });
        }
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.rank() > 1 {
                return Err(TensorError::Rank {
                    expected: "scalar or vector",
                    got: v.shape().to_vec(),
                });
            }
            data.extend_from_slice(v.data());
        }
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec())))
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Empty { op: "concat_cols" });
        }
        let rows = self.value(parts[0]).dims2().0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let v = self.value(p);
            if v.rank() != 2 || v.shape()[0] != rows {
                return Err(TensorError::Shape {
                    op: "concat_cols",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
            widths.push(v.shape()[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let v = self.value(p).data();
            for i in 0..rows {
                data[i * total + offset..i * total + offset + w]
                    .copy_from_slice(&v[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let parts = parts.to_vec();
        Ok(self.push(
            Tensor {
                shape: vec![rows, total],
                data,
            },
            Op::ConcatCols(parts),
        ))
    }

    /// Contiguous slice of a vector.
    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId, TensorError> {
        let v = self.value(a);
        if v.rank() != 1 {
            return Err(TensorError::Rank {
                expected: "vector",
                got: v.shape().to_vec(),
            });
        }
        if start + len > v.len() {
            return Err(TensorError::Slice {
                start,
                end: start + len,
                len: v.len(),
            });
        }
        let data = v.data()[start..start + len].to_vec();
        Ok(self.push(Tensor::vector(data), Op::Slice { input: a, start }))
    }

    /// Picks vector entries by index; duplicate indices are allowed.
    pub fn gather(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId, TensorError> {
        let v = self.value(a);
        if v.rank() != 1 {
            return Err(TensorError::Rank {
                expected: "vector",
                got: v.shape().to_vec(),
            });
        }
        let mut data = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= v.len() {
                return Err(TensorError::Index {
                    index: i,
                    len: v.len(),
                });
            }
            data.push(v.data()[i]);
        }
        Ok(self.push(
            Tensor::vector(data),
            Op::Gather {
                input: a,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Row of an embedding table, as a vector. Gradients scatter back into
    /// the addressed row.
    pub fn embed_row(&mut self, table: NodeId, row: usize) -> Result<NodeId, TensorError> {
        let v = self.value(table);
        if v.rank() != 2 {
            return Err(TensorError::Rank {
                expected: "matrix",
                got: v.shape().to_vec(),
            });
        }
        let (rows, cols) = v.dims2();
        if row >= rows {
            return Err(TensorError::Index {
                index: row,
                len: rows,
            });
        }
        let data = v.data()[row * cols..(row + 1) * cols].to_vec();
        Ok(self.push(Tensor::vector(data), Op::EmbedRow { table, row }))
    }

    fn unary(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let v = self.value(a);
        let t = Tensor {
            shape: v.shape().to_vec(),
            data: v.data().iter().map(|&x| f(x)).collect(),
        };
        self.push(t, op)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    /// Exponential linear unit: x for x ≥ 0, e^x − 1 otherwise.
    pub fn elu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| if x >= 0.0 { x } else { x.exp_m1() }, Op::Elu(a))
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        self.unary(
            a,
            |x| if x >= 0.0 { x } else { slope * x },
            Op::LeakyRelu(a, slope),
        )
    }

    /// ln(1 + e^x), elementwise and overflow-free.
    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.unary(a, super::softplus, Op::Softplus(a))
    }

    /// max(x) + ln Σ exp(x − max(x)) over a nonempty vector; finite for
    /// finite input.
    pub fn logsumexp(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(a);
        if v.rank() != 1 {
            return Err(TensorError::Rank {
                expected: "vector",
                got: v.shape().to_vec(),
            });
        }
        if v.is_empty() {
            return Err(TensorError::Empty { op: "logsumexp" });
        }
        let out = logsumexp_slice(v.data());
        Ok(self.push(Tensor::scalar(out), Op::LogSumExp(a)))
    }

    /// Coordinate-wise maximum over equally shaped tensors. Ties route the
    /// gradient to the first input attaining the maximum.
    pub fn max_stack(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        self.check_stack("max_stack", parts)?;
        let len = self.value(parts[0]).len();
        let mut data = self.value(parts[0]).data().to_vec();
        let mut argmax = vec![0usize; len];
        for (k, &p) in parts.iter().enumerate().skip(1) {
            for (d, &x) in self.value(p).data().iter().enumerate() {
                if x > data[d] {
                    data[d] = x;
                    argmax[d] = k;
                }
            }
        }
        let shape = self.value(parts[0]).shape().to_vec();
        Ok(self.push(
            Tensor { shape, data },
            Op::MaxStack {
                inputs: parts.to_vec(),
                argmax,
            },
        ))
    }

    /// Coordinate-wise log-sum-exp over equally shaped tensors, stabilized
    /// by the coordinate maximum.
    pub fn lse_stack(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        self.check_stack("lse_stack", parts)?;
        let len = self.value(parts[0]).len();
        let mut data = vec![0.0; len];
        for d in 0..len {
            let mut m = f64::NEG_INFINITY;
            for &p in parts {
                m = m.max(self.value(p).data()[d]);
            }
            let s: f64 = parts
                .iter()
                .map(|&p| (self.value(p).data()[d] - m).exp())
                .sum();
            data[d] = m + s.ln();
        }
        let shape = self.value(parts[0]).shape().to_vec();
        Ok(self.push(Tensor { shape, data }, Op::LseStack(parts.to_vec())))
    }

    fn check_stack(&self, op: &'static str, parts: &[NodeId]) -> Result<(), TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Empty { op });
        }
        let shape = self.value(parts[0]).shape();
        for &p in &parts[1..] {
            if self.value(p).shape() != shape {
                return Err(TensorError::Shape {
                    op,
                    lhs: shape.to_vec(),
                    rhs: self.value(p).shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Softmax over the kept entries of a vector; masked-out entries are
    /// exactly zero. Errors when the mask keeps nothing.
    pub fn softmax_masked(&mut self, a: NodeId, mask: &[bool]) -> Result<NodeId, TensorError> {
        let v = self.value(a);
        if v.rank() != 1 {
            return Err(TensorError::Rank {
                expected: "vector",
                got: v.shape().to_vec(),
            });
        }
        if v.len() != mask.len() {
            return Err(TensorError::Shape {
                op: "softmax_masked",
                lhs: v.shape().to_vec(),
                rhs: vec![mask.len()],
            });
        }
        let data = masked_softmax_slice(v.data(), mask)?;
        Ok(self.push(
            Tensor::vector(data),
            Op::SoftmaxMasked {
                input: a,
                mask: mask.to_vec(),
            },
        ))
    }

    /// Row-wise masked softmax over a matrix; every row must keep at least
    /// one entry.
    pub fn softmax_masked_rows(&mut self, a: NodeId, mask: &[bool]) -> Result<NodeId, TensorError> {
        let v = self.value(a);
        if v.rank() != 2 {
            return Err(TensorError::Rank {
                expected: "matrix",
                got: v.shape().to_vec(),
            });
        }
        if v.len() != mask.len() {
            return Err(TensorError::Shape {
                op: "softmax_masked_rows",
                lhs: v.shape().to_vec(),
                rhs: vec![mask.len()],
            });
        }
        let (rows, cols) = v.dims2();
        let mut data = vec![0.0; rows * cols];
        for i in 0..rows {
            let row = masked_softmax_slice(
                &v.data()[i * cols..(i + 1) * cols],
                &mask[i * cols..(i + 1) * cols],
            )?;
            data[i * cols..(i + 1) * cols].copy_from_slice(&row);
        }
        Ok(self.push(
            Tensor {
                shape: vec![rows, cols],
                data,
            },
            Op::SoftmaxMaskedRows {
                input: a,
                mask: mask.to_vec(),
            },
        ))
    }

    /// Divides each row of a nonnegative matrix by its sum. Errors when a
    /// row sums to zero or below.
    pub fn renorm_rows(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(a);
        if v.rank() != 2 {
            return Err(TensorError::Rank {
                expected: "matrix",
                got: v.shape().to_vec(),
            });
        }
        let (rows, cols) = v.dims2();
        let mut data = vec![0.0; rows * cols];
        for i in 0..rows {
            let s: f64 = v.data()[i * cols..(i + 1) * cols].iter().sum();
            if s <= 0.0 {
                return Err(TensorError::NonPositiveRow { row: i, sum: s });
            }
            for j in 0..cols {
                data[i * cols + j] = v.data()[i * cols + j] / s;
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![rows, cols],
                data,
            },
            Op::RenormRows(a),
        ))
    }

    /// Matrix of pairwise sums: out[i][j] = u[i] + v[j].
    pub fn outer_sum(&mut self, u: NodeId, v: NodeId) -> Result<NodeId, TensorError> {
        let (vu, vv) = (self.value(u), self.value(v));
        if vu.rank() != 1 || vv.rank() != 1 {
            return Err(TensorError::Rank {
                expected: "vector",
                got: if vu.rank() != 1 {
                    vu.shape().to_vec()
                } else {
                    vv.shape().to_vec()
                },
            });
        }
        let (r, c) = (vu.len(), vv.len());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] = vu.data()[i] + vv.data()[j];
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![r, c],
                data,
            },
            Op::OuterSum(u, v),
        ))
    }

    /// (x − mean)/sqrt(var + eps), scaled by `gain` and shifted by `bias`.
    /// Uses the population variance over the vector.
    pub fn layer_norm(
        &mut self,
        input: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: f64,
    ) -> Result<NodeId, TensorError> {
        if self.value(input).rank() != 1 {
            return Err(TensorError::Rank {
                expected: "vector",
                got: self.value(input).shape().to_vec(),
            });
        }
        self.binary_same_shape("layer_norm gain", input, gain)?;
        self.binary_same_shape("layer_norm bias", input, bias)?;
        let v = self.value(input);
        let (mean, inv_std) = layer_norm_moments(v.data(), eps);
        let d = v.len();
        let mut data = vec![0.0; d];
        for k in 0..d {
            let xhat = (v.data()[k] - mean) * inv_std;
            data[k] = self.value(gain).data()[k] * xhat + self.value(bias).data()[k];
        }
        Ok(self.push(
            Tensor::vector(data),
            Op::LayerNorm {
                input,
                gain,
                bias,
                eps,
            },
        ))
    }

    /// Seeds the scalar `loss` node with gradient 1 and accumulates
    /// gradients into every reachable node. Buffers are recomputed from
    /// zero, so repeated calls read back identical values; nodes the loss
    /// does not reach keep an exactly-zero gradient.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), TensorError> {
        let loss_shape = self.value(loss).shape();
        if self.value(loss).len() != 1 || !loss_shape.is_empty() {
            return Err(TensorError::NonScalarLoss(loss_shape.to_vec()));
        }
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        grads[loss.0][0] = 1.0;

        for i in (0..=loss.0).rev() {
            if grads[i].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = grads[i].clone();
            self.accumulate(i, &g, &mut grads);
        }
        self.grads = Some(grads);
        Ok(())
    }

    fn accumulate(&self, node: usize, g: &[f64], grads: &mut [Vec<f64>]) {
        let out = &self.nodes[node].value;
        match &self.nodes[node].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for (k, &gk) in g.iter().enumerate() {
                    grads[a.0][k] += gk;
                    grads[b.0][k] += gk;
                }
            }
            Op::Sub(a, b) => {
                for (k, &gk) in g.iter().enumerate() {
                    grads[a.0][k] += gk;
                    grads[b.0][k] -= gk;
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                for (k, &gk) in g.iter().enumerate() {
                    grads[a.0][k] += gk * vb[k];
                    grads[b.0][k] += gk * va[k];
                }
            }
            Op::Neg(a) => {
                for (k, &gk) in g.iter().enumerate() {
                    grads[a.0][k] -= gk;
                }
            }
            Op::Scale(a, c) => {
                for (k, &gk) in g.iter().enumerate() {
                    grads[a.0][k] += c * gk;
                }
            }
            Op::MatMul(a, b) => {
                let va = &self.nodes[a.0].value;
                let vb = &self.nodes[b.0].value;
                let (m, k) = va.dims2();
                let n = vb.shape()[1];
                // a-grad = g · bᵀ
                for i in 0..m {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g[i * n + j] * vb.data()[p * n + j];
                        }
                        grads[a.0][i * k + p] += s;
                    }
                }
                // b-grad = aᵀ · g
                for p in 0..k {
                    for i in 0..m {
                        let aip = va.data()[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            grads[b.0][p * n + j] += aip * g[i * n + j];
                        }
                    }
                }
            }
            Op::MatVec(a, x) => {
                let va = &self.nodes[a.0].value;
                let vx = &self.nodes[x.0].value;
                let (m, n) = va.dims2();
                for i in 0..m {
                    let gi = g[i];
                    if gi == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        grads[a.0][i * n + j] += gi * vx.data()[j];
                        grads[x.0][j] += gi * va.data()[i * n + j];
                    }
                }
            }
            Op::Dot(u, v) => {
                let (vu, vv) = (self.nodes[u.0].value.data(), self.nodes[v.0].value.data());
                let g0 = g[0];
                for k in 0..vu.len() {
                    grads[u.0][k] += g0 * vv[k];
                    grads[v.0][k] += g0 * vu[k];
                }
            }
            Op::Sum(a) => {
                let g0 = g[0];
                for gk in grads[a.0].iter_mut() {
                    *gk += g0;
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.len();
                    for k in 0..len {
                        grads[p.0][k] += g[offset + k];
                    }
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let rows = self.nodes[parts[0].0].value.dims2().0;
                let total = out.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let w = self.nodes[p.0].value.shape()[1];
                    for i in 0..rows {
                        for j in 0..w {
                            grads[p.0][i * w + j] += g[i * total + offset + j];
                        }
                    }
                    offset += w;
                }
            }
            Op::Slice { input, start } => {
                for (k, &gk) in g.iter().enumerate() {
                    grads[input.0][start + k] += gk;
                }
            }
            Op::Gather { input, indices } => {
                for (k, &idx) in indices.iter().enumerate() {
                    grads[input.0][idx] += g[k];
                }
            }
            Op::EmbedRow { table, row } => {
                let cols = g.len();
                for (k, &gk) in g.iter().enumerate() {
                    grads[table.0][row * cols + k] += gk;
                }
            }
            Op::Sigmoid(a) => {
                for (k, &gk) in g.iter().enumerate() {
                    let s = out.data()[k];
                    grads[a.0][k] += gk * s * (1.0 - s);
                }
            }
            Op::Tanh(a) => {
                for (k, &gk) in g.iter().enumerate() {
                    let t = out.data()[k];
                    grads[a.0][k] += gk * (1.0 - t * t);
                }
            }
            Op::Elu(a) => {
                let vx = self.nodes[a.0].value.data();
                for (k, &gk) in g.iter().enumerate() {
                    grads[a.0][k] += if vx[k] >= 0.0 {
                        gk
                    } else {
                        gk * (out.data()[k] + 1.0)
                    };
                }
            }
            Op::LeakyRelu(a, slope) => {
                let vx = self.nodes[a.0].value.data();
                for (k, &gk) in g.iter().enumerate() {
                    grads[a.0][k] += if vx[k] >= 0.0 { gk } else { slope * gk };
                }
            }
            Op::Softplus(a) => {
                let vx = self.nodes[a.0].value.data();
                for (k, &gk) in g.iter().enumerate() {
                    grads[a.0][k] += gk * sigmoid(vx[k]);
                }
            }
            Op::LogSumExp(a) => {
                let vx = self.nodes[a.0].value.data();
                let l = out.item();
                let g0 = g[0];
                for (k, &x) in vx.iter().enumerate() {
                    grads[a.0][k] += g0 * (x - l).exp();
                }
            }
            Op::MaxStack { inputs, argmax } => {
                for (d, &gk) in g.iter().enumerate() {
                    grads[inputs[argmax[d]].0][d] += gk;
                }
            }
            Op::LseStack(parts) => {
                for &p in parts {
                    let vx = self.nodes[p.0].value.data();
                    for (d, &gk) in g.iter().enumerate() {
                        grads[p.0][d] += gk * (vx[d] - out.data()[d]).exp();
                    }
                }
            }
            Op::SoftmaxMasked { input, mask } => {
                softmax_backward(&mut grads[input.0], g, out.data(), mask);
            }
            Op::SoftmaxMaskedRows { input, mask } => {
                let (rows, cols) = out.dims2();
                for i in 0..rows {
                    let span = i * cols..(i + 1) * cols;
                    softmax_backward(
                        &mut grads[input.0][span.clone()],
                        &g[span.clone()],
                        &out.data()[span.clone()],
                        &mask[span],
                    );
                }
            }
            Op::RenormRows(a) => {
                let va = self.nodes[a.0].value.data();
                let (rows, cols) = out.dims2();
                for i in 0..rows {
                    let s: f64 = va[i * cols..(i + 1) * cols].iter().sum();
                    let dot: f64 = (0..cols)
                        .map(|k| g[i * cols + k] * out.data()[i * cols + k])
                        .sum();
                    for j in 0..cols {
                        grads[a.0][i * cols + j] += (g[i * cols + j] - dot) / s;
                    }
                }
            }
            Op::OuterSum(u, v) => {
                let (r, c) = out.dims2();
                for i in 0..r {
                    for j in 0..c {
                        let gk = g[i * c + j];
                        grads[u.0][i] += gk;
                        grads[v.0][j] += gk;
                    }
                }
            }
            Op::LayerNorm {
                input,
                gain,
                bias,
                eps,
            } => {
                let vx = self.nodes[input.0].value.data();
                let vgain = self.nodes[gain.0].value.data();
                let d = vx.len();
                let (mean, inv_std) = layer_norm_moments(vx, *eps);
                let xhat: Vec<f64> = vx.iter().map(|&x| (x - mean) * inv_std).collect();
                let gy: Vec<f64> = (0..d).map(|k| g[k] * vgain[k]).collect();
                let mean_gy: f64 = gy.iter().sum::<f64>() / d as f64;
                let mean_gy_xhat: f64 =
                    gy.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                for k in 0..d {
                    grads[bias.0][k] += g[k];
                    grads[gain.0][k] += g[k] * xhat[k];
                    grads[input.0][k] += (gy[k] - mean_gy - xhat[k] * mean_gy_xhat) * inv_std;
                }
            }
        }
    }
}

fn logsumexp_slice(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = x.iter().map(|&v| (v - m).exp()).sum();
    m + s.ln()
}

fn masked_softmax_slice(x: &[f64], mask: &[bool]) -> Result<Vec<f64>, TensorError> {
    let mut m = f64::NEG_INFINITY;
    for (&v, &keep) in x.iter().zip(mask) {
        if keep {
            m = m.max(v);
        }
    }
    if m == f64::NEG_INFINITY {
        return Err(TensorError::AllMasked);
    }
    let mut out = vec![0.0; x.len()];
    let mut z = 0.0;
    for k in 0..x.len() {
        if mask[k] {
            out[k] = (x[k] - m).exp();
            z += out[k];
        }
    }
    for v in out.iter_mut() {
        *v /= z;
    }
    Ok(out)
}

fn softmax_backward(gx: &mut [f64], g: &[f64], y: &[f64], mask: &[bool]) {
    let s: f64 = g
        .iter()
        .zip(y)
        .zip(mask)
        .filter(|&(_, &keep)| keep)
        .map(|((gk, yk), _)| gk * yk)
        .sum();
    for k in 0..gx.len() {
        if mask[k] {
            gx[k] += y[k] * (g[k] - s);
        }
    }
}

fn layer_norm_moments(x: &[f64], eps: f64) -> (f64, f64) {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d;
    (mean, 1.0 / (var + eps).sqrt())
}

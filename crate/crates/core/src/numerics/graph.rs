//! Tape-based reverse-mode differentiation over 2-D `f64` matrices.
//!
//! A [`Graph`] records every primitive as it is evaluated. Node ids grow
//! monotonically, so the tape order is already a topological order and
//! [`Graph::backward`] walks it once from the loss down to the leaves.
//! Parameters are read in place from the [`ParamStore`] the graph borrows;
//! their gradients come back as a [`Gradients`] value for
//! [`ParamStore::apply_grads`].

use super::{Gradients, NumericsError, ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Affine { x: NodeId, scale: f64 },
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Softmax(NodeId),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    GatherRows { x: NodeId, rows: Vec<usize> },
    SliceCols { x: NodeId, start: usize },
    Reshape(NodeId),
    Embedding { table: NodeId, ids: Vec<usize> },
    CrossEntropy { logits: NodeId, targets: Vec<usize>, weights: Vec<f64> },
    Mse { pred: NodeId, target: Vec<f64> },
    Sum(NodeId),
    MeanRows(NodeId),
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        use Op::*;
        match self {
            Constant | Param(_) => vec![],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | AddRow(a, b) => vec![*a, *b],
            Transpose(a) | Tanh(a) | Sigmoid(a) | Relu(a) | Softmax(a) | Reshape(a) | Sum(a)
            | MeanRows(a) => vec![*a],
            Affine { x, .. } | GatherRows { x, .. } | SliceCols { x, .. } => vec![*x],
            ConcatCols(xs) | ConcatRows(xs) => xs.clone(),
            Embedding { table, .. } => vec![*table],
            CrossEntropy { logits, .. } => vec![*logits],
            Mse { pred, .. } => vec![*pred],
        }
    }

    fn name(&self) -> &'static str {
        use Op::*;
        match self {
            Constant => "constant",
            Param(_) => "param",
            MatMul(..) => "matmul",
            Transpose(_) => "transpose",
            Add(..) => "add",
            Sub(..) => "sub",
            Mul(..) => "mul",
            AddRow(..) => "add_row",
            Affine { .. } => "affine",
            Tanh(_) => "tanh",
            Sigmoid(_) => "sigmoid",
            Relu(_) => "relu",
            Softmax(_) => "softmax",
            ConcatCols(_) => "concat_cols",
            ConcatRows(_) => "concat_rows",
            GatherRows { .. } => "gather_rows",
            SliceCols { .. } => "slice_cols",
            Reshape(_) => "reshape",
            Embedding { .. } => "embedding",
            CrossEntropy { .. } => "cross_entropy",
            Mse { .. } => "mse",
            Sum(_) => "sum",
            MeanRows(_) => "mean_rows",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    // None for parameters, which are read from the store.
    value: Option<Vec<f64>>,
    // Softmax probabilities kept by cross-entropy for its backward pass.
    aux: Option<Vec<f64>>,
    needs_grad: bool,
}

/// Record of primitive operations for one forward pass.
pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    check_finite: bool,
    non_finite: Option<(usize, &'static str)>,
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            check_finite: false,
            non_finite: None,
        }
    }

    /// Enables NaN/Inf detection on every recorded value. The first
    /// offending op is reported by [`Graph::backward`] and
    /// [`Graph::check`].
    pub fn with_finite_check(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        let n = &self.nodes[id.0];
        match (&n.value, &n.op) {
            (Some(v), _) => v,
            (None, Op::Param(p)) => self.store.get(*p).values(),
            _ => unreachable!("node without value"),
        }
    }

    pub fn tensor(&self, id: NodeId) -> Tensor {
        let (r, c) = self.shape(id);
        Tensor::from_parts(r, c, self.value(id).to_vec())
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.len(), 1, "scalar() on a non-scalar node");
        v[0]
    }

    /// Which side of zero every ReLU input lies on. The recorded function
    /// is smooth between two parameter settings with equal signatures.
    pub fn kink_signature(&self) -> Vec<bool> {
        let mut sig = Vec::new();
        for n in &self.nodes {
            if let Op::Relu(x) = n.op {
                sig.extend(self.value(x).iter().map(|&v| v > 0.0));
            }
        }
        sig
    }

    /// Returns the first non-finite value recorded, if detection is on.
    pub fn check(&self) -> Result<(), NumericsError> {
        match self.non_finite {
            Some((node, op)) => Err(NumericsError::NonFinite { node, op }),
            None => Ok(()),
        }
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>) -> NodeId {
        debug_assert_eq!(rows * cols, value.len());
        let needs_grad = op.inputs().iter().any(|i| self.nodes[i.0].needs_grad);
        self.push_raw(op, rows, cols, Some(value), needs_grad)
    }

    fn push_raw(&mut self, op: Op, rows: usize, cols: usize, value: Option<Vec<f64>>, needs_grad: bool) -> NodeId {
        let id = self.nodes.len();
        if self.check_finite && self.non_finite.is_none() {
            if let Some(v) = &value {
                if v.iter().any(|x| !x.is_finite()) {
                    self.non_finite = Some((id, op.name()));
                }
            }
        }
        self.nodes.push(Node {
            op,
            rows,
            cols,
            value,
            aux: None,
            needs_grad,
        });
        NodeId(id)
    }

    // ---- leaves ----

    pub fn constant(&mut self, t: &Tensor) -> NodeId {
        let (r, c) = t.dims2();
        self.push_raw(Op::Constant, r, c, Some(t.values().to_vec()), false)
    }

    pub fn matrix(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> NodeId {
        assert_eq!(rows * cols, values.len(), "matrix: length mismatch");
        self.push_raw(Op::Constant, rows, cols, Some(values), false)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> NodeId {
        self.matrix(rows, cols, vec![0.0; rows * cols])
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        let t = self.store.get(id);
        let (r, c) = t.dims2();
        let needs = t.requires_grad();
        self.push_raw(Op::Param(id), r, c, None, needs)
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul: inner dimensions {k} vs {k2}");
        let out = matmul_raw(self.value(a), self.value(b), m, k, n);
        self.push(Op::MatMul(a, b), m, n, out)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let out = transpose_raw(self.value(a), r, c);
        self.push(Op::Transpose(a), c, r, out)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "add: shape mismatch");
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let (r, c) = self.shape(a);
        self.push(Op::Add(a, b), r, c, out)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "sub: shape mismatch");
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let (r, c) = self.shape(a);
        self.push(Op::Sub(a, b), r, c, out)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "mul: shape mismatch");
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let (r, c) = self.shape(a);
        self.push(Op::Mul(a, b), r, c, out)
    }

    /// Adds the `[1, c]` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(bias), (1, c), "add_row: bias shape");
        let b = self.value(bias);
        let out = self
            .value(a)
            .chunks(c)
            .flat_map(|row| row.iter().zip(b).map(|(x, y)| x + y))
            .collect();
        self.push(Op::AddRow(a, bias), r, c, out)
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|v| scale * v + shift).collect();
        self.push(Op::Affine { x, scale }, r, c, out)
    }

    pub fn scale(&mut self, x: NodeId, scale: f64) -> NodeId {
        self.affine(x, scale, 0.0)
    }

    /// `1 - x`
    pub fn one_minus(&mut self, x: NodeId) -> NodeId {
        self.affine(x, -1.0, 1.0)
    }

    // ---- nonlinearities ----

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|v| v.tanh()).collect();
        self.push(Op::Tanh(x), r, c, out)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        self.push(Op::Sigmoid(x), r, c, out)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| v.max(0.0)).collect();
        self.push(Op::Relu(x), r, c, out)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        let out = softmax_rows(self.value(x), c);
        self.push(Op::Softmax(x), r, c, out)
    }

    // ---- structure ----

    pub fn concat_cols(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty(), "concat_cols: no inputs");
        let rows = self.shape(xs[0]).0;
        assert!(xs.iter().all(|&x| self.shape(x).0 == rows), "concat_cols: row mismatch");
        let cols: usize = xs.iter().map(|&x| self.shape(x).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &x in xs {
                let c = self.shape(x).1;
                out.extend_from_slice(&self.value(x)[i * c..(i + 1) * c]);
            }
        }
        self.push(Op::ConcatCols(xs.to_vec()), rows, cols, out)
    }

    pub fn concat_rows(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty(), "concat_rows: no inputs");
        let cols = self.shape(xs[0]).1;
        assert!(xs.iter().all(|&x| self.shape(x).1 == cols), "concat_rows: column mismatch");
        let rows: usize = xs.iter().map(|&x| self.shape(x).0).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for &x in xs {
            out.extend_from_slice(self.value(x));
        }
        self.push(Op::ConcatRows(xs.to_vec()), rows, cols, out)
    }

    /// Picks rows of `x` by index; indices may repeat.
    pub fn gather_rows(&mut self, x: NodeId, rows: &[usize]) -> NodeId {
        let (r, c) = self.shape(x);
        let v = self.value(x);
        let mut out = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            assert!(i < r, "gather_rows: row {i} out of {r}");
            out.extend_from_slice(&v[i * c..(i + 1) * c]);
        }
        self.push(Op::GatherRows { x, rows: rows.to_vec() }, rows.len(), c, out)
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let idx: Vec<usize> = (start..start + len).collect();
        self.gather_rows(x, &idx)
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let (r, c) = self.shape(x);
        assert!(start + len <= c && len > 0, "slice_cols: out of range");
        let v = self.value(x);
        let out = (0..r)
            .flat_map(|i| v[i * c + start..i * c + start + len].iter().copied())
            .collect();
        self.push(Op::SliceCols { x, start }, r, len, out)
    }

    pub fn reshape(&mut self, x: NodeId, rows: usize, cols: usize) -> NodeId {
        let (r, c) = self.shape(x);
        assert_eq!(r * c, rows * cols, "reshape: size mismatch");
        let out = self.value(x).to_vec();
        self.push(Op::Reshape(x), rows, cols, out)
    }

    /// Looks up rows of an embedding table: `[ids.len(), dim]`.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let (vocab, dim) = self.shape(table);
        let t = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &i in ids {
            assert!(i < vocab, "embedding: id {i} out of vocabulary {vocab}");
            out.extend_from_slice(&t[i * dim..(i + 1) * dim]);
        }
        self.push(Op::Embedding { table, ids: ids.to_vec() }, ids.len(), dim, out)
    }

    // ---- losses and reductions ----

    /// Weighted sum over rows of `-log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize], weights: &[f64]) -> NodeId {
        let (r, c) = self.shape(logits);
        assert_eq!(targets.len(), r, "cross_entropy: one target per row");
        assert_eq!(weights.len(), r, "cross_entropy: one weight per row");
        let probs = softmax_rows(self.value(logits), c);
        let mut loss = 0.0;
        for (i, (&t, &w)) in targets.iter().zip(weights).enumerate() {
            assert!(t < c, "cross_entropy: target {t} out of {c} classes");
            let row = &self.value(logits)[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += w * (lse - row[t]);
        }
        let id = self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
            },
            1,
            1,
            vec![loss],
        );
        self.nodes[id.0].aux = Some(probs);
        id
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: NodeId, target: &[f64]) -> NodeId {
        let v = self.value(pred);
        assert_eq!(v.len(), target.len(), "mse: length mismatch");
        let n = v.len() as f64;
        let loss = v.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
        self.push(Op::Mse { pred, target: target.to_vec() }, 1, 1, vec![loss])
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).iter().sum();
        self.push(Op::Sum(x), 1, 1, vec![s])
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Column means: `[r, c] -> [1, c]`.
    pub fn mean_rows(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        let v = self.value(x);
        let mut out = vec![0.0; c];
        for row in v.chunks(c) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        out.iter_mut().for_each(|o| *o /= r as f64);
        self.push(Op::MeanRows(x), 1, c, out)
    }

    // ---- backward ----

    /// Propagates d(loss)/d(node) to every parameter that requires a
    /// gradient. Consumes the graph.
    pub fn backward(self, loss: NodeId) -> Result<Gradients, NumericsError> {
        self.check()?;
        let (r, c) = self.shape(loss);
        if r * c != 1 {
            return Err(NumericsError::NonScalarLoss { rows: r, cols: c });
        }
        for (i, n) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if n.op.inputs().iter().any(|inp| inp.0 >= i) {
                return Err(NumericsError::Cycle { node: i });
            }
        }

        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut out = Gradients(vec![None; self.store.len()]);
        if !self.nodes[loss.0].needs_grad {
            return Ok(out);
        }
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if let Op::Param(p) = node.op {
                accumulate(&mut out.0[p.0], &dy);
                continue;
            }
            self.backprop_node(i, &dy, &mut grads);
        }
        Ok(out)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn backprop_node(&self, i: usize, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let (rows, cols) = (node.rows, node.cols);
        let y = node.value.as_deref().unwrap();
        let mut send = |id: NodeId, g: Vec<f64>| accumulate(&mut grads[id.0], &g);
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = cols;
                if self.needs(*a) {
                    // dA = dY B^T
                    let bt = transpose_raw(self.value(*b), k, n);
                    send(*a, matmul_raw(dy, &bt, m, n, k));
                }
                if self.needs(*b) {
                    // dB = A^T dY
                    let at = transpose_raw(self.value(*a), m, k);
                    send(*b, matmul_raw(&at, dy, k, m, n));
                }
            }
            Op::Transpose(a) => {
                if self.needs(*a) {
                    send(*a, transpose_raw(dy, rows, cols));
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    send(*a, dy.to_vec());
                }
                if self.needs(*b) {
                    send(*b, dy.to_vec());
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    send(*a, dy.to_vec());
                }
                if self.needs(*b) {
                    send(*b, dy.iter().map(|v| -v).collect());
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    send(*a, zip_map(dy, self.value(*b), |g, v| g * v));
                }
                if self.needs(*b) {
                    send(*b, zip_map(dy, self.value(*a), |g, v| g * v));
                }
            }
            Op::AddRow(a, bias) => {
                if self.needs(*a) {
                    send(*a, dy.to_vec());
                }
                if self.needs(*bias) {
                    let mut db = vec![0.0; cols];
                    for row in dy.chunks(cols) {
                        for (d, g) in db.iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                    send(*bias, db);
                }
            }
            Op::Affine { x, scale } => send(*x, dy.iter().map(|g| g * scale).collect()),
            Op::Tanh(x) => send(*x, zip_map(dy, y, |g, t| g * (1.0 - t * t))),
            Op::Sigmoid(x) => send(*x, zip_map(dy, y, |g, s| g * s * (1.0 - s))),
            Op::Relu(x) => send(*x, zip_map(dy, self.value(*x), |g, v| if v > 0.0 { g } else { 0.0 })),
            Op::Softmax(x) => {
                let mut dx = Vec::with_capacity(dy.len());
                for (gr, yr) in dy.chunks(cols).zip(y.chunks(cols)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(g, p)| g * p).sum();
                    dx.extend(gr.iter().zip(yr).map(|(g, p)| p * (g - dot)));
                }
                send(*x, dx);
            }
            Op::ConcatCols(xs) => {
                let mut offset = 0;
                for &x in xs {
                    let c = self.shape(x).1;
                    if self.needs(x) {
                        let g = (0..rows)
                            .flat_map(|r| dy[r * cols + offset..r * cols + offset + c].iter().copied())
                            .collect();
                        send(x, g);
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(xs) => {
                let mut offset = 0;
                for &x in xs {
                    let n = self.value(x).len();
                    if self.needs(x) {
                        send(x, dy[offset..offset + n].to_vec());
                    }
                    offset += n;
                }
            }
            Op::GatherRows { x, rows: idx } => {
                let (r, c) = self.shape(*x);
                let mut g = vec![0.0; r * c];
                for (k, &src) in idx.iter().enumerate() {
                    for j in 0..c {
                        g[src * c + j] += dy[k * c + j];
                    }
                }
                send(*x, g);
            }
            Op::SliceCols { x, start } => {
                let (r, c) = self.shape(*x);
                let mut g = vec![0.0; r * c];
                for i in 0..r {
                    g[i * c + start..i * c + start + cols].copy_from_slice(&dy[i * cols..(i + 1) * cols]);
                }
                send(*x, g);
            }
            Op::Reshape(x) => send(*x, dy.to_vec()),
            Op::Embedding { table, ids } => {
                let (v, d) = self.shape(*table);
                let mut g = vec![0.0; v * d];
                for (k, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        g[id * d + j] += dy[k * d + j];
                    }
                }
                send(*table, g);
            }
            Op::CrossEntropy { logits, targets, weights } => {
                let c = self.shape(*logits).1;
                let probs = node.aux.as_deref().unwrap();
                let mut g = Vec::with_capacity(probs.len());
                for (i, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                    for j in 0..c {
                        let onehot = if j == t { 1.0 } else { 0.0 };
                        g.push(dy[0] * w * (probs[i * c + j] - onehot));
                    }
                }
                send(*logits, g);
            }
            Op::Mse { pred, target } => {
                let n = target.len() as f64;
                let g = self
                    .value(*pred)
                    .iter()
                    .zip(target)
                    .map(|(p, t)| dy[0] * 2.0 * (p - t) / n)
                    .collect();
                send(*pred, g);
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                send(*x, vec![dy[0]; n]);
            }
            Op::MeanRows(x) => {
                let (r, c) = self.shape(*x);
                let mut g = Vec::with_capacity(r * c);
                for _ in 0..r {
                    g.extend(dy.iter().map(|v| v / r as f64));
                }
                send(*x, g);
            }
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_rows(v: &[f64], cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    for row in v.chunks(cols) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut total = 0.0;
        for &x in row {
            let e = (x - max).exp();
            total += e;
            out.push(e);
        }
        out[start..].iter_mut().for_each(|e| *e /= total);
    }
    out
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

/// Builds a fresh graph with `build`, runs backward from the scalar it
/// returns and stores the gradients in `store`. Returns the loss value.
pub fn forward_backward<F>(store: &mut ParamStore, build: F) -> Result<f64, NumericsError>
where
    F: FnOnce(&mut Graph<'_>) -> Result<NodeId, NumericsError>,
{
    let grads;
    let loss_value;
    {
        let mut g = Graph::new(store);
        let loss = build(&mut g)?;
        loss_value = g.value(loss)[0];
        grads = g.backward(loss)?;
    }
    store.apply_grads(grads);
    Ok(loss_value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[(&str, Vec<usize>, Vec<f64>)]) -> ParamStore {
        let mut s = ParamStore::new();
        for (n, shape, v) in values {
            s.insert(n, Tensor::new(shape.clone(), v.clone()).unwrap());
        }
        s
    }

    #[test]
    fn square_gradient() {
        let mut s = store_with(&[("x", vec![1, 1], vec![3.0])]);
        let loss = forward_backward(&mut s, |g| {
            let x = g.param(ParamId(0));
            let y = g.mul(x, x);
            Ok(g.sum(y))
        })
        .unwrap();
        assert_eq!(loss, 9.0);
        assert_eq!(s.get(ParamId(0)).grad().unwrap(), &[6.0]);
    }

    #[test]
    fn unreachable_parameter_gets_zero() {
        let mut s = store_with(&[("x", vec![1], vec![3.0]), ("p", vec![2], vec![1.0, 2.0])]);
        forward_backward(&mut s, |g| {
            let x = g.param(ParamId(0));
            Ok(g.sum(x))
        })
        .unwrap();
        assert_eq!(s.get(ParamId(1)).grad().unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn softmax_cross_entropy_gradient() {
        let mut s = store_with(&[("z", vec![1, 3], vec![1.0, 2.0, 3.0])]);
        forward_backward(&mut s, |g| {
            let z = g.param(ParamId(0));
            Ok(g.cross_entropy(z, &[2], &[1.0]))
        })
        .unwrap();
        let grad = s.get(ParamId(0)).grad().unwrap().to_vec();
        let p = softmax_rows(&[1.0, 2.0, 3.0], 3);
        let expected = [p[0], p[1], p[2] - 1.0];
        for (a, e) in grad.iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
        // central differences, step 1e-5
        let f = |z: [f64; 3]| {
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - z[2]
        };
        for j in 0..3 {
            let mut plus = [1.0, 2.0, 3.0];
            let mut minus = plus;
            plus[j] += 1e-5;
            minus[j] -= 1e-5;
            let numeric = (f(plus) - f(minus)) / 2e-5;
            assert!((numeric - grad[j]).abs() < 1e-9, "coord {j}: {numeric} vs {}", grad[j]);
        }
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let s = store_with(&[("x", vec![1, 2], vec![1.0, 2.0])]);
        let mut g = Graph::new(&s);
        let x = g.param(ParamId(0));
        let y = g.tanh(x);
        assert!(matches!(g.backward(y), Err(NumericsError::NonScalarLoss { .. })));
    }

    #[test]
    fn foreign_node_id_is_a_cycle() {
        let s = store_with(&[("x", vec![1, 1], vec![1.0])]);
        let mut g = Graph::new(&s);
        let x = g.param(ParamId(0));
        let _ = g.tanh(x);
        // A node referring forward in the tape cannot come from this graph.
        g.nodes[0].op = Op::Tanh(NodeId(1));
        let loss = NodeId(1);
        assert!(matches!(g.backward(loss), Err(NumericsError::Cycle { .. })));
    }

    #[test]
    fn finite_check_reports_first_bad_op() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s).with_finite_check(true);
        let x = g.matrix(1, 1, vec![1000.0]);
        let e = g.affine(x, f64::INFINITY, 0.0);
        let _ = g.tanh(e);
        assert!(matches!(g.check(), Err(NumericsError::NonFinite { op: "affine", .. })));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax_rows(&[1.0, -2.0, 30.0, 0.0, 0.0, 0.0], 3);
        for row in p.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

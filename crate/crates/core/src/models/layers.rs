use rand_chacha::ChaCha8Rng;

use crate::numerics::{Graph, NodeId, ParamId, ParamStore};

/// `x W + b`
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: store.uniform(&format!("{name}.weight"), &[in_dim, out_dim], in_dim, rng),
            b: store.uniform(&format!("{name}.bias"), &[1, out_dim], in_dim, rng),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: NodeId) -> NodeId {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let h = g.matmul(x, w);
        g.add_row(h, b)
    }
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, name: &str, vocab: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            table: store.uniform(&format!("{name}.table"), &[vocab, dim], dim, rng),
            vocab,
            dim,
        }
    }

    /// `[ids.len(), dim]`
    pub fn lookup(&self, g: &mut Graph<'_>, ids: &[usize]) -> NodeId {
        let t = g.param(self.table);
        g.embedding(t, ids)
    }

    /// Looks up `rows * width` ids and lays each row's `width` vectors side
    /// by side: `[rows, width * dim]`.
    pub fn lookup_windows(&self, g: &mut Graph<'_>, ids: &[usize], width: usize) -> NodeId {
        let e = self.lookup(g, ids);
        g.reshape(e, ids.len() / width, width * self.dim)
    }
}

fn reversed(g: &mut Graph<'_>, x: NodeId) -> NodeId {
    let rows = g.shape(x).0;
    let idx: Vec<usize> = (0..rows).rev().collect();
    g.gather_rows(x, &idx)
}

/// GRU over the rows of a `[T, in]` input, zero initial state.
#[derive(Debug, Clone)]
pub struct Gru {
    w_ih: ParamId,
    w_hh: ParamId,
    b_ih: ParamId,
    b_hh: ParamId,
    pub hidden: usize,
}

impl Gru {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w_ih: store.uniform(&format!("{name}.w_ih"), &[in_dim, 3 * hidden], hidden, rng),
            w_hh: store.uniform(&format!("{name}.w_hh"), &[hidden, 3 * hidden], hidden, rng),
            b_ih: store.uniform(&format!("{name}.b_ih"), &[1, 3 * hidden], hidden, rng),
            b_hh: store.uniform(&format!("{name}.b_hh"), &[1, 3 * hidden], hidden, rng),
            hidden,
        }
    }

    /// `[T, hidden]` states.
    pub fn forward(&self, g: &mut Graph<'_>, x: NodeId) -> NodeId {
        let h = self.hidden;
        let steps = g.shape(x).0;
        let w_ih = g.param(self.w_ih);
        let w_hh = g.param(self.w_hh);
        let b_ih = g.param(self.b_ih);
        let b_hh = g.param(self.b_hh);
        let xi = g.matmul(x, w_ih);
        let xi = g.add_row(xi, b_ih);
        let mut state = g.zeros(1, h);
        let mut outs = Vec::with_capacity(steps);
        for t in 0..steps {
            let xt = g.slice_rows(xi, t, 1);
            let hh = g.matmul(state, w_hh);
            let hh = g.add_row(hh, b_hh);
            let (xr, xz, xn) = (g.slice_cols(xt, 0, h), g.slice_cols(xt, h, h), g.slice_cols(xt, 2 * h, h));
            let (hr, hz, hn) = (g.slice_cols(hh, 0, h), g.slice_cols(hh, h, h), g.slice_cols(hh, 2 * h, h));
            let r = g.add(xr, hr);
            let r = g.sigmoid(r);
            let z = g.add(xz, hz);
            let z = g.sigmoid(z);
            let rn = g.mul(r, hn);
            let n = g.add(xn, rn);
            let n = g.tanh(n);
            let keep = g.mul(z, state);
            let one_minus_z = g.one_minus(z);
            let fresh = g.mul(one_minus_z, n);
            state = g.add(fresh, keep);
            outs.push(state);
        }
        g.concat_rows(&outs)
    }
}

/// Forward and backward GRU, outputs concatenated: `[T, 2 * hidden]`.
#[derive(Debug, Clone)]
pub struct BiGru {
    fwd: Gru,
    bwd: Gru,
}

impl BiGru {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            fwd: Gru::new(store, &format!("{name}.fwd"), in_dim, hidden, rng),
            bwd: Gru::new(store, &format!("{name}.bwd"), in_dim, hidden, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: NodeId) -> NodeId {
        let f = self.fwd.forward(g, x);
        let xr = reversed(g, x);
        let b = self.bwd.forward(g, xr);
        let b = reversed(g, b);
        g.concat_cols(&[f, b])
    }

    pub fn out_dim(&self) -> usize {
        2 * self.fwd.hidden
    }
}

/// LSTM over the rows of a `[T, in]` input, zero initial state.
/// Gate order in the packed weights: input, forget, cell, output.
#[derive(Debug, Clone)]
pub struct Lstm {
    w_ih: ParamId,
    w_hh: ParamId,
    bias: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w_ih: store.uniform(&format!("{name}.w_ih"), &[in_dim, 4 * hidden], hidden, rng),
            w_hh: store.uniform(&format!("{name}.w_hh"), &[hidden, 4 * hidden], hidden, rng),
            bias: store.uniform(&format!("{name}.bias"), &[1, 4 * hidden], hidden, rng),
            hidden,
        }
    }

    /// `[T, hidden]` hidden states.
    pub fn forward(&self, g: &mut Graph<'_>, x: NodeId) -> NodeId {
        let h = self.hidden;
        let steps = g.shape(x).0;
        let w_ih = g.param(self.w_ih);
        let w_hh = g.param(self.w_hh);
        let bias = g.param(self.bias);
        let xi = g.matmul(x, w_ih);
        let xi = g.add_row(xi, bias);
        let mut hs = g.zeros(1, h);
        let mut cs = g.zeros(1, h);
        let mut outs = Vec::with_capacity(steps);
        for t in 0..steps {
            let xt = g.slice_rows(xi, t, 1);
            let hh = g.matmul(hs, w_hh);
            let gates = g.add(xt, hh);
            let i = g.slice_cols(gates, 0, h);
            let i = g.sigmoid(i);
            let f = g.slice_cols(gates, h, h);
            let f = g.sigmoid(f);
            let c_new = g.slice_cols(gates, 2 * h, h);
            let c_new = g.tanh(c_new);
            let o = g.slice_cols(gates, 3 * h, h);
            let o = g.sigmoid(o);
            let kept = g.mul(f, cs);
            let added = g.mul(i, c_new);
            cs = g.add(kept, added);
            let ct = g.tanh(cs);
            hs = g.mul(o, ct);
            outs.push(hs);
        }
        g.concat_rows(&outs)
    }
}

#[derive(Debug, Clone)]
pub struct BiLstm {
    fwd: Lstm,
    bwd: Lstm,
}

impl BiLstm {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            fwd: Lstm::new(store, &format!("{name}.fwd"), in_dim, hidden, rng),
            bwd: Lstm::new(store, &format!("{name}.bwd"), in_dim, hidden, rng),
        }
    }

    /// `[T, 2 * hidden]`; row `t` holds the forward state after token `t`
    /// and the backward state after token `t`.
    pub fn forward(&self, g: &mut Graph<'_>, x: NodeId) -> NodeId {
        let f = self.fwd.forward(g, x);
        let xr = reversed(g, x);
        let b = self.bwd.forward(g, xr);
        let b = reversed(g, b);
        g.concat_cols(&[f, b])
    }

    pub fn out_dim(&self) -> usize {
        2 * self.fwd.hidden
    }
}

//! Reverse-mode tape over rank-2 f32 buffers.
//!
//! The tape is rebuilt every step; `reset` recycles value/grad buffers
//! through a size-keyed pool so steady-state training does not allocate.
//! Node ids are creation-ordered, so reverse id order is a valid reverse
//! topological order for backward.

use std::collections::HashMap;

use crate::error::GradError;
use crate::kernels as k;
use crate::tensor::Tensor;

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
    Matmul {
        a: NodeId,
        b: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Mul {
        a: NodeId,
        b: NodeId,
    },
    /// y[r] = x[r] + t[r % t_rows]; covers bias add (t_rows = 1) and
    /// positional-table add over a sample-major batch (t_rows = table len).
    AddTiled {
        x: NodeId,
        t: NodeId,
        t_rows: usize,
    },
    Scale {
        a: NodeId,
        c: f32,
    },
    SoftmaxRows {
        a: NodeId,
    },
    Layernorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
    },
    Gelu {
        a: NodeId,
    },
    Sigmoid {
        a: NodeId,
    },
    Tanh {
        a: NodeId,
    },
    ConcatRows {
        a: NodeId,
        b: NodeId,
    },
    SliceRows {
        a: NodeId,
        from: usize,
    },
    SliceCols {
        a: NodeId,
        from: usize,
    },
    /// Per sample: x rows and a rows interleaved x,a,x,a,...,x.
    InterleaveRows {
        x: NodeId,
        a: NodeId,
        batch: usize,
    },
    Attention {
        q: NodeId,
        key: NodeId,
        v: NodeId,
        batch: usize,
        heads: usize,
        shared: bool,
        mask: Option<usize>,
    },
    MseLoss {
        pred: NodeId,
        target: NodeId,
    },
}

struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f32>,
    grad: Option<Vec<f32>>,
    aux: Option<Vec<f32>>,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    masks: Vec<Vec<bool>>,
    pool: HashMap<usize, Vec<Vec<f32>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drop all nodes, recycling their buffers for the next build.
    pub fn reset(&mut self) {
        let nodes = std::mem::take(&mut self.nodes);
        for node in nodes {
            self.recycle(node.value);
            if let Some(g) = node.grad {
                self.recycle(g);
            }
            if let Some(a) = node.aux {
                self.recycle(a);
            }
        }
        self.masks.clear();
    }

    fn recycle(&mut self, buf: Vec<f32>) {
        self.pool.entry(buf.len()).or_default().push(buf);
    }

    fn alloc(&mut self, len: usize) -> Vec<f32> {
        match self.pool.get_mut(&len).and_then(Vec::pop) {
            Some(buf) => buf,
            None => vec![0.0; len],
        }
    }

    fn alloc_zeroed(&mut self, len: usize) -> Vec<f32> {
        let mut buf = self.alloc(len);
        buf.fill(0.0);
        buf
    }

    fn push(
        &mut self,
        op: Op,
        rows: usize,
        cols: usize,
        value: Vec<f32>,
        aux: Option<Vec<f32>>,
        needs_grad: bool,
    ) -> NodeId {
        self.nodes.push(Node {
            op,
            rows,
            cols,
            value,
            grad: None,
            aux,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn dims(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, id: NodeId) -> &[f32] {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&[f32]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn value_tensor(&self, id: NodeId) -> Tensor {
        let n = &self.nodes[id.0];
        Tensor::from_rows(n.rows, n.cols, n.value.clone()).expect("node buffers are consistent")
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Leaf that does not receive a gradient (data, targets).
    pub fn input(&mut self, t: &Tensor) -> NodeId {
        let (r, c) = t.dims2();
        self.input_rows(r, c, t.data())
    }

    pub fn input_rows(&mut self, rows: usize, cols: usize, data: &[f32]) -> NodeId {
        assert_eq!(rows * cols, data.len(), "input buffer length mismatch");
        let mut buf = self.alloc(data.len());
        buf.copy_from_slice(data);
        self.push(Op::Leaf, rows, cols, buf, None, false)
    }

    /// Leaf that accumulates a gradient.
    pub fn param(&mut self, t: &Tensor) -> NodeId {
        let (r, c) = t.dims2();
        let mut buf = self.alloc(t.numel());
        buf.copy_from_slice(t.data());
        self.push(Op::Leaf, r, c, buf, None, true)
    }

    fn mismatch(&self, op: &'static str, a: NodeId, b: NodeId) -> GradError {
        let (ar, ac) = self.dims(a);
        let (br, bc) = self.dims(b);
        GradError::ShapeMismatch {
            op,
            left: vec![ar, ac],
            right: vec![br, bc],
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let (m, ka) = self.dims(a);
        let (kb, n) = self.dims(b);
        if ka != kb {
            return Err(self.mismatch("matmul", a, b));
        }
        let mut out = self.alloc(m * n);
        k::sgemm(m, ka, n, self.value(a), self.value(b), &mut out);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Matmul { a, b }, m, n, out, None, ng))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        if self.dims(a) != self.dims(b) {
            return Err(self.mismatch("add", a, b));
        }
        let (r, c) = self.dims(a);
        let mut out = self.alloc(r * c);
        for ((o, &x), &y) in out.iter_mut().zip(self.value(a)).zip(self.value(b)) {
            *o = x + y;
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add { a, b }, r, c, out, None, ng))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        if self.dims(a) != self.dims(b) {
            return Err(self.mismatch("mul", a, b));
        }
        let (r, c) = self.dims(a);
        let mut out = self.alloc(r * c);
        for ((o, &x), &y) in out.iter_mut().zip(self.value(a)).zip(self.value(b)) {
            *o = x * y;
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul { a, b }, r, c, out, None, ng))
    }

    /// x: [R, C], t: [t_rows, C] with R % t_rows == 0.
    pub fn add_tiled(&mut self, x: NodeId, t: NodeId) -> Result<NodeId, GradError> {
        let (r, c) = self.dims(x);
        let (tr, tc) = self.dims(t);
        if tc != c || tr == 0 || r % tr != 0 {
            return Err(self.mismatch("add_tiled", x, t));
        }
        let mut out = self.alloc(r * c);
        {
            let xv = self.value(x);
            let tv = self.value(t);
            for row in 0..r {
                let trow = row % tr;
                for i in 0..c {
                    out[row * c + i] = xv[row * c + i] + tv[trow * c + i];
                }
            }
        }
        let ng = self.needs(x) || self.needs(t);
        Ok(self.push(Op::AddTiled { x, t, t_rows: tr }, r, c, out, None, ng))
    }

    pub fn scale(&mut self, a: NodeId, c: f32) -> NodeId {
        let (r, cols) = self.dims(a);
        let mut out = self.alloc(r * cols);
        for (o, &x) in out.iter_mut().zip(self.value(a)) {
            *o = x * c;
        }
        let ng = self.needs(a);
        self.push(Op::Scale { a, c }, r, cols, out, None, ng)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        let mut out = self.alloc(r * c);
        k::softmax_rows(r, c, self.value(a), &mut out);
        let ng = self.needs(a);
        self.push(Op::SoftmaxRows { a }, r, c, out, None, ng)
    }

    pub fn layernorm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
    ) -> Result<NodeId, GradError> {
        let (r, c) = self.dims(x);
        if self.dims(gamma) != (1, c) {
            return Err(self.mismatch("layernorm", x, gamma));
        }
        if self.dims(beta) != (1, c) {
            return Err(self.mismatch("layernorm", x, beta));
        }
        let mut out = self.alloc(r * c);
        let mut aux = self.alloc(2 * r);
        k::layernorm(
            r,
            c,
            self.value(x),
            self.value(gamma),
            self.value(beta),
            &mut out,
            &mut aux,
        );
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(Op::Layernorm { x, gamma, beta }, r, c, out, Some(aux), ng))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        let mut out = self.alloc(r * c);
        k::gelu(self.value(a), &mut out);
        let ng = self.needs(a);
        self.push(Op::Gelu { a }, r, c, out, None, ng)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        let mut out = self.alloc(r * c);
        for (o, &x) in out.iter_mut().zip(self.value(a)) {
            *o = if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            };
        }
        let ng = self.needs(a);
        self.push(Op::Sigmoid { a }, r, c, out, None, ng)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        let mut out = self.alloc(r * c);
        for (o, &x) in out.iter_mut().zip(self.value(a)) {
            *o = x.tanh();
        }
        let ng = self.needs(a);
        self.push(Op::Tanh { a }, r, c, out, None, ng)
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let (ar, ac) = self.dims(a);
        let (br, bc) = self.dims(b);
        if ac != bc {
            return Err(self.mismatch("concat_rows", a, b));
        }
        let mut out = self.alloc((ar + br) * ac);
        out[..ar * ac].copy_from_slice(self.value(a));
        out[ar * ac..].copy_from_slice(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::ConcatRows { a, b }, ar + br, ac, out, None, ng))
    }

    pub fn slice_rows(&mut self, a: NodeId, from: usize, len: usize) -> Result<NodeId, GradError> {
        let (r, c) = self.dims(a);
        if from + len > r || len == 0 {
            return Err(GradError::ShapeMismatch {
                op: "slice_rows",
                left: vec![r, c],
                right: vec![from, len],
            });
        }
        let mut out = self.alloc(len * c);
        out.copy_from_slice(&self.value(a)[from * c..(from + len) * c]);
        let ng = self.needs(a);
        Ok(self.push(Op::SliceRows { a, from }, len, c, out, None, ng))
    }

    pub fn slice_cols(&mut self, a: NodeId, from: usize, len: usize) -> Result<NodeId, GradError> {
        let (r, c) = self.dims(a);
        if from + len > c || len == 0 {
            return Err(GradError::ShapeMismatch {
                op: "slice_cols",
                left: vec![r, c],
                right: vec![from, len],
            });
        }
        let mut out = self.alloc(r * len);
        {
            let av = self.value(a);
            for row in 0..r {
                out[row * len..(row + 1) * len]
                    .copy_from_slice(&av[row * c + from..row * c + from + len]);
            }
        }
        let ng = self.needs(a);
        Ok(self.push(Op::SliceCols { a, from }, r, len, out, None, ng))
    }

    /// x: [batch*s, C], a: [batch*(s-1), C] -> [batch*(2s-1), C] with rows
    /// per sample ordered x0, a0, x1, a1, ..., x_{s-1}.
    pub fn interleave_rows(
        &mut self,
        x: NodeId,
        a: NodeId,
        batch: usize,
    ) -> Result<NodeId, GradError> {
        let (xr, c) = self.dims(x);
        let (ar, ac) = self.dims(a);
        if ac != c || batch == 0 || xr % batch != 0 {
            return Err(self.mismatch("interleave_rows", x, a));
        }
        let s = xr / batch;
        if s == 0 || ar != batch * (s - 1) {
            return Err(self.mismatch("interleave_rows", x, a));
        }
        let out_rows = batch * (2 * s - 1);
        let mut out = self.alloc(out_rows * c);
        {
            let xv = self.value(x);
            let av = self.value(a);
            for bi in 0..batch {
                for i in 0..s {
                    let dst = (bi * (2 * s - 1) + 2 * i) * c;
                    let src = (bi * s + i) * c;
                    out[dst..dst + c].copy_from_slice(&xv[src..src + c]);
                }
                for i in 0..s - 1 {
                    let dst = (bi * (2 * s - 1) + 2 * i + 1) * c;
                    let src = (bi * (s - 1) + i) * c;
                    out[dst..dst + c].copy_from_slice(&av[src..src + c]);
                }
            }
        }
        let ng = self.needs(x) || self.needs(a);
        Ok(self.push(
            Op::InterleaveRows { x, a, batch },
            out_rows,
            c,
            out,
            None,
            ng,
        ))
    }

    /// Scaled dot-product attention, causal within each sample.
    /// q, key, v: [batch*seq, C]; heads must divide C.
    pub fn self_attn_causal(
        &mut self,
        q: NodeId,
        key: NodeId,
        v: NodeId,
        batch: usize,
        heads: usize,
    ) -> Result<NodeId, GradError> {
        let (qr, c) = self.dims(q);
        if self.dims(key) != (qr, c) || self.dims(v) != (qr, c) {
            return Err(self.mismatch("self_attn_causal", q, key));
        }
        if batch == 0 || heads == 0 || qr % batch != 0 || c % heads != 0 {
            return Err(GradError::ShapeMismatch {
                op: "self_attn_causal",
                left: vec![qr, c],
                right: vec![batch, heads],
            });
        }
        self.attention(q, key, v, batch, heads, true, false, None)
    }

    /// Cross attention from query tokens to context tokens.
    ///
    /// q: [batch*q_len, C]; key, v: [groups*ctx_len, C] where groups is 1
    /// when `shared` (every sample attends to one context) else batch.
    /// `mask[g*ctx_len + j] == false` drops context token j of group g;
    /// dropped tokens cannot influence the output or receive gradient,
    /// whatever value (finite or not) they hold.
    #[allow(clippy::too_many_arguments)]
    pub fn cross_attn(
        &mut self,
        q: NodeId,
        key: NodeId,
        v: NodeId,
        batch: usize,
        heads: usize,
        shared: bool,
        mask: Option<Vec<bool>>,
    ) -> Result<NodeId, GradError> {
        let (qr, c) = self.dims(q);
        let (kr, kc) = self.dims(key);
        if self.dims(v) != (kr, kc) || kc != c {
            return Err(self.mismatch("cross_attn", key, v));
        }
        let groups = if shared { 1 } else { batch };
        if batch == 0 || heads == 0 || qr % batch != 0 || kr % groups != 0 || c % heads != 0 {
            return Err(GradError::ShapeMismatch {
                op: "cross_attn",
                left: vec![qr, c],
                right: vec![batch, heads],
            });
        }
        let ctx_len = kr / groups;
        let mask_idx = match mask {
            Some(m) => {
                if m.len() != groups * ctx_len {
                    return Err(GradError::ShapeMismatch {
                        op: "cross_attn mask",
                        left: vec![m.len()],
                        right: vec![groups, ctx_len],
                    });
                }
                if m.chunks(ctx_len).any(|grp| grp.iter().all(|&vis| !vis)) {
                    return Err(GradError::BadHyper(
                        "cross_attn mask drops every context token of a group".into(),
                    ));
                }
                self.masks.push(m);
                Some(self.masks.len() - 1)
            }
            None => None,
        };
        self.attention(q, key, v, batch, heads, false, shared, mask_idx)
    }

    #[allow(clippy::too_many_arguments)]
    fn attention(
        &mut self,
        q: NodeId,
        key: NodeId,
        v: NodeId,
        batch: usize,
        heads: usize,
        causal: bool,
        shared: bool,
        mask_idx: Option<usize>,
    ) -> Result<NodeId, GradError> {
        let (qr, c) = self.dims(q);
        let (kr, _) = self.dims(key);
        let q_len = qr / batch;
        let groups = if shared { 1 } else { batch };
        let kv_len = kr / groups;
        let mut out = self.alloc(qr * c);
        let mut weights = self.alloc(batch * heads * q_len * kv_len);
        // With a mask, masked key/value rows are zeroed before the gemm path
        // so non-finite masked values cannot leak through 0 * x.
        let (kz, vz) = match mask_idx {
            Some(mi) => {
                let m = &self.masks[mi];
                (
                    Some(zero_masked_rows(self.value(key), m, c)),
                    Some(zero_masked_rows(self.value(v), m, c)),
                )
            }
            None => (None, None),
        };
        attn_forward(
            self.value(q),
            kz.as_deref().unwrap_or_else(|| self.value(key)),
            vz.as_deref().unwrap_or_else(|| self.value(v)),
            batch,
            heads,
            q_len,
            kv_len,
            c,
            causal,
            shared,
            mask_idx.map(|mi| self.masks[mi].as_slice()),
            &mut out,
            &mut weights,
        );
        if let Some(buf) = kz {
            self.recycle(buf);
        }
        if let Some(buf) = vz {
            self.recycle(buf);
        }
        let ng = self.needs(q) || self.needs(key) || self.needs(v);
        Ok(self.push(
            Op::Attention {
                q,
                key,
                v,
                batch,
                heads,
                shared,
                mask: mask_idx,
            },
            qr,
            c,
            out,
            Some(weights),
            ng,
        ))
    }

    /// Mean squared error over all elements; returns a scalar node.
    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId, GradError> {
        if self.dims(pred) != self.dims(target) {
            return Err(self.mismatch("mse_loss", pred, target));
        }
        let n = self.value(pred).len() as f32;
        let sum: f32 = self
            .value(pred)
            .iter()
            .zip(self.value(target))
            .map(|(&p, &t)| {
                let d = p - t;
                d * d
            })
            .sum();
        let ng = self.needs(pred) || self.needs(target);
        let mut buf = self.alloc(1);
        buf[0] = sum / n;
        Ok(self.push(Op::MseLoss { pred, target }, 1, 1, buf, None, ng))
    }

    fn take_grad(&mut self, id: NodeId) -> Vec<f32> {
        if self.nodes[id.0].grad.is_none() {
            let len = self.nodes[id.0].value.len();
            let buf = self.alloc_zeroed(len);
            self.nodes[id.0].grad = Some(buf);
        }
        self.nodes[id.0].grad.take().expect("grad present")
    }

    fn put_grad(&mut self, id: NodeId, g: Vec<f32>) {
        self.nodes[id.0].grad = Some(g);
    }

    /// Accumulate gradients of `loss` with respect to every reachable
    /// gradient-tracked node. Gradients of tracked leaves are then
    /// available through `grad`.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), GradError> {
        let (r, c) = self.dims(loss);
        if (r, c) != (1, 1) {
            return Err(GradError::NonScalarLoss { rows: r, cols: c });
        }
        let mut g = self.take_grad(loss);
        g[0] = 1.0;
        self.put_grad(loss, g);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad || self.nodes[idx].grad.is_none() {
                continue;
            }
            self.backward_node(idx);
        }
        Ok(())
    }

    fn backward_node(&mut self, idx: usize) {
        let op = self.nodes[idx].op.clone();
        let gout = self.nodes[idx].grad.take().expect("caller checked");
        match op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (m, kk) = self.dims(a);
                let n = self.dims(b).1;
                if self.needs(a) {
                    let mut ga = self.take_grad(a);
                    k::sgemm_abt_acc(m, n, kk, &gout, self.value(b), &mut ga);
                    self.put_grad(a, ga);
                }
                if self.needs(b) {
                    let mut gb = self.take_grad(b);
                    k::sgemm_atb_acc(kk, m, n, self.value(a), &gout, &mut gb);
                    self.put_grad(b, gb);
                }
            }
            Op::Add { a, b } => {
                for id in [a, b] {
                    if self.needs(id) {
                        let mut g = self.take_grad(id);
                        for (gi, &go) in g.iter_mut().zip(&gout) {
                            *gi += go;
                        }
                        self.put_grad(id, g);
                    }
                }
            }
            Op::Mul { a, b } => {
                if self.needs(a) {
                    let mut ga = self.take_grad(a);
                    for ((gi, &go), &bv) in ga.iter_mut().zip(&gout).zip(self.value(b)) {
                        *gi += go * bv;
                    }
                    self.put_grad(a, ga);
                }
                if self.needs(b) {
                    let mut gb = self.take_grad(b);
                    for ((gi, &go), &av) in gb.iter_mut().zip(&gout).zip(self.value(a)) {
                        *gi += go * av;
                    }
                    self.put_grad(b, gb);
                }
            }
            Op::AddTiled { x, t, t_rows } => {
                let (r, c) = self.dims(x);
                if self.needs(x) {
                    let mut gx = self.take_grad(x);
                    for (gi, &go) in gx.iter_mut().zip(&gout) {
                        *gi += go;
                    }
                    self.put_grad(x, gx);
                }
                if self.needs(t) {
                    let mut gt = self.take_grad(t);
                    for row in 0..r {
                        let trow = row % t_rows;
                        for i in 0..c {
                            gt[trow * c + i] += gout[row * c + i];
                        }
                    }
                    self.put_grad(t, gt);
                }
            }
            Op::Scale { a, c } => {
                if self.needs(a) {
                    let mut ga = self.take_grad(a);
                    for (gi, &go) in ga.iter_mut().zip(&gout) {
                        *gi += go * c;
                    }
                    self.put_grad(a, ga);
                }
            }
            Op::SoftmaxRows { a } => {
                if self.needs(a) {
                    let (r, c) = self.dims(a);
                    let y = std::mem::take(&mut self.nodes[idx].value);
                    let mut ga = self.take_grad(a);
                    k::softmax_rows_backward_acc(r, c, &y, &gout, &mut ga);
                    self.put_grad(a, ga);
                    self.nodes[idx].value = y;
                }
            }
            Op::Layernorm { x, gamma, beta } => {
                let (r, c) = self.dims(x);
                let aux = self.nodes[idx].aux.take().expect("layernorm aux");
                let mut gx = if self.needs(x) {
                    self.take_grad(x)
                } else {
                    self.alloc_zeroed(r * c)
                };
                let mut gg = if self.needs(gamma) {
                    self.take_grad(gamma)
                } else {
                    self.alloc_zeroed(c)
                };
                let mut gb = if self.needs(beta) {
                    self.take_grad(beta)
                } else {
                    self.alloc_zeroed(c)
                };
                k::layernorm_backward_acc(
                    r,
                    c,
                    self.value(x),
                    self.value(gamma),
                    &aux,
                    &gout,
                    &mut gx,
                    &mut gg,
                    &mut gb,
                );
                if self.needs(x) {
                    self.put_grad(x, gx);
                } else {
                    self.recycle(gx);
                }
                if self.needs(gamma) {
                    self.put_grad(gamma, gg);
                } else {
                    self.recycle(gg);
                }
                if self.needs(beta) {
                    self.put_grad(beta, gb);
                } else {
                    self.recycle(gb);
                }
                self.nodes[idx].aux = Some(aux);
            }
            Op::Gelu { a } => {
                if self.needs(a) {
                    let mut ga = self.take_grad(a);
                    k::gelu_backward_acc(self.value(a), &gout, &mut ga);
                    self.put_grad(a, ga);
                }
            }
            Op::Sigmoid { a } => {
                if self.needs(a) {
                    let y = std::mem::take(&mut self.nodes[idx].value);
                    let mut ga = self.take_grad(a);
                    for ((gi, &go), &yi) in ga.iter_mut().zip(&gout).zip(&y) {
                        *gi += go * yi * (1.0 - yi);
                    }
                    self.put_grad(a, ga);
                    self.nodes[idx].value = y;
                }
            }
            Op::Tanh { a } => {
                if self.needs(a) {
                    let y = std::mem::take(&mut self.nodes[idx].value);
                    let mut ga = self.take_grad(a);
                    for ((gi, &go), &yi) in ga.iter_mut().zip(&gout).zip(&y) {
                        *gi += go * (1.0 - yi * yi);
                    }
                    self.put_grad(a, ga);
                    self.nodes[idx].value = y;
                }
            }
            Op::ConcatRows { a, b } => {
                let na = self.nodes[a.0].value.len();
                if self.needs(a) {
                    let mut ga = self.take_grad(a);
                    for (gi, &go) in ga.iter_mut().zip(&gout[..na]) {
                        *gi += go;
                    }
                    self.put_grad(a, ga);
                }
                if self.needs(b) {
                    let mut gb = self.take_grad(b);
                    for (gi, &go) in gb.iter_mut().zip(&gout[na..]) {
                        *gi += go;
                    }
                    self.put_grad(b, gb);
                }
            }
            Op::SliceRows { a, from } => {
                if self.needs(a) {
                    let c = self.dims(a).1;
                    let mut ga = self.take_grad(a);
                    for (gi, &go) in ga[from * c..from * c + gout.len()].iter_mut().zip(&gout) {
                        *gi += go;
                    }
                    self.put_grad(a, ga);
                }
            }
            Op::SliceCols { a, from } => {
                if self.needs(a) {
                    let (r, c) = self.dims(a);
                    let len = self.nodes[idx].cols;
                    let mut ga = self.take_grad(a);
                    for row in 0..r {
                        for i in 0..len {
                            ga[row * c + from + i] += gout[row * len + i];
                        }
                    }
                    self.put_grad(a, ga);
                }
            }
            Op::InterleaveRows { x, a, batch } => {
                let (xr, c) = self.dims(x);
                let s = xr / batch;
                if self.needs(x) {
                    let mut gx = self.take_grad(x);
                    for bi in 0..batch {
                        for i in 0..s {
                            let src = (bi * (2 * s - 1) + 2 * i) * c;
                            let dst = (bi * s + i) * c;
                            for j in 0..c {
                                gx[dst + j] += gout[src + j];
                            }
                        }
                    }
                    self.put_grad(x, gx);
                }
                if self.needs(a) {
                    let mut ga = self.take_grad(a);
                    for bi in 0..batch {
                        for i in 0..s - 1 {
                            let src = (bi * (2 * s - 1) + 2 * i + 1) * c;
                            let dst = (bi * (s - 1) + i) * c;
                            for j in 0..c {
                                ga[dst + j] += gout[src + j];
                            }
                        }
                    }
                    self.put_grad(a, ga);
                }
            }
            Op::Attention {
                q,
                key,
                v,
                batch,
                heads,
                shared,
                mask,
            } => {
                self.attention_backward(idx, q, key, v, batch, heads, shared, mask, &gout);
            }
            Op::MseLoss { pred, target } => {
                let n = self.nodes[pred.0].value.len() as f32;
                let coef = 2.0 * gout[0] / n;
                if self.needs(pred) {
                    let mut gp = self.take_grad(pred);
                    for ((gi, &p), &t) in
                        gp.iter_mut().zip(self.value(pred)).zip(self.value(target))
                    {
                        *gi += coef * (p - t);
                    }
                    self.put_grad(pred, gp);
                }
                if self.needs(target) {
                    let mut gt = self.take_grad(target);
                    for ((gi, &p), &t) in
                        gt.iter_mut().zip(self.value(pred)).zip(self.value(target))
                    {
                        *gi -= coef * (p - t);
                    }
                    self.put_grad(target, gt);
                }
            }
        }
        self.nodes[idx].grad = Some(gout);
    }

    /// Attention backward. Hidden (masked or causally future) weights are
    /// exactly zero in the stored weight matrix, which zeroes their dS rows
    /// and keeps gradients off hidden tokens; zeroed key/value copies keep
    /// non-finite masked values out of the gemms.
    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &mut self,
        idx: usize,
        q: NodeId,
        key: NodeId,
        v: NodeId,
        batch: usize,
        heads: usize,
        shared: bool,
        mask_idx: Option<usize>,
        gout: &[f32],
    ) {
        let (qr, c) = self.dims(q);
        let (kr, _) = self.dims(key);
        let q_len = qr / batch;
        let groups = if shared { 1 } else { batch };
        let kv_len = kr / groups;
        let d = c / heads;
        let scale = 1.0 / (d as f32).sqrt();
        let weights = self.nodes[idx].aux.take().expect("attention aux");
        let (kz, vz) = match mask_idx {
            Some(mi) => {
                let m = &self.masks[mi];
                (
                    Some(zero_masked_rows(self.value(key), m, c)),
                    Some(zero_masked_rows(self.value(v), m, c)),
                )
            }
            None => (None, None),
        };
        let needs_q = self.needs(q);
        let needs_k = self.needs(key);
        let needs_v = self.needs(v);
        // Scratch accumulators sidestep aliasing when q, key, v share nodes.
        let mut dq = if needs_q {
            Some(self.alloc_zeroed(qr * c))
        } else {
            None
        };
        let mut dk = if needs_k {
            Some(self.alloc_zeroed(kr * c))
        } else {
            None
        };
        let mut dv = if needs_v {
            Some(self.alloc_zeroed(kr * c))
        } else {
            None
        };
        let mut dw = self.alloc(q_len * kv_len);
        {
            let qv = self.value(q);
            let kv = kz.as_deref().unwrap_or_else(|| self.value(key));
            let vv = vz.as_deref().unwrap_or_else(|| self.value(v));
            for b in 0..batch {
                let g = if shared { 0 } else { b };
                for h in 0..heads {
                    let w = &weights[(b * heads + h) * q_len * kv_len..][..q_len * kv_len];
                    let q_off = b * q_len * c + h * d;
                    let kv_off = g * kv_len * c + h * d;
                    if let Some(dvb) = dv.as_deref_mut() {
                        // dV += W^T dOut
                        k::sgemm_strided(
                            kv_len,
                            q_len,
                            d,
                            1.0,
                            w,
                            1,
                            kv_len,
                            &gout[q_off..],
                            c,
                            1,
                            1.0,
                            &mut dvb[kv_off..],
                            c,
                            1,
                        );
                    }
                    if needs_q || needs_k {
                        // dw = dOut @ V^T, then in place dS = scale*W*(dw - rowdot)
                        k::sgemm_strided(
                            q_len,
                            d,
                            kv_len,
                            1.0,
                            &gout[q_off..],
                            c,
                            1,
                            &vv[kv_off..],
                            1,
                            c,
                            0.0,
                            &mut dw,
                            kv_len,
                            1,
                        );
                        for i in 0..q_len {
                            let wrow = &w[i * kv_len..(i + 1) * kv_len];
                            let dwrow = &mut dw[i * kv_len..(i + 1) * kv_len];
                            let dot: f32 =
                                wrow.iter().zip(dwrow.iter()).map(|(&a, &bv)| a * bv).sum();
                            for (dwi, &wi) in dwrow.iter_mut().zip(wrow) {
                                *dwi = scale * wi * (*dwi - dot);
                            }
                        }
                        if let Some(dqb) = dq.as_deref_mut() {
                            // dQ += dS @ K
                            k::sgemm_strided(
                                q_len,
                                kv_len,
                                d,
                                1.0,
                                &dw,
                                kv_len,
                                1,
                                &kv[kv_off..],
                                c,
                                1,
                                1.0,
                                &mut dqb[q_off..],
                                c,
                                1,
                            );
                        }
                        if let Some(dkb) = dk.as_deref_mut() {
                            // dK += dS^T @ Q
                            k::sgemm_strided(
                                kv_len,
                                q_len,
                                d,
                                1.0,
                                &dw,
                                1,
                                kv_len,
                                &qv[q_off..],
                                c,
                                1,
                                1.0,
                                &mut dkb[kv_off..],
                                c,
                                1,
                            );
                        }
                    }
                }
            }
        }
        self.recycle(dw);
        if let Some(buf) = kz {
            self.recycle(buf);
        }
        if let Some(buf) = vz {
            self.recycle(buf);
        }
        if let Some(dqb) = dq {
            let mut gq = self.take_grad(q);
            for (gi, &di) in gq.iter_mut().zip(&dqb) {
                *gi += di;
            }
            self.put_grad(q, gq);
            self.recycle(dqb);
        }
        if let Some(dkb) = dk {
            let mut gk = self.take_grad(key);
            for (gi, &di) in gk.iter_mut().zip(&dkb) {
                *gi += di;
            }
            self.put_grad(key, gk);
            self.recycle(dkb);
        }
        if let Some(dvb) = dv {
            let mut gv = self.take_grad(v);
            for (gi, &di) in gv.iter_mut().zip(&dvb) {
                *gi += di;
            }
            self.put_grad(v, gv);
            self.recycle(dvb);
        }
        self.nodes[idx].aux = Some(weights);
    }
}

fn zero_masked_rows(src: &[f32], mask: &[bool], cols: usize) -> Vec<f32> {
    let mut out = src.to_vec();
    for (row, &vis) in mask.iter().enumerate() {
        if !vis {
            out[row * cols..(row + 1) * cols].fill(0.0);
        }
    }
    out
}

/// Forward pass shared by causal self-attention and (optionally masked)
/// cross-attention. Scores and the apply step run as strided gemms per
/// (sample, head); the softmax keeps masked and causally hidden weights at
/// exactly zero so the apply gemm cannot pick up hidden tokens.
#[allow(clippy::too_many_arguments)]
fn attn_forward(
    q: &[f32],
    key: &[f32],
    v: &[f32],
    batch: usize,
    heads: usize,
    q_len: usize,
    kv_len: usize,
    c: usize,
    causal: bool,
    shared: bool,
    mask: Option<&[bool]>,
    out: &mut [f32],
    weights: &mut [f32],
) {
    let d = c / heads;
    let scale = 1.0 / (d as f32).sqrt();
    for b in 0..batch {
        let g = if shared { 0 } else { b };
        let gmask = mask.map(|m| &m[g * kv_len..(g + 1) * kv_len]);
        for h in 0..heads {
            let q_off = b * q_len * c + h * d;
            let kv_off = g * kv_len * c + h * d;
            let w = &mut weights[(b * heads + h) * q_len * kv_len..][..q_len * kv_len];
            k::sgemm_strided(
                q_len,
                d,
                kv_len,
                scale,
                &q[q_off..],
                c,
                1,
                &key[kv_off..],
                1,
                c,
                0.0,
                w,
                kv_len,
                1,
            );
            for i in 0..q_len {
                let wrow = &mut w[i * kv_len..(i + 1) * kv_len];
                let visible = if causal {
                    (i + 1).min(kv_len)
                } else {
                    kv_len
                };
                masked_softmax(&mut wrow[..visible], gmask.map(|m| &m[..visible]));
                wrow[visible..].fill(0.0);
            }
            k::sgemm_strided(
                q_len,
                kv_len,
                d,
                1.0,
                w,
                kv_len,
                1,
                &v[kv_off..],
                c,
                1,
                0.0,
                &mut out[q_off..],
                c,
                1,
            );
        }
    }
}

/// Softmax over the visible entries of `x`; hidden entries are set to 0.
fn masked_softmax(x: &mut [f32], mask: Option<&[bool]>) {
    match mask {
        None => {
            let m = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let mut s = 0.0f32;
            for xi in x.iter_mut() {
                *xi = (*xi - m).exp();
                s += *xi;
            }
            let inv = 1.0 / s;
            for xi in x.iter_mut() {
                *xi *= inv;
            }
        }
        Some(mask) => {
            let mut m = f32::NEG_INFINITY;
            for (xi, &vis) in x.iter().zip(mask) {
                if vis && *xi > m {
                    m = *xi;
                }
            }
            let mut s = 0.0f32;
            for (xi, &vis) in x.iter_mut().zip(mask) {
                if vis {
                    *xi = (*xi - m).exp();
                    s += *xi;
                } else {
                    *xi = 0.0;
                }
            }
            let inv = 1.0 / s;
            for (xi, &vis) in x.iter_mut().zip(mask) {
                if vis {
                    *xi *= inv;
                }
            }
        }
    }
}

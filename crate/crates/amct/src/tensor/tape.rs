use super::{Result, Tensor, TensorError};

/// Clamp applied to probabilities before taking logs inside KL divergence.
pub const LOG_CLAMP: f64 = 1e-12;
const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add {
        lhs: Var,
        rhs: Var,
        broadcast: bool,
    },
    Sub(Var, Var),
    Scale(Var, f64),
    Mul(Var, Var),
    RowConcat(Vec<Var>),
    ColConcat(Vec<Var>),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    Gather {
        table: Var,
        indices: Vec<usize>,
    },
    RowSum {
        x: Var,
        mask: Option<Vec<bool>>,
    },
    Sum(Var),
    Mean(Var),
    SquaredError(Var, Var),
    BceWithLogits {
        logits: Var,
        targets: Vec<f64>,
    },
    KlDiv {
        p: Var,
        q: Var,
    },
    LogSumExp {
        x: Var,
        weights: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records forward operations in creation order and replays them in reverse.
///
/// A tape is single-use: [`Tape::backward`] may be called once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn dims2(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

/// `a (m×k) · b (k×n)`.
fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `g (m×n) · bᵀ` where `b` is `k×n`.
fn matmul_a_bt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            out[i * k + p] = g_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `aᵀ · g` where `a` is `m×k` and `g` is `m×n`.
fn matmul_at_b(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += aip * gv;
            }
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.0].needs_grad
    }

    fn push(&mut self, op: &'static str, value: Tensor, kind: Op, needs_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op });
        }
        self.nodes.push(Node {
            value,
            op: kind,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an input. Leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = dims2(av);
        let (k2, n) = dims2(bv);
        if k != k2 {
            return Err(mismatch("matmul", av.shape(), bv.shape()));
        }
        let data = matmul_raw(av.data(), bv.data(), m, k, n);
        let needs = self.needs(a) || self.needs(b);
        self.push(
            "matmul",
            Tensor::new(vec![m, n], data)?,
            Op::MatMul(a, b),
            needs,
        )
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let (m, n) = dims2(av);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = av.data()[i * n + j];
            }
        }
        let needs = self.needs(a);
        self.push(
            "transpose",
            Tensor::new(vec![n, m], data)?,
            Op::Transpose(a),
            needs,
        )
    }

    /// Elementwise sum. `rhs` may also be a single row broadcast over `lhs` rows.
    pub fn add(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (lv, rv) = (self.value(lhs), self.value(rhs));
        let broadcast = if lv.shape() == rv.shape() {
            false
        } else if rv.rows() == 1 && rv.cols() == lv.cols() {
            true
        } else {
            return Err(mismatch("add", lv.shape(), rv.shape()));
        };
        let cols = lv.cols();
        let data = lv
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| {
                x + if broadcast {
                    rv.data()[i % cols]
                } else {
                    rv.data()[i]
                }
            })
            .collect();
        let value = Tensor::new(lv.shape().to_vec(), data)?;
        let needs = self.needs(lhs) || self.needs(rhs);
        self.push(
            "add",
            value,
            Op::Add {
                lhs,
                rhs,
                broadcast,
            },
            needs,
        )
    }

    pub fn sub(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (lv, rv) = (self.value(lhs), self.value(rhs));
        if lv.shape() != rv.shape() {
            return Err(mismatch("sub", lv.shape(), rv.shape()));
        }
        let data = lv
            .data()
            .iter()
            .zip(rv.data())
            .map(|(a, b)| a - b)
            .collect();
        let value = Tensor::new(lv.shape().to_vec(), data)?;
        let needs = self.needs(lhs) || self.needs(rhs);
        self.push("sub", value, Op::Sub(lhs, rhs), needs)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x * factor).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let needs = self.needs(a);
        self.push("scale", value, Op::Scale(a, factor), needs)
    }

    pub fn mul(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (lv, rv) = (self.value(lhs), self.value(rhs));
        if lv.shape() != rv.shape() {
            return Err(mismatch("mul", lv.shape(), rv.shape()));
        }
        let data = lv
            .data()
            .iter()
            .zip(rv.data())
            .map(|(a, b)| a * b)
            .collect();
        let value = Tensor::new(lv.shape().to_vec(), data)?;
        let needs = self.needs(lhs) || self.needs(rhs);
        self.push("mul", value, Op::Mul(lhs, rhs), needs)
    }

    /// Stacks 2-D inputs vertically.
    pub fn row_concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| mismatch("row_concat", &[], &[]))?;
        let cols = self.value(first).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(mismatch("row_concat", &[rows, cols], v.shape()));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(
            "row_concat",
            Tensor::new(vec![rows, cols], data)?,
            Op::RowConcat(parts.to_vec()),
            needs,
        )
    }

    /// Joins 2-D inputs side by side.
    pub fn col_concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| mismatch("col_concat", &[], &[]))?;
        let rows = self.value(first).rows();
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(mismatch("col_concat", &[rows, cols], v.shape()));
            }
            cols += v.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(
            "col_concat",
            Tensor::new(vec![rows, cols], data)?,
            Op::ColConcat(parts.to_vec()),
            needs,
        )
    }

    pub fn row_softmax(&mut self, x: Var) -> Result<Var> {
        self.softmax_impl(x, None)
    }

    /// Softmax over each row restricted to columns where `key_mask` is true.
    /// Masked columns get probability exactly zero.
    pub fn masked_row_softmax(&mut self, x: Var, key_mask: &[bool]) -> Result<Var> {
        let cols = self.value(x).cols();
        if key_mask.len() != cols {
            return Err(mismatch(
                "masked_row_softmax",
                self.shape(x),
                &[key_mask.len()],
            ));
        }
        self.softmax_impl(x, Some(key_mask))
    }

    fn softmax_impl(&mut self, x: Var, key_mask: Option<&[bool]>) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = dims2(xv);
        let keep = |j: usize| key_mask.map_or(true, |m| m[j]);
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = xv.row(r);
            let max = (0..cols)
                .filter(|&j| keep(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(TensorError::MaskAllFalse { row: r });
            }
            let out = &mut data[r * cols..(r + 1) * cols];
            let mut total = 0.0;
            for j in 0..cols {
                if keep(j) {
                    out[j] = (row[j] - max).exp();
                    total += out[j];
                }
            }
            for v in out.iter_mut() {
                *v /= total;
            }
        }
        let needs = self.needs(x);
        self.push(
            "softmax",
            Tensor::new(vec![rows, cols], data)?,
            Op::Softmax(x),
            needs,
        )
    }

    /// Row-wise layer normalization with learned `gamma` and `beta` (each `1×cols`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = dims2(xv);
        let (gv, bv) = (self.value(gamma), self.value(beta));
        if gv.len() != cols || bv.len() != cols {
            return Err(mismatch("layer_norm", xv.shape(), gv.shape()));
        }
        let mut xhat = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = inv;
            for j in 0..cols {
                let h = (row[j] - mean) * inv;
                xhat[r * cols + j] = h;
                data[r * cols + j] = h * gv.data()[j] + bv.data()[j];
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(
            "layer_norm",
            Tensor::new(vec![rows, cols], data)?,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            needs,
        )
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| v.max(0.0)).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let needs = self.needs(x);
        self.push("relu", value, Op::Relu(x), needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| sigmoid(v)).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let needs = self.needs(x);
        self.push("sigmoid", value, Op::Sigmoid(x), needs)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| v.ln()).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let needs = self.needs(x);
        self.push("log", value, Op::Log(x), needs)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| v.exp()).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let needs = self.needs(x);
        self.push("exp", value, Op::Exp(x), needs)
    }

    /// Selects rows of `table` by index; repeated indices are allowed.
    pub fn embedding_lookup(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        let (rows, cols) = dims2(tv);
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            if i >= rows {
                return Err(TensorError::IndexOutOfRange {
                    op: "embedding_lookup",
                    index: i,
                    bound: rows,
                });
            }
            data.extend_from_slice(tv.row(i));
        }
        let needs = self.needs(table);
        self.push(
            "embedding_lookup",
            Tensor::new(vec![indices.len(), cols], data)?,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
            needs,
        )
    }

    /// Sums rows into a single `1×cols` row.
    pub fn row_sum(&mut self, x: Var) -> Result<Var> {
        self.row_sum_impl(x, None)
    }

    /// Sums only the rows whose `row_mask` entry is true.
    pub fn masked_row_sum(&mut self, x: Var, row_mask: &[bool]) -> Result<Var> {
        if row_mask.len() != self.value(x).rows() {
            return Err(mismatch("masked_row_sum", self.shape(x), &[row_mask.len()]));
        }
        self.row_sum_impl(x, Some(row_mask.to_vec()))
    }

    fn row_sum_impl(&mut self, x: Var, mask: Option<Vec<bool>>) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = dims2(xv);
        let mut data = vec![0.0; cols];
        for r in 0..rows {
            if mask.as_ref().map_or(true, |m| m[r]) {
                for (o, v) in data.iter_mut().zip(xv.row(r)) {
                    *o += v;
                }
            }
        }
        let needs = self.needs(x);
        self.push(
            "row_sum",
            Tensor::new(vec![1, cols], data)?,
            Op::RowSum { x, mask },
            needs,
        )
    }

    /// Sum of every element, as a `1×1` scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.value(x).sum();
        let needs = self.needs(x);
        self.push("sum", Tensor::scalar(total), Op::Sum(x), needs)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(mismatch("mean", xv.shape(), &[1]));
        }
        let m = xv.sum() / xv.len() as f64;
        let needs = self.needs(x);
        self.push("mean", Tensor::scalar(m), Op::Mean(x), needs)
    }

    /// Elementwise `(a - b)²`.
    pub fn squared_error(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch("squared_error", av.shape(), bv.shape()));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| (x - y) * (x - y))
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        self.push("squared_error", value, Op::SquaredError(a, b), needs)
    }

    /// Elementwise binary cross-entropy of `sigmoid(logits)` against `targets`,
    /// computed in the overflow-free form `max(x,0) - x·y + ln(1 + e^{-|x|})`.
    pub fn cross_entropy_with_logits(&mut self, logits: Var, targets: &Tensor) -> Result<Var> {
        let lv = self.value(logits);
        if lv.shape() != targets.shape() {
            return Err(mismatch(
                "cross_entropy_with_logits",
                lv.shape(),
                targets.shape(),
            ));
        }
        let data = lv
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .collect();
        let value = Tensor::new(lv.shape().to_vec(), data)?;
        let needs = self.needs(logits);
        self.push(
            "cross_entropy_with_logits",
            value,
            Op::BceWithLogits {
                logits,
                targets: targets.data().to_vec(),
            },
            needs,
        )
    }

    /// Row-wise `Σ_j p_j (ln p_j − ln q_j)` giving a `rows×1` column.
    /// Log arguments are clamped at [`LOG_CLAMP`]; gradients flow to both inputs.
    pub fn kl_divergence(&mut self, p: Var, q: Var) -> Result<Var> {
        let (pv, qv) = (self.value(p), self.value(q));
        if pv.shape() != qv.shape() {
            return Err(mismatch("kl_divergence", pv.shape(), qv.shape()));
        }
        let rows = pv.rows();
        let mut data = vec![0.0; rows];
        for (r, out) in data.iter_mut().enumerate() {
            *out = pv
                .row(r)
                .iter()
                .zip(qv.row(r))
                .map(|(&a, &b)| a * (a.max(LOG_CLAMP).ln() - b.max(LOG_CLAMP).ln()))
                .sum();
        }
        let needs = self.needs(p) || self.needs(q);
        self.push(
            "kl_divergence",
            Tensor::new(vec![rows, 1], data)?,
            Op::KlDiv { p, q },
            needs,
        )
    }

    /// Row-wise `ln Σ_j e^{x_ij}` over entries where `mask` (row-major, same
    /// size as `x`) is true, stabilized by the masked row maximum.
    pub fn row_logsumexp(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = dims2(xv);
        if let Some(m) = mask {
            if m.len() != rows * cols {
                return Err(mismatch("row_logsumexp", xv.shape(), &[m.len()]));
            }
        }
        let keep = |i: usize| mask.map_or(true, |m| m[i]);
        let mut weights = vec![0.0; rows * cols];
        let mut data = vec![0.0; rows];
        for r in 0..rows {
            let row = xv.row(r);
            let max = (0..cols)
                .filter(|&j| keep(r * cols + j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(TensorError::MaskAllFalse { row: r });
            }
            let mut total = 0.0;
            for j in 0..cols {
                if keep(r * cols + j) {
                    let e = (row[j] - max).exp();
                    weights[r * cols + j] = e;
                    total += e;
                }
            }
            for w in &mut weights[r * cols..(r + 1) * cols] {
                *w /= total;
            }
            data[r] = max + total.ln();
        }
        let needs = self.needs(x);
        self.push(
            "row_logsumexp",
            Tensor::new(vec![rows, 1], data)?,
            Op::LogSumExp { x, weights },
            needs,
        )
    }

    /// Reverse pass from a scalar `loss`. Consumes the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NotScalar(lv.shape().to_vec()));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                grads[id] = Some(g);
                continue;
            }
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| {
                g.filter(|_| node.needs_grad)
                    .map(|data| Tensor::new(node.value.shape().to_vec(), data).expect("grad shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let out = &node.value;
        let mut acc = |var: Var, contrib: Vec<f64>| {
            if !self.nodes[var.0].needs_grad {
                return;
            }
            match &mut grads[var.0] {
                Some(existing) => {
                    for (e, c) in existing.iter_mut().zip(contrib) {
                        *e += c;
                    }
                }
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = dims2(av);
                let n = bv.cols();
                if self.needs(*a) {
                    acc(*a, matmul_a_bt(g, bv.data(), m, n, k));
                }
                if self.needs(*b) {
                    acc(*b, matmul_at_b(av.data(), g, m, k, n));
                }
            }
            Op::Transpose(a) => {
                let (m, n) = dims2(self.value(*a));
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        d[i * n + j] = g[j * m + i];
                    }
                }
                acc(*a, d);
            }
            Op::Add {
                lhs,
                rhs,
                broadcast,
            } => {
                acc(*lhs, g.to_vec());
                if *broadcast {
                    let cols = out.cols();
                    let mut d = vec![0.0; cols];
                    for (i, v) in g.iter().enumerate() {
                        d[i % cols] += v;
                    }
                    acc(*rhs, d);
                } else {
                    acc(*rhs, g.to_vec());
                }
            }
            Op::Sub(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.iter().map(|v| -v).collect());
            }
            Op::Scale(a, f) => acc(*a, g.iter().map(|v| v * f).collect()),
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, g.iter().zip(bv.data()).map(|(x, y)| x * y).collect());
                acc(*b, g.iter().zip(av.data()).map(|(x, y)| x * y).collect());
            }
            Op::RowConcat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    acc(p, g[offset..offset + len].to_vec());
                    offset += len;
                }
            }
            Op::ColConcat(parts) => {
                let (rows, cols) = dims2(out);
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    let mut d = Vec::with_capacity(rows * pc);
                    for r in 0..rows {
                        d.extend_from_slice(&g[r * cols + offset..r * cols + offset + pc]);
                    }
                    acc(p, d);
                    offset += pc;
                }
            }
            Op::Softmax(x) => {
                let (rows, cols) = dims2(out);
                let y = out.data();
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    let s = r * cols;
                    let dot: f64 = (s..s + cols).map(|i| y[i] * g[i]).sum();
                    for i in s..s + cols {
                        d[i] = y[i] * (g[i] - dot);
                    }
                }
                acc(*x, d);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (rows, cols) = dims2(out);
                let gv = self.value(*gamma).data();
                if self.needs(*gamma) || self.needs(*beta) {
                    let mut dg = vec![0.0; cols];
                    let mut db = vec![0.0; cols];
                    for r in 0..rows {
                        for j in 0..cols {
                            let i = r * cols + j;
                            dg[j] += g[i] * xhat[i];
                            db[j] += g[i];
                        }
                    }
                    acc(*gamma, dg);
                    acc(*beta, db);
                }
                if self.needs(*x) {
                    let n = cols as f64;
                    let mut d = vec![0.0; rows * cols];
                    for r in 0..rows {
                        let s = r * cols;
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for j in 0..cols {
                            let dh = g[s + j] * gv[j];
                            sum_dh += dh;
                            sum_dh_h += dh * xhat[s + j];
                        }
                        for j in 0..cols {
                            let dh = g[s + j] * gv[j];
                            d[s + j] = inv_std[r] / n * (n * dh - sum_dh - xhat[s + j] * sum_dh_h);
                        }
                    }
                    acc(*x, d);
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                acc(
                    *x,
                    g.iter()
                        .zip(xv.data())
                        .map(|(gv, &v)| if v > 0.0 { *gv } else { 0.0 })
                        .collect(),
                );
            }
            Op::Sigmoid(x) => acc(
                *x,
                g.iter()
                    .zip(out.data())
                    .map(|(gv, y)| gv * y * (1.0 - y))
                    .collect(),
            ),
            Op::Log(x) => {
                let xv = self.value(*x);
                acc(*x, g.iter().zip(xv.data()).map(|(gv, v)| gv / v).collect());
            }
            Op::Exp(x) => acc(*x, g.iter().zip(out.data()).map(|(gv, y)| gv * y).collect()),
            Op::Gather { table, indices } => {
                let tv = self.value(*table);
                let cols = tv.cols();
                let mut d = vec![0.0; tv.len()];
                for (r, &i) in indices.iter().enumerate() {
                    for j in 0..cols {
                        d[i * cols + j] += g[r * cols + j];
                    }
                }
                acc(*table, d);
            }
            Op::RowSum { x, mask } => {
                let (rows, cols) = dims2(self.value(*x));
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    if mask.as_ref().map_or(true, |m| m[r]) {
                        d[r * cols..(r + 1) * cols].copy_from_slice(&g[..cols]);
                    }
                }
                acc(*x, d);
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                acc(*x, vec![g[0]; n]);
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                acc(*x, vec![g[0] / n as f64; n]);
            }
            Op::SquaredError(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let da: Vec<f64> = g
                    .iter()
                    .zip(av.data().iter().zip(bv.data()))
                    .map(|(gv, (x, y))| 2.0 * gv * (x - y))
                    .collect();
                let db = da.iter().map(|v| -v).collect();
                acc(*a, da);
                acc(*b, db);
            }
            Op::BceWithLogits { logits, targets } => {
                let lv = self.value(*logits);
                acc(
                    *logits,
                    g.iter()
                        .zip(lv.data().iter().zip(targets))
                        .map(|(gv, (&x, &y))| gv * (sigmoid(x) - y))
                        .collect(),
                );
            }
            Op::KlDiv { p, q } => {
                let (pv, qv) = (self.value(*p), self.value(*q));
                let cols = pv.cols();
                if self.needs(*p) {
                    let d = pv
                        .data()
                        .iter()
                        .zip(qv.data())
                        .enumerate()
                        .map(|(i, (&a, &b))| {
                            let dlog = if a > LOG_CLAMP {
                                a.ln() + 1.0
                            } else {
                                LOG_CLAMP.ln()
                            };
                            g[i / cols] * (dlog - b.max(LOG_CLAMP).ln())
                        })
                        .collect();
                    acc(*p, d);
                }
                if self.needs(*q) {
                    let d = pv
                        .data()
                        .iter()
                        .zip(qv.data())
                        .enumerate()
                        .map(|(i, (&a, &b))| {
                            if b > LOG_CLAMP {
                                -g[i / cols] * a / b
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    acc(*q, d);
                }
            }
            Op::LogSumExp { x, weights } => {
                let cols = self.value(*x).cols();
                acc(
                    *x,
                    weights
                        .iter()
                        .enumerate()
                        .map(|(i, w)| g[i / cols] * w)
                        .collect(),
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_row_softmax_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 4]));
        let y = tape.row_softmax(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.25; 4]);
    }

    #[test]
    fn kl_of_identical_rows_is_zero() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::matrix(2, 3, &[0.2, 0.3, 0.5, 0.1, 0.1, 0.8]).unwrap());
        let kl = tape.kl_divergence(p, p).unwrap();
        assert!(tape.value(kl).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sum_gives_all_ones_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::matrix(2, 2, &[1.0, -2.0, 3.0, 0.5]).unwrap(), true);
        let loss = tape.sum(w).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn squared_error_gradient_is_twice_value() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.75), true);
        let zero = tape.constant(Tensor::scalar(0.0));
        let se = tape.squared_error(x, zero).unwrap();
        let loss = tape.scale(se, 1.0).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 3.5);
    }

    #[test]
    fn second_backward_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0), true);
        let loss = tape.sum(x).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.backward(loss).unwrap_err(), TensorError::TapeConsumed);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2, 2]), true);
        assert!(matches!(tape.backward(x), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn fully_masked_row_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape
            .masked_row_softmax(x, &[false, false, false])
            .unwrap_err();
        assert_eq!(err, TensorError::MaskAllFalse { row: 0 });
    }

    #[test]
    fn masked_softmax_zeroes_masked_columns() {
        let mut tape = Tape::new();
        let x = tape.leaf(
            Tensor::matrix(2, 3, &[0.3, -1.0, 2.0, 1.0, 4.0, 0.0]).unwrap(),
            true,
        );
        let y = tape.masked_row_softmax(x, &[true, false, true]).unwrap();
        let yv = tape.value(y).clone();
        for r in 0..2 {
            assert_eq!(yv.get(r, 1), 0.0);
            assert!((yv.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let w = tape.constant(Tensor::matrix(2, 3, &[1.0, 2.0, 3.0, -1.0, 5.0, 0.5]).unwrap());
        let prod = tape.mul(y, w).unwrap();
        let loss = tape.sum(prod).unwrap();
        let grads = tape.backward(loss).unwrap();
        let gx = grads.get(x).unwrap();
        assert_eq!(gx.get(0, 1), 0.0);
        assert_eq!(gx.get(1, 1), 0.0);
    }

    #[test]
    fn log_of_negative_trips_non_finite() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(-1.0));
        assert_eq!(
            tape.log(x).unwrap_err(),
            TensorError::NonFinite { op: "log" }
        );
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(
            tape.matmul(a, b),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn lookup_out_of_range() {
        let mut tape = Tape::new();
        let t = tape.constant(Tensor::zeros(&[3, 2]));
        assert!(matches!(
            tape.embedding_lookup(t, &[0, 3]),
            Err(TensorError::IndexOutOfRange { index: 3, .. })
        ));
    }
}

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{BoundParams, ParamId, ParamStore};
use crate::tensor::{Result, Tape, Tensor, Var};

/// Inverted dropout. Evaluation mode (no RNG) or a zero rate is the identity.
pub struct Dropout<'a> {
    rate: f64,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl Dropout<'static> {
    pub fn eval() -> Self {
        Dropout {
            rate: 0.0,
            rng: None,
        }
    }
}

impl<'a> Dropout<'a> {
    pub fn train(rate: f64, rng: &'a mut ChaCha8Rng) -> Self {
        Dropout {
            rate,
            rng: Some(rng),
        }
    }

    pub fn is_active(&self) -> bool {
        self.rng.is_some() && self.rate > 0.0
    }

    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        let rate = self.rate;
        let Some(rng) = self.rng.as_deref_mut().filter(|_| rate > 0.0) else {
            return Ok(x);
        };
        let keep = 1.0 / (1.0 - rate);
        let shape = tape.shape(x).to_vec();
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let mask = tape.constant(Tensor::new(shape, data)?);
        tape.mul(x, mask)
    }
}

/// One recorded attention probability matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRecord {
    /// `"atom"`, `"motif"`, `"self"` or `"cross"`.
    pub site: &'static str,
    pub molecule: usize,
    pub layer: usize,
    pub head: usize,
    pub weights: Tensor,
    pub key_mask: Vec<bool>,
}

pub(crate) fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::uniform(&[rows, cols], bound, rng)
}

pub(crate) struct Attention {
    q: Vec<ParamId>,
    k: Vec<ParamId>,
    v: Vec<ParamId>,
    o: ParamId,
    scale: f64,
}

impl Attention {
    pub(crate) fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        heads: usize,
        rng: &mut R,
    ) -> Self {
        let dk = d / heads;
        let mut proj = |kind: &str, rng: &mut R| -> Vec<ParamId> {
            (0..heads)
                .map(|h| store.add(format!("{prefix}.{kind}.{h}"), glorot(d, dk, rng)))
                .collect()
        };
        let q = proj("q", rng);
        let k = proj("k", rng);
        let v = proj("v", rng);
        let o = store.add(format!("{prefix}.o"), glorot(d, d, rng));
        Attention {
            q,
            k,
            v,
            o,
            scale: 1.0 / (dk as f64).sqrt(),
        }
    }

    /// Multi-head attention of `queries` over `keys` (which also supply the
    /// values). Returns the projected output and each head's probabilities.
    pub(crate) fn forward(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        queries: Var,
        keys: Var,
        key_mask: &[bool],
    ) -> Result<(Var, Vec<Var>)> {
        let mut heads = Vec::with_capacity(self.q.len());
        let mut probs = Vec::with_capacity(self.q.len());
        for h in 0..self.q.len() {
            let q = tape.matmul(queries, p[self.q[h]])?;
            let k = tape.matmul(keys, p[self.k[h]])?;
            let v = tape.matmul(keys, p[self.v[h]])?;
            let kt = tape.transpose(k)?;
            let scores = tape.matmul(q, kt)?;
            let scores = tape.scale(scores, self.scale)?;
            let w = tape.masked_row_softmax(scores, key_mask)?;
            heads.push(tape.matmul(w, v)?);
            probs.push(w);
        }
        let cat = tape.col_concat(&heads)?;
        Ok((tape.matmul(cat, p[self.o])?, probs))
    }
}

pub(crate) struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

impl Norm {
    pub(crate) fn register(store: &mut ParamStore, prefix: &str, d: usize) -> Self {
        Norm {
            gamma: store.add(format!("{prefix}.gamma"), Tensor::ones(&[1, d])),
            beta: store.add(format!("{prefix}.beta"), Tensor::zeros(&[1, d])),
        }
    }

    /// `layer_norm(x + sub)`.
    pub(crate) fn residual(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        x: Var,
        sub: Var,
    ) -> Result<Var> {
        let sum = tape.add(x, sub)?;
        tape.layer_norm(sum, p[self.gamma], p[self.beta])
    }
}

pub(crate) struct FeedForward {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl FeedForward {
    pub(crate) fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        FeedForward {
            w1: store.add(format!("{prefix}.w1"), glorot(d, hidden, rng)),
            b1: store.add(format!("{prefix}.b1"), Tensor::zeros(&[1, hidden])),
            w2: store.add(format!("{prefix}.w2"), glorot(hidden, d, rng)),
            b2: store.add(format!("{prefix}.b2"), Tensor::zeros(&[1, d])),
        }
    }

    pub(crate) fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Result<Var> {
        let h = tape.matmul(x, p[self.w1])?;
        let h = tape.add(h, p[self.b1])?;
        let h = tape.relu(h)?;
        let out = tape.matmul(h, p[self.w2])?;
        tape.add(out, p[self.b2])
    }
}

/// Post-norm transformer encoder layer.
pub(crate) struct EncoderLayer {
    attn: Attention,
    norm1: Norm,
    ffn: FeedForward,
    norm2: Norm,
}

impl EncoderLayer {
    pub(crate) fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        heads: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        EncoderLayer {
            attn: Attention::register(store, &format!("{prefix}.attn"), d, heads, rng),
            norm1: Norm::register(store, &format!("{prefix}.norm1"), d),
            ffn: FeedForward::register(store, &format!("{prefix}.ffn"), d, hidden, rng),
            norm2: Norm::register(store, &format!("{prefix}.norm2"), d),
        }
    }

    pub(crate) fn forward(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        x: Var,
        mask: &[bool],
        dropout: &mut Dropout,
    ) -> Result<(Var, Vec<Var>)> {
        let (a, probs) = self.attn.forward(tape, p, x, x, mask)?;
        let a = dropout.apply(tape, a)?;
        let x = self.norm1.residual(tape, p, x, a)?;
        let f = self.ffn.forward(tape, p, x)?;
        let f = dropout.apply(tape, f)?;
        Ok((self.norm2.residual(tape, p, x, f)?, probs))
    }
}

/// Property-aware decoder layer: self-attention over the property rows, then
/// cross-attention from properties to motifs, then the feed-forward block.
pub(crate) struct DecoderLayer {
    self_attn: Attention,
    norm1: Norm,
    cross: Attention,
    norm2: Norm,
    ffn: FeedForward,
    norm3: Norm,
}

pub(crate) struct DecoderStep {
    pub out: Var,
    pub self_probs: Vec<Var>,
    pub cross_probs: Vec<Var>,
}

impl DecoderLayer {
    pub(crate) fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        heads: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        DecoderLayer {
            self_attn: Attention::register(store, &format!("{prefix}.self"), d, heads, rng),
            norm1: Norm::register(store, &format!("{prefix}.norm1"), d),
            cross: Attention::register(store, &format!("{prefix}.cross"), d, heads, rng),
            norm2: Norm::register(store, &format!("{prefix}.norm2"), d),
            ffn: FeedForward::register(store, &format!("{prefix}.ffn"), d, hidden, rng),
            norm3: Norm::register(store, &format!("{prefix}.norm3"), d),
        }
    }

    pub(crate) fn forward(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        props: Var,
        motifs: Var,
        motif_mask: &[bool],
        dropout: &mut Dropout,
    ) -> Result<DecoderStep> {
        let c = tape.value(props).rows();
        let all = vec![true; c];
        let (s, self_probs) = self.self_attn.forward(tape, p, props, props, &all)?;
        let s = dropout.apply(tape, s)?;
        let p2 = self.norm1.residual(tape, p, props, s)?;
        let (x, cross_probs) = self.cross.forward(tape, p, p2, motifs, motif_mask)?;
        let x = dropout.apply(tape, x)?;
        let p3 = self.norm2.residual(tape, p, p2, x)?;
        let f = self.ffn.forward(tape, p, p3)?;
        let f = dropout.apply(tape, f)?;
        Ok(DecoderStep {
            out: self.norm3.residual(tape, p, p3, f)?,
            self_probs,
            cross_probs,
        })
    }
}

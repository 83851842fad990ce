//! The atom-motif network: embeddings, the atom and motif encoders, the
//! property-aware decoder, readouts and output heads.

mod batch;
mod config;
mod explain;
mod layers;
mod params;

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use batch::Batch;
pub use config::ModelConfig;
pub use explain::{explain, ExplainError, PropertyExplanation, DEFAULT_ALPHA, DEGENERATE_SPAN};
pub use layers::{AttentionRecord, Dropout};
pub use params::{BoundParams, ParamId, ParamStore};

use crate::data::TaskKind;
use crate::motif::MotifVocabulary;
use crate::tensor::{
    read_container, write_container, Container, ContainerError, Tape, Tensor, TensorError, Var,
};
use layers::{glorot, DecoderLayer, EncoderLayer};

const EMBED_BOUND: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("vocabulary hash {found} does not match checkpoint hash {expected}")]
    VocabMismatch { expected: String, found: String },
}

/// Metadata stored next to the weights in a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub vocab_hash: String,
    /// Where the vocabulary lived when the model was trained.
    #[serde(default)]
    pub vocab_path: Option<String>,
    pub task: TaskKind,
    pub task_names: Vec<String>,
    /// Predictions come from the readout head (set for decoder-free runs).
    #[serde(default)]
    pub predict_with_linear: bool,
    /// Run manifest written alongside the checkpoint.
    #[serde(default)]
    pub manifest: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForwardOptions {
    /// Run the property-aware decoder. When false, `o` is absent.
    pub decode: bool,
    /// Record every attention probability matrix.
    pub trace: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            decode: true,
            trace: false,
        }
    }
}

pub struct ForwardOutput {
    /// `q × d` summed atom representations.
    pub h_readout: Var,
    /// `q × d` summed motif representations.
    pub z_readout: Var,
    /// `q × c` predictions of the readout head on `h_readout`.
    pub h_linear: Var,
    /// `q × c` decoder predictions.
    pub o: Option<Var>,
    /// `l × d` encoded rows of every real motif in the batch.
    pub motif_rows: Var,
    /// Token of each row of `motif_rows`.
    pub motif_tokens: Vec<usize>,
    /// Batch molecule of each row of `motif_rows`.
    pub motif_owner: Vec<usize>,
    /// Per molecule, the head-averaged final cross-attention (`c × motifs`).
    pub attention: Vec<Tensor>,
    pub trace: Vec<AttentionRecord>,
}

impl ForwardOutput {
    /// `o` when decoded, otherwise `h_linear`.
    pub fn prediction(&self) -> Var {
        self.o.unwrap_or(self.h_linear)
    }
}

struct Layout {
    atom_tables: [ParamId; 5],
    atom_degree: ParamId,
    motif_table: ParamId,
    motif_degree: ParamId,
    atom_encoder: Vec<EncoderLayer>,
    motif_encoder: Vec<EncoderLayer>,
    properties: ParamId,
    decoder: Vec<DecoderLayer>,
    linear_w: ParamId,
    linear_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

pub struct AmctModel {
    config: ModelConfig,
    params: ParamStore,
    layout: Layout,
}

impl AmctModel {
    /// Builds a freshly initialized model; identical seeds give identical weights.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate().map_err(ModelError::Config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.d_model;
        let hidden = d * config.ffn_multiplier;
        let embed = |store: &mut ParamStore, name: String, rows: usize, rng: &mut ChaCha8Rng| {
            store.add(name, Tensor::uniform(&[rows, d], EMBED_BOUND, rng))
        };
        let card = config.schema.cardinalities();
        let names = ["element", "degree", "charge", "aromatic", "ring"];
        let atom_tables = std::array::from_fn(|k| {
            embed(
                &mut store,
                format!("atom.embed.{}", names[k]),
                card[k],
                &mut rng,
            )
        });
        let atom_degree = embed(
            &mut store,
            "atom.centrality".into(),
            config.max_atom_degree + 1,
            &mut rng,
        );
        let motif_table = embed(
            &mut store,
            "motif.embed".into(),
            config.vocab_size + 1,
            &mut rng,
        );
        let motif_degree = embed(
            &mut store,
            "motif.centrality".into(),
            config.max_motif_degree + 1,
            &mut rng,
        );
        let atom_encoder = (0..config.encoder_layers)
            .map(|l| {
                EncoderLayer::register(
                    &mut store,
                    &format!("atom_enc.{l}"),
                    d,
                    config.heads,
                    hidden,
                    &mut rng,
                )
            })
            .collect();
        let motif_encoder = (0..config.encoder_layers)
            .map(|l| {
                EncoderLayer::register(
                    &mut store,
                    &format!("motif_enc.{l}"),
                    d,
                    config.heads,
                    hidden,
                    &mut rng,
                )
            })
            .collect();
        let properties = embed(
            &mut store,
            "decoder.properties".into(),
            config.num_tasks,
            &mut rng,
        );
        let decoder = (0..config.decoder_layers)
            .map(|l| {
                DecoderLayer::register(
                    &mut store,
                    &format!("decoder.{l}"),
                    d,
                    config.heads,
                    hidden,
                    &mut rng,
                )
            })
            .collect();
        let linear_w = store.add("head.linear.w", glorot(d, config.num_tasks, &mut rng));
        let linear_b = store.add("head.linear.b", Tensor::zeros(&[1, config.num_tasks]));
        let out_w = store.add("head.out.w", glorot(d, 1, &mut rng));
        let out_b = store.add("head.out.b", Tensor::zeros(&[1, 1]));
        Ok(AmctModel {
            config,
            params: store,
            layout: Layout {
                atom_tables,
                atom_degree,
                motif_table,
                motif_degree,
                atom_encoder,
                motif_encoder,
                properties,
                decoder,
                linear_w,
                linear_b,
                out_w,
                out_b,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// `H0`: summed feature-category rows plus the clamped degree row.
    pub fn embed_atoms(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        features: &[[usize; 5]],
        degrees: &[usize],
    ) -> Result<Var, TensorError> {
        let mut h = None;
        for (k, &table) in self.layout.atom_tables.iter().enumerate() {
            let idx: Vec<usize> = features.iter().map(|f| f[k]).collect();
            let rows = tape.embedding_lookup(p[table], &idx)?;
            h = Some(match h {
                None => rows,
                Some(acc) => tape.add(acc, rows)?,
            });
        }
        let deg: Vec<usize> = degrees
            .iter()
            .map(|&g| g.min(self.config.max_atom_degree))
            .collect();
        let b = tape.embedding_lookup(p[self.layout.atom_degree], &deg)?;
        tape.add(h.expect("five feature tables"), b)
    }

    /// `Z0`: motif token row plus the clamped motif degree row.
    pub fn embed_motifs(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        tokens: &[usize],
        degrees: &[usize],
    ) -> Result<Var, TensorError> {
        let t = tape.embedding_lookup(p[self.layout.motif_table], tokens)?;
        let deg: Vec<usize> = degrees
            .iter()
            .map(|&g| g.min(self.config.max_motif_degree))
            .collect();
        let e = tape.embedding_lookup(p[self.layout.motif_degree], &deg)?;
        tape.add(t, e)
    }

    fn encode(
        layers: &[EncoderLayer],
        tape: &mut Tape,
        p: &BoundParams,
        x0: Var,
        mask: &[bool],
        dropout: &mut Dropout,
        mut record: impl FnMut(usize, Vec<Var>),
    ) -> Result<(Var, Var), TensorError> {
        let mut x = x0;
        for (l, layer) in layers.iter().enumerate() {
            let (next, probs) = layer.forward(tape, p, x, mask, dropout)?;
            record(l, probs);
            x = next;
        }
        let readout = tape.masked_row_sum(x, mask)?;
        Ok((x, readout))
    }

    /// Runs the atom encoder; returns the final rows and their masked sum.
    pub fn encode_atoms(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        h0: Var,
        mask: &[bool],
        dropout: &mut Dropout,
    ) -> Result<(Var, Var), TensorError> {
        Self::encode(
            &self.layout.atom_encoder,
            tape,
            p,
            h0,
            mask,
            dropout,
            |_, _| {},
        )
    }

    pub fn encode_motifs(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        z0: Var,
        mask: &[bool],
        dropout: &mut Dropout,
    ) -> Result<(Var, Var), TensorError> {
        Self::encode(
            &self.layout.motif_encoder,
            tape,
            p,
            z0,
            mask,
            dropout,
            |_, _| {},
        )
    }

    /// Decodes property rows against encoded motifs. Returns `o` as a `1 × c`
    /// row, the final decoder layer's per-head cross-attention, and every
    /// layer's self/cross probabilities.
    pub fn decode_properties(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        motifs: Var,
        mask: &[bool],
        dropout: &mut Dropout,
    ) -> Result<(Var, Vec<Var>, Vec<(Vec<Var>, Vec<Var>)>), TensorError> {
        let mut props = p[self.layout.properties];
        let mut per_layer = Vec::with_capacity(self.layout.decoder.len());
        for layer in &self.layout.decoder {
            let step = layer.forward(tape, p, props, motifs, mask, dropout)?;
            props = step.out;
            per_layer.push((step.self_probs, step.cross_probs));
        }
        let last = per_layer.last().map(|l| l.1.clone()).unwrap_or_default();
        let col = tape.matmul(props, p[self.layout.out_w])?;
        let col = tape.add(col, p[self.layout.out_b])?;
        Ok((tape.transpose(col)?, last, per_layer))
    }

    /// Full forward pass over a padded batch.
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        batch: &Batch,
        opts: ForwardOptions,
        dropout: &mut Dropout,
    ) -> Result<ForwardOutput, TensorError> {
        let mut h_rows = Vec::with_capacity(batch.size);
        let mut z_rows = Vec::with_capacity(batch.size);
        let mut o_rows = Vec::with_capacity(batch.size);
        let mut motif_parts = Vec::with_capacity(batch.size);
        let mut motif_tokens = Vec::new();
        let mut motif_owner = Vec::new();
        let mut attention = Vec::new();
        let mut trace = Vec::new();
        for mol in 0..batch.size {
            let ar = batch.atom_range(mol);
            let atom_mask = &batch.atom_mask[ar.clone()];
            let h0 = self.embed_atoms(
                tape,
                p,
                &batch.atom_features[ar.clone()],
                &batch.atom_degrees[ar],
            )?;
            let (_, h) = Self::encode(
                &self.layout.atom_encoder,
                tape,
                p,
                h0,
                atom_mask,
                dropout,
                |l, probs| {
                    if opts.trace {
                        record(&mut trace, "atom", mol, l, &probs, atom_mask);
                    }
                },
            )?;
            h_rows.push(h);

            let mr = batch.motif_range(mol);
            let motif_mask = &batch.motif_mask[mr.clone()];
            let z0 = self.embed_motifs(
                tape,
                p,
                &batch.motif_tokens[mr.clone()],
                &batch.motif_degrees[mr.clone()],
            )?;
            let (z, zr) = Self::encode(
                &self.layout.motif_encoder,
                tape,
                p,
                z0,
                motif_mask,
                dropout,
                |l, probs| {
                    if opts.trace {
                        record(&mut trace, "motif", mol, l, &probs, motif_mask);
                    }
                },
            )?;
            z_rows.push(zr);

            let real: Vec<usize> = (0..motif_mask.len()).filter(|&i| motif_mask[i]).collect();
            motif_parts.push(tape.embedding_lookup(z, &real)?);
            motif_tokens.extend(real.iter().map(|&i| batch.motif_tokens[mr.start + i]));
            motif_owner.extend(real.iter().map(|_| mol));

            if opts.decode {
                let (o, last, layers) = self.decode_properties(tape, p, z, motif_mask, dropout)?;
                o_rows.push(o);
                attention.push(head_average(tape, &last, &real));
                if opts.trace {
                    let c = self.config.num_tasks;
                    for (l, (s, x)) in layers.iter().enumerate() {
                        record(&mut trace, "self", mol, l, s, &vec![true; c]);
                        record(&mut trace, "cross", mol, l, x, motif_mask);
                    }
                }
            }
        }
        let trace = trace
            .into_iter()
            .map(
                |(site, molecule, layer, head, var, key_mask)| AttentionRecord {
                    site,
                    molecule,
                    layer,
                    head,
                    weights: tape.value(var).clone(),
                    key_mask,
                },
            )
            .collect();
        let h_readout = tape.row_concat(&h_rows)?;
        let z_readout = tape.row_concat(&z_rows)?;
        let lin = tape.matmul(h_readout, p[self.layout.linear_w])?;
        let h_linear = tape.add(lin, p[self.layout.linear_b])?;
        let o = if opts.decode {
            Some(tape.row_concat(&o_rows)?)
        } else {
            None
        };
        let motif_rows = tape.row_concat(&motif_parts)?;
        Ok(ForwardOutput {
            h_readout,
            z_readout,
            h_linear,
            o,
            motif_rows,
            motif_tokens,
            motif_owner,
            attention,
            trace,
        })
    }

    /// Serializes weights and metadata into a tensor container.
    pub fn to_container(&self, meta: &CheckpointMeta) -> Container {
        Container {
            tensors: self
                .params
                .iter()
                .map(|(name, t)| (name.to_owned(), t.clone()))
                .collect(),
            meta: serde_json::to_value(meta).expect("metadata serializes"),
        }
    }

    pub fn save<W: Write>(&self, out: W, meta: &CheckpointMeta) -> Result<(), ModelError> {
        write_container(out, &self.to_container(meta))?;
        Ok(())
    }

    /// Rebuilds a model from a checkpoint. Every parameter of the configured
    /// layout must be present with the right shape.
    pub fn load<R: Read>(input: R) -> Result<(Self, CheckpointMeta), ModelError> {
        let container = read_container(input)?;
        let meta: CheckpointMeta = serde_json::from_value(container.meta)
            .map_err(|e| ModelError::Checkpoint(format!("metadata: {e}")))?;
        let mut model = AmctModel::new(meta.config.clone(), 0)?;
        if container.tensors.len() != model.params.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} tensors, found {}",
                model.params.len(),
                container.tensors.len()
            )));
        }
        for (name, tensor) in container.tensors {
            let id = model
                .params
                .id(&name)
                .ok_or_else(|| ModelError::Checkpoint(format!("unknown tensor {name:?}")))?;
            let slot = model.params.get_mut(id);
            if slot.shape() != tensor.shape() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {name:?} has shape {:?}, expected {:?}",
                    tensor.shape(),
                    slot.shape()
                )));
            }
            *slot = tensor;
        }
        Ok((model, meta))
    }

    /// [`AmctModel::load`] that refuses a vocabulary other than the one the
    /// model was trained with.
    pub fn load_for_vocab<R: Read>(
        input: R,
        vocab: &MotifVocabulary,
    ) -> Result<(Self, CheckpointMeta), ModelError> {
        let (model, meta) = Self::load(input)?;
        check_vocab(&meta, vocab)?;
        Ok((model, meta))
    }
}

pub fn check_vocab(meta: &CheckpointMeta, vocab: &MotifVocabulary) -> Result<(), ModelError> {
    let found = vocab.hash();
    if found != meta.vocab_hash {
        return Err(ModelError::VocabMismatch {
            expected: meta.vocab_hash.clone(),
            found,
        });
    }
    Ok(())
}

type PendingRecord = (&'static str, usize, usize, usize, Var, Vec<bool>);

fn record(
    out: &mut Vec<PendingRecord>,
    site: &'static str,
    mol: usize,
    layer: usize,
    probs: &[Var],
    mask: &[bool],
) {
    for (head, &var) in probs.iter().enumerate() {
        out.push((site, mol, layer, head, var, mask.to_vec()));
    }
}

fn head_average(tape: &Tape, heads: &[Var], columns: &[usize]) -> Tensor {
    let first = tape.value(heads[0]);
    let rows = first.rows();
    let mut data = vec![0.0; rows * columns.len()];
    for &h in heads {
        let v = tape.value(h);
        for r in 0..rows {
            for (j, &c) in columns.iter().enumerate() {
                data[r * columns.len() + j] += v.get(r, c);
            }
        }
    }
    let n = heads.len() as f64;
    for x in &mut data {
        *x /= n;
    }
    Tensor::new(vec![rows, columns.len()], data).expect("shape matches data")
}

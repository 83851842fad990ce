//! Atom-motif contrastive transformer (AMCT) for molecular property prediction.
//!
//! The crate is layered bottom-up:
//!
//! - [`molgraph`] parses a SMILES subset into heavy-atom graphs and computes
//!   categorical atom features and degree centrality.
//! - [`motif`] decomposes graphs into ring, bond and bridged motifs,
//!   canonicalizes them and builds the corpus motif vocabulary.
//! - [`tensor`] is a small reverse-mode autodiff tape over dense `f64` arrays.
//! - [`model`] holds the atom encoder, motif encoder and property-aware
//!   decoder, plus cross-attention explanations.
//! - [`losses`] implements the supervised, alignment and motif contrastive
//!   objectives.
//! - [`train`] covers batching, Adam, metrics, ablations and sweeps.
//!
//! ```
//! use amct::molgraph::{parse_smiles, ParseLimits};
//! use amct::motif::decompose;
//!
//! let graph = parse_smiles("C1CCCCC1O", &ParseLimits::default()).unwrap();
//! let motifs = decompose(&graph);
//! assert_eq!(motifs.motifs.len(), 2);
//! ```

pub mod data;
pub mod losses;
pub mod model;
pub mod molgraph;
pub mod motif;
pub mod tensor;
pub mod train;

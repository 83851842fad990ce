//! Dataset CSV ingestion and per-molecule featurization.
//!
//! The CSV has a header `smiles,<task1>,...,<taskc>`. Empty cells are
//! missing labels. Classification labels must be `0` or `1`.

pub mod synthetic;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::molgraph::{
    atom_feature_indices, degree_centrality, parse_smiles, AtomFeatureSchema, GraphError,
    MolecularGraph, ParseLimits,
};
use crate::motif::{decompose, motif_degree_centrality, MotifSet, MotifVocabulary, UNK_TOKEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Regression,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {source}")]
    Molecule {
        line: usize,
        #[source]
        source: GraphError,
    },
    #[error("line {line}, column {column}: invalid label {value:?}")]
    Label {
        line: usize,
        column: String,
        value: String,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("header must start with 'smiles' and name at least one task")]
    Header,
    #[error("dataset has no molecules")]
    Empty,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// One parsed, decomposed molecule with its labels.
#[derive(Clone, Debug)]
pub struct Record {
    /// 1-based line number in the source file (header is line 1).
    pub line: usize,
    pub graph: MolecularGraph,
    pub motifs: MotifSet,
    pub labels: Vec<Option<f64>>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub task_names: Vec<String>,
    pub task: TaskKind,
    pub records: Vec<Record>,
    /// SHA-256 of the raw CSV bytes.
    pub content_hash: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_tasks(&self) -> usize {
        self.task_names.len()
    }

    pub fn graphs(&self) -> impl Iterator<Item = &MolecularGraph> {
        self.records.iter().map(|r| &r.graph)
    }

    /// Dataset restricted to `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            task_names: self.task_names.clone(),
            task: self.task,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            content_hash: self.content_hash.clone(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Parses a dataset CSV. Molecule and label errors carry the line number.
pub fn read_csv(text: &str, task: TaskKind, limits: &ParseLimits) -> Result<Dataset, DataError> {
    // csv's record line numbers drift on CRLF input.
    let normalized = text.replace("\r\n", "\n");
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(normalized.as_bytes());
    let header = reader.headers()?.clone();
    if header.len() < 2 || header.get(0).map(str::trim) != Some("smiles") {
        return Err(DataError::Header);
    }
    let task_names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_owned()).collect();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() == 1 && row.get(0).map_or(true, |s| s.trim().is_empty()) {
            continue;
        }
        if row.len() != header.len() {
            return Err(DataError::FieldCount {
                line,
                expected: header.len(),
                found: row.len(),
            });
        }
        let smiles = row.get(0).unwrap_or("").trim();
        let graph =
            parse_smiles(smiles, limits).map_err(|source| DataError::Molecule { line, source })?;
        let mut labels = Vec::with_capacity(task_names.len());
        for (k, cell) in row.iter().skip(1).enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                labels.push(None);
                continue;
            }
            let bad = || DataError::Label {
                line,
                column: task_names[k].clone(),
                value: cell.to_owned(),
            };
            let value: f64 = cell.parse().map_err(|_| bad())?;
            let ok = match task {
                TaskKind::Classification => value == 0.0 || value == 1.0,
                TaskKind::Regression => value.is_finite(),
            };
            if !ok {
                return Err(bad());
            }
            labels.push(Some(value));
        }
        let motifs = decompose(&graph);
        records.push(Record {
            line,
            graph,
            motifs,
            labels,
        });
    }
    Ok(Dataset {
        task_names,
        task,
        records,
        content_hash: sha256_hex(text.as_bytes()),
    })
}

/// Model-ready integer inputs for one molecule.
#[derive(Clone, Debug, PartialEq)]
pub struct MoleculeInput {
    pub atom_features: Vec<[usize; 5]>,
    pub atom_degrees: Vec<usize>,
    /// Embedding rows: vocabulary id + 1, or [`UNK_TOKEN`].
    pub motif_tokens: Vec<usize>,
    pub motif_degrees: Vec<usize>,
    pub motif_keys: Vec<String>,
}

impl MoleculeInput {
    pub fn num_atoms(&self) -> usize {
        self.atom_features.len()
    }

    pub fn num_motifs(&self) -> usize {
        self.motif_tokens.len()
    }
}

pub fn featurize(
    graph: &MolecularGraph,
    motifs: &MotifSet,
    vocab: &MotifVocabulary,
    schema: &AtomFeatureSchema,
) -> Result<MoleculeInput, GraphError> {
    Ok(MoleculeInput {
        atom_features: atom_feature_indices(graph, schema)?,
        atom_degrees: degree_centrality(graph),
        motif_tokens: motifs
            .keys()
            .map(|k| vocab.id(k).map_or(UNK_TOKEN, |id| id + 1))
            .collect(),
        motif_degrees: motif_degree_centrality(motifs),
        motif_keys: motifs.keys().map(str::to_owned).collect(),
    })
}

pub fn featurize_dataset(
    data: &Dataset,
    vocab: &MotifVocabulary,
    schema: &AtomFeatureSchema,
) -> Result<Vec<MoleculeInput>, DataError> {
    data.records
        .iter()
        .map(|r| {
            featurize(&r.graph, &r.motifs, vocab, schema).map_err(|source| DataError::Molecule {
                line: r.line,
                source,
            })
        })
        .collect()
}

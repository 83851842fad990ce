use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{decompose, MotifSet};
use crate::molgraph::MolecularGraph;

pub const VOCAB_VERSION: &str = "amct-vocab/1";

/// Model token reserved for motifs absent from the vocabulary. Known motifs
/// map to `id + 1`.
pub const UNK_TOKEN: usize = 0;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("vocabulary version {found:?} is not {expected:?}")]
    Version {
        found: String,
        expected: &'static str,
    },
    #[error("vocabulary entry {position} has id {id}; ids must be dense and ordered")]
    NonDenseIds { position: usize, id: usize },
    #[error("duplicate vocabulary key {0:?}")]
    DuplicateKey(String),
    #[error("malformed vocabulary file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Serialize, Deserialize)]
struct VocabEntry {
    key: String,
    id: usize,
    count: u64,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    version: String,
    entries: Vec<VocabEntry>,
}

/// Corpus-level map from canonical motif key to dense id, with counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MotifVocabulary {
    keys: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl MotifVocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one occurrence of `key`, assigning the next id on first sight.
    pub fn insert(&mut self, key: &str) -> usize {
        if let Some(&id) = self.index.get(key) {
            self.counts[id] += 1;
            return id;
        }
        let id = self.keys.len();
        self.keys.push(key.to_owned());
        self.counts.push(1);
        self.index.insert(key.to_owned(), id);
        id
    }

    pub fn id(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Embedding-table row for `key`: `id + 1`, or [`UNK_TOKEN`].
    pub fn token(&self, key: &str) -> usize {
        self.id(key).map_or(UNK_TOKEN, |id| id + 1)
    }

    pub fn key(&self, id: usize) -> Option<&str> {
        self.keys.get(id).map(String::as_str)
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// `(key, id, count)` in id order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, usize, u64)> {
        self.keys
            .iter()
            .zip(&self.counts)
            .enumerate()
            .map(|(id, (k, &c))| (k.as_str(), id, c))
    }

    /// Ids sorted by descending count, ties by ascending id.
    pub fn most_frequent(&self, k: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..self.len()).collect();
        ids.sort_by(|&a, &b| self.counts[b].cmp(&self.counts[a]).then(a.cmp(&b)));
        ids.truncate(k);
        ids
    }

    pub fn add_motifs(&mut self, set: &MotifSet) {
        for key in set.keys() {
            self.insert(key);
        }
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            version: VOCAB_VERSION.to_owned(),
            entries: self
                .entries()
                .map(|(key, id, count)| VocabEntry {
                    key: key.to_owned(),
                    id,
                    count,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, VocabError> {
        let file: VocabFile = serde_json::from_str(text)?;
        if file.version != VOCAB_VERSION {
            return Err(VocabError::Version {
                found: file.version,
                expected: VOCAB_VERSION,
            });
        }
        let mut vocab = Self::new();
        for (position, entry) in file.entries.into_iter().enumerate() {
            if entry.id != position {
                return Err(VocabError::NonDenseIds {
                    position,
                    id: entry.id,
                });
            }
            if vocab.index.contains_key(&entry.key) {
                return Err(VocabError::DuplicateKey(entry.key));
            }
            vocab.index.insert(entry.key.clone(), position);
            vocab.keys.push(entry.key);
            vocab.counts.push(entry.count);
        }
        Ok(vocab)
    }

    /// SHA-256 over the serialized key list (counts excluded), hex encoded.
    /// Two vocabularies with the same id assignment hash equal.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(VOCAB_VERSION.as_bytes());
        for key in &self.keys {
            h.update((key.len() as u64).to_le_bytes());
            h.update(key.as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Decomposes every molecule and collects the distinct motif keys in
/// first-seen order.
pub fn build_vocabulary<'a, I>(corpus: I) -> Result<MotifVocabulary, VocabError>
where
    I: IntoIterator<Item = &'a MolecularGraph>,
{
    let mut vocab = MotifVocabulary::new();
    let mut seen_any = false;
    for graph in corpus {
        seen_any = true;
        vocab.add_motifs(&decompose(graph));
    }
    if !seen_any {
        return Err(VocabError::EmptyCorpus);
    }
    Ok(vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::{parse_smiles, ParseLimits};

    fn graphs(smiles: &[&str]) -> Vec<MolecularGraph> {
        smiles
            .iter()
            .map(|s| parse_smiles(s, &ParseLimits::default()).unwrap())
            .collect()
    }

    #[test]
    fn cyclohexanol_vocabulary() {
        let v = build_vocabulary(&graphs(&["C1CCCCC1O"])).unwrap();
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn duplicates_collapse() {
        let v = build_vocabulary(&graphs(&["CC", "CC"])).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.count(0), 2);
    }

    #[test]
    fn empty_corpus() {
        assert!(matches!(
            build_vocabulary(&graphs(&[])),
            Err(VocabError::EmptyCorpus)
        ));
    }

    #[test]
    fn json_round_trip_keeps_ids() {
        let v = build_vocabulary(&graphs(&["C1CCCCC1O", "CCO", "c1ccncc1C"])).unwrap();
        let back = MotifVocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.hash(), v.hash());
        assert_eq!(back.to_json(), v.to_json());
    }

    #[test]
    fn tokens_shift_and_unk() {
        let mut v = MotifVocabulary::new();
        assert_eq!(v.insert("a"), 0);
        assert_eq!(v.insert("b"), 1);
        assert_eq!(v.insert("a"), 0);
        assert_eq!(v.token("a"), 1);
        assert_eq!(v.token("b"), 2);
        assert_eq!(v.token("zzz"), UNK_TOKEN);
    }

    #[test]
    fn rejects_gapped_ids() {
        let text = r#"{"version":"amct-vocab/1","entries":[{"key":"a","id":1,"count":1}]}"#;
        assert!(matches!(
            MotifVocabulary::from_json(text),
            Err(VocabError::NonDenseIds { position: 0, id: 1 })
        ));
    }
}

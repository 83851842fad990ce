//! Motif extraction by tree decomposition.
//!
//! A molecule is cut into clusters:
//!
//! 1. every bond that lies on no ring becomes a two-atom bond motif,
//! 2. every ring of the smallest set of smallest rings becomes a ring motif,
//! 3. ring clusters sharing more than two atoms are merged, repeatedly, into
//!    a single bridged motif.
//!
//! Motifs sharing at least one atom are joined by a junction edge. A
//! single-atom molecule yields one single-atom motif.

mod canon;
mod vocab;

use serde::{Deserialize, Serialize};

use crate::molgraph::rings::{ring_bond_flags, smallest_rings};
use crate::molgraph::MolecularGraph;

pub use canon::canonical_key;
pub use vocab::{build_vocabulary, MotifVocabulary, VocabError, UNK_TOKEN, VOCAB_VERSION};

/// Rings sharing more than this many atoms are merged into one motif.
pub const BRIDGE_SHARED_ATOMS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotifKind {
    Ring,
    Bond,
    Bridged,
    /// Whole molecule of one atom, which has no bonds to cut.
    Single,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Motif {
    /// Sorted atom indices into the owning graph.
    pub atom_indices: Vec<usize>,
    pub canonical_key: String,
    pub kind: MotifKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifSet {
    /// Ordered by ascending atom index list.
    pub motifs: Vec<Motif>,
    /// Pairs `(i, j)` with `i < j` of motifs sharing at least one atom.
    pub junction_edges: Vec<(usize, usize)>,
}

impl MotifSet {
    pub fn len(&self) -> usize {
        self.motifs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motifs.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.motifs.iter().map(|m| m.canonical_key.as_str())
    }
}

fn shared(a: &[usize], b: &[usize]) -> usize {
    // Both sorted.
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn union_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = a.iter().chain(b).copied().collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Decomposes `graph` into motifs and their junction edges.
pub fn decompose(graph: &MolecularGraph) -> MotifSet {
    let mut clusters: Vec<(Vec<usize>, MotifKind)> = Vec::new();
    if graph.num_atoms() == 1 {
        clusters.push((vec![0], MotifKind::Single));
    } else {
        let rings = smallest_rings(graph);
        let in_ring = ring_bond_flags(graph, &rings);
        for (bond, ring_bond) in graph.bonds().iter().zip(&in_ring) {
            if !ring_bond {
                let (a, b) = bond.endpoints;
                clusters.push((vec![a, b], MotifKind::Bond));
            }
        }
        let mut ring_clusters: Vec<(Vec<usize>, MotifKind)> = rings
            .into_iter()
            .map(|r| (r.atoms, MotifKind::Ring))
            .collect();
        'merge: loop {
            for i in 0..ring_clusters.len() {
                for j in i + 1..ring_clusters.len() {
                    if shared(&ring_clusters[i].0, &ring_clusters[j].0) > BRIDGE_SHARED_ATOMS {
                        let (absorbed, _) = ring_clusters.remove(j);
                        let merged = union_sorted(&ring_clusters[i].0, &absorbed);
                        ring_clusters[i] = (merged, MotifKind::Bridged);
                        continue 'merge;
                    }
                }
            }
            break;
        }
        clusters.extend(ring_clusters);
    }
    clusters.sort_by(|a, b| a.0.cmp(&b.0));

    let motifs: Vec<Motif> = clusters
        .into_iter()
        .map(|(atom_indices, kind)| Motif {
            canonical_key: canonical_key(graph, &atom_indices),
            atom_indices,
            kind,
        })
        .collect();
    let mut junction_edges = Vec::new();
    for i in 0..motifs.len() {
        for j in i + 1..motifs.len() {
            if shared(&motifs[i].atom_indices, &motifs[j].atom_indices) > 0 {
                junction_edges.push((i, j));
            }
        }
    }
    MotifSet {
        motifs,
        junction_edges,
    }
}

/// Number of junction edges incident to each motif.
pub fn motif_degree_centrality(set: &MotifSet) -> Vec<usize> {
    let mut degrees = vec![0; set.motifs.len()];
    for &(i, j) in &set.junction_edges {
        degrees[i] += 1;
        degrees[j] += 1;
    }
    degrees
}

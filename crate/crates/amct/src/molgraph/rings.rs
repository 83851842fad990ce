//! Ring perception: smallest set of smallest rings as a minimum cycle basis.
//!
//! Candidate cycles are enumerated by length-bounded search, shortest first,
//! and accepted greedily when independent over GF(2) in bond space. Ties
//! within a length are broken by sorted atom list, then sorted bond list.

use std::collections::BTreeSet;

use super::MolecularGraph;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ring {
    /// Atoms in ascending index order.
    pub atoms: Vec<usize>,
    /// Bond indices in ascending order.
    pub bonds: Vec<usize>,
}

impl Ring {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Number of independent cycles, `|E| - |V| + 1` for a connected graph.
pub fn cyclomatic_number(graph: &MolecularGraph) -> usize {
    (graph.bonds().len() + 1).saturating_sub(graph.num_atoms())
}

/// Bit vector over bond indices.
#[derive(Clone, Debug, PartialEq, Eq)]
struct BondSet(Vec<u64>);

impl BondSet {
    fn new(bits: usize) -> Self {
        Self(vec![0; bits.div_ceil(64).max(1)])
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn xor(&mut self, other: &BondSet) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a ^= b;
        }
    }

    fn lowest(&self) -> Option<usize> {
        self.0
            .iter()
            .enumerate()
            .find(|(_, w)| **w != 0)
            .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
    }
}

/// Incremental GF(2) row reduction keyed by pivot bit.
struct CycleBasis {
    rows: Vec<(usize, BondSet)>,
}

impl CycleBasis {
    /// Adds `v` if it is independent of the current rows.
    fn insert(&mut self, mut v: BondSet) -> bool {
        loop {
            let Some(pivot) = v.lowest() else {
                return false;
            };
            match self.rows.iter().find(|(p, _)| *p == pivot) {
                Some((_, row)) => v.xor(row),
                None => {
                    self.rows.push((pivot, v));
                    return true;
                }
            }
        }
    }
}

/// All simple cycles with exactly `len` atoms, each reported once.
fn cycles_of_length(graph: &MolecularGraph, len: usize) -> Vec<Ring> {
    let n = graph.num_atoms();
    let mut found = BTreeSet::new();
    let mut path = Vec::with_capacity(len);
    let mut on_path = vec![false; n];
    for start in 0..n {
        path.clear();
        path.push(start);
        on_path[start] = true;
        extend(graph, start, len, &mut path, &mut on_path, &mut found);
        on_path[start] = false;
    }
    found.into_iter().collect()
}

fn extend(
    graph: &MolecularGraph,
    start: usize,
    len: usize,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    found: &mut BTreeSet<Ring>,
) {
    let u = *path.last().expect("non-empty path");
    for &(v, _) in graph.neighbors(u) {
        if v == start && path.len() == len && len >= 3 {
            // Each cycle is seen from its smallest atom in two directions;
            // keep the one whose second atom is smaller than its last.
            if path[1] < path[len - 1] {
                let mut atoms = path.clone();
                let mut bonds: Vec<usize> = (0..len)
                    .map(|i| {
                        let (a, b) = (path[i], path[(i + 1) % len]);
                        graph
                            .neighbors(a)
                            .iter()
                            .find(|&&(nb, _)| nb == b)
                            .map(|&(_, bi)| bi)
                            .expect("cycle edge")
                    })
                    .collect();
                atoms.sort_unstable();
                bonds.sort_unstable();
                found.insert(Ring { atoms, bonds });
            }
            continue;
        }
        if v <= start || on_path[v] || path.len() >= len {
            continue;
        }
        path.push(v);
        on_path[v] = true;
        extend(graph, start, len, path, on_path, found);
        on_path[v] = false;
        path.pop();
    }
}

/// Smallest set of smallest rings, sorted by `(size, atoms, bonds)`.
pub fn smallest_rings(graph: &MolecularGraph) -> Vec<Ring> {
    let target = cyclomatic_number(graph);
    let mut basis = CycleBasis { rows: Vec::new() };
    let mut rings = Vec::with_capacity(target);
    let mut len = 3;
    while rings.len() < target && len <= graph.num_atoms() {
        for ring in cycles_of_length(graph, len) {
            let mut v = BondSet::new(graph.bonds().len());
            for &b in &ring.bonds {
                v.set(b);
            }
            if basis.insert(v) {
                rings.push(ring);
                if rings.len() == target {
                    break;
                }
            }
        }
        len += 1;
    }
    rings
}

/// Per-bond flag: does the bond lie on any ring.
pub fn ring_bond_flags(graph: &MolecularGraph, rings: &[Ring]) -> Vec<bool> {
    let mut set = BondSet::new(graph.bonds().len());
    for ring in rings {
        for &b in &ring.bonds {
            set.set(b);
        }
    }
    (0..graph.bonds().len()).map(|b| set.get(b)).collect()
}

/// Per-atom flag: does the atom lie on any ring.
pub fn ring_atom_flags(graph: &MolecularGraph, rings: &[Ring]) -> Vec<bool> {
    let mut flags = vec![false; graph.num_atoms()];
    for ring in rings {
        for &a in &ring.atoms {
            flags[a] = true;
        }
    }
    flags
}

//! Helpers and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use amct::data::{read_csv, Dataset, TaskKind};
use amct::model::{AmctModel, Batch, ModelConfig};
use amct::molgraph::{parse_smiles, MolecularGraph, ParseLimits};
use amct::motif::{build_vocabulary, MotifKind, MotifVocabulary};
use amct::train::PreparedData;

pub fn parse(smiles: &str) -> MolecularGraph {
    parse_smiles(smiles, &ParseLimits::default()).unwrap_or_else(|e| panic!("{smiles}: {e}"))
}

/// Rings, fused rings, bridged systems, spiro centres and chains.
pub const DECOMPOSITION_CORPUS: [&str; 25] = [
    "C1CCCCC1O",
    "CC",
    "CCO",
    "CC(C)(C)C",
    "CCCCCCCC",
    "c1ccccc1",
    "C1CC1",
    "C1CC1C1CC1",
    "c1ccncc1",
    "c1ccoc1",
    "C1CCC2CCCCC2C1",
    "c1ccc2ccccc2c1",
    "c1ccc2cc3ccccc3cc2c1",
    "c1ccc2[nH]ccc2c1",
    "C1CCC2(CC1)CCCC2",
    "C1CC2CCC1C2",
    "C1CC2CCC1CC2",
    "C1C2CC3CC1CC(C2)C3",
    "C12C3C4C1C5C2C3C45",
    "C1CC2CC1C1CCCCC12",
    "C1CCC2C(C1)CCC1C2CCC2CCCC12",
    "O=C(O)c1ccccc1",
    "CC(=O)Oc1ccccc1C(=O)O",
    "C[N+](C)(C)C",
    "O",
];

/// Bonds lying on some cycle: removing the bond keeps its endpoints connected.
pub fn cyclic_bonds(g: &MolecularGraph) -> Vec<bool> {
    let n = g.num_atoms();
    (0..g.bonds().len())
        .map(|skip| {
            let (a, b) = g.bonds()[skip].endpoints;
            let mut seen = vec![false; n];
            let mut stack = vec![a];
            seen[a] = true;
            while let Some(u) = stack.pop() {
                for (i, bond) in g.bonds().iter().enumerate() {
                    if i == skip {
                        continue;
                    }
                    let (x, y) = bond.endpoints;
                    let v = if x == u {
                        y
                    } else if y == u {
                        x
                    } else {
                        continue;
                    };
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            seen[b]
        })
        .collect()
}

/// Every simple cycle as `(sorted atoms, sorted bonds)`, found by testing each
/// subset of cyclic bonds for being a connected 2-regular subgraph.
pub fn all_cycles(g: &MolecularGraph) -> Vec<(Vec<usize>, Vec<usize>)> {
    let cyclic: Vec<usize> = cyclic_bonds(g)
        .iter()
        .enumerate()
        .filter(|(_, c)| **c)
        .map(|(i, _)| i)
        .collect();
    assert!(
        cyclic.len() <= 24,
        "too many ring bonds for exhaustive search"
    );
    let mut out = Vec::new();
    let mut degree = vec![0usize; g.num_atoms()];
    for mask in 1u32..(1u32 << cyclic.len()) {
        if mask.count_ones() < 3 {
            continue;
        }
        let bonds: Vec<usize> = (0..cyclic.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| cyclic[i])
            .collect();
        degree.iter_mut().for_each(|d| *d = 0);
        for &b in &bonds {
            let (x, y) = g.bonds()[b].endpoints;
            degree[x] += 1;
            degree[y] += 1;
        }
        if degree.iter().any(|&d| d != 0 && d != 2) {
            continue;
        }
        let atoms: Vec<usize> = (0..g.num_atoms()).filter(|&a| degree[a] == 2).collect();
        // Connected iff walking the cycle from one atom visits every atom.
        let start = atoms[0];
        let (mut prev, mut cur, mut steps) = (usize::MAX, start, 0);
        loop {
            let next = bonds
                .iter()
                .map(|&b| g.bonds()[b].endpoints)
                .find_map(|(x, y)| {
                    if x == cur && y != prev {
                        Some(y)
                    } else if y == cur && x != prev {
                        Some(x)
                    } else {
                        None
                    }
                })
                .expect("2-regular");
            prev = cur;
            cur = next;
            steps += 1;
            if cur == start {
                break;
            }
        }
        if steps == atoms.len() {
            out.push((atoms, bonds));
        }
    }
    out
}

/// Decomposition computed from first principles: exhaustive cycles, a greedy
/// minimum cycle basis over GF(2) (ties by atom list, then bond list), bond
/// motifs for acyclic bonds, and pairwise merging of rings sharing > 2 atoms.
pub fn oracle_decompose(g: &MolecularGraph) -> (Vec<(Vec<usize>, MotifKind)>, Vec<(usize, usize)>) {
    if g.num_atoms() == 1 {
        return (vec![(vec![0], MotifKind::Single)], vec![]);
    }
    let mut cycles = all_cycles(g);
    cycles.sort_by(|a, b| (a.0.len(), &a.0, &a.1).cmp(&(b.0.len(), &b.0, &b.1)));
    let rank = g.bonds().len() + 1 - g.num_atoms();
    let mut basis: Vec<u128> = Vec::new();
    let mut rings: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for cycle in cycles {
        if rings.len() == rank {
            break;
        }
        let v: u128 = cycle.1.iter().map(|&b| 1u128 << b).sum();
        basis.push(v);
        if gf2_rank(&basis) == basis.len() {
            rings.push(cycle);
        } else {
            basis.pop();
        }
    }
    assert_eq!(rings.len(), rank);

    // Every cyclic bond lies on some basis cycle, since the basis spans all cycles.
    let ring_bond: Vec<bool> = (0..g.bonds().len())
        .map(|b| rings.iter().any(|r| r.1.contains(&b)))
        .collect();
    assert_eq!(ring_bond, cyclic_bonds(g));
    let mut motifs: Vec<(Vec<usize>, MotifKind)> = g
        .bonds()
        .iter()
        .zip(&ring_bond)
        .filter(|(_, r)| !**r)
        .map(|(b, _)| (vec![b.endpoints.0, b.endpoints.1], MotifKind::Bond))
        .collect();
    let mut clusters: Vec<(Vec<usize>, MotifKind)> =
        rings.into_iter().map(|r| (r.0, MotifKind::Ring)).collect();
    loop {
        let pair = (0..clusters.len())
            .flat_map(|i| (i + 1..clusters.len()).map(move |j| (i, j)))
            .find(|&(i, j)| {
                clusters[i]
                    .0
                    .iter()
                    .filter(|a| clusters[j].0.contains(a))
                    .count()
                    > 2
            });
        let Some((i, j)) = pair else { break };
        let (absorbed, _) = clusters.remove(j);
        let mut merged = clusters[i].0.clone();
        merged.extend(absorbed);
        merged.sort_unstable();
        merged.dedup();
        clusters[i] = (merged, MotifKind::Bridged);
    }
    motifs.extend(clusters);
    motifs.sort_by(|a, b| a.0.cmp(&b.0));
    let mut edges = Vec::new();
    for i in 0..motifs.len() {
        for j in i + 1..motifs.len() {
            if motifs[i].0.iter().any(|a| motifs[j].0.contains(a)) {
                edges.push((i, j));
            }
        }
    }
    (motifs, edges)
}

/// Whether the minimum cycle basis is unique: every relevant cycle (one not
/// spanned by strictly shorter cycles) is needed and there are exactly rank of them.
pub fn unique_cycle_basis(g: &MolecularGraph) -> bool {
    let cycles = all_cycles(g);
    let rank = g.bonds().len() + 1 - g.num_atoms();
    let vec = |bonds: &[usize]| -> u128 { bonds.iter().map(|&b| 1u128 << b).sum() };
    let relevant = cycles
        .iter()
        .filter(|(atoms, bonds)| {
            let mut shorter: Vec<u128> = cycles
                .iter()
                .filter(|c| c.0.len() < atoms.len())
                .map(|c| vec(&c.1))
                .collect();
            let before = gf2_rank(&shorter);
            shorter.push(vec(bonds));
            gf2_rank(&shorter) > before
        })
        .count();
    relevant == rank
}

fn gf2_rank(rows: &[u128]) -> usize {
    let mut rows = rows.to_vec();
    let mut rank = 0;
    for bit in 0..128 {
        let Some(p) = (rank..rows.len()).find(|&r| rows[r] >> bit & 1 == 1) else {
            continue;
        };
        rows.swap(rank, p);
        for r in 0..rows.len() {
            if r != rank && rows[r] >> bit & 1 == 1 {
                rows[r] ^= rows[rank];
            }
        }
        rank += 1;
    }
    rank
}

/// Brute-force isomorphism of induced labelled subgraphs: tries every
/// bijection that preserves atom labels, checking all atom pairs.
pub fn isomorphic(g1: &MolecularGraph, a1: &[usize], g2: &MolecularGraph, a2: &[usize]) -> bool {
    if a1.len() != a2.len() {
        return false;
    }
    let label = |g: &MolecularGraph, a: usize| {
        let atom = g.atoms()[a];
        (atom.element, atom.formal_charge, atom.aromatic)
    };
    let bond = |g: &MolecularGraph, x: usize, y: usize| g.bond_between(x, y).map(|b| b.order);
    let mut map = vec![usize::MAX; a1.len()];
    let mut used = vec![false; a2.len()];
    fn search(
        i: usize,
        map: &mut Vec<usize>,
        used: &mut Vec<bool>,
        ok: &dyn Fn(usize, usize, &[usize]) -> bool,
    ) -> bool {
        if i == map.len() {
            return true;
        }
        for j in 0..used.len() {
            if used[j] || !ok(i, j, &map[..i]) {
                continue;
            }
            used[j] = true;
            map[i] = j;
            if search(i + 1, map, used, ok) {
                return true;
            }
            used[j] = false;
        }
        map[i] = usize::MAX;
        false
    }
    let ok = |i: usize, j: usize, prefix: &[usize]| {
        label(g1, a1[i]) == label(g2, a2[j])
            && prefix
                .iter()
                .enumerate()
                .all(|(k, &m)| bond(g1, a1[i], a1[k]) == bond(g2, a2[j], a2[m]))
    };
    search(0, &mut map, &mut used, &ok)
}

/// Contrastive loss by explicit pair loops.
pub fn brute_contrastive(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut total = 0.0;
    let mut anchors = 0;
    for i in 0..rows.len() {
        if labels[i] == 0 {
            continue;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..rows.len() {
            let e = dot(&rows[i], &rows[j]).exp();
            den += e;
            if labels[j] == labels[i] {
                num += e;
            }
        }
        total += -(num / den).ln();
        anchors += 1;
    }
    if anchors == 0 {
        0.0
    } else {
        total / anchors as f64
    }
}

/// AUC as the fraction of (positive, negative) pairs ranked correctly, ties
/// counting one half.
pub fn brute_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let (mut good, mut pairs) = (0.0, 0u64);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1;
                if si > sj {
                    good += 1.0;
                } else if si == sj {
                    good += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| good / pairs as f64)
}

pub const TOY_CSV: &str = "smiles,active\n\
C1CCCCC1O,1\n\
CCO,0\n\
c1ccncc1CC,1\n\
CC(C)(C)C,0\n\
c1ccccc1C(=O)O,1\n\
C1CC2CCC1C2,0\n";

pub struct Toy {
    pub data: Dataset,
    pub vocab: MotifVocabulary,
    pub prepared: PreparedData,
}

pub fn toy(csv: &str, task: TaskKind, config: &ModelConfig) -> Toy {
    let data = read_csv(csv, task, &ParseLimits::default()).unwrap();
    let vocab = build_vocabulary(data.graphs()).unwrap();
    let prepared = PreparedData::new(&data, &vocab, config).unwrap();
    Toy {
        data,
        vocab,
        prepared,
    }
}

pub fn tiny_config(vocab_size: usize, num_tasks: usize) -> ModelConfig {
    ModelConfig {
        d_model: 8,
        heads: 2,
        encoder_layers: 1,
        decoder_layers: 1,
        num_tasks,
        vocab_size,
        dropout: 0.0,
        ..ModelConfig::default()
    }
}

pub fn tiny_model(toy: &Toy, seed: u64) -> AmctModel {
    AmctModel::new(tiny_config(toy.vocab.len(), toy.data.num_tasks()), seed).unwrap()
}

/// Batch of the given data rows with optional extra padding.
pub fn batch_of(p: &PreparedData, rows: &[usize], min_atoms: usize, min_motifs: usize) -> Batch {
    let items: Vec<_> = rows
        .iter()
        .map(|&i| (i, &p.inputs[i], p.labels[i].as_slice()))
        .collect();
    Batch::collate(&items, p.num_tasks, min_atoms, min_motifs)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

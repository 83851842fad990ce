//! Seeded random molecule generator for property tests.
//!
//! Molecules are grown by attaching fragments (chain atoms, aliphatic rings,
//! aromatic rings, fused and bridging paths) so the corpus exercises every
//! decomposition rule while staying within the parser's grammar.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Atom, Bond, BondOrder, Element, MolecularGraph};

const MAX_DEGREE: usize = 4;

struct Builder {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    degree: Vec<usize>,
}

impl Builder {
    fn add_atom(&mut self, element: Element, aromatic: bool) -> usize {
        self.atoms.push(Atom::new(element, 0, aromatic));
        self.degree.push(0);
        self.atoms.len() - 1
    }

    fn has_bond(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.bonds.iter().any(|bd| bd.endpoints == key)
    }

    fn bond(&mut self, a: usize, b: usize, order: BondOrder) {
        self.bonds.push(Bond::new(a, b, order));
        self.degree[a] += 1;
        self.degree[b] += 1;
    }

    fn open_atoms(&self) -> Vec<usize> {
        (0..self.atoms.len())
            .filter(|&i| self.degree[i] < MAX_DEGREE && !is_halogen(self.atoms[i].element))
            .collect()
    }

    fn ring_bonds(&self) -> Vec<(usize, usize)> {
        self.bonds
            .iter()
            .filter(|b| b.order != BondOrder::Double && b.order != BondOrder::Triple)
            .map(|b| b.endpoints)
            .collect()
    }
}

fn is_halogen(e: Element) -> bool {
    matches!(e, Element::F | Element::Cl | Element::Br | Element::I)
}

fn chain_element<R: Rng + ?Sized>(rng: &mut R) -> Element {
    const CHOICES: [(Element, u32); 10] = [
        (Element::C, 60),
        (Element::N, 10),
        (Element::O, 10),
        (Element::S, 4),
        (Element::P, 2),
        (Element::B, 1),
        (Element::F, 4),
        (Element::Cl, 4),
        (Element::Br, 3),
        (Element::I, 2),
    ];
    let total: u32 = CHOICES.iter().map(|c| c.1).sum();
    let mut pick = rng.gen_range(0..total);
    for (e, w) in CHOICES {
        if pick < w {
            return e;
        }
        pick -= w;
    }
    Element::C
}

fn ring_element<R: Rng + ?Sized>(rng: &mut R) -> Element {
    match rng.gen_range(0..10) {
        0 => Element::N,
        1 => Element::O,
        _ => Element::C,
    }
}

/// Generates a connected molecule with at most `max_atoms` atoms (≥ 1).
pub fn random_molecule<R: Rng + ?Sized>(rng: &mut R, max_atoms: usize) -> MolecularGraph {
    let max_atoms = max_atoms.max(1);
    let target = rng.gen_range(1..=max_atoms);
    let mut b = Builder {
        atoms: Vec::new(),
        bonds: Vec::new(),
        degree: Vec::new(),
    };
    b.add_atom(Element::C, false);

    let mut guard = 0;
    while b.atoms.len() < target && guard < 200 {
        guard += 1;
        let room = target - b.atoms.len();
        let open = b.open_atoms();
        let Some(&anchor) = open.choose(rng) else {
            break;
        };
        match rng.gen_range(0..10) {
            // Chain atom with a random acyclic bond order.
            0..=3 => {
                let e = chain_element(rng);
                let v = b.add_atom(e, false);
                let order = if !is_halogen(e) && b.degree[anchor] < 2 && rng.gen_bool(0.15) {
                    if rng.gen_bool(0.3) {
                        BondOrder::Triple
                    } else {
                        BondOrder::Double
                    }
                } else {
                    BondOrder::Single
                };
                b.bond(anchor, v, order);
            }
            // Aliphatic ring hanging off the anchor.
            4 | 5 if room >= 3 => {
                let size = rng.gen_range(3..=room.min(8));
                let first = b.add_atom(ring_element(rng), false);
                b.bond(anchor, first, BondOrder::Single);
                let mut prev = first;
                for _ in 1..size {
                    let v = b.add_atom(ring_element(rng), false);
                    b.bond(prev, v, BondOrder::Single);
                    prev = v;
                }
                b.bond(prev, first, BondOrder::Single);
            }
            // Aromatic ring.
            6 if room >= 5 => {
                let size = if room >= 6 && rng.gen_bool(0.7) { 6 } else { 5 };
                let hetero = rng.gen_range(0..size + 3);
                let atoms: Vec<usize> = (0..size)
                    .map(|i| {
                        let e = if i == hetero {
                            [Element::N, Element::O, Element::S][rng.gen_range(0..3)]
                        } else {
                            Element::C
                        };
                        b.add_atom(e, true)
                    })
                    .collect();
                for i in 0..size {
                    b.bond(atoms[i], atoms[(i + 1) % size], BondOrder::Aromatic);
                }
                b.bond(anchor, atoms[0], BondOrder::Single);
            }
            // Fused ring: new path across an existing ring bond.
            7 | 8 if room >= 2 => {
                let candidates: Vec<(usize, usize)> = b
                    .ring_bonds()
                    .into_iter()
                    .filter(|&(x, y)| {
                        b.degree[x] < MAX_DEGREE
                            && b.degree[y] < MAX_DEGREE
                            && !b.atoms[x].aromatic
                            && !b.atoms[y].aromatic
                    })
                    .collect();
                let Some(&(x, y)) = candidates.choose(rng) else {
                    continue;
                };
                let len = rng.gen_range(1..=room.min(5));
                let mut prev = x;
                for _ in 0..len {
                    let v = b.add_atom(ring_element(rng), false);
                    b.bond(prev, v, BondOrder::Single);
                    prev = v;
                }
                b.bond(prev, y, BondOrder::Single);
            }
            // Bridge between two non-adjacent open atoms.
            _ => {
                let others: Vec<usize> = b
                    .open_atoms()
                    .into_iter()
                    .filter(|&v| v != anchor && !b.has_bond(anchor, v))
                    .filter(|&v| !b.atoms[v].aromatic && !b.atoms[anchor].aromatic)
                    .collect();
                let Some(&other) = others.choose(rng) else {
                    continue;
                };
                if rng.gen_bool(0.5) || room == 0 {
                    b.bond(anchor, other, BondOrder::Single);
                } else {
                    let v = b.add_atom(ring_element(rng), false);
                    b.bond(anchor, v, BondOrder::Single);
                    b.bond(v, other, BondOrder::Single);
                }
            }
        }
    }

    // Occasional charged heteroatom.
    for atom in &mut b.atoms {
        if matches!(atom.element, Element::N | Element::O) && rng.gen_bool(0.05) {
            atom.formal_charge = if atom.element == Element::N { 1 } else { -1 };
        }
    }
    let smiles_free = MolecularGraph::new(b.atoms, b.bonds, String::new())
        .expect("generator builds connected graphs");
    let text = super::to_smiles(&smiles_free);
    MolecularGraph::new(
        smiles_free.atoms().to_vec(),
        smiles_free.bonds().to_vec(),
        text,
    )
    .expect("same graph")
}

/// Relabels atoms so that old atom `i` becomes new atom `perm[i]`.
pub fn relabel(graph: &MolecularGraph, perm: &[usize]) -> MolecularGraph {
    let n = graph.num_atoms();
    assert_eq!(perm.len(), n, "permutation length");
    let mut atoms = vec![graph.atoms()[0]; n];
    for (old, &new) in perm.iter().enumerate() {
        atoms[new] = graph.atoms()[old];
    }
    let bonds = graph
        .bonds()
        .iter()
        .map(|b| Bond::new(perm[b.endpoints.0], perm[b.endpoints.1], b.order))
        .collect();
    MolecularGraph::new(atoms, bonds, graph.source_text()).expect("relabeling keeps validity")
}

/// A uniformly random permutation of `0..n`.
pub fn random_permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

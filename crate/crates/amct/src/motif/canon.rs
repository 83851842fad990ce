//! Canonical keys for induced subgraphs.
//!
//! Atoms are first coloured by label (element, aromatic flag, charge) and
//! refined by neighbourhood signatures until the partition is stable. Ties
//! left after refinement are resolved by individualizing each member of the
//! first non-trivial cell in turn and recursing; the key is the
//! lexicographically smallest encoding over all leaves, which makes it a
//! complete invariant (equal keys iff isomorphic labelled subgraphs).

use std::collections::BTreeMap;

use crate::molgraph::{Atom, BondOrder, MolecularGraph};

type Encoding<'a> = (Vec<&'a str>, Vec<(usize, usize, u8)>);

fn atom_label(atom: &Atom) -> String {
    let mut s = atom.element.symbol().to_string();
    if atom.aromatic {
        s = s.to_ascii_lowercase();
    }
    if atom.formal_charge != 0 {
        s.push_str(&format!("{:+}", atom.formal_charge));
    }
    s
}

fn bond_code(order: BondOrder) -> u8 {
    match order {
        BondOrder::Single => 1,
        BondOrder::Double => 2,
        BondOrder::Triple => 3,
        BondOrder::Aromatic => 4,
    }
}

fn bond_char(code: u8) -> char {
    match code {
        1 => '-',
        2 => '=',
        3 => '#',
        _ => ':',
    }
}

struct Subgraph {
    labels: Vec<String>,
    adjacency: Vec<Vec<(usize, u8)>>,
    edges: Vec<(usize, usize, u8)>,
}

fn induced(graph: &MolecularGraph, atom_indices: &[usize]) -> Subgraph {
    let mut atoms = atom_indices.to_vec();
    atoms.sort_unstable();
    atoms.dedup();
    let local: BTreeMap<usize, usize> = atoms.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    let labels = atoms
        .iter()
        .map(|&a| atom_label(&graph.atoms()[a]))
        .collect();
    let mut adjacency = vec![Vec::new(); atoms.len()];
    let mut edges = Vec::new();
    for bond in graph.bonds() {
        let (a, b) = bond.endpoints;
        if let (Some(&i), Some(&j)) = (local.get(&a), local.get(&b)) {
            let code = bond_code(bond.order);
            adjacency[i].push((j, code));
            adjacency[j].push((i, code));
            edges.push((i, j, code));
        }
    }
    Subgraph {
        labels,
        adjacency,
        edges,
    }
}

/// Re-ranks `colors` by neighbourhood signature until the number of classes
/// stops growing. Output ranks are dense and order-preserving.
fn refine(sub: &Subgraph, mut colors: Vec<usize>) -> Vec<usize> {
    let mut classes = usize::MAX;
    loop {
        let sigs: Vec<(usize, Vec<(u8, usize)>)> = (0..colors.len())
            .map(|i| {
                let mut nb: Vec<(u8, usize)> = sub.adjacency[i]
                    .iter()
                    .map(|&(j, code)| (code, colors[j]))
                    .collect();
                nb.sort_unstable();
                (colors[i], nb)
            })
            .collect();
        let mut distinct = sigs.clone();
        distinct.sort();
        distinct.dedup();
        colors = sigs
            .iter()
            .map(|s| distinct.binary_search(s).expect("present"))
            .collect();
        if distinct.len() == classes {
            return colors;
        }
        classes = distinct.len();
    }
}

fn encode<'a>(sub: &'a Subgraph, colors: &[usize]) -> Encoding<'a> {
    let mut order = vec![0; colors.len()];
    for (atom, &c) in colors.iter().enumerate() {
        order[c] = atom;
    }
    let labels = order.iter().map(|&a| sub.labels[a].as_str()).collect();
    let mut edges: Vec<(usize, usize, u8)> = sub
        .edges
        .iter()
        .map(|&(i, j, code)| {
            let (a, b) = (colors[i], colors[j]);
            (a.min(b), a.max(b), code)
        })
        .collect();
    edges.sort_unstable();
    (labels, edges)
}

fn search<'a>(sub: &'a Subgraph, colors: Vec<usize>, best: &mut Option<Encoding<'a>>) {
    let colors = refine(sub, colors);
    let n = colors.len();
    let mut sizes = vec![0usize; n];
    for &c in &colors {
        sizes[c] += 1;
    }
    match (0..n).find(|&c| sizes[c] > 1) {
        None => {
            let enc = encode(sub, &colors);
            if best.as_ref().map_or(true, |b| enc < *b) {
                *best = Some(enc);
            }
        }
        Some(cell) => {
            for v in (0..n).filter(|&i| colors[i] == cell) {
                let split = colors
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| 2 * c + usize::from(c == cell && i != v))
                    .collect();
                search(sub, split, best);
            }
        }
    }
}

/// Canonical string for the subgraph of `graph` induced by `atom_indices`.
///
/// Format: atom labels in canonical order joined by `.`, then `|`, then
/// bonds as `i<order>j` with `i < j`, sorted and joined by `,`. Bond order
/// symbols are `-`, `=`, `#`, `:`.
pub fn canonical_key(graph: &MolecularGraph, atom_indices: &[usize]) -> String {
    let sub = induced(graph, atom_indices);
    let mut distinct: Vec<&String> = sub.labels.iter().collect();
    distinct.sort();
    distinct.dedup();
    let colors = sub
        .labels
        .iter()
        .map(|l| distinct.binary_search(&l).expect("present"))
        .collect();
    let mut best = None;
    search(&sub, colors, &mut best);
    let (labels, edges) = best.unwrap_or_default();
    let edges: Vec<String> = edges
        .iter()
        .map(|&(i, j, code)| format!("{i}{}{j}", bond_char(code)))
        .collect();
    format!("{}|{}", labels.join("."), edges.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::{parse_smiles, ParseLimits};

    fn key_of(s: &str, atoms: &[usize]) -> String {
        canonical_key(&parse_smiles(s, &ParseLimits::default()).unwrap(), atoms)
    }

    #[test]
    fn benzene_key_independent_of_writing() {
        let a = key_of("c1ccccc1", &[0, 1, 2, 3, 4, 5]);
        let b = key_of("Oc1ccccc1", &[1, 2, 3, 4, 5, 6]);
        let c = key_of("c1cc(CC)ccc1", &[0, 1, 2, 5, 6, 7]);
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a, "c.c.c.c.c.c|0:1,0:2,1:3,2:4,3:5,4:5");
    }

    #[test]
    fn bond_motif_shared_across_hosts() {
        assert_eq!(key_of("C1CCCCC1O", &[5, 6]), key_of("CCO", &[1, 2]));
        assert_ne!(key_of("CO", &[0, 1]), key_of("CN", &[0, 1]));
    }

    #[test]
    fn charges_and_orders_matter() {
        assert_ne!(key_of("C=O", &[0, 1]), key_of("CO", &[0, 1]));
        assert_ne!(key_of("C[O-]", &[0, 1]), key_of("CO", &[0, 1]));
        assert_eq!(key_of("C[O-]", &[0, 1]), "C.O-1|0-1");
    }
}

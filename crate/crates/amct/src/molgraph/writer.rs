use std::collections::BTreeSet;

use super::{Atom, BondOrder, MolecularGraph};

/// Writes a SMILES string that [`parse_smiles`](super::parse_smiles) maps
/// back to an isomorphic graph.
///
/// Traversal is depth-first from atom 0 visiting neighbours in ascending
/// index order, so the output is deterministic for a given atom numbering.
pub fn to_smiles(graph: &MolecularGraph) -> String {
    let n = graph.num_atoms();
    let mut order = Vec::with_capacity(n);
    let mut parent = vec![usize::MAX; n];
    let mut visited = vec![false; n];
    let mut children = vec![Vec::new(); n];
    let mut stack = vec![(0usize, usize::MAX)];
    while let Some((u, p)) = stack.pop() {
        if visited[u] {
            continue;
        }
        visited[u] = true;
        parent[u] = p;
        if p != usize::MAX {
            children[p].push(u);
        }
        order.push(u);
        let mut nbrs: Vec<usize> = graph.neighbors(u).iter().map(|&(v, _)| v).collect();
        nbrs.sort_unstable();
        for v in nbrs.into_iter().rev() {
            if !visited[v] {
                stack.push((v, u));
            }
        }
    }

    let rank: Vec<usize> = {
        let mut r = vec![0; n];
        for (i, &a) in order.iter().enumerate() {
            r[a] = i;
        }
        r
    };
    // Ring-closure edges are every non-tree bond; each is opened at the
    // endpoint written first.
    let mut opens: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut closes: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (bi, bond) in graph.bonds().iter().enumerate() {
        let (a, b) = bond.endpoints;
        if parent[a] == b || parent[b] == a {
            continue;
        }
        let (first, second) = if rank[a] < rank[b] { (a, b) } else { (b, a) };
        opens[first].push(bi);
        closes[second].push(bi);
    }

    let mut out = String::new();
    let mut free: BTreeSet<u32> = (1..100).collect();
    let mut label_of = vec![0u32; graph.bonds().len()];
    write_atom(
        graph,
        0,
        &children,
        &opens,
        &closes,
        &mut label_of,
        &mut free,
        &mut out,
    );
    out
}

fn atom_token(atom: &Atom) -> String {
    let mut sym = atom.element.symbol().to_string();
    if atom.aromatic {
        sym = sym.to_ascii_lowercase();
    }
    if atom.formal_charge == 0 {
        sym
    } else {
        let sign = if atom.formal_charge > 0 { '+' } else { '-' };
        let mag = atom.formal_charge.unsigned_abs();
        if mag == 1 {
            format!("[{sym}{sign}]")
        } else {
            format!("[{sym}{sign}{mag}]")
        }
    }
}

fn bond_token(graph: &MolecularGraph, a: usize, b: usize, order: BondOrder) -> &'static str {
    let both_aromatic = graph.atoms()[a].aromatic && graph.atoms()[b].aromatic;
    match order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

fn ring_label(label: u32) -> String {
    if label < 10 {
        label.to_string()
    } else {
        format!("%{label:02}")
    }
}

#[allow(clippy::too_many_arguments)]
fn write_atom(
    graph: &MolecularGraph,
    u: usize,
    children: &[Vec<usize>],
    opens: &[Vec<usize>],
    closes: &[Vec<usize>],
    label_of: &mut [u32],
    free: &mut BTreeSet<u32>,
    out: &mut String,
) {
    out.push_str(&atom_token(&graph.atoms()[u]));
    for &bi in &closes[u] {
        let label = label_of[bi];
        out.push_str(&ring_label(label));
        free.insert(label);
    }
    for &bi in &opens[u] {
        let bond = graph.bonds()[bi];
        let label = *free.iter().next().expect("fewer than 99 open rings");
        free.remove(&label);
        label_of[bi] = label;
        out.push_str(bond_token(graph, u, bond.other(u), bond.order));
        out.push_str(&ring_label(label));
    }
    let kids = &children[u];
    for (i, &v) in kids.iter().enumerate() {
        let order = graph.bond_between(u, v).expect("tree edge").order;
        let last = i + 1 == kids.len();
        if !last {
            out.push('(');
        }
        out.push_str(bond_token(graph, u, v, order));
        write_atom(graph, v, children, opens, closes, label_of, free, out);
        if !last {
            out.push(')');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::{parse_smiles, ParseLimits};

    fn round(s: &str) -> String {
        to_smiles(&parse_smiles(s, &ParseLimits::default()).unwrap())
    }

    #[test]
    fn simple_outputs() {
        assert_eq!(round("C"), "C");
        assert_eq!(round("CCO"), "CCO");
        assert_eq!(round("C1CCCCC1O"), "C1CCCCC1O");
        assert_eq!(round("c1ccccc1"), "c1ccccc1");
        assert_eq!(round("CC(C)(C)C"), "CC(C)(C)C");
        assert_eq!(round("C[N+](=O)[O-]"), "C[N+](=O)[O-]");
    }

    #[test]
    fn aromatic_single_bond_is_explicit() {
        assert_eq!(round("c1ccccc1-c1ccccc1"), "c1ccccc1-c1ccccc1");
    }
}

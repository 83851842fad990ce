mod common;

use amct::molgraph::fuzz::{random_molecule, random_permutation, relabel};
use amct::molgraph::{parse_smiles, to_smiles, MolecularGraph, ParseLimits};
use amct::motif::{canonical_key, decompose, motif_degree_centrality, MotifKind};
use common::{isomorphic, oracle_decompose, parse, DECOMPOSITION_CORPUS};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fuzz(seed: u64, max_atoms: usize) -> MolecularGraph {
    random_molecule(&mut ChaCha8Rng::seed_from_u64(seed), max_atoms)
}

fn assert_matches_oracle(g: &MolecularGraph) {
    let set = decompose(g);
    let (motifs, edges) = oracle_decompose(g);
    let got: Vec<(Vec<usize>, MotifKind)> = set
        .motifs
        .iter()
        .map(|m| (m.atom_indices.clone(), m.kind))
        .collect();
    assert_eq!(got, motifs, "{}", g.source_text());
    assert_eq!(set.junction_edges, edges, "{}", g.source_text());
}

fn assert_covers(g: &MolecularGraph) {
    let set = decompose(g);
    let mut covered = vec![false; g.num_atoms()];
    for m in &set.motifs {
        assert!(!m.atom_indices.is_empty());
        for &a in &m.atom_indices {
            covered[a] = true;
        }
    }
    assert!(covered.iter().all(|c| *c), "{}", to_smiles(g));
    for &(i, j) in &set.junction_edges {
        assert!(i < j && j < set.len());
    }
    let degrees = motif_degree_centrality(&set);
    assert_eq!(degrees.iter().sum::<usize>(), 2 * set.junction_edges.len());
}

#[test]
fn corpus_matches_brute_force_oracle() {
    for s in DECOMPOSITION_CORPUS {
        assert_matches_oracle(&parse(s));
    }
}

#[test]
fn corpus_spot_checks() {
    let kinds = |s: &str| -> Vec<MotifKind> {
        decompose(&parse(s)).motifs.iter().map(|m| m.kind).collect()
    };
    assert_eq!(kinds("C1CC2CCC1C2"), vec![MotifKind::Bridged]);
    assert_eq!(kinds("C1C2CC3CC1CC(C2)C3"), vec![MotifKind::Bridged]);
    assert_eq!(kinds("C12C3C4C1C5C2C3C45"), vec![MotifKind::Ring; 5]);
    assert_eq!(kinds("C1CCC2(CC1)CCCC2"), vec![MotifKind::Ring; 2]);
    let star = decompose(&parse("CC(C)(C)C"));
    assert_eq!(motif_degree_centrality(&star), vec![3, 3, 3, 3]);
}

#[test]
fn fuzz_molecules_match_oracle() {
    for seed in 0..300 {
        let g = fuzz(seed, 16);
        if common::cyclic_bonds(&g).iter().filter(|c| **c).count() <= 18 {
            assert_matches_oracle(&g);
        }
    }
}

#[test]
fn coverage_on_thousand_fuzz_molecules() {
    for seed in 0..1000 {
        assert_covers(&fuzz(seed, 40));
    }
}

/// Relabeling atoms maps motifs onto motifs with the same keys. Only holds
/// when the smallest rings are unique; tied cage cycles are picked by index.
fn relabeled_keys_agree(g: &MolecularGraph, perm: &[usize]) {
    let h = relabel(g, perm);
    let mut a: Vec<(Vec<usize>, String)> = decompose(g)
        .motifs
        .into_iter()
        .map(|m| {
            let mut atoms: Vec<usize> = m.atom_indices.iter().map(|&i| perm[i]).collect();
            atoms.sort_unstable();
            (atoms, m.canonical_key)
        })
        .collect();
    let mut b: Vec<(Vec<usize>, String)> = decompose(&h)
        .motifs
        .into_iter()
        .map(|m| (m.atom_indices, m.canonical_key))
        .collect();
    a.sort();
    b.sort();
    assert_eq!(a, b, "{}", to_smiles(g));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn smiles_round_trip(seed in any::<u64>()) {
        let g = fuzz(seed, 30);
        let text = to_smiles(&g);
        let back = parse_smiles(&text, &ParseLimits::default()).unwrap();
        prop_assert_eq!(back.num_atoms(), g.num_atoms());
        prop_assert_eq!(back.bonds().len(), g.bonds().len());
        let all_g: Vec<usize> = (0..g.num_atoms()).collect();
        prop_assert_eq!(canonical_key(&g, &all_g), canonical_key(&back, &all_g));
        if g.num_atoms() <= 8 {
            prop_assert!(isomorphic(&g, &all_g, &back, &all_g));
        }
    }

    #[test]
    fn permutation_preserves_keys(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_molecule(&mut rng, 24);
        let perm = random_permutation(&mut rng, g.num_atoms());
        let ring_bonds = common::cyclic_bonds(&g).iter().filter(|c| **c).count();
        if ring_bonds <= 18 && common::unique_cycle_basis(&g) {
            relabeled_keys_agree(&g, &perm);
        }
        let all: Vec<usize> = (0..g.num_atoms()).collect();
        prop_assert_eq!(canonical_key(&g, &all), canonical_key(&relabel(&g, &perm), &all));
    }

    #[test]
    fn decomposition_is_deterministic(seed in any::<u64>()) {
        let g = fuzz(seed, 30);
        prop_assert_eq!(decompose(&g), decompose(&g));
        assert_covers(&g);
    }
}

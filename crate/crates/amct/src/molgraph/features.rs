use serde::{Deserialize, Serialize};

use super::rings::{ring_atom_flags, smallest_rings};
use super::{GraphError, MolecularGraph};

/// The five categorical atom features, in tuple order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureCategory {
    Element,
    Degree,
    FormalCharge,
    Aromatic,
    InRing,
}

/// Cardinality of each categorical atom feature.
///
/// Index conventions:
///
/// | category       | index                                         |
/// |----------------|-----------------------------------------------|
/// | element        | alphabetical: B Br C Cl F I N O P S → 0..=9   |
/// | degree         | heavy-atom degree, 0..=6                      |
/// | formal charge  | charge + 2, so -2..=2 → 0..=4                 |
/// | aromatic       | 0 = no, 1 = yes                               |
/// | in ring        | 0 = no, 1 = yes                               |
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomFeatureSchema {
    pub element: usize,
    pub degree: usize,
    pub formal_charge: usize,
    pub aromatic: usize,
    pub in_ring: usize,
}

impl Default for AtomFeatureSchema {
    fn default() -> Self {
        Self {
            element: 10,
            degree: 7,
            formal_charge: 5,
            aromatic: 2,
            in_ring: 2,
        }
    }
}

impl AtomFeatureSchema {
    pub const CATEGORIES: [FeatureCategory; 5] = [
        FeatureCategory::Element,
        FeatureCategory::Degree,
        FeatureCategory::FormalCharge,
        FeatureCategory::Aromatic,
        FeatureCategory::InRing,
    ];

    pub fn cardinalities(&self) -> [usize; 5] {
        [
            self.element,
            self.degree,
            self.formal_charge,
            self.aromatic,
            self.in_ring,
        ]
    }
}

/// Per-atom feature indices `(element, degree, charge, aromatic, in_ring)`.
pub fn atom_feature_indices(
    graph: &MolecularGraph,
    schema: &AtomFeatureSchema,
) -> Result<Vec<[usize; 5]>, GraphError> {
    let in_ring = ring_atom_flags(graph, &smallest_rings(graph));
    let cards = schema.cardinalities();
    graph
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, atom)| {
            let raw: [i64; 5] = [
                atom.element.index() as i64,
                atom.degree as i64,
                i64::from(atom.formal_charge) + 2,
                i64::from(atom.aromatic),
                i64::from(in_ring[i]),
            ];
            let mut out = [0usize; 5];
            for (k, (&value, &cardinality)) in raw.iter().zip(&cards).enumerate() {
                if value < 0 || value as usize >= cardinality {
                    return Err(GraphError::SchemaOverflow {
                        atom: i,
                        category: AtomFeatureSchema::CATEGORIES[k],
                        value,
                        cardinality,
                    });
                }
                out[k] = value as usize;
            }
            Ok(out)
        })
        .collect()
}

/// Number of bonds incident to each atom.
pub fn degree_centrality(graph: &MolecularGraph) -> Vec<usize> {
    (0..graph.num_atoms())
        .map(|i| graph.neighbors(i).len())
        .collect()
}

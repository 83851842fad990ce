//! Heavy-atom molecular graphs.
//!
//! Hydrogens are implicit and never become nodes; only the ten elements of
//! [`Element`] are accepted. Aromaticity is taken as written in the input.

mod features;
pub mod fuzz;
pub mod rings;
mod smiles;
mod writer;

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{atom_feature_indices, degree_centrality, AtomFeatureSchema, FeatureCategory};
pub use smiles::{parse_smiles, ParseLimits, DEFAULT_MAX_ATOMS};
pub use writer::to_smiles;

/// Supported elements, listed in feature-index order (alphabetical by symbol).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    B,
    Br,
    C,
    Cl,
    F,
    I,
    N,
    O,
    P,
    S,
}

impl Element {
    pub const ALL: [Element; 10] = [
        Element::B,
        Element::Br,
        Element::C,
        Element::Cl,
        Element::F,
        Element::I,
        Element::N,
        Element::O,
        Element::P,
        Element::S,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::B => "B",
            Element::Br => "Br",
            Element::C => "C",
            Element::Cl => "Cl",
            Element::F => "F",
            Element::I => "I",
            Element::N => "N",
            Element::O => "O",
            Element::P => "P",
            Element::S => "S",
        }
    }

    pub fn from_symbol(symbol: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.symbol() == symbol)
    }

    /// Elements that may be written as lowercase aromatic atoms.
    pub fn can_be_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S
        )
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    pub fn symbol(self) -> char {
        match self {
            BondOrder::Single => '-',
            BondOrder::Double => '=',
            BondOrder::Triple => '#',
            BondOrder::Aromatic => ':',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i8,
    pub aromatic: bool,
    /// Heavy-atom neighbour count, maintained by [`MolecularGraph`].
    pub degree: usize,
}

impl Atom {
    pub fn new(element: Element, formal_charge: i8, aromatic: bool) -> Self {
        Self {
            element,
            formal_charge,
            aromatic,
            degree: 0,
        }
    }
}

/// Undirected bond with endpoints stored as `(low, high)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub endpoints: (usize, usize),
    pub order: BondOrder,
}

impl Bond {
    pub fn new(a: usize, b: usize, order: BondOrder) -> Self {
        Self {
            endpoints: (a.min(b), a.max(b)),
            order,
        }
    }

    pub fn other(&self, atom: usize) -> usize {
        if self.endpoints.0 == atom {
            self.endpoints.1
        } else {
            self.endpoints.0
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("empty SMILES string")]
    Empty,
    #[error("unsupported token '{token}' at byte {offset}")]
    UnsupportedToken { token: String, offset: usize },
    #[error("ring closure {label} opened at byte {offset} is never closed")]
    UnclosedRing { label: u32, offset: usize },
    #[error("branch opened at byte {offset} is never closed")]
    UnclosedBranch { offset: usize },
    #[error("molecule has more than one connected fragment")]
    Disconnected,
    #[error("molecule has {count} atoms, limit is {limit}")]
    TooManyAtoms { count: usize, limit: usize },
    #[error("duplicate or self bond between atoms {0} and {1}")]
    DuplicateBond(usize, usize),
    #[error("ring closure {label} has conflicting bond orders at byte {offset}")]
    RingBondConflict { label: u32, offset: usize },
    #[error("formal charge {charge} at byte {offset} is outside [-2, 2]")]
    ChargeOutOfRange { charge: i32, offset: usize },
    #[error("bond references atom {0} which does not exist")]
    AtomOutOfRange(usize),
    #[error("atom {atom}: {category:?} value {value} exceeds schema cardinality {cardinality}")]
    SchemaOverflow {
        atom: usize,
        category: FeatureCategory,
        value: i64,
        cardinality: usize,
    },
}

/// A connected heavy-atom graph.
#[derive(Clone, Debug, PartialEq)]
pub struct MolecularGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    source_text: String,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MolecularGraph {
    /// Validates connectivity and bond endpoints and fills in atom degrees.
    pub fn new(
        mut atoms: Vec<Atom>,
        bonds: Vec<Bond>,
        source_text: impl Into<String>,
    ) -> Result<Self, GraphError> {
        if atoms.is_empty() {
            return Err(GraphError::Empty);
        }
        let n = atoms.len();
        let mut adjacency = vec![Vec::new(); n];
        for (bi, bond) in bonds.iter().enumerate() {
            let (a, b) = bond.endpoints;
            if b >= n {
                return Err(GraphError::AtomOutOfRange(b));
            }
            if a == b || adjacency[a].iter().any(|&(nb, _)| nb == b) {
                return Err(GraphError::DuplicateBond(a, b));
            }
            adjacency[a].push((b, bi));
            adjacency[b].push((a, bi));
        }
        for (atom, nbrs) in atoms.iter_mut().zip(&adjacency) {
            atom.degree = nbrs.len();
        }
        let graph = Self {
            atoms,
            bonds,
            source_text: source_text.into(),
            adjacency,
        };
        if !graph.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(graph)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// `(neighbour, bond index)` pairs for `atom`, in bond insertion order.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a]
            .iter()
            .find(|&&(nb, _)| nb == b)
            .map(|&(_, bi)| &self.bonds[bi])
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.atoms.len()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.atoms.len()
    }
}

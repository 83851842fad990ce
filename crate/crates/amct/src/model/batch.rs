use crate::data::MoleculeInput;

/// Padded multi-molecule input. Per-molecule arrays are flattened row-major:
/// atom arrays are `size × atoms_per_mol`, motif arrays `size × motifs_per_mol`
/// and labels `size × num_tasks`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub atoms_per_mol: usize,
    pub motifs_per_mol: usize,
    pub num_tasks: usize,
    pub atom_features: Vec<[usize; 5]>,
    pub atom_degrees: Vec<usize>,
    pub atom_mask: Vec<bool>,
    pub motif_tokens: Vec<usize>,
    pub motif_degrees: Vec<usize>,
    pub motif_mask: Vec<bool>,
    pub motif_keys: Vec<Vec<String>>,
    /// Zero where the label is missing.
    pub labels: Vec<f64>,
    pub label_mask: Vec<bool>,
    /// Dataset row of each molecule.
    pub rows: Vec<usize>,
}

impl Batch {
    /// Pads `items` to a common size. `min_atoms`/`min_motifs` force extra
    /// padding beyond the largest molecule.
    pub fn collate(
        items: &[(usize, &MoleculeInput, &[Option<f64>])],
        num_tasks: usize,
        min_atoms: usize,
        min_motifs: usize,
    ) -> Batch {
        let n_max = items
            .iter()
            .map(|(_, m, _)| m.num_atoms())
            .max()
            .unwrap_or(0)
            .max(min_atoms);
        let m_max = items
            .iter()
            .map(|(_, m, _)| m.num_motifs())
            .max()
            .unwrap_or(0)
            .max(min_motifs);
        let q = items.len();
        let mut b = Batch {
            size: q,
            atoms_per_mol: n_max,
            motifs_per_mol: m_max,
            num_tasks,
            atom_features: vec![[0; 5]; q * n_max],
            atom_degrees: vec![0; q * n_max],
            atom_mask: vec![false; q * n_max],
            motif_tokens: vec![0; q * m_max],
            motif_degrees: vec![0; q * m_max],
            motif_mask: vec![false; q * m_max],
            motif_keys: Vec::with_capacity(q),
            labels: vec![0.0; q * num_tasks],
            label_mask: vec![false; q * num_tasks],
            rows: Vec::with_capacity(q),
        };
        for (i, &(row, mol, labels)) in items.iter().enumerate() {
            for a in 0..mol.num_atoms() {
                b.atom_features[i * n_max + a] = mol.atom_features[a];
                b.atom_degrees[i * n_max + a] = mol.atom_degrees[a];
                b.atom_mask[i * n_max + a] = true;
            }
            for m in 0..mol.num_motifs() {
                b.motif_tokens[i * m_max + m] = mol.motif_tokens[m];
                b.motif_degrees[i * m_max + m] = mol.motif_degrees[m];
                b.motif_mask[i * m_max + m] = true;
            }
            for (t, label) in labels.iter().enumerate().take(num_tasks) {
                if let Some(y) = label {
                    b.labels[i * num_tasks + t] = *y;
                    b.label_mask[i * num_tasks + t] = true;
                }
            }
            b.motif_keys.push(mol.motif_keys.clone());
            b.rows.push(row);
        }
        b
    }

    pub fn atom_range(&self, mol: usize) -> std::ops::Range<usize> {
        mol * self.atoms_per_mol..(mol + 1) * self.atoms_per_mol
    }

    pub fn motif_range(&self, mol: usize) -> std::ops::Range<usize> {
        mol * self.motifs_per_mol..(mol + 1) * self.motifs_per_mol
    }

    pub fn num_motifs(&self, mol: usize) -> usize {
        self.motif_mask[self.motif_range(mol)]
            .iter()
            .filter(|m| **m)
            .count()
    }
}

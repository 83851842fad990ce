//! Planted-motif benchmark: the label is whether a pyridine ring is present.
//!
//! Every molecule is a chain of fragments with exactly one "slot" ring.
//! Positives fill the slot with pyridine, negatives with a lookalike
//! aromatic ring, so the label is decided by one motif.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The planted ring.
pub const PLANTED_SMILES: &str = "c1ccncc1";

/// Seeds and sizes of the bundled train and test files.
pub const TRAIN_SEED: u64 = 1;
pub const TRAIN_SIZE: usize = 64;
pub const TEST_SEED: u64 = 2;
pub const TEST_SIZE: usize = 32;

const DECOYS: &[&str] = &["c1ccccc1", "c1cncnc1", "c1ccoc1", "c1ccsc1"];

const FILLERS: &[&str] = &[
    "C", "CC", "O", "N", "C(=O)", "C(C)", "C(F)", "C(Cl)", "C1CCCCC1", "C1CCCC1", "C1CC1",
    "c1ccccc1", "c1ccoc1",
];

/// `n` molecules, half positive, as a `smiles,planted` CSV.
pub fn planted_motif_csv(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<(String, u8)> = (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            (molecule(&mut rng, positive), positive as u8)
        })
        .collect();
    rows.shuffle(&mut rng);
    let mut out = String::from("smiles,planted\n");
    for (smiles, y) in rows {
        out.push_str(&format!("{smiles},{y}\n"));
    }
    out
}

fn molecule<R: Rng>(rng: &mut R, positive: bool) -> String {
    let len = rng.gen_range(2..=5);
    let slot = rng.gen_range(0..=len);
    let mut parts: Vec<&str> = (0..len).map(|_| *FILLERS.choose(rng).unwrap()).collect();
    let ring = if positive {
        PLANTED_SMILES
    } else {
        DECOYS.choose(rng).unwrap()
    };
    parts.insert(slot, ring);
    parts.concat()
}

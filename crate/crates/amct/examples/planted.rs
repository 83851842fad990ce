//! Trains on the bundled planted-motif data and checks that the decoder
//! attends to the planted ring.
//!
//! ```text
//! cargo run --release -p amct --example planted -- [epochs] [seed]
//! ```

use amct::data::synthetic::{
    planted_motif_csv, PLANTED_SMILES, TEST_SEED, TEST_SIZE, TRAIN_SEED, TRAIN_SIZE,
};
use amct::data::{read_csv, TaskKind};
use amct::molgraph::{parse_smiles, ParseLimits};
use amct::motif::{build_vocabulary, canonical_key};
use amct::train::{evaluate, explain_data, PreparedData, TrainConfig, Trainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map(|a| a.parse()).transpose()?.unwrap_or(200);
    let seed = args.next().map(|a| a.parse()).transpose()?.unwrap_or(0);

    let limits = ParseLimits::default();
    let task = TaskKind::Classification;
    let train = read_csv(&planted_motif_csv(TRAIN_SIZE, TRAIN_SEED), task, &limits)?;
    let test = read_csv(&planted_motif_csv(TEST_SIZE, TEST_SEED), task, &limits)?;
    let vocab = build_vocabulary(train.graphs())?;

    let cfg = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let train_p = PreparedData::new(&train, &vocab, &cfg.model)?;
    let test_p = PreparedData::new(&test, &vocab, &cfg.model)?;
    let mut trainer = Trainer::from_scratch(cfg, &vocab, 1)?;
    trainer.fit(&train_p, Some(&test_p), |log| {
        if log.epoch % 20 == 0 {
            println!(
                "epoch {:>3}  loss {:.4}  test auc {:.3}",
                log.epoch,
                log.total,
                log.eval_metric.unwrap_or(f64::NAN)
            );
        }
    })?;

    let cfg = &trainer.config;
    let report = evaluate(&trainer.model, &test_p, cfg)?;
    println!("test auc {:.3}", report.mean.unwrap_or(f64::NAN));

    // The planted ring is the first six atoms of its SMILES.
    let planted = canonical_key(&parse_smiles(PLANTED_SMILES, &limits)?, &[0, 1, 2, 3, 4, 5]);
    let explained = explain_data(&trainer.model, &test_p, cfg, 0.5)?;
    let (mut hits, mut positives) = (0, 0);
    for e in &explained {
        let record = &test.records[e.row];
        if record.labels[0] != Some(1.0) {
            continue;
        }
        positives += 1;
        let top = e.properties[0].selected[0].0;
        if record.motifs.motifs[top].canonical_key == planted {
            hits += 1;
        }
    }
    println!("planted ring ranked first in {hits}/{positives} positives");
    Ok(())
}

//! Output file formats and their validation.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, ensure, Context};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use amct::motif::{MotifKind, MotifVocabulary};
use amct::train::{EpochLog, EvalReport, MetricKind};

use crate::manifest::RunManifest;

pub const EXPLAIN_CSV_HEADER: [&str; 4] = ["molecule_id", "property", "motif_id", "weight"];
pub const SWEEP_CSV_HEADER: [&str; 4] = ["lambda_a", "lambda_b", "metric_mean", "metric_std"];
const LOG_FIELDS: [&str; 7] = [
    "epoch",
    "sup_o",
    "sup_h",
    "align",
    "contrastive",
    "total",
    "eval_metric",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Vocab,
    Log,
    Eval,
    Sweep,
    Explain,
    ExplainCsv,
    Manifest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOutput {
    pub checkpoint: String,
    pub dataset_hash: String,
    pub task_names: Vec<String>,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainReport {
    pub checkpoint: String,
    pub manifest: String,
    pub alpha: f64,
    pub molecules: Vec<ExplainedMolecule>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainedMolecule {
    /// Row of the molecule in the input CSV, counting from 0.
    pub molecule_id: usize,
    pub smiles: String,
    pub properties: Vec<ExplainedProperty>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainedProperty {
    pub property: String,
    pub degenerate: bool,
    /// In descending weight order.
    pub motifs: Vec<ExplainedMotif>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainedMotif {
    /// Position in the molecule's decomposition.
    pub motif_index: usize,
    /// Vocabulary id; `None` for motifs outside the vocabulary.
    pub motif_id: Option<usize>,
    pub canonical_key: String,
    pub kind: MotifKind,
    pub atom_indices: Vec<usize>,
    pub weight: f64,
    pub selected: bool,
}

pub fn check(kind: Kind, path: &Path) -> anyhow::Result<String> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match kind {
        Kind::Vocab => {
            let v = MotifVocabulary::from_json(&text)?;
            Ok(format!("vocabulary with {} motifs", v.len()))
        }
        Kind::Log => check_log(&text),
        Kind::Eval => {
            let out: EvalOutput = serde_json::from_str(&text)?;
            check_eval(&out.report)?;
            ensure!(
                out.report.per_task.len() == out.task_names.len(),
                "per_task has {} entries for {} tasks",
                out.report.per_task.len(),
                out.task_names.len()
            );
            Ok("eval report".into())
        }
        Kind::Sweep => check_sweep(&text),
        Kind::Explain => check_explain(&serde_json::from_str(&text)?),
        Kind::ExplainCsv => check_explain_csv(&text),
        Kind::Manifest => {
            let m: RunManifest = serde_json::from_str(&text)?;
            Ok(format!(
                "manifest for {} with {} outputs",
                m.command,
                m.outputs.len()
            ))
        }
    }
}

fn check_log(text: &str) -> anyhow::Result<String> {
    let expected: BTreeSet<&str> = LOG_FIELDS.into_iter().collect();
    let mut last = 0;
    for (i, line) in text.lines().enumerate() {
        let value: serde_json::Value =
            serde_json::from_str(line).with_context(|| format!("log line {}", i + 1))?;
        let keys: BTreeSet<&str> = value
            .as_object()
            .context("log record is not an object")?
            .keys()
            .map(String::as_str)
            .collect();
        ensure!(keys == expected, "log line {} has fields {keys:?}", i + 1);
        let rec: EpochLog = serde_json::from_value(value)?;
        ensure!(
            rec.epoch == last + 1,
            "log line {} has epoch {}",
            i + 1,
            rec.epoch
        );
        last = rec.epoch;
    }
    Ok(format!("training log with {last} epochs"))
}

fn check_eval(r: &EvalReport) -> anyhow::Result<()> {
    for v in r.per_task.iter().flatten().chain(r.mean.iter()) {
        match r.metric {
            MetricKind::Auc => ensure!((0.0..=1.0).contains(v), "AUC {v} outside [0, 1]"),
            MetricKind::Rmse => ensure!(*v >= 0.0, "negative RMSE {v}"),
        }
    }
    ensure!(r.std >= 0.0 && r.runs >= 1, "bad run statistics");
    Ok(())
}

fn check_sweep(text: &str) -> anyhow::Result<String> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    ensure!(
        reader.headers()? == SWEEP_CSV_HEADER.as_slice(),
        "bad sweep header"
    );
    let mut rows = 0;
    for row in reader.records() {
        let row = row?;
        ensure!(
            row.len() == 4,
            "sweep row {} has {} fields",
            rows + 1,
            row.len()
        );
        for (i, cell) in row.iter().enumerate() {
            if i == 2 && cell.is_empty() {
                continue;
            }
            let v: f64 = cell
                .parse()
                .with_context(|| format!("sweep cell {cell:?}"))?;
            ensure!(v.is_finite(), "non-finite sweep value");
        }
        rows += 1;
    }
    Ok(format!("sweep table with {rows} rows"))
}

fn check_explain(report: &ExplainReport) -> anyhow::Result<String> {
    ensure!((0.0..=1.0).contains(&report.alpha), "alpha outside [0, 1]");
    for m in &report.molecules {
        for p in &m.properties {
            ensure!(
                !p.motifs.is_empty(),
                "molecule {} has no motifs",
                m.molecule_id
            );
            let mut prev = f64::INFINITY;
            for motif in &p.motifs {
                ensure!(
                    (0.0..=1.0).contains(&motif.weight),
                    "weight {} outside [0, 1]",
                    motif.weight
                );
                ensure!(
                    motif.selected == (motif.weight >= report.alpha),
                    "selected flag disagrees with alpha for molecule {}",
                    m.molecule_id
                );
                ensure!(
                    motif.weight <= prev,
                    "motifs not in descending weight order"
                );
                prev = motif.weight;
            }
            if p.degenerate {
                ensure!(
                    p.motifs.iter().all(|m| m.weight == 1.0),
                    "degenerate row not all 1.0"
                );
            }
        }
    }
    Ok(format!(
        "explanation of {} molecules",
        report.molecules.len()
    ))
}

fn check_explain_csv(text: &str) -> anyhow::Result<String> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    ensure!(
        reader.headers()? == EXPLAIN_CSV_HEADER.as_slice(),
        "bad explain CSV header"
    );
    let mut rows = 0;
    for row in reader.records() {
        let row = row?;
        ensure!(row.len() == 4, "row {} has {} fields", rows + 1, row.len());
        row[0].parse::<usize>().context("molecule_id")?;
        if !row[2].is_empty() {
            row[2].parse::<usize>().context("motif_id")?;
        }
        let w: f64 = row[3].parse().context("weight")?;
        if !(0.0..=1.0).contains(&w) {
            bail!("weight {w} outside [0, 1]");
        }
        rows += 1;
    }
    Ok(format!("explanation table with {rows} rows"))
}

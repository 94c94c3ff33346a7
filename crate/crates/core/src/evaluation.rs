//! Official-style scoring: macro-averaged F1 over the nine relation
//! families, direction-aware, with Other left out of the average.
//!
//! A prediction is a true positive for a family only when the predicted
//! class equals the gold class (same family and same direction). The
//! precision denominator of a family counts every prediction of that
//! family in either direction; the recall denominator counts every gold
//! example of that family in either direction. Predictions or gold labels
//! of Other count against the families they displace.
//!
//! Worked example with six sentences:
//!
//! ```text
//! gold  CE(e1,e2) CE(e2,e1) CW(e1,e2) Other     ME(e1,e2) CE(e1,e2)
//! pred  CE(e1,e2) CE(e1,e2) CW(e1,e2) CE(e1,e2) Other     CE(e1,e2)
//! ```
//!
//! Cause-Effect: 2 exact matches, 4 predicted, 3 gold, so P = 1/2,
//! R = 2/3 and F1 = 4/7. Component-Whole scores 1. Message-Topic has one
//! gold and no prediction, so it scores 0. The macro average over the three
//! families that occur is (4/7 + 1 + 0)/3 ≈ 0.5238.
//!
//! Families that occur in neither the gold nor the predicted labels are left
//! out of the average.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::RelationSchema;
use crate::error::{Error, Result};

/// Counts per (gold, predicted) class pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionTally {
    counts: Vec<Vec<usize>>,
}

impl ConfusionTally {
    pub fn from_labels(gold: &[usize], pred: &[usize]) -> Result<Self> {
        let schema = RelationSchema::semeval();
        if gold.len() != pred.len() {
            return Err(Error::InvalidArgument(format!(
                "{} gold labels but {} predictions",
                gold.len(),
                pred.len()
            )));
        }
        let n = schema.len();
        let mut counts = vec![vec![0; n]; n];
        for (&g, &p) in gold.iter().zip(pred) {
            for label in [g, p] {
                if label >= n {
                    return Err(Error::Index {
                        what: "relation classes",
                        index: label,
                        size: n,
                    });
                }
            }
            counts[g][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn get(&self, gold: usize, pred: usize) -> usize {
        self.counts[gold][pred]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyScore {
    #[serde(rename = "P")]
    pub precision: f64,
    #[serde(rename = "R")]
    pub recall: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    #[serde(rename = "macroF1")]
    pub macro_f1: f64,
    /// Families that occur in the gold or predicted labels.
    #[serde(rename = "perFamily")]
    pub per_family: BTreeMap<String, FamilyScore>,
    /// Informational 19-way accuracy.
    pub accuracy: f64,
    pub examples: usize,
}

pub fn macro_f1(gold: &[usize], pred: &[usize]) -> Result<ScoreReport> {
    let schema = RelationSchema::semeval();
    let tally = ConfusionTally::from_labels(gold, pred)?;
    let n = schema.len();
    let mut per_family = BTreeMap::new();
    let mut sum = 0.0;
    let mut present = 0usize;
    for fam in 0..schema.num_families() {
        let classes: Vec<usize> = (0..n).filter(|&c| schema.family(c) == Some(fam)).collect();
        let tp: usize = classes.iter().map(|&c| tally.get(c, c)).sum();
        let predicted: usize = classes
            .iter()
            .map(|&c| (0..n).map(|g| tally.get(g, c)).sum::<usize>())
            .sum();
        let actual: usize = classes
            .iter()
            .map(|&c| (0..n).map(|p| tally.get(c, p)).sum::<usize>())
            .sum();
        if predicted == 0 && actual == 0 {
            continue;
        }
        let precision = if predicted == 0 {
            0.0
        } else {
            tp as f64 / predicted as f64
        };
        let recall = if actual == 0 {
            0.0
        } else {
            tp as f64 / actual as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        sum += f1;
        present += 1;
        per_family.insert(
            schema.family_name(fam).to_string(),
            FamilyScore {
                precision,
                recall,
                f1,
            },
        );
    }
    let total = tally.total();
    Ok(ScoreReport {
        macro_f1: if present == 0 { 0.0 } else { sum / present as f64 },
        per_family,
        accuracy: if total == 0 {
            0.0
        } else {
            tally.correct() as f64 / total as f64
        },
        examples: total,
    })
}

/// One `<id>\t<relation>` line per prediction.
pub fn write_predictions(mut out: impl Write, ids: &[u64], pred: &[usize]) -> Result<()> {
    let schema = RelationSchema::semeval();
    if ids.len() != pred.len() {
        return Err(Error::InvalidArgument(format!(
            "{} ids but {} predictions",
            ids.len(),
            pred.len()
        )));
    }
    for (&id, &p) in ids.iter().zip(pred) {
        let name = schema.name(p).ok_or(Error::Index {
            what: "relation classes",
            index: p,
            size: schema.len(),
        })?;
        writeln!(out, "{id}\t{name}").map_err(|e| Error::io("<predictions>", e))?;
    }
    Ok(())
}

pub fn write_predictions_file(path: &Path, ids: &[u64], pred: &[usize]) -> Result<()> {
    let mut buf = Vec::new();
    write_predictions(&mut buf, ids, pred)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

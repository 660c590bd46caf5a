use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::stance::{Stance, StanceAssignment};

/// Two-class confusion counts. `counts[truth][pred]`; truth entities with no
/// prediction land in `unpredicted[truth]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[u64; 2]; 2],
    pub unpredicted: [u64; 2],
}

impl Confusion {
    pub fn record(&mut self, truth: Stance, pred: Option<Stance>) {
        match pred {
            Some(p) => self.counts[truth.index()][p.index()] += 1,
            None => self.unpredicted[truth.index()] += 1,
        }
    }

    pub fn support(&self, class: Stance) -> u64 {
        let c = class.index();
        self.counts[c][0] + self.counts[c][1] + self.unpredicted[c]
    }

    pub fn total(&self) -> u64 {
        self.support(Stance::S1) + self.support(Stance::S2)
    }

    pub fn predicted(&self, class: Stance) -> u64 {
        let c = class.index();
        self.counts[0][c] + self.counts[1][c]
    }

    pub fn true_positives(&self, class: Stance) -> u64 {
        self.counts[class.index()][class.index()]
    }

    /// Exchanges the roles of the two classes.
    pub fn swapped(&self) -> Self {
        let c = self.counts;
        Self {
            counts: [[c[1][1], c[1][0]], [c[0][1], c[0][0]]],
            unpredicted: [self.unpredicted[1], self.unpredicted[0]],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Metrics of one scored prediction set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub per_class: [ClassMetrics; 2],
    pub confusion: Confusion,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl TrialMetrics {
    pub fn from_confusion(confusion: Confusion) -> Self {
        let per_class = Stance::ALL.map(|c| {
            let precision = ratio(confusion.true_positives(c), confusion.predicted(c));
            let recall = ratio(confusion.true_positives(c), confusion.support(c));
            ClassMetrics {
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: confusion.support(c),
            }
        });
        let correct = confusion.true_positives(Stance::S1) + confusion.true_positives(Stance::S2);
        Self {
            precision: (per_class[0].precision + per_class[1].precision) / 2.0,
            recall: (per_class[0].recall + per_class[1].recall) / 2.0,
            f1: (per_class[0].f1 + per_class[1].f1) / 2.0,
            accuracy: ratio(correct, confusion.total()),
            per_class,
            confusion,
        }
    }
}

/// Scores predictions against truth over the entities labeled in `truth`.
/// Unpredicted truth entities count as errors for their class.
pub fn score_trial(
    predictions: &StanceAssignment,
    truth: &StanceAssignment,
) -> Result<TrialMetrics, EvalError> {
    if predictions.domain() != truth.domain() {
        return Err(EvalError::DomainMismatch {
            predictions: predictions.domain(),
            truth: truth.domain(),
        });
    }
    let mut confusion = Confusion::default();
    for (id, t) in truth.iter() {
        confusion.record(t.stance, predictions.stance(id));
    }
    if confusion.total() == 0 {
        return Err(EvalError::EmptyTruth);
    }
    Ok(TrialMetrics::from_confusion(confusion))
}

/// Macro F1 over `(truth, prediction)` pairs.
pub fn macro_f1_pairs(pairs: impl IntoIterator<Item = (Stance, Stance)>) -> f64 {
    let mut c = Confusion::default();
    for (t, p) in pairs {
        c.record(t, Some(p));
    }
    TrialMetrics::from_confusion(c).f1
}

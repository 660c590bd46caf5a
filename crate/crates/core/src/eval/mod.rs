//! Evaluation: macro-averaged precision/recall/F1 over the two stances,
//! multi-trial aggregation, the weighted-random baseline, and report export.

mod metrics;
mod trials;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use metrics::{harmonic, macro_f1_pairs, score_trial, ClassMetrics, Confusion, TrialMetrics};
pub use trials::{
    run_model_trial, run_trial_on, run_trials, run_trials_on, stage_one_quality, EvalScope, ExperimentSpec, ModelKind, PreparedData,
    StageOneQuality, TrialOutcome, TrialRun,
};

use crate::stance::{Assignment, Provenance, Stance, StanceAssignment};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("truth set is empty")]
    EmptyTruth,
    #[error("prediction domain {predictions} differs from truth domain {truth}")]
    DomainMismatch { predictions: usize, truth: usize },
    #[error("class distribution {0:?} must be non-negative and sum to 1")]
    DegenerateDistribution([f64; 2]),
    #[error("at least one trial is required")]
    NoTrials,
    #[error("trial {trial}: {message}")]
    Trial { trial: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mean or spread of the headline metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

/// Per-trial metrics plus their mean and sample standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub trial_count: usize,
    pub trials: Vec<TrialMetrics>,
    pub mean: Summary,
    pub stdev: Summary,
}

impl EvalReport {
    pub fn from_trials(name: impl Into<String>, trials: Vec<TrialMetrics>) -> Result<Self, EvalError> {
        if trials.is_empty() {
            return Err(EvalError::NoTrials);
        }
        let n = trials.len() as f64;
        let pick = |f: fn(&TrialMetrics) -> f64| -> (f64, f64) {
            let mean = trials.iter().map(f).sum::<f64>() / n;
            let sd = if trials.len() > 1 {
                (trials.iter().map(|t| (f(t) - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            (mean, sd)
        };
        let p = pick(|t| t.precision);
        let r = pick(|t| t.recall);
        let f = pick(|t| t.f1);
        let a = pick(|t| t.accuracy);
        Ok(Self {
            name: name.into(),
            trial_count: trials.len(),
            trials,
            mean: Summary {
                precision: p.0,
                recall: r.0,
                f1: f.0,
                accuracy: a.0,
            },
            stdev: Summary {
                precision: p.1,
                recall: r.1,
                f1: f.1,
                accuracy: a.1,
            },
        })
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<(), EvalError> {
        serde_json::to_writer_pretty(&mut out, self).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

/// Single-trial report for one prediction set.
pub fn score(predictions: &StanceAssignment, truth: &StanceAssignment) -> Result<EvalReport, EvalError> {
    EvalReport::from_trials("score", vec![score_trial(predictions, truth)?])
}

/// Independent per-trial seed derived from a base seed (SplitMix64 mix).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Class distribution of a label set, `[p(S1), p(S2)]`.
pub fn class_distribution(labels: &StanceAssignment) -> Option<[f64; 2]> {
    let c = labels.count_by_stance();
    let total = (c[0] + c[1]) as f64;
    (total > 0.0).then(|| [c[0] as f64 / total, c[1] as f64 / total])
}

/// Samples a stance for each of `ids` from `distribution`.
pub fn weighted_random_predictions(
    domain: usize,
    ids: impl IntoIterator<Item = u32>,
    distribution: [f64; 2],
    seed: u64,
) -> Result<StanceAssignment, EvalError> {
    let [p1, p2] = distribution;
    if !(p1 >= 0.0 && p2 >= 0.0 && ((p1 + p2) - 1.0).abs() < 1e-9) {
        return Err(EvalError::DegenerateDistribution(distribution));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pred = StanceAssignment::new(domain);
    for id in ids {
        let stance = if rng.gen::<f64>() < p1 { Stance::S1 } else { Stance::S2 };
        pred.assign(id, Assignment::new(stance, Provenance::Predicted, 0))
            .map_err(|_| EvalError::DomainMismatch {
                predictions: domain,
                truth: id as usize + 1,
            })?;
    }
    Ok(pred)
}

/// Predicts every truth entity by sampling a stance from `distribution`,
/// averaged over `trials` independently seeded draws.
pub fn weighted_random_baseline(
    truth: &StanceAssignment,
    distribution: [f64; 2],
    trials: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    if trials == 0 {
        return Err(EvalError::NoTrials);
    }
    let mut results = Vec::with_capacity(trials);
    for t in 0..trials {
        let ids = truth.iter().map(|(id, _)| id);
        let pred = weighted_random_predictions(truth.domain(), ids, distribution, derive_seed(seed, t as u64))?;
        results.push(score_trial(&pred, truth)?);
    }
    EvalReport::from_trials("weighted-random", results)
}

/// Writes a tab-separated table with one row per model and Prec./Recall/F1
/// columns (in percent) per label source.
pub fn write_table<W: Write>(
    mut out: W,
    sources: &[&str],
    rows: &[(&str, Vec<&EvalReport>)],
) -> Result<(), EvalError> {
    write!(out, "model")?;
    for s in sources {
        write!(out, "\t{s} Prec.\t{s} Recall\t{s} F1")?;
    }
    writeln!(out)?;
    for (model, reports) in rows {
        write!(out, "{model}")?;
        for r in reports {
            write!(
                out,
                "\t{:.2}\t{:.2}\t{:.2}",
                100.0 * r.mean.precision,
                100.0 * r.mean.recall,
                100.0 * r.mean.f1
            )?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(labels: &[Stance]) -> StanceAssignment {
        let mut a = StanceAssignment::new(labels.len());
        for (i, &s) in labels.iter().enumerate() {
            a.assign(i as u32, Assignment::new(s, Provenance::Annotated, 0)).unwrap();
        }
        a
    }

    #[test]
    fn certain_distribution_is_exact() {
        let t = truth(&[Stance::S1; 50]);
        let r = weighted_random_baseline(&t, [1.0, 0.0], 3, 7).unwrap();
        assert_eq!(r.mean.accuracy, 1.0);
        assert_eq!(r.trial_count, 3);
    }

    #[test]
    fn bad_distributions_are_rejected() {
        let t = truth(&[Stance::S1, Stance::S2]);
        for d in [[0.5, 0.6], [-0.1, 1.1], [f64::NAN, 1.0]] {
            assert!(matches!(
                weighted_random_baseline(&t, d, 1, 0),
                Err(EvalError::DegenerateDistribution(_))
            ));
        }
    }

    #[test]
    fn report_statistics() {
        let mut a = TrialMetrics::default();
        a.f1 = 0.5;
        let mut b = TrialMetrics::default();
        b.f1 = 0.7;
        let r = EvalReport::from_trials("x", vec![a.clone(), b]).unwrap();
        assert!((r.mean.f1 - 0.6).abs() < 1e-15);
        assert!((r.stdev.f1 - 0.02f64.sqrt()).abs() < 1e-12);
        let same = EvalReport::from_trials("x", vec![a.clone(), a]).unwrap();
        assert_eq!(same.stdev.f1, 0.0);
        assert!(matches!(EvalReport::from_trials("x", vec![]), Err(EvalError::NoTrials)));
    }

    #[test]
    fn seeds_differ_per_trial() {
        let s: Vec<u64> = (0..5).map(|i| derive_seed(42, i)).collect();
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(s[i], s[j]);
            }
        }
        assert_eq!(derive_seed(42, 3), s[3]);
    }

    #[test]
    fn table_layout() {
        let t = truth(&[Stance::S1, Stance::S2]);
        let r = score(&t, &t).unwrap();
        let mut buf = Vec::new();
        write_table(&mut buf, &["manual"], &[("gat", vec![&r])]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "model\tmanual Prec.\tmanual Recall\tmanual F1\ngat\t100.00\t100.00\t100.00\n"
        );
    }
}

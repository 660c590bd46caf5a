//! Scores predictions against truth labels and compares with the
//! weighted-random baseline.
//!
//! cargo run --example evaluate

use stancegraph::eval::{class_distribution, score, weighted_random_baseline, write_table};
use stancegraph::{Assignment, Provenance, Stance, StanceAssignment};

fn labels(stances: &[Stance], provenance: Provenance) -> StanceAssignment {
    let mut a = StanceAssignment::new(stances.len());
    for (i, &s) in stances.iter().enumerate() {
        a.assign(i as u32, Assignment::new(s, provenance, 0)).expect("fresh id");
    }
    a
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    use Stance::{S1, S2};
    let truth = labels(&[S1, S1, S1, S1, S2, S2, S1, S2, S1, S1], Provenance::Annotated);
    let pred = labels(&[S1, S1, S2, S1, S2, S1, S1, S2, S1, S2], Provenance::Predicted);

    let report = score(&pred, &truth)?;
    let m = &report.trials[0];
    println!("confusion (rows truth, columns prediction): {:?}", m.confusion.counts);
    for (s, c) in [S1, S2].iter().zip(&m.per_class) {
        println!(
            "  {s:?}: precision {:.3}, recall {:.3}, F1 {:.3}, support {}",
            c.precision, c.recall, c.f1, c.support
        );
    }

    let dist = class_distribution(&truth).expect("non-empty truth");
    let baseline = weighted_random_baseline(&truth, dist, 1000, 7)?;
    println!(
        "weighted random over {dist:?}: F1 {:.4} ± {:.4} across {} draws",
        baseline.mean.f1, baseline.stdev.f1, baseline.trial_count
    );
    write_table(
        std::io::stdout().lock(),
        &["truth"],
        &[("fixture", vec![&report]), ("weighted random", vec![&baseline])],
    )?;
    Ok(())
}

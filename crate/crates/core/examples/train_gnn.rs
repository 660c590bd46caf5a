//! Trains a graph classifier on stage-one labels and scores it against the
//! planted communities.
//!
//! cargo run --example train_gnn -- [gat|sage] [preset]

use stancegraph::eval::{score, PreparedData};
use stancegraph::gnn::{predict, train, LayerKind, TrainConfig};
use stancegraph::label_prop::PropagationConfig;
use stancegraph::synth::SynthConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let kind = match args.next().as_deref() {
        None | Some("gat") => LayerKind::Gat,
        Some("sage") => LayerKind::SageMean,
        Some(other) => return Err(format!("unknown model {other}").into()),
    };
    let preset = args.next().unwrap_or_else(|| "noisy-homophilous".into());
    let data = PreparedData::from_config(&SynthConfig::preset(&preset)?)?;

    let stage_one = data.propagate(&PropagationConfig::default())?;
    let labels = data.soft_labels(&stage_one);
    let [s1, s2] = labels.count_by_stance();
    println!(
        "{} users, {s1} + {s2} soft labels after {} propagation iterations",
        data.interaction.n_nodes(),
        stage_one.iterations
    );

    let cfg = TrainConfig::default().with_kind(kind);
    let (model, history) = train(&data.interaction, &labels, &cfg)?;
    for r in history.epochs.iter().step_by(20) {
        println!(
            "epoch {:>3}: train loss {:.4}, val loss {:.4}, val F1 {:.3}",
            r.epoch,
            r.train_loss,
            r.val_loss.unwrap_or(f64::NAN),
            r.val_f1.unwrap_or(f64::NAN)
        );
    }
    println!(
        "{} train / {} validation users; best epoch {}{}; {} parameters",
        history.train_size,
        history.val_size,
        history.best_epoch,
        if history.stopped_early { " (stopped early)" } else { "" },
        model.parameter_count()
    );

    let pred = predict(&model, &data.interaction)?;
    let truth = data.truth_on(data.interaction.users());
    let report = score(&pred.labels, &truth)?;
    println!(
        "{:?} on all users: macro P {:.4}, R {:.4}, F1 {:.4}",
        kind, report.mean.precision, report.mean.recall, report.mean.f1
    );
    Ok(())
}

//! Feature-only baseline: the same soft labels, a dense network that never
//! looks at the interaction graph.
//!
//! cargo run --example mlp_baseline -- [preset]

use stancegraph::eval::{score, PreparedData};
use stancegraph::gnn::{mlp_baseline, predict_features, TrainConfig};
use stancegraph::label_prop::PropagationConfig;
use stancegraph::synth::SynthConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let preset = std::env::args().nth(1).unwrap_or_else(|| "noisy-homophilous".into());
    let data = PreparedData::from_config(&SynthConfig::preset(&preset)?)?;
    let labels = data.soft_labels(&data.propagate(&PropagationConfig::default())?);
    let features = data.feature_matrix();

    let (model, history) = mlp_baseline(&features, &labels, &TrainConfig::default())?;
    let pred = predict_features(&model, &features)?;
    let truth = data.truth_on(data.interaction.users());
    let report = score(&pred.labels, &truth)?;
    println!(
        "{preset}: MLP on {} features, best epoch {}: macro F1 {:.4}, accuracy {:.4}",
        features.cols(),
        history.best_epoch,
        report.mean.f1,
        report.mean.accuracy
    );
    Ok(())
}

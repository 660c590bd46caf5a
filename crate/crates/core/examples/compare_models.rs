//! Runs stage one, then GAT, GraphSAGE, MLP and weighted-random models on a
//! synthetic preset and prints a comparison table.
//!
//! cargo run --example compare_models -- [preset] [trials]

use std::time::Instant;

use stancegraph::eval::{run_trials_on, write_table, ExperimentSpec, ModelKind, PreparedData};
use stancegraph::synth::SynthConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let preset = args.next().unwrap_or_else(|| "noisy-homophilous".into());
    let trials: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    let cfg = SynthConfig::preset(&preset)?;

    let start = Instant::now();
    let data = PreparedData::from_config(&cfg)?;
    println!(
        "{preset}: {} users, {} hashtags, {} interaction edges",
        data.interaction.n_nodes(),
        data.bipartite.n_hashtags(),
        data.interaction.edges().len()
    );
    let mut reports = Vec::new();
    for model in [ModelKind::Gat, ModelKind::Sage, ModelKind::Mlp, ModelKind::WeightedRandom] {
        let t = Instant::now();
        let spec = ExperimentSpec::new(model, cfg.clone());
        let (report, outcomes) = run_trials_on(&data, &spec, trials)?;
        let s1 = outcomes[0].stage_one;
        println!(
            "{:>16}: F1 {:.4} ± {:.4}  (stage one: accuracy {:.4}, coverage {:.4}; {:.1}s)",
            model.as_str(),
            report.mean.f1,
            report.stdev.f1,
            s1.accuracy,
            s1.coverage,
            t.elapsed().as_secs_f64()
        );
        reports.push((model.as_str(), report));
    }
    let rows: Vec<(&str, Vec<_>)> = reports.iter().map(|(m, r)| (*m, vec![r])).collect();
    write_table(std::io::stdout().lock(), &["planted"], &rows)?;
    println!("total {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

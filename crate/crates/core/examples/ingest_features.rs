//! Pools tweet embeddings per user and consolidates interactions into the
//! signed user–user graph.
//!
//! cargo run --example ingest_features -- [tweets.jsonl]

use stancegraph::ingest::{build_interaction_graph, pool_user_features, read_tweets_any};
use stancegraph::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tweets = match std::env::args().nth(1) {
        Some(path) => read_tweets_any(&std::fs::read(path)?)?,
        None => {
            let cfg = SynthConfig {
                users_per_community: [150, 150],
                dim: 16,
                ..SynthConfig::default()
            };
            generate(&cfg)?.tweets
        }
    };
    let dim = tweets.first().map_or(0, |t| t.embedding.len());
    let table = pool_user_features(&tweets, dim)?;
    let (graph, stats) = build_interaction_graph(&tweets, &table)?;
    println!("{} tweets, dimension {dim}", tweets.len());
    println!("{}", serde_json::to_string_pretty(&stats)?);

    let edges = graph.edges();
    let positive = edges.iter().filter(|e| e.weight > 0.0).count();
    let merged = edges.iter().filter(|e| e.count > 1).count();
    println!(
        "{} directed edges: {positive} positive, {} negative or zero, {merged} merged from several interactions",
        edges.len(),
        edges.len() - positive
    );
    let undirected = graph.undirected();
    let max_degree = (0..graph.n_nodes()).map(|v| undirected.neighbors(v).len()).max().unwrap_or(0);
    println!("undirected view: max degree {max_degree}");

    let mut bytes = Vec::new();
    graph.write_binary(&mut bytes)?;
    println!("binary graph {} bytes", bytes.len());
    Ok(())
}

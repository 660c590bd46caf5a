//! Builds the user–hashtag graph from a posts file and round-trips its
//! binary snapshot.
//!
//! cargo run --example build_graph -- [posts.tsv]
//!
//! Without an argument a small synthetic posts set is used.

use std::fs::File;
use std::io::BufReader;

use stancegraph::graph::{build_bipartite, read_posts, BipartiteGraph};
use stancegraph::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let posts = match std::env::args().nth(1) {
        Some(path) => read_posts(BufReader::new(File::open(path)?))?,
        None => {
            let cfg = SynthConfig {
                users_per_community: [200, 200],
                ..SynthConfig::default()
            };
            generate(&cfg)?.posts
        }
    };
    let graph = build_bipartite(posts)?;
    println!(
        "{} users, {} hashtags, {} edges, total weight {}",
        graph.n_users(),
        graph.n_hashtags(),
        graph.n_edges(),
        graph.total_weight()
    );

    let mut tags: Vec<(u32, usize)> = (0..graph.n_hashtags() as u32).map(|h| (h, graph.hashtag_degree(h))).collect();
    tags.sort_by_key(|&(h, d)| (std::cmp::Reverse(d), h));
    for (h, d) in tags.iter().take(5) {
        println!("  #{} used by {d} users", graph.hashtags().name(*h));
    }

    let mut snapshot = Vec::new();
    graph.write_snapshot(&mut snapshot)?;
    let back = BipartiteGraph::read_snapshot(&snapshot[..])?;
    println!(
        "snapshot {} bytes, reload identical: {}",
        snapshot.len(),
        back.edges().eq(graph.edges()) && back.mirror_consistent()
    );
    Ok(())
}

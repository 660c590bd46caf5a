//! Stage-one propagation on a large generated bipartite graph, with timing
//! and peak memory.
//!
//! cargo run --release --example scale_propagation -- [users] [hashtags] [edges]

use std::time::Instant;

use stancegraph::label_prop::{run_propagation, PropagationConfig};
use stancegraph::synth::{peak_rss_bytes, scale_bipartite};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>());
    let users = args.next().transpose()?.unwrap_or(1_000_000);
    let hashtags = args.next().transpose()?.unwrap_or(100_000);
    let edges = args.next().transpose()?.unwrap_or(10_000_000);

    let t = Instant::now();
    let (graph, seeds) = scale_bipartite(users, hashtags, edges, 0.05, 7)?;
    println!(
        "built {} users, {} hashtags, {} edges in {:.1}s",
        graph.n_users(),
        graph.n_hashtags(),
        graph.n_edges(),
        t.elapsed().as_secs_f64()
    );

    let t = Instant::now();
    let cfg = PropagationConfig::with_seeds(&seeds[0], &seeds[1]);
    let out = run_propagation(&graph, &cfg)?;
    let [u1, u2] = out.users.count_by_stance();
    let [h1, h2] = out.hashtags.count_by_stance();
    println!(
        "propagated in {:.1}s: {} iterations (converged: {}), users {u1}/{u2}, hashtags {h1}/{h2}",
        t.elapsed().as_secs_f64(),
        out.iterations,
        out.converged
    );
    if let Some(rss) = peak_rss_bytes() {
        println!("peak resident memory {:.2} GiB", rss as f64 / (1u64 << 30) as f64);
    }
    Ok(())
}

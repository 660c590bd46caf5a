//! Stage one on a three-user graph, one reciprocal step at a time.
//!
//! cargo run --example propagate_hand_trace

use stancegraph::graph::{build_bipartite, Post};
use stancegraph::label_prop::{iterate_once, resolve_seeds, run_propagation, score_hashtags, PropagationConfig};
use stancegraph::StanceNames;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let graph = build_bipartite(vec![
        Post::new("u1", ["h1", "h1", "h1", "h3"]),
        Post::new("u2", ["h2", "h2", "h3", "h3"]),
        Post::new("u3", ["h3", "h3", "h3", "h3", "h3"]),
    ])?;
    let cfg = PropagationConfig::with_seeds(&["h1"], &["h2"]);
    let names = StanceNames::default();

    let (seeds, _) = resolve_seeds(&graph, &cfg)?;
    let mut tags = seeds.clone();
    let mut users = None;
    for it in 1..=3 {
        let (u, t) = iterate_once(&graph, &tags, &seeds, &cfg, it)?;
        println!("iteration {it}");
        for (id, a) in u.iter() {
            println!("  user {} -> {}", graph.users().name(id), names.name(a.stance));
        }
        for s in &score_hashtags(&graph, &u)?.scores {
            println!(
                "  #{}: raw {:+.3}, normalized {:.3}",
                graph.hashtags().name(s.hashtag),
                s.raw,
                s.normalized
            );
        }
        if users.as_ref().is_some_and(|prev: &stancegraph::StanceAssignment| prev.same_labels(&u)) {
            println!("  user labels unchanged: converged");
            break;
        }
        users = Some(u);
        tags = t;
    }

    let out = run_propagation(&graph, &cfg)?;
    println!("\nrun_propagation: {} iterations, converged {}", out.iterations, out.converged);
    out.users.write_tsv(std::io::stdout().lock(), graph.users(), &names)?;
    out.hashtags.write_tsv(std::io::stdout().lock(), graph.hashtags(), &names)?;
    Ok(())
}

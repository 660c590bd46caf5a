//! Generates a planted two-community dataset and writes its files.
//!
//! cargo run --example synth_dataset -- [preset] [out_dir]

use stancegraph::synth::{generate, SynthConfig};
use stancegraph::StanceNames;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let preset = args.next().unwrap_or_else(|| "default".into());
    let cfg = SynthConfig::preset(&preset)?;
    let data = generate(&cfg)?;

    println!("{preset}: {} users, {} posts, {} tweets", cfg.n_users(), data.posts.len(), data.tweets.len());
    println!("hashtag users {}", data.hashtag_users.len());
    println!(
        "cross-community interactions {:.3} (homophily {})",
        data.cross_fraction(),
        cfg.homophily
    );
    println!("seeds S1 {:?}", data.seeds[0]);
    println!("seeds S2 {:?}", data.seeds[1]);

    if let Some(dir) = args.next() {
        std::fs::create_dir_all(&dir)?;
        let files = data.write_dir(dir.as_ref(), &StanceNames::default())?;
        println!("wrote {}, {}, {}", files.posts.display(), files.tweets.display(), files.truth.display());
    }
    Ok(())
}

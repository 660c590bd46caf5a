//! Runs the whole pipeline through the command-line entry point and prints
//! the resulting report.
//!
//! cargo run --example pipeline -- [out_dir]

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "pipeline-run".into());
    stancegraph::cli::run_from([
        "stancegraph",
        "pipeline",
        "--synth",
        "preset=default,users_per_community=[400,400]",
        "--model",
        "gat",
        "--trials",
        "3",
        "--out-dir",
        &out,
    ])?;
    for name in ["report.tsv", "summary.json"] {
        println!("== {name}");
        print!("{}", std::fs::read_to_string(std::path::Path::new(&out).join(name))?);
    }
    println!("== manifest at {out}/manifest.json; re-run with `stancegraph replay {out}/manifest.json`");
    Ok(())
}

//! Annotates a few users against the bundled local mock endpoint, with rate
//! limiting and a resumable journal.
//!
//! cargo run --example annotate_mock

use std::time::Duration;

use stancegraph::annotate::mock::MockServer;
use stancegraph::annotate::{
    annotate_batch, write_results, AnnotationRequest, BatchOptions, EndpointConfig, HttpBackend, SystemClock, Topic,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let server = MockServer::keywords(
        vec![("ban".into(), "pro".into()), ("rights".into(), "anti".into())],
        "neutral".into(),
    )?;
    let backend = HttpBackend::new(
        EndpointConfig {
            url: server.url(),
            ..EndpointConfig::default()
        },
        "local-mock".into(),
    );
    let request = |user: &str, tweets: &[&str]| AnnotationRequest {
        user_id: user.into(),
        tweets: tweets.iter().map(|t| t.to_string()).collect(),
        topic: Topic::GunControl,
    };
    let requests = vec![
        request("alice", &["ban assault weapons", "ban them now", "nice weather"]),
        request("bob", &["protect our rights", "ban nothing"]),
        request("carol", &["lunch", "coffee"]),
        request("dave", &["second amendment rights", "rights matter", "ban?"]),
    ];

    let dir = scratch_dir()?;
    let opts = BatchOptions {
        rate_per_second: Some(20.0),
        concurrency: 2,
        journal: Some(dir.join("journal.jsonl")),
        backoff: Duration::from_millis(50),
        ..BatchOptions::default()
    };
    let report = annotate_batch(&requests, &backend, &opts, &SystemClock::new())?;
    println!("{} calls in {:.2}s", report.calls, report.elapsed.as_secs_f64());
    write_results(std::io::stdout().lock(), &report.results)?;

    let again = annotate_batch(&requests, &backend, &opts, &SystemClock::new())?;
    println!("rerun resumed {} users with {} new calls", again.resumed, again.calls);
    std::fs::remove_dir_all(dir)?;
    Ok(())
}

fn scratch_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("annotate-mock-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

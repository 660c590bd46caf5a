//! Annotation client against in-process fakes and the local mock endpoint.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use stancegraph::annotate::mock::{MockReply, MockServer};
use stancegraph::annotate::{
    annotate_batch, annotate_user, read_journal, read_results, write_results, AnnotateError, AnnotationRequest,
    BatchOptions, ChatBackend, Clock, EndpointConfig, HttpBackend, Topic, TweetClass, VirtualClock,
};
use stancegraph::Stance;

/// Answers from tweet keywords and counts calls per tweet. Tweets listed in
/// `failures` fail that many times before succeeding.
#[derive(Default)]
struct Fake {
    calls: Mutex<HashMap<String, usize>>,
    failures: Mutex<HashMap<String, usize>>,
    cancel_after: Option<(usize, Arc<AtomicBool>)>,
}

impl Fake {
    fn calls_for(&self, tweet: &str) -> usize {
        self.calls.lock().unwrap().get(tweet).copied().unwrap_or(0)
    }

    fn total(&self) -> usize {
        self.calls.lock().unwrap().values().sum()
    }
}

impl ChatBackend for Fake {
    fn classify(&self, topic: Topic, tweet: &str) -> Result<String, AnnotateError> {
        *self.calls.lock().unwrap().entry(tweet.to_string()).or_default() += 1;
        if let Some((n, flag)) = &self.cancel_after {
            if self.total() >= *n {
                flag.store(true, Ordering::SeqCst);
            }
        }
        if let Some(left) = self.failures.lock().unwrap().get_mut(tweet) {
            if *left > 0 {
                *left -= 1;
                return Err(AnnotateError::Status {
                    status: 503,
                    body: "busy".into(),
                });
            }
        }
        let [a, b, n] = topic.options();
        let word = if tweet.contains("[1]") {
            a
        } else if tweet.contains("[2]") {
            b
        } else {
            n
        };
        Ok(MockReply::function_call(word).body)
    }
}

fn request(user: &str, tweets: &[&str]) -> AnnotationRequest {
    AnnotationRequest {
        user_id: user.into(),
        tweets: tweets.iter().map(|t| t.to_string()).collect(),
        topic: Topic::ClimateChange,
    }
}

fn users(n: usize) -> Vec<AnnotationRequest> {
    (0..n)
        .map(|i| request(&format!("user{i:03}"), &[&format!("tweet {i} [{}]", 1 + i % 2)]))
        .collect()
}

fn quick() -> BatchOptions {
    BatchOptions {
        backoff: Duration::from_millis(100),
        ..BatchOptions::default()
    }
}

#[test]
fn all_neutral_user_is_undetermined_and_keeps_replies() {
    let fake = Fake::default();
    let req = request("calm", &["weather today", "lunch", "a walk"]);
    let res = annotate_user(&req, &fake).unwrap();
    assert_eq!(res.label, None);
    assert_eq!(res.classes, vec![TweetClass::Neutral; 3]);
    assert_eq!(res.raw.len(), 3);
    assert_eq!(res.unparseable, 0);
    assert_eq!(res.label_name(), "undetermined");
    assert_eq!(res.reaggregate(), None);
}

#[test]
fn unparseable_replies_count_as_neutral() {
    struct Garbage;
    impl ChatBackend for Garbage {
        fn classify(&self, _: Topic, tweet: &str) -> Result<String, AnnotateError> {
            Ok(if tweet == "ok" {
                MockReply::function_call("belief").body
            } else {
                "not json".into()
            })
        }
    }
    let res = annotate_user(&request("u", &["ok", "x", "y"]), &Garbage).unwrap();
    assert_eq!(res.unparseable, 2);
    assert_eq!(res.label, Some(Stance::S1));
}

#[test]
fn rate_limit_spaces_calls_in_virtual_time() {
    let fake = Fake::default();
    let clock = VirtualClock::new();
    let opts = BatchOptions {
        rate_per_second: Some(2.0),
        concurrency: 4,
        ..quick()
    };
    let report = annotate_batch(&users(100), &fake, &opts, &clock).unwrap();
    assert_eq!(report.results.len(), 100);
    assert_eq!(report.calls, 100);
    assert!(report.elapsed >= Duration::from_secs(50), "{:?}", report.elapsed);
    assert!(clock.now() >= Duration::from_secs(50));
    let names: Vec<&str> = report.results.iter().map(|r| r.user_id.as_str()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted, "results come back in request order");
}

#[test]
fn retries_back_off_exponentially() {
    let fake = Fake::default();
    fake.failures.lock().unwrap().insert("flaky [1]".into(), 2);
    let clock = VirtualClock::new();
    let opts = BatchOptions {
        max_attempts: 3,
        backoff: Duration::from_secs(1),
        ..BatchOptions::default()
    };
    let report = annotate_batch(&[request("f", &["flaky [1]"])], &fake, &opts, &clock).unwrap();
    assert_eq!(report.calls, 3);
    assert_eq!(report.results[0].label, Some(Stance::S1));
    assert_eq!(clock.now(), Duration::from_secs(3));
}

#[test]
fn exhausted_retries_fail_only_that_user() {
    let fake = Fake::default();
    fake.failures.lock().unwrap().insert("down [2]".into(), 10);
    let clock = VirtualClock::new();
    let reqs = vec![request("a", &["fine [1]"]), request("b", &["down [2]"]), request("c", &["fine [2]"])];
    let report = annotate_batch(&reqs, &fake, &quick(), &clock).unwrap();
    assert_eq!(report.failed.len(), 1);
    assert_eq!(report.failed[0].user_id, "b");
    assert!(report.failed[0].error.contains("503"));
    assert_eq!(fake.calls_for("down [2]"), 3);
    let done: Vec<&str> = report.results.iter().map(|r| r.user_id.as_str()).collect();
    assert_eq!(done, ["a", "c"]);
}

#[test]
fn resume_skips_journaled_users() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("journal.jsonl");
    let reqs = users(30);
    let flag = Arc::new(AtomicBool::new(false));
    let first = Fake {
        cancel_after: Some((10, flag.clone())),
        ..Fake::default()
    };
    let opts = BatchOptions {
        journal: Some(journal.clone()),
        cancel: Some(flag),
        ..quick()
    };
    let clock = VirtualClock::new();
    let partial = annotate_batch(&reqs, &first, &opts, &clock).unwrap();
    assert!(partial.cancelled);
    let done = partial.results.len();
    assert!((10..30).contains(&done), "{done}");
    assert_eq!(read_journal(&journal).unwrap().len(), done);

    let second = Fake::default();
    let opts = BatchOptions { cancel: None, ..opts };
    let full = annotate_batch(&reqs, &second, &opts, &clock).unwrap();
    assert_eq!(full.resumed, done);
    assert_eq!(full.results.len(), 30);
    assert_eq!(second.total(), 30 - done);
    for r in &partial.results {
        assert_eq!(second.calls_for(&reqs.iter().find(|q| q.user_id == r.user_id).unwrap().tweets[0]), 0);
    }
    let journaled = read_journal(&journal).unwrap();
    assert_eq!(journaled.len(), 30);
    let mut ids: Vec<&str> = journaled.iter().map(|r| r.user_id.as_str()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 30, "no user journaled twice");
}

#[test]
fn truncated_journal_line_is_redone() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("j.jsonl");
    let reqs = users(3);
    let fake = Fake::default();
    let opts = BatchOptions {
        journal: Some(journal.clone()),
        ..quick()
    };
    annotate_batch(&reqs[..2], &fake, &opts, &VirtualClock::new()).unwrap();
    let mut text = std::fs::read_to_string(&journal).unwrap();
    text.push_str("{\"user_id\":\"user002\",\"top");
    std::fs::write(&journal, text).unwrap();

    let again = Fake::default();
    let report = annotate_batch(&reqs, &again, &opts, &VirtualClock::new()).unwrap();
    assert_eq!(report.resumed, 2);
    assert_eq!(again.total(), 1);
    assert_eq!(read_journal(&journal).unwrap().len(), 3);
}

#[test]
fn duplicate_users_are_rejected() {
    let reqs = vec![request("a", &["x"]), request("a", &["y"])];
    let err = annotate_batch(&reqs, &Fake::default(), &quick(), &VirtualClock::new()).unwrap_err();
    assert!(matches!(err, AnnotateError::InvalidRequest { .. }));
}

#[test]
fn results_file_round_trip() {
    let fake = Fake::default();
    let reqs = vec![
        request("a", &["x [1]", "y [1]", "z"]),
        request("b", &["x [2]"]),
        request("c", &["x [1]", "y [2]"]),
    ];
    let report = annotate_batch(&reqs, &fake, &quick(), &VirtualClock::new()).unwrap();
    let mut buf = Vec::new();
    write_results(&mut buf, &report.results).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(
        text,
        "a\tbelieve\tbelief,belief,neutral\nb\tdisbelieve\tdisbelief\nc\tundetermined\tbelief,disbelief\n"
    );
    let rows = read_results(&buf[..], Topic::ClimateChange).unwrap();
    assert_eq!(rows[0].1, Some(Stance::S1));
    assert_eq!(rows[1].1, Some(Stance::S2));
    assert_eq!(rows[2].1, None);
    assert_eq!(rows[2].2, vec![TweetClass::Stance1, TweetClass::Stance2]);
}

#[test]
fn http_backend_sends_bearer_and_recovers_from_errors() {
    let failures = Arc::new(Mutex::new(1));
    let server = {
        let failures = failures.clone();
        MockServer::start(move |req| {
            let mut f = failures.lock().unwrap();
            if *f > 0 {
                *f -= 1;
                return MockReply::error(500);
            }
            MockReply::function_call(if req.tweet.contains("guns") { "anti" } else { "neutral" })
        })
        .unwrap()
    };
    let backend = HttpBackend::new(
        EndpointConfig {
            url: server.url(),
            ..EndpointConfig::default()
        },
        "secret".into(),
    );
    let req = AnnotationRequest {
        user_id: "u".into(),
        tweets: vec!["more guns".into(), "hello".into()],
        topic: Topic::GunControl,
    };
    let report = annotate_batch(&[req], &backend, &quick(), &VirtualClock::new()).unwrap();
    assert_eq!(report.results[0].label, Some(Stance::S2));
    assert_eq!(report.calls, 3);
    let seen = server.requests();
    assert_eq!(seen.len(), 3);
    assert!(seen.iter().all(|r| r.authorization.as_deref() == Some("Bearer secret")));
    assert_eq!(seen[0].prompt, Topic::GunControl.prompt());
}

#[test]
fn missing_credential_is_reported() {
    let cfg = EndpointConfig {
        api_key_env: "STANCEGRAPH_TEST_UNSET_KEY".into(),
        ..EndpointConfig::default()
    };
    match HttpBackend::from_env(cfg) {
        Err(AnnotateError::MissingCredential(v)) => assert_eq!(v, "STANCEGRAPH_TEST_UNSET_KEY"),
        other => panic!("unexpected {:?}", other.map(|_| ())),
    }
}

//! Feature pooling and interaction consolidation against exact oracles.

mod common;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use stancegraph::graph::{consolidate_interactions, RawInteraction};
use stancegraph::ingest::{
    build_interaction_graph, pool_user_features, read_tweets_any, write_tweet_binary, write_tweet_jsonl,
    InteractionKind, TweetRecord,
};

fn tweet(id: usize, author: &str, target: Option<&str>, sentiment: f64, embedding: Vec<f32>) -> TweetRecord {
    TweetRecord {
        tweet_id: format!("t{id}"),
        author_id: author.into(),
        target_id: target.map(String::from),
        kind: if target.is_some() {
            InteractionKind::Reply
        } else {
            InteractionKind::None
        },
        sentiment,
        embedding,
    }
}

#[test]
fn pair_mean_of_a_thousand_sentiments() {
    // Dyadic values make the exact sum an integer, so the true mean is one
    // correctly rounded division.
    let mut r = common::rng(11);
    let scale = (1u64 << 30) as f64;
    let ints: Vec<i64> = (0..1000).map(|_| r.gen_range(-(1i64 << 30)..=(1i64 << 30))).collect();
    let exact = ints.iter().sum::<i64>() as f64 / (1000.0 * scale);
    let raw: Vec<RawInteraction> = ints
        .iter()
        .map(|&k| RawInteraction {
            source: 0,
            target: 1,
            sentiment: k as f64 / scale,
        })
        .collect();
    let c = consolidate_interactions(raw).unwrap();
    assert_eq!(c.edges.len(), 1);
    assert_eq!(c.edges[0].count, 1000);
    assert!((c.edges[0].weight - exact).abs() < 1e-12, "{} vs {exact}", c.edges[0].weight);
}

#[test]
fn pooled_features_match_two_pass_mean() {
    let mut r = common::rng(12);
    let dim = 16;
    let authors = ["a", "b", "c", "d"];
    let mut records = Vec::new();
    for i in 0..2000 {
        let author = authors[r.gen_range(0..authors.len())];
        let e: Vec<f32> = (0..dim).map(|_| r.gen_range(-3.0f32..3.0) + 100.0).collect();
        records.push(tweet(i, author, None, 0.0, e));
    }
    let table = pool_user_features(&records, dim).unwrap();
    for author in authors {
        let rows: Vec<&TweetRecord> = records.iter().filter(|t| t.author_id == author).collect();
        let mut mean = vec![0.0f64; dim];
        for t in &rows {
            for (m, &x) in mean.iter_mut().zip(&t.embedding) {
                *m += x as f64;
            }
        }
        for m in &mut mean {
            *m /= rows.len() as f64;
        }
        let got = table.feature(author).unwrap();
        assert_eq!(table.tweet_count(author), rows.len() as u64);
        for (g, m) in got.iter().zip(&mean) {
            assert!(((*g as f64) - m).abs() / m.abs() < 1e-6, "{g} vs {m}");
        }
    }
}

#[test]
fn sharded_pooling_matches_single_pass() {
    let mut r = common::rng(13);
    let records: Vec<TweetRecord> = (0..300)
        .map(|i| tweet(i, ["x", "y", "z"][i % 3], None, 0.0, (0..4).map(|_| r.gen_range(-1.0f32..1.0)).collect()))
        .collect();
    let whole = pool_user_features(&records, 4).unwrap();
    let mut left = pool_user_features(&records[..117], 4).unwrap();
    left.merge(pool_user_features(&records[117..], 4).unwrap()).unwrap();
    for u in ["x", "y", "z"] {
        assert_eq!(left.tweet_count(u), whole.tweet_count(u));
        for (a, b) in left.feature(u).unwrap().iter().zip(whole.feature(u).unwrap()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

/// Five users, twelve tweets; the expected edges are worked out by hand.
fn five_users() -> Vec<TweetRecord> {
    let e = |v: f32| vec![v, -v];
    vec![
        tweet(0, "ann", Some("bob"), 0.5, e(1.0)),
        tweet(1, "ann", Some("bob"), -0.25, e(2.0)),
        tweet(2, "ann", Some("bob"), 1.0, e(3.0)),
        tweet(3, "bob", Some("ann"), -1.0, e(4.0)),
        tweet(4, "bob", None, 0.3, e(5.0)),
        tweet(5, "cat", Some("dan"), 0.2, e(6.0)),
        tweet(6, "cat", Some("dan"), 0.4, e(7.0)),
        tweet(7, "dan", Some("cat"), -0.6, e(8.0)),
        tweet(8, "dan", Some("dan"), 0.9, e(9.0)),
        tweet(9, "eve", Some("ann"), 0.0, e(10.0)),
        tweet(10, "eve", Some("fay"), 0.75, e(11.0)),
        tweet(11, "cat", None, -0.1, e(12.0)),
    ]
}

#[test]
fn five_user_fixture() {
    let records = five_users();
    let table = pool_user_features(&records, 2).unwrap();
    let (g, stats) = build_interaction_graph(&records, &table).unwrap();

    let names: Vec<&str> = g.users().names().iter().map(String::as_str).collect();
    assert_eq!(names, ["ann", "bob", "cat", "dan", "eve", "fay"]);
    assert_eq!(stats.featureless_targets, 1);
    assert_eq!(stats.dropped_self_interactions, 1);

    let id = |n: &str| g.users().get(n).unwrap();
    let expected = [
        ("ann", "bob", 1.25 / 3.0),
        ("bob", "ann", -1.0),
        ("cat", "dan", 0.3),
        ("dan", "cat", -0.6),
        ("eve", "ann", 0.0),
        ("eve", "fay", 0.75),
    ];
    assert_eq!(g.edges().len(), expected.len());
    for (s, t, w) in expected {
        let got = g.edge_weight(id(s), id(t)).unwrap();
        assert!((got - w).abs() < 1e-12, "{s}->{t}: {got} vs {w}");
    }

    let feature = |n: &str| g.feature_row(id(n)).to_vec();
    assert_eq!(feature("ann"), vec![2.0, -2.0]);
    assert_eq!(feature("bob"), vec![4.5, -4.5]);
    assert_eq!(feature("cat"), vec![25.0 / 3.0, -25.0 / 3.0]);
    assert_eq!(feature("dan"), vec![8.5, -8.5]);
    assert_eq!(feature("fay"), vec![0.0, 0.0]);
    assert_eq!(g.tweet_counts()[id("cat") as usize], 3);
    assert_eq!(g.tweet_counts()[id("fay") as usize], 0);
}

#[test]
fn graph_ignores_record_order() {
    let records = five_users();
    let table = pool_user_features(&records, 2).unwrap();
    let (a, _) = build_interaction_graph(&records, &table).unwrap();
    let mut shuffled = records.clone();
    shuffled.shuffle(&mut common::rng(3));
    let table = pool_user_features(&shuffled, 2).unwrap();
    let (b, _) = build_interaction_graph(&shuffled, &table).unwrap();
    assert_eq!(a.edges().len(), b.edges().len());
    for (e, f) in a.edges().iter().zip(b.edges()) {
        assert_eq!((e.source, e.target, e.count), (f.source, f.target, f.count));
        assert!((e.weight - f.weight).abs() < 1e-12);
    }
    for (p, q) in a.features().iter().zip(b.features()) {
        assert!((p - q).abs() < 1e-6);
    }
}

#[test]
fn jsonl_and_binary_tweets_agree() {
    let records = five_users();
    let mut json = Vec::new();
    write_tweet_jsonl(&mut json, &records).unwrap();
    let mut bin = Vec::new();
    write_tweet_binary(&mut bin, 2, &records).unwrap();
    assert_eq!(read_tweets_any(&json).unwrap(), records);
    assert_eq!(read_tweets_any(&bin).unwrap(), records);
}

#[test]
fn per_pair_counts_survive_round_trip() {
    let records = five_users();
    let table = pool_user_features(&records, 2).unwrap();
    let (g, _) = build_interaction_graph(&records, &table).unwrap();
    let mut counts: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for e in g.edges() {
        counts.insert((e.source, e.target), e.count);
    }
    let mut buf = Vec::new();
    g.write_binary(&mut buf).unwrap();
    let back = stancegraph::InteractionGraph::read_binary(&buf[..]).unwrap();
    assert_eq!(back.edges(), g.edges());
    assert_eq!(back.features(), g.features());
    assert_eq!(counts[&(g.users().get("ann").unwrap(), g.users().get("bob").unwrap())], 3);
}

//! Invariants checked over generated inputs.

mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;

use stancegraph::eval::{harmonic, score_trial};
use stancegraph::gnn::{ActivationKind, LayerKind, LayerSpec, Model, Neighborhood};
use stancegraph::graph::{build_bipartite, consolidate_interactions, Interner, Post, RawInteraction, SignedEdge};
use stancegraph::label_prop::{run_propagation, PropagationConfig};
use stancegraph::tensor::Matrix;
use stancegraph::{Assignment, InteractionGraph, Provenance, Stance, StanceAssignment};

/// Posts over `u*` users and `h*` hashtags. `h0`/`h1` always occur so they
/// can serve as seeds.
fn posts() -> impl Strategy<Value = Vec<Post>> {
    let post = (0..12usize, prop::collection::vec(0..9usize, 1..5));
    prop::collection::vec(post, 2..40).prop_map(|raw| {
        let mut posts: Vec<Post> = raw
            .into_iter()
            .map(|(u, tags)| Post::new(format!("u{u}"), tags.into_iter().map(|h| format!("h{h}"))))
            .collect();
        posts.push(Post::new("seed_a", ["h0"]));
        posts.push(Post::new("seed_b", ["h1"]));
        posts
    })
}

fn raw_interactions() -> impl Strategy<Value = Vec<RawInteraction>> {
    prop::collection::vec((0..6u32, 0..6u32, -1.0f64..=1.0), 0..60).prop_map(|v| {
        v.into_iter()
            .map(|(source, target, sentiment)| RawInteraction {
                source,
                target,
                sentiment,
            })
            .collect()
    })
}

fn labels(n: usize) -> impl Strategy<Value = Vec<(Stance, Option<Stance>)>> {
    let stance = prop_oneof![Just(Stance::S1), Just(Stance::S2)];
    let pred = prop_oneof![Just(None), Just(Some(Stance::S1)), Just(Some(Stance::S2))];
    prop::collection::vec((stance, pred), 1..n)
}

fn assignments(pairs: &[(Stance, Option<Stance>)]) -> (StanceAssignment, StanceAssignment) {
    let mut truth = StanceAssignment::new(pairs.len());
    let mut pred = StanceAssignment::new(pairs.len());
    for (i, (t, p)) in pairs.iter().enumerate() {
        truth.assign(i as u32, Assignment::new(*t, Provenance::Annotated, 0)).unwrap();
        if let Some(p) = p {
            pred.assign(i as u32, Assignment::new(*p, Provenance::Predicted, 0)).unwrap();
        }
    }
    (truth, pred)
}

fn seeds() -> PropagationConfig {
    PropagationConfig::with_seeds(&["h0"], &["h1"])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bipartite_mirrors_and_conserves_weight(posts in posts()) {
        let g = build_bipartite(posts.clone()).unwrap();
        prop_assert!(g.mirror_consistent());
        let occurrences: u64 = posts.iter().map(|p| p.hashtags.len() as u64).sum();
        prop_assert_eq!(g.total_weight(), occurrences);
        for u in 0..g.n_users() as u32 {
            let name = g.users().name(u);
            let own: u64 = posts.iter().filter(|p| p.user == name).map(|p| p.hashtags.len() as u64).sum();
            let deg: u64 = g.user_neighbors(u).map(|(_, w)| w as u64).sum();
            prop_assert_eq!(own, deg);
        }
    }

    #[test]
    fn consolidation_ignores_order(raw in raw_interactions(), seed in any::<u64>()) {
        let a = consolidate_interactions(raw.clone()).unwrap();
        let mut shuffled = raw;
        shuffled.shuffle(&mut common::rng(seed));
        let b = consolidate_interactions(shuffled).unwrap();
        prop_assert_eq!(a.edges.len(), b.edges.len());
        prop_assert_eq!(a.dropped_self_loops, b.dropped_self_loops);
        for (x, y) in a.edges.iter().zip(&b.edges) {
            prop_assert_eq!((x.source, x.target, x.count), (y.source, y.target, y.count));
            prop_assert!((x.weight - y.weight).abs() < 1e-12);
        }
    }

    #[test]
    fn consolidation_is_idempotent(raw in raw_interactions()) {
        let once = consolidate_interactions(raw).unwrap();
        let again = consolidate_interactions(once.edges.iter().map(|e| RawInteraction {
            source: e.source,
            target: e.target,
            sentiment: e.weight,
        }))
        .unwrap();
        prop_assert_eq!(again.dropped_self_loops, 0);
        prop_assert_eq!(once.edges.len(), again.edges.len());
        for (x, y) in once.edges.iter().zip(&again.edges) {
            prop_assert_eq!((x.source, x.target), (y.source, y.target));
            prop_assert_eq!(x.weight, y.weight);
        }
    }

    #[test]
    fn swapping_seeds_mirrors_labels(posts in posts()) {
        let g = build_bipartite(posts).unwrap();
        let (a, b) = match (run_propagation(&g, &seeds()), run_propagation(&g, &seeds().swapped())) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(a), Err(b)) => {
                prop_assert_eq!(a.to_string(), b.to_string());
                return Ok(());
            }
            (a, b) => return Err(TestCaseError::fail(format!("{a:?} vs {b:?}"))),
        };
        prop_assert!(b.users.same_labels(&a.users.mirrored()));
        prop_assert!(b.hashtags.same_labels(&a.hashtags.mirrored()));
        prop_assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn scaling_weights_keeps_labels(posts in posts(), factor in 2u32..50) {
        let g = build_bipartite(posts).unwrap();
        let scaled = g.scaled(factor).unwrap();
        match (run_propagation(&g, &seeds()), run_propagation(&scaled, &seeds())) {
            (Ok(a), Ok(b)) => {
                prop_assert!(a.users.same_labels(&b.users));
                prop_assert!(a.hashtags.same_labels(&b.hashtags));
            }
            (Err(_), Err(_)) => {}
            (a, b) => return Err(TestCaseError::fail(format!("{a:?} vs {b:?}"))),
        }
    }

    #[test]
    fn propagation_is_deterministic_and_keeps_seeds(posts in posts()) {
        let g = build_bipartite(posts).unwrap();
        if let Ok(a) = run_propagation(&g, &seeds()) {
            let b = run_propagation(&g, &seeds()).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.iterations <= 50);
            let h0 = g.hashtags().get("h0").unwrap();
            let h1 = g.hashtags().get("h1").unwrap();
            prop_assert_eq!(a.hashtags.stance(h0), Some(Stance::S1));
            prop_assert_eq!(a.hashtags.stance(h1), Some(Stance::S2));
        }
    }

    #[test]
    fn macro_f1_matches_definition(pairs in labels(60)) {
        let (truth, pred) = assignments(&pairs);
        let m = score_trial(&pred, &truth).unwrap();
        prop_assert!((m.f1 - common::macro_f1_oracle(&pairs)).abs() < 1e-12);
        for c in &m.per_class {
            prop_assert!((c.f1 - harmonic(c.precision, c.recall)).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&c.f1));
        }
        prop_assert!((m.f1 - (m.per_class[0].f1 + m.per_class[1].f1) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn metrics_are_label_symmetric(pairs in labels(60)) {
        let (truth, pred) = assignments(&pairs);
        let m = score_trial(&pred, &truth).unwrap();
        let s = score_trial(&pred.mirrored(), &truth.mirrored()).unwrap();
        prop_assert!((m.f1 - s.f1).abs() < 1e-12);
        prop_assert!((m.accuracy - s.accuracy).abs() < 1e-12);
        prop_assert_eq!(m.confusion.swapped(), s.confusion);
    }

    #[test]
    fn metrics_ignore_entity_order(pairs in labels(60), seed in any::<u64>()) {
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut common::rng(seed));
        let (t1, p1) = assignments(&pairs);
        let (t2, p2) = assignments(&shuffled);
        let a = score_trial(&p1, &t1).unwrap();
        let b = score_trial(&p2, &t2).unwrap();
        prop_assert_eq!(a.confusion, b.confusion);
        prop_assert!((a.f1 - b.f1).abs() < 1e-15);
    }

    #[test]
    fn layers_are_permutation_equivariant(
        graph_seed in any::<u64>(),
        perm_seed in any::<u64>(),
        kind in prop_oneof![Just(LayerKind::SageMean), Just(LayerKind::Gat)],
        weighted in any::<bool>(),
    ) {
        let mut r = common::rng(graph_seed);
        let g = common::random_graph(&mut r, 9, 4, 0.3);
        let n = g.n_nodes();
        let mut perm: Vec<u32> = (0..n as u32).collect();
        perm.shuffle(&mut common::rng(perm_seed));
        let p = permute(&g, &perm);

        let layers = vec![
            LayerSpec::new(kind, 4, 6, ActivationKind::Elu),
            LayerSpec::new(kind, 6, 2, ActivationKind::Identity),
        ];
        let model = Model::init(layers, weighted, graph_seed).unwrap();
        let x = Matrix::from_vec(n, 4, g.features().iter().map(|&v| v as f64).collect());
        let xp = Matrix::from_vec(n, 4, p.features().iter().map(|&v| v as f64).collect());
        let a = model.logits(&x, Some(&Neighborhood::from_graph(&g, weighted))).unwrap();
        let b = model.logits(&xp, Some(&Neighborhood::from_graph(&p, weighted))).unwrap();
        for v in 0..n {
            for c in 0..2 {
                prop_assert!((a.get(v, c) - b.get(perm[v] as usize, c)).abs() < 1e-9);
            }
        }
    }
}

/// Relabels node `v` as `perm[v]`.
fn permute(g: &InteractionGraph, perm: &[u32]) -> InteractionGraph {
    let n = g.n_nodes();
    let dim = g.dim();
    let mut names = vec![String::new(); n];
    let mut features = vec![0.0f32; n * dim];
    let mut counts = vec![0; n];
    for v in 0..n {
        let to = perm[v] as usize;
        names[to] = g.users().name(v as u32).to_string();
        features[to * dim..(to + 1) * dim].copy_from_slice(g.feature_row(v as u32));
        counts[to] = g.tweet_counts()[v];
    }
    let mut edges: Vec<SignedEdge> = g
        .edges()
        .iter()
        .map(|e| SignedEdge {
            source: perm[e.source as usize],
            target: perm[e.target as usize],
            ..*e
        })
        .collect();
    edges.sort_by_key(|e| (e.source, e.target));
    InteractionGraph::new(Interner::from_names(names), edges, features, dim, counts).unwrap()
}

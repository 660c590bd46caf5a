//! Reciprocal stance label propagation over the user–hashtag bipartite graph.
//!
//! Starting from seed hashtags, labels flow hashtag → user (weighted majority
//! of posting counts) and user → hashtag (group-normalised usage score,
//! min-max normalised, thresholded at `μ ± kσ`) until the labeled user set
//! stops changing.
//!
//! All accumulators are integers, so the result does not depend on the order
//! in which entities are visited.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::graph::{normalize_hashtag, BipartiteGraph};
use crate::stance::{Assignment, Provenance, Stance, StanceAssignment};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PropagationError {
    #[error("seed set for {0} is empty")]
    EmptySeedSet(Stance),
    #[error("hashtag {0:?} is seeded for both stances")]
    OverlappingSeeds(String),
    #[error("max_iterations must be at least 1")]
    ZeroIterations,
    #[error("threshold multiplier must be positive and finite, got {0}")]
    BadMultiplier(f64),
    #[error("no labeled hashtags")]
    NoLabeledHashtags,
    #[error("no labeled users")]
    NoLabeledUsers,
    #[error("labeled hashtag id {0} is not in the graph")]
    UnknownHashtag(u32),
    #[error("labeled user id {0} is not in the graph")]
    UnknownUser(u32),
    #[error("stance group {0} has no labeled users; hashtag scores are undefined")]
    DegenerateDistribution(Stance),
    #[error("no seed hashtag for {0} occurs in the graph")]
    AllSeedsMissing(Stance),
    #[error("line {line}: {message}")]
    SeedFile { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for PropagationError {
    fn from(e: std::io::Error) -> Self {
        PropagationError::Io(e.to_string())
    }
}

/// What to do with users whose weighted stance counts are exactly tied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    #[default]
    LeaveUnlabeled,
    PreferS1,
    PreferS2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationConfig {
    /// Seed hashtags for S1 and S2. Normalised (case-folded, `#` stripped)
    /// on lookup.
    pub seeds: [Vec<String>; 2],
    pub max_iterations: u32,
    /// Standard-deviation multiplier `k` of the `μ ± kσ` thresholds.
    pub std_multiplier: f64,
    pub tie_policy: TiePolicy,
    /// Assign S1 to high scores and S2 to low scores. Off by default: the
    /// score is S2 usage minus S1 usage, so high scores mean S2.
    pub high_score_is_s1: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            seeds: [Vec::new(), Vec::new()],
            max_iterations: 50,
            std_multiplier: 1.0,
            tie_policy: TiePolicy::LeaveUnlabeled,
            high_score_is_s1: false,
        }
    }
}

impl PropagationConfig {
    pub fn with_seeds<S: AsRef<str>>(s1: &[S], s2: &[S]) -> Self {
        Self {
            seeds: [
                s1.iter().map(|s| s.as_ref().to_string()).collect(),
                s2.iter().map(|s| s.as_ref().to_string()).collect(),
            ],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PropagationError> {
        let mut seen = BTreeSet::new();
        for stance in Stance::ALL {
            let set = &self.seeds[stance.index()];
            if set.iter().filter_map(|s| normalize_hashtag(s)).next().is_none() {
                return Err(PropagationError::EmptySeedSet(stance));
            }
        }
        for tag in self.seeds[0].iter().filter_map(|s| normalize_hashtag(s)) {
            seen.insert(tag);
        }
        for tag in self.seeds[1].iter().filter_map(|s| normalize_hashtag(s)) {
            if seen.contains(&tag) {
                return Err(PropagationError::OverlappingSeeds(tag));
            }
        }
        if self.max_iterations == 0 {
            return Err(PropagationError::ZeroIterations);
        }
        if !(self.std_multiplier.is_finite() && self.std_multiplier > 0.0) {
            return Err(PropagationError::BadMultiplier(self.std_multiplier));
        }
        Ok(())
    }

    /// Same configuration with the two seed sets exchanged.
    pub fn swapped(&self) -> Self {
        let tie_policy = match self.tie_policy {
            TiePolicy::PreferS1 => TiePolicy::PreferS2,
            TiePolicy::PreferS2 => TiePolicy::PreferS1,
            t => t,
        };
        Self {
            seeds: [self.seeds[1].clone(), self.seeds[0].clone()],
            tie_policy,
            ..self.clone()
        }
    }
}

/// Hashtag → user step. Each user adjacent to a labeled hashtag accumulates
/// the posting counts per stance and takes the argmax. Users touching no
/// labeled hashtag are absent from the result.
pub fn propagate_tags_to_users(
    graph: &BipartiteGraph,
    hashtags: &StanceAssignment,
    cfg: &PropagationConfig,
    iteration: u32,
) -> Result<StanceAssignment, PropagationError> {
    if hashtags.domain() != graph.n_hashtags() {
        return Err(PropagationError::UnknownHashtag(
            graph.n_hashtags().max(hashtags.domain()) as u32,
        ));
    }
    if hashtags.is_empty() {
        return Err(PropagationError::NoLabeledHashtags);
    }
    let mut counts = vec![[0u64; 2]; graph.n_users()];
    for (h, label) in hashtags.iter() {
        let s = label.stance.index();
        for (u, w) in graph.hashtag_neighbors(h) {
            counts[u as usize][s] += w as u64;
        }
    }
    let mut users = StanceAssignment::new(graph.n_users());
    for (u, c) in counts.iter().enumerate() {
        let stance = match c[0].cmp(&c[1]) {
            _ if c[0] == 0 && c[1] == 0 => continue,
            std::cmp::Ordering::Greater => Stance::S1,
            std::cmp::Ordering::Less => Stance::S2,
            std::cmp::Ordering::Equal => match cfg.tie_policy {
                TiePolicy::LeaveUnlabeled => continue,
                TiePolicy::PreferS1 => Stance::S1,
                TiePolicy::PreferS2 => Stance::S2,
            },
        };
        users
            .assign(u as u32, Assignment::new(stance, Provenance::Propagated, iteration))
            .expect("id within domain");
    }
    Ok(users)
}

/// Raw and min-max normalised score of one hashtag touched by labeled users.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HashtagScore {
    pub hashtag: u32,
    /// `count(S2) / |U_S2| − count(S1) / |U_S1|`
    pub raw: f64,
    pub normalized: f64,
}

/// Scores and thresholds of one user → hashtag step.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSummary {
    pub scores: Vec<HashtagScore>,
    pub mean: f64,
    pub stdev: f64,
    /// False when every score was identical and no hashtag could be labeled.
    pub informative: bool,
}

/// Computes group-normalised usage scores for every hashtag adjacent to at
/// least one labeled user, in hashtag-id order. Each labeled user contributes
/// one count per incident hashtag, regardless of posting count.
pub fn score_hashtags(
    graph: &BipartiteGraph,
    users: &StanceAssignment,
) -> Result<ScoreSummary, PropagationError> {
    if users.domain() != graph.n_users() {
        return Err(PropagationError::UnknownUser(
            graph.n_users().max(users.domain()) as u32,
        ));
    }
    if users.is_empty() {
        return Err(PropagationError::NoLabeledUsers);
    }
    let group = users.count_by_stance();
    for s in Stance::ALL {
        if group[s.index()] == 0 {
            return Err(PropagationError::DegenerateDistribution(s));
        }
    }
    let mut counts = vec![[0u64; 2]; graph.n_hashtags()];
    for (u, label) in users.iter() {
        let s = label.stance.index();
        for (h, _) in graph.user_neighbors(u) {
            counts[h as usize][s] += 1;
        }
    }
    let (n1, n2) = (group[0] as f64, group[1] as f64);
    let mut scores: Vec<HashtagScore> = counts
        .iter()
        .enumerate()
        .filter(|(_, c)| c[0] + c[1] > 0)
        .map(|(h, c)| HashtagScore {
            hashtag: h as u32,
            raw: c[1] as f64 / n2 - c[0] as f64 / n1,
            normalized: 0.0,
        })
        .collect();
    let min = scores.iter().map(|s| s.raw).fold(f64::INFINITY, f64::min);
    let max = scores.iter().map(|s| s.raw).fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Ok(ScoreSummary {
            scores,
            mean: 0.0,
            stdev: 0.0,
            informative: false,
        });
    }
    for s in &mut scores {
        s.normalized = (s.raw - min) / (max - min);
    }
    let n = scores.len() as f64;
    let mean = scores.iter().map(|s| s.normalized).sum::<f64>() / n;
    let var = scores
        .iter()
        .map(|s| (s.normalized - mean).powi(2))
        .sum::<f64>()
        / n;
    let stdev = var.sqrt();
    Ok(ScoreSummary {
        scores,
        mean,
        stdev,
        informative: stdev > 0.0,
    })
}

/// User → hashtag step. Hashtags at or beyond `μ ± kσ` of the normalised
/// score distribution take the dominant stance; seed hashtags keep their seed
/// label regardless of score.
pub fn propagate_users_to_tags(
    graph: &BipartiteGraph,
    users: &StanceAssignment,
    seeds: &StanceAssignment,
    cfg: &PropagationConfig,
    iteration: u32,
) -> Result<StanceAssignment, PropagationError> {
    let summary = score_hashtags(graph, users)?;
    Ok(label_from_scores(graph, &summary, seeds, cfg, iteration))
}

fn label_from_scores(
    graph: &BipartiteGraph,
    summary: &ScoreSummary,
    seeds: &StanceAssignment,
    cfg: &PropagationConfig,
    iteration: u32,
) -> StanceAssignment {
    let mut out = seeds.clone();
    debug_assert_eq!(out.domain(), graph.n_hashtags());
    if !summary.informative {
        warn!("all hashtag scores identical; no hashtags labeled in iteration {iteration}");
        return out;
    }
    let (high, low) = if cfg.high_score_is_s1 {
        (Stance::S1, Stance::S2)
    } else {
        (Stance::S2, Stance::S1)
    };
    let upper = summary.mean + cfg.std_multiplier * summary.stdev;
    let lower = summary.mean - cfg.std_multiplier * summary.stdev;
    for s in &summary.scores {
        let stance = if s.normalized >= upper {
            high
        } else if s.normalized <= lower {
            low
        } else {
            continue;
        };
        // seeds are protected by `assign`
        out.assign(s.hashtag, Assignment::new(stance, Provenance::Propagated, iteration))
            .expect("id within domain");
    }
    out
}

/// Resolves configured seed names against the graph. Seeds that do not occur
/// are dropped with a warning; the names of dropped seeds are returned.
pub fn resolve_seeds(
    graph: &BipartiteGraph,
    cfg: &PropagationConfig,
) -> Result<(StanceAssignment, Vec<String>), PropagationError> {
    cfg.validate()?;
    let mut seeds = StanceAssignment::new(graph.n_hashtags());
    let mut missing = Vec::new();
    for stance in Stance::ALL {
        let mut found = 0;
        for raw in &cfg.seeds[stance.index()] {
            let Some(tag) = normalize_hashtag(raw) else {
                continue;
            };
            match graph.hashtags().get(&tag) {
                Some(h) => {
                    seeds
                        .assign(h, Assignment::new(stance, Provenance::Seed, 0))
                        .expect("id within domain");
                    found += 1;
                }
                None => {
                    warn!("seed hashtag {tag:?} ({stance}) does not occur in the graph; dropped");
                    missing.push(tag);
                }
            }
        }
        if found == 0 {
            return Err(PropagationError::AllSeedsMissing(stance));
        }
    }
    Ok((seeds, missing))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationOutcome {
    pub users: StanceAssignment,
    pub hashtags: StanceAssignment,
    /// Number of hashtag → user steps performed.
    pub iterations: u32,
    pub converged: bool,
    pub dropped_seeds: Vec<String>,
    /// Labeled users per iteration, for diagnostics.
    pub user_counts: Vec<[usize; 2]>,
}

/// One full round: hashtag → user, then user → hashtag. When the users fall
/// into a single stance group the hashtag labels are carried over unchanged.
pub fn iterate_once(
    graph: &BipartiteGraph,
    hashtags: &StanceAssignment,
    seeds: &StanceAssignment,
    cfg: &PropagationConfig,
    iteration: u32,
) -> Result<(StanceAssignment, StanceAssignment), PropagationError> {
    let users = propagate_tags_to_users(graph, hashtags, cfg, iteration)?;
    let next = if users.is_empty() {
        hashtags.clone()
    } else {
        match score_hashtags(graph, &users) {
            Ok(summary) => label_from_scores(graph, &summary, seeds, cfg, iteration),
            Err(PropagationError::DegenerateDistribution(s)) => {
                warn!("iteration {iteration}: no users labeled {s}; hashtag labels unchanged");
                hashtags.clone()
            }
            Err(e) => return Err(e),
        }
    };
    Ok((users, next))
}

/// Entries whose stance did not change keep the iteration at which they were
/// first assigned.
fn keep_first_stamps(mut next: StanceAssignment, prev: &StanceAssignment) -> StanceAssignment {
    let carried: Vec<(u32, Assignment)> = next
        .iter()
        .filter_map(|(id, a)| match prev.get(id) {
            Some(p) if p.stance == a.stance && p.iteration < a.iteration => Some((id, *p)),
            _ => None,
        })
        .collect();
    for (id, a) in carried {
        next.assign(id, a).expect("id within domain");
    }
    next
}

/// Alternates the two propagation steps until the labeled user set (members
/// and stances) repeats, or `max_iterations` is reached.
pub fn run_propagation(
    graph: &BipartiteGraph,
    cfg: &PropagationConfig,
) -> Result<PropagationOutcome, PropagationError> {
    let (seeds, dropped_seeds) = resolve_seeds(graph, cfg)?;
    let mut hashtags = seeds.clone();
    let mut users = StanceAssignment::new(graph.n_users());
    let mut user_counts = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=cfg.max_iterations {
        iterations = k;
        let (next_users, next_tags) = iterate_once(graph, &hashtags, &seeds, cfg, k)?;
        user_counts.push(next_users.count_by_stance());
        let repeated = next_users.same_labels(&users) && (k > 1 || next_users.is_empty());
        users = keep_first_stamps(next_users, &users);
        hashtags = keep_first_stamps(next_tags, &hashtags);
        if repeated {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!(
            "label propagation did not converge within {} iterations",
            cfg.max_iterations
        );
    }
    Ok(PropagationOutcome {
        users,
        hashtags,
        iterations,
        converged,
        dropped_seeds,
        user_counts,
    })
}

/// Reads a seed file: one hashtag per line; blank lines and lines starting
/// with `//` are ignored.
pub fn read_seed_file<R: BufRead>(input: R) -> Result<Vec<String>, PropagationError> {
    let mut seeds = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with("//") {
            continue;
        }
        let tag = normalize_hashtag(t).ok_or_else(|| PropagationError::SeedFile {
            line: i + 1,
            message: format!("invalid hashtag {t:?}"),
        })?;
        seeds.push(tag);
    }
    Ok(seeds)
}

pub fn write_seed_file<W: Write, S: AsRef<str>>(mut out: W, seeds: &[S]) -> std::io::Result<()> {
    for s in seeds {
        writeln!(out, "{}", s.as_ref())?;
    }
    Ok(())
}

/// Seed hashtags for the climate change topic: (believe, disbelieve).
pub fn climate_seeds() -> PropagationConfig {
    PropagationConfig::with_seeds(
        &[
            "actonclimate",
            "climatecrisis",
            "climateaction",
            "climateemergency",
            "climateactionnow",
        ],
        &[
            "climatechangehoax",
            "globalwarminghoax",
            "globalcooling",
            "globalwarmingisahoax",
            "climatehoax",
        ],
    )
}

/// Seed hashtags for the gun control topic: (pro, anti).
pub fn gun_control_seeds() -> PropagationConfig {
    PropagationConfig::with_seeds(
        &["guncontrolnow", "endgunviolence", "gunreform"],
        &["shallnotbeinfringed", "righttobeararms", "gunrights"],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_bipartite, Post};

    /// h1 ∈ S1, h2 ∈ S2; u1:{h1×3,h3×1}, u2:{h2×2,h3×2}, u3:{h3×5}
    fn fixture() -> BipartiteGraph {
        build_bipartite([
            Post::new("u1", ["h1", "h1", "h1", "h3"]),
            Post::new("u2", ["h2", "h2", "h3", "h3"]),
            Post::new("u3", ["h3", "h3", "h3", "h3", "h3"]),
        ])
        .unwrap()
    }

    fn cfg() -> PropagationConfig {
        PropagationConfig::with_seeds(&["h1"], &["h2"])
    }

    fn stance_of(a: &StanceAssignment, g: &BipartiteGraph, user: &str) -> Option<Stance> {
        a.stance(g.users().get(user).unwrap())
    }

    #[test]
    fn weighted_majority_labels_users() {
        let g = build_bipartite([
            Post::new("u", ["a", "a", "a", "b"]),
            Post::new("v", ["a", "a", "b", "b"]),
        ])
        .unwrap();
        let cfg = PropagationConfig::with_seeds(&["a"], &["b"]);
        let (seeds, _) = resolve_seeds(&g, &cfg).unwrap();
        let users = propagate_tags_to_users(&g, &seeds, &cfg, 1).unwrap();
        assert_eq!(stance_of(&users, &g, "u"), Some(Stance::S1));
        assert_eq!(stance_of(&users, &g, "v"), None);

        let prefer = PropagationConfig {
            tie_policy: TiePolicy::PreferS2,
            ..cfg
        };
        let users = propagate_tags_to_users(&g, &seeds, &prefer, 1).unwrap();
        assert_eq!(stance_of(&users, &g, "v"), Some(Stance::S2));
    }

    #[test]
    fn fixture_first_step() {
        let g = fixture();
        let (seeds, _) = resolve_seeds(&g, &cfg()).unwrap();
        let users = propagate_tags_to_users(&g, &seeds, &cfg(), 1).unwrap();
        assert_eq!(stance_of(&users, &g, "u1"), Some(Stance::S1));
        assert_eq!(stance_of(&users, &g, "u2"), Some(Stance::S2));
        assert_eq!(stance_of(&users, &g, "u3"), None);
    }

    #[test]
    fn fixture_scores_match_hand_trace() {
        let g = fixture();
        let (seeds, _) = resolve_seeds(&g, &cfg()).unwrap();
        let users = propagate_tags_to_users(&g, &seeds, &cfg(), 1).unwrap();
        let summary = score_hashtags(&g, &users).unwrap();
        let by_name = |name: &str| {
            let h = g.hashtags().get(name).unwrap();
            *summary.scores.iter().find(|s| s.hashtag == h).unwrap()
        };
        assert_eq!(by_name("h1").raw, -1.0);
        assert_eq!(by_name("h2").raw, 1.0);
        assert_eq!(by_name("h3").raw, 0.0);
        assert_eq!(by_name("h1").normalized, 0.0);
        assert_eq!(by_name("h2").normalized, 1.0);
        assert_eq!(by_name("h3").normalized, 0.5);
        assert!((summary.mean - 0.5).abs() < 1e-15);
        assert!((summary.stdev - (1.0f64 / 6.0).sqrt()).abs() < 1e-15);

        let tags = propagate_users_to_tags(&g, &users, &seeds, &cfg(), 1).unwrap();
        let h3 = g.hashtags().get("h3").unwrap();
        assert_eq!(tags.stance(h3), None);
        assert_eq!(tags.len(), 2);
    }

    #[test]
    fn equal_usage_scores_zero() {
        let g = build_bipartite([
            Post::new("a1", ["s1", "x"]),
            Post::new("a2", ["s1"]),
            Post::new("b1", ["s2", "x"]),
            Post::new("b2", ["s2"]),
        ])
        .unwrap();
        let cfg = PropagationConfig::with_seeds(&["s1"], &["s2"]);
        let (seeds, _) = resolve_seeds(&g, &cfg).unwrap();
        let users = propagate_tags_to_users(&g, &seeds, &cfg, 1).unwrap();
        let summary = score_hashtags(&g, &users).unwrap();
        let x = g.hashtags().get("x").unwrap();
        let sx = summary.scores.iter().find(|s| s.hashtag == x).unwrap();
        assert_eq!(sx.raw, 0.0);
    }

    #[test]
    fn degenerate_group_is_an_error() {
        let g = fixture();
        let mut users = StanceAssignment::new(g.n_users());
        users
            .assign(0, Assignment::new(Stance::S1, Provenance::Propagated, 1))
            .unwrap();
        assert_eq!(
            score_hashtags(&g, &users),
            Err(PropagationError::DegenerateDistribution(Stance::S2))
        );
        assert_eq!(
            score_hashtags(&g, &StanceAssignment::new(g.n_users())),
            Err(PropagationError::NoLabeledUsers)
        );
    }

    #[test]
    fn identical_scores_label_nothing_new() {
        // both groups use both hashtags equally
        let g = build_bipartite([Post::new("a", ["s1", "s2", "s1"]), Post::new("b", ["s2", "s1", "s2"])])
            .unwrap();
        let cfg = PropagationConfig::with_seeds(&["s1"], &["s2"]);
        let (seeds, _) = resolve_seeds(&g, &cfg).unwrap();
        let users = propagate_tags_to_users(&g, &seeds, &cfg, 1).unwrap();
        assert_eq!(users.count_by_stance(), [1, 1]);
        let summary = score_hashtags(&g, &users).unwrap();
        assert!(!summary.informative);
        let tags = propagate_users_to_tags(&g, &users, &seeds, &cfg, 1).unwrap();
        assert_eq!(tags, seeds);
    }

    #[test]
    fn fixture_converges_in_two_iterations() {
        let g = fixture();
        let out = run_propagation(&g, &cfg()).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 2);
        assert_eq!(stance_of(&out.users, &g, "u1"), Some(Stance::S1));
        assert_eq!(stance_of(&out.users, &g, "u2"), Some(Stance::S2));
        assert_eq!(stance_of(&out.users, &g, "u3"), None);
        let tag = |n: &str| out.hashtags.stance(g.hashtags().get(n).unwrap());
        assert_eq!(tag("h1"), Some(Stance::S1));
        assert_eq!(tag("h2"), Some(Stance::S2));
        assert_eq!(tag("h3"), None);
    }

    #[test]
    fn missing_seeds_are_dropped() {
        let g = build_bipartite([
            Post::new("u1", ["other"]),
            Post::new("u2", ["s1"]),
        ])
        .unwrap();
        let cfg = PropagationConfig::with_seeds(&["s1", "missing"], &["other"]);
        let out = run_propagation(&g, &cfg).unwrap();
        assert_eq!(out.dropped_seeds, vec!["missing".to_string()]);
        assert!(out.converged);
    }

    #[test]
    fn no_seed_users_gives_empty_assignment() {
        let users = crate::graph::Interner::from_names(["u1", "u2"]);
        let hashtags = crate::graph::Interner::from_names(["s1", "s2", "x"]);
        // seeds present as nodes, but the only edges touch "x"
        let g = BipartiteGraph::from_parts(users, hashtags, vec![(0, 2, 1), (1, 2, 4)]).unwrap();
        let out = run_propagation(&g, &PropagationConfig::with_seeds(&["s1"], &["s2"])).unwrap();
        assert!(out.users.is_empty());
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn all_seeds_missing_is_fatal() {
        let g = fixture();
        let cfg = PropagationConfig::with_seeds(&["nope"], &["h2"]);
        assert_eq!(
            run_propagation(&g, &cfg),
            Err(PropagationError::AllSeedsMissing(Stance::S1))
        );
    }

    #[test]
    fn config_validation() {
        assert!(matches!(
            PropagationConfig::with_seeds::<&str>(&[], &["a"]).validate(),
            Err(PropagationError::EmptySeedSet(Stance::S1))
        ));
        assert!(matches!(
            PropagationConfig::with_seeds(&["#A"], &["a"]).validate(),
            Err(PropagationError::OverlappingSeeds(_))
        ));
        let mut c = cfg();
        c.max_iterations = 0;
        assert_eq!(c.validate(), Err(PropagationError::ZeroIterations));
        c.max_iterations = 3;
        c.std_multiplier = 0.0;
        assert!(matches!(c.validate(), Err(PropagationError::BadMultiplier(_))));
        assert!(climate_seeds().validate().is_ok());
        assert!(gun_control_seeds().validate().is_ok());
    }

    #[test]
    fn high_score_is_s1_flips_propagated_labels() {
        let g = fixture();
        let mut c = cfg();
        c.high_score_is_s1 = true;
        let (seeds, _) = resolve_seeds(&g, &c).unwrap();
        let users = propagate_tags_to_users(&g, &seeds, &c, 1).unwrap();
        // seeds keep their labels, so only non-seed hashtags could flip; add one
        let tags = propagate_users_to_tags(&g, &users, &seeds, &c, 1).unwrap();
        assert_eq!(tags, seeds);

        let g = build_bipartite([
            Post::new("a", ["s1", "x"]),
            Post::new("b", ["s2", "y"]),
            Post::new("c", ["s2"]),
            Post::new("d", ["s1", "z"]),
            Post::new("e", ["s2", "z"]),
        ])
        .unwrap();
        let base = PropagationConfig::with_seeds(&["s1"], &["s2"]);
        let flipped = PropagationConfig {
            high_score_is_s1: true,
            ..base.clone()
        };
        let (seeds, _) = resolve_seeds(&g, &base).unwrap();
        let users = propagate_tags_to_users(&g, &seeds, &base, 1).unwrap();
        let a = propagate_users_to_tags(&g, &users, &seeds, &base, 1).unwrap();
        let b = propagate_users_to_tags(&g, &users, &seeds, &flipped, 1).unwrap();
        for (h, label) in a.iter().filter(|(_, l)| l.provenance == Provenance::Propagated) {
            assert_eq!(b.stance(h), Some(label.stance.opposite()));
        }
    }

    #[test]
    fn seed_file_parsing() {
        let seeds = read_seed_file("#GunReform\n\n// comment\nendgunviolence\n".as_bytes()).unwrap();
        assert_eq!(seeds, vec!["gunreform", "endgunviolence"]);
        assert!(read_seed_file("##\n".as_bytes()).is_err());
    }
}

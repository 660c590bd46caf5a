//! Planted-partition datasets: two communities with their own hashtags,
//! homophilous signed interactions and community-centred tweet embeddings.
//! Every output uses the same file formats as real data.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, Zipf};
use serde::{Deserialize, Serialize};

use crate::graph::{write_posts, BipartiteGraph, GraphError, Interner, Post};
use crate::ingest::{write_tweet_jsonl, IngestError, InteractionKind, TweetRecord};
use crate::label_prop::write_seed_file;
use crate::stance::{Assignment, Provenance, Stance, StanceAssignment, StanceNames};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("infeasible configuration: {0}")]
    Config(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const PRESETS: &[&str] = &["default", "separable", "noisy-homophilous", "imbalanced"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Users planted in S1 and S2.
    pub users_per_community: [usize; 2],
    pub hashtags_per_community: usize,
    pub neutral_hashtags: usize,
    /// Fraction of users who post hashtags at all.
    pub hashtag_user_fraction: f64,
    /// Mean number of hashtag posts per hashtag-using user (at least one).
    pub posts_per_user: f64,
    pub max_tags_per_post: usize,
    /// Probability that a hashtag is drawn from the other community's pool.
    pub leak: f64,
    /// Probability that a hashtag is drawn from the shared neutral pool.
    pub neutral_rate: f64,
    pub zipf_exponent: f64,
    /// Mean interactions authored per user.
    pub interactions_per_user: f64,
    /// Probability that an interaction stays inside the author's community.
    pub homophily: f64,
    pub sentiment_in: f64,
    pub sentiment_cross: f64,
    pub sentiment_spread: f64,
    pub dim: usize,
    /// Distance between the two community centroids.
    pub centroid_distance: f64,
    /// Per-coordinate standard deviation of each tweet embedding around its
    /// community centroid.
    pub feature_noise: f64,
    /// Plain (non-interaction) tweets per user.
    pub tweets_per_user: usize,
    pub seeds_per_stance: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users_per_community: [1000, 1000],
            hashtags_per_community: 40,
            neutral_hashtags: 15,
            hashtag_user_fraction: 0.6,
            posts_per_user: 4.0,
            max_tags_per_post: 3,
            leak: 0.05,
            neutral_rate: 0.15,
            zipf_exponent: 1.0,
            interactions_per_user: 6.0,
            homophily: 0.9,
            sentiment_in: 0.5,
            sentiment_cross: -0.4,
            sentiment_spread: 0.3,
            dim: 32,
            centroid_distance: 2.0,
            feature_noise: 1.0,
            tweets_per_user: 8,
            seeds_per_stance: 5,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn preset(name: &str) -> Result<Self, SynthError> {
        let base = Self::default();
        Ok(match name {
            "default" => base,
            "separable" => Self {
                leak: 0.0,
                feature_noise: 0.0,
                homophily: 1.0,
                ..base
            },
            // User features alone are only weakly informative; neighbours are
            // mostly like-minded, so aggregation recovers the signal.
            "noisy-homophilous" => Self {
                centroid_distance: 1.0,
                feature_noise: 4.0,
                tweets_per_user: 4,
                homophily: 0.92,
                interactions_per_user: 8.0,
                leak: 0.1,
                ..base
            },
            "imbalanced" => Self {
                users_per_community: [1820, 182],
                ..base
            },
            other => return Err(SynthError::UnknownPreset(other.to_string())),
        })
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: &str| Err(SynthError::Config(m.to_string()));
        let probs = [
            ("hashtag_user_fraction", self.hashtag_user_fraction),
            ("leak", self.leak),
            ("neutral_rate", self.neutral_rate),
            ("homophily", self.homophily),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::Config(format!("{name} = {p} is not a probability")));
            }
        }
        if self.leak + self.neutral_rate > 1.0 {
            return err("leak + neutral_rate exceeds 1");
        }
        if self.users_per_community.contains(&0) {
            return err("each community needs at least one user");
        }
        if self.users_per_community[0] + self.users_per_community[1] < 2 {
            return err("need at least two users");
        }
        if self.hashtags_per_community == 0 {
            return err("hashtags_per_community must be ≥ 1");
        }
        if self.neutral_rate > 0.0 && self.neutral_hashtags == 0 {
            return err("neutral_rate > 0 needs neutral hashtags");
        }
        if self.max_tags_per_post == 0 || self.tweets_per_user == 0 || self.dim == 0 {
            return err("max_tags_per_post, tweets_per_user and dim must be ≥ 1");
        }
        if !(self.posts_per_user >= 1.0 && self.posts_per_user.is_finite()) {
            return err("posts_per_user must be ≥ 1");
        }
        if !(self.interactions_per_user >= 0.0 && self.interactions_per_user.is_finite()) {
            return err("interactions_per_user must be ≥ 0");
        }
        if !(self.sentiment_in > self.sentiment_cross) {
            return err("in-community sentiment mean must exceed the cross-community mean");
        }
        if !(self.zipf_exponent > 0.0) || !(self.sentiment_spread >= 0.0) {
            return err("zipf_exponent must be > 0 and sentiment_spread ≥ 0");
        }
        if !(self.feature_noise >= 0.0) || !(self.centroid_distance >= 0.0) {
            return err("feature_noise and centroid_distance must be ≥ 0");
        }
        if self.seeds_per_stance == 0 || self.seeds_per_stance > self.hashtags_per_community {
            return err("seeds_per_stance must lie in 1..=hashtags_per_community");
        }
        Ok(())
    }

    pub fn n_users(&self) -> usize {
        self.users_per_community[0] + self.users_per_community[1]
    }
}

/// A generated dataset held in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub posts: Vec<Post>,
    pub tweets: Vec<TweetRecord>,
    /// Planted stance of every user, sorted by user name.
    pub truth: Vec<(String, Stance)>,
    /// Highest in-community usage hashtags, per stance.
    pub seeds: [Vec<String>; 2],
    /// Users that posted at least one hashtag, sorted.
    pub hashtag_users: Vec<String>,
}

/// Paths written by [`SynthDataset::write_dir`].
#[derive(Clone, Debug, PartialEq)]
pub struct SynthFiles {
    pub posts: PathBuf,
    pub tweets: PathBuf,
    pub truth: PathBuf,
    pub seeds: [PathBuf; 2],
}

impl SynthFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            posts: dir.join("posts.tsv"),
            tweets: dir.join("tweets.jsonl"),
            truth: dir.join("truth.tsv"),
            seeds: [dir.join("seeds_s1.txt"), dir.join("seeds_s2.txt")],
        }
    }
}

fn user_name(i: usize) -> String {
    format!("user{i:07}")
}

fn tag_names(cfg: &SynthConfig) -> [Vec<String>; 3] {
    let pool = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i:04}")).collect::<Vec<_>>();
    [
        pool("alpha", cfg.hashtags_per_community),
        pool("beta", cfg.hashtags_per_community),
        pool("common", cfg.neutral_hashtags),
    ]
}

fn clip(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Generates a dataset. Identical configs give identical datasets.
pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_users();

    let mut community: Vec<Stance> = std::iter::repeat(Stance::S1)
        .take(cfg.users_per_community[0])
        .chain(std::iter::repeat(Stance::S2).take(cfg.users_per_community[1]))
        .collect();
    community.shuffle(&mut rng);
    let members: [Vec<usize>; 2] = Stance::ALL.map(|s| (0..n).filter(|&u| community[u] == s).collect());

    let names = tag_names(cfg);
    let zipf_comm = Zipf::new(cfg.hashtags_per_community as u64, cfg.zipf_exponent)
        .map_err(|e| SynthError::Config(e.to_string()))?;
    let zipf_neutral = Zipf::new(cfg.neutral_hashtags.max(1) as u64, cfg.zipf_exponent)
        .map_err(|e| SynthError::Config(e.to_string()))?;
    let extra_posts = Poisson::new(cfg.posts_per_user - 1.0).ok();

    let mut posts = Vec::new();
    let mut hashtag_users = Vec::new();
    let mut in_use: [BTreeMap<usize, usize>; 2] = Default::default();
    for u in 0..n {
        if !rng.gen_bool(cfg.hashtag_user_fraction) {
            continue;
        }
        let own = community[u].index();
        let count = 1 + extra_posts.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        for _ in 0..count {
            let k = rng.gen_range(1..=cfg.max_tags_per_post);
            let mut tags = Vec::with_capacity(k);
            for _ in 0..k {
                let r: f64 = rng.gen();
                if r < cfg.neutral_rate {
                    let i = zipf_neutral.sample(&mut rng) as usize - 1;
                    tags.push(names[2][i].clone());
                } else {
                    let pool = if r < cfg.neutral_rate + cfg.leak { 1 - own } else { own };
                    let i = zipf_comm.sample(&mut rng) as usize - 1;
                    if pool == own {
                        *in_use[own].entry(i).or_default() += 1;
                    }
                    tags.push(names[pool][i].clone());
                }
            }
            posts.push(Post::new(user_name(u), tags));
        }
        hashtag_users.push(user_name(u));
    }

    let seeds = [0, 1].map(|c| {
        let mut ranked: Vec<(usize, usize)> = in_use[c].iter().map(|(&i, &k)| (i, k)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
            .into_iter()
            .take(cfg.seeds_per_stance)
            .map(|(i, _)| names[c][i].clone())
            .collect::<Vec<_>>()
    });
    for (c, s) in seeds.iter().enumerate() {
        if s.is_empty() {
            return Err(SynthError::Config(format!(
                "community {} posted no in-community hashtags",
                c + 1
            )));
        }
    }

    // Community centroids: a shared random offset plus ±d/2 along a random
    // unit direction.
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let offset: Vec<f64> = (0..cfg.dim).map(|_| std_normal.sample(&mut rng)).collect();
    let mut direction: Vec<f64> = (0..cfg.dim).map(|_| std_normal.sample(&mut rng)).collect();
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    direction.iter_mut().for_each(|x| *x /= norm);
    let centroids: [Vec<f64>; 2] = [-0.5, 0.5].map(|sign| {
        offset
            .iter()
            .zip(&direction)
            .map(|(o, d)| o + sign * cfg.centroid_distance * d)
            .collect()
    });
    let embed = |rng: &mut ChaCha8Rng, s: Stance| -> Vec<f32> {
        centroids[s.index()]
            .iter()
            .map(|&c| (c + cfg.feature_noise * std_normal.sample(rng)) as f32)
            .collect()
    };
    let sentiment = |rng: &mut ChaCha8Rng, mean: f64| clip(mean + cfg.sentiment_spread * std_normal.sample(rng));

    let mut tweets = Vec::new();
    let mut next_id = 0u64;
    let mut tweet_id = || {
        next_id += 1;
        format!("t{next_id:09}")
    };
    for u in 0..n {
        for _ in 0..cfg.tweets_per_user {
            let embedding = embed(&mut rng, community[u]);
            let s = sentiment(&mut rng, 0.0);
            tweets.push(TweetRecord {
                tweet_id: tweet_id(),
                author_id: user_name(u),
                target_id: None,
                kind: InteractionKind::None,
                sentiment: s,
                embedding,
            });
        }
    }
    let kinds = [
        InteractionKind::Retweet,
        InteractionKind::Mention,
        InteractionKind::Reply,
        InteractionKind::Quote,
    ];
    let n_interactions = (cfg.interactions_per_user * n as f64).round() as usize;
    for _ in 0..n_interactions {
        let src = rng.gen_range(0..n);
        let own = community[src];
        let same = rng.gen_bool(cfg.homophily);
        let pool = &members[if same { own.index() } else { own.opposite().index() }];
        if pool.len() < 2 && same {
            continue;
        }
        let dst = loop {
            let t = pool[rng.gen_range(0..pool.len())];
            if t != src {
                break t;
            }
        };
        let s = sentiment(&mut rng, if same { cfg.sentiment_in } else { cfg.sentiment_cross });
        let kind = kinds[rng.gen_range(0..kinds.len())];
        let embedding = embed(&mut rng, own);
        tweets.push(TweetRecord {
            tweet_id: tweet_id(),
            author_id: user_name(src),
            target_id: Some(user_name(dst)),
            kind,
            sentiment: s,
            embedding,
        });
    }

    let truth = (0..n).map(|u| (user_name(u), community[u])).collect();
    Ok(SynthDataset {
        config: cfg.clone(),
        posts,
        tweets,
        truth,
        seeds,
        hashtag_users,
    })
}

impl SynthDataset {
    /// Planted labels over the given user id space; users unknown to the
    /// dataset are skipped.
    pub fn truth_assignment(&self, users: &Interner) -> StanceAssignment {
        let mut a = StanceAssignment::new(users.len());
        for (name, s) in &self.truth {
            if let Some(id) = users.get(name) {
                a.assign(id, Assignment::new(*s, Provenance::Annotated, 0))
                    .expect("fresh assignment");
            }
        }
        a
    }

    /// Fraction of interaction records that cross communities.
    pub fn cross_fraction(&self) -> f64 {
        let truth: BTreeMap<&str, Stance> = self.truth.iter().map(|(n, s)| (n.as_str(), *s)).collect();
        let (mut cross, mut total) = (0usize, 0usize);
        for t in &self.tweets {
            if let Some(target) = &t.target_id {
                total += 1;
                if truth[t.author_id.as_str()] != truth[target.as_str()] {
                    cross += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            cross as f64 / total as f64
        }
    }

    pub fn write_truth<W: Write>(&self, mut out: W, names: &StanceNames) -> std::io::Result<()> {
        for (user, s) in &self.truth {
            writeln!(out, "{user}\t{}", names.name(*s))?;
        }
        Ok(())
    }

    /// Writes posts, tweets, truth and seed files into `dir`, which must exist.
    pub fn write_dir(&self, dir: &Path, names: &StanceNames) -> Result<SynthFiles, SynthError> {
        let files = SynthFiles::in_dir(dir);
        let mut w = BufWriter::new(File::create(&files.posts)?);
        write_posts(&mut w, &self.posts)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(&files.tweets)?);
        write_tweet_jsonl(&mut w, &self.tweets)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(&files.truth)?);
        self.write_truth(&mut w, names)?;
        w.flush()?;
        for (path, seeds) in files.seeds.iter().zip(&self.seeds) {
            let mut w = BufWriter::new(File::create(path)?);
            write_seed_file(&mut w, seeds)?;
            w.flush()?;
        }
        Ok(files)
    }
}

/// A large bipartite graph for propagation benchmarks, built directly in
/// CSR form. Users alternate between the two communities; each draws
/// `edges / users` distinct hashtags (the remainder spread over the first
/// users) from its community's half of the hashtag space with Zipf
/// popularity, leaking to the other half with probability `leak`.
/// Returns the graph and the top five hashtags of each half as seeds.
pub fn scale_bipartite(
    users: usize,
    hashtags: usize,
    edges: usize,
    leak: f64,
    seed: u64,
) -> Result<(BipartiteGraph, [Vec<String>; 2]), SynthError> {
    let half = hashtags / 2;
    if users == 0 || half == 0 {
        return Err(SynthError::Config("need users and at least two hashtags".into()));
    }
    if edges.div_ceil(users) > half {
        return Err(SynthError::Config("degree exceeds hashtags per community".into()));
    }
    if !(0.0..=1.0).contains(&leak) {
        return Err(SynthError::Config(format!("leak {leak} is not a probability")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zipf = Zipf::new(half as u64, 1.0).map_err(|e| SynthError::Config(e.to_string()))?;
    let base = edges / users;
    let extra = edges % users;
    let mut offsets = Vec::with_capacity(users + 1);
    offsets.push(0usize);
    let mut tags: Vec<u32> = Vec::with_capacity(edges);
    let mut weights: Vec<u32> = Vec::with_capacity(edges);
    let mut row: Vec<u32> = Vec::with_capacity(base + 1);
    for u in 0..users {
        let degree = base + usize::from(u < extra);
        let own = u % 2;
        row.clear();
        while row.len() < degree {
            let side = if rng.gen_bool(leak) { 1 - own } else { own };
            let h = (side * half + zipf.sample(&mut rng) as usize - 1) as u32;
            if !row.contains(&h) {
                row.push(h);
            }
        }
        row.sort_unstable();
        for &h in &row {
            tags.push(h);
            weights.push(1 + u32::from(rng.gen_bool(0.25)));
        }
        offsets.push(tags.len());
    }
    let user_names = Interner::from_names((0..users).map(user_name));
    let tag_names = Interner::from_names((0..hashtags).map(|h| format!("tag{h:07}")));
    let seeds = [0, 1].map(|side| (0..5.min(half)).map(|i| format!("tag{:07}", side * half + i)).collect());
    let g = BipartiteGraph::from_csr(user_names, tag_names, offsets, tags, weights)?;
    Ok((g, seeds))
}

/// Peak resident set size of this process in bytes, where the platform
/// reports it.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

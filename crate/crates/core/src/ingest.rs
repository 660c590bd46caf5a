//! Ingestion of per-tweet records (precomputed embedding and sentiment) into
//! the attributed interaction graph.
//!
//! Each user's feature vector is the element-wise mean of the embeddings of
//! the tweets they authored. Tweets aimed at another user also become signed
//! edges, merged per ordered pair by [`consolidate_interactions`].

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Read, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::graph::{
    consolidate_interactions, GraphError, InteractionGraph, Interner, NamedInteraction,
    RawInteraction,
};

pub const DEFAULT_EMBEDDING_DIM: usize = 768;
pub const TWEET_MAGIC: &[u8; 4] = b"TWE1";

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("tweet {tweet_id}: embedding has {found} components, expected {expected}")]
    DimensionMismatch {
        tweet_id: String,
        expected: usize,
        found: usize,
    },
    #[error("tweet {tweet_id}: non-finite embedding component at {index}")]
    NonFinite { tweet_id: String, index: usize },
    #[error("tweet {tweet_id}: sentiment {value} outside [-1, 1]")]
    Sentiment { tweet_id: String, value: f64 },
    #[error("tweet {tweet_id}: {reason}")]
    Invalid { tweet_id: String, reason: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no tweet records")]
    Empty,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    Retweet,
    Mention,
    Reply,
    Quote,
    None,
}

impl InteractionKind {
    fn code(self) -> u8 {
        match self {
            InteractionKind::None => 0,
            InteractionKind::Retweet => 1,
            InteractionKind::Mention => 2,
            InteractionKind::Reply => 3,
            InteractionKind::Quote => 4,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => InteractionKind::None,
            1 => InteractionKind::Retweet,
            2 => InteractionKind::Mention,
            3 => InteractionKind::Reply,
            4 => InteractionKind::Quote,
            _ => return None,
        })
    }
}

/// One collected tweet with its precomputed sentiment and embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub tweet_id: String,
    pub author_id: String,
    pub target_id: Option<String>,
    pub kind: InteractionKind,
    pub sentiment: f64,
    pub embedding: Vec<f32>,
}

impl TweetRecord {
    /// Checks dimension, finiteness, sentiment range, and that a target is
    /// present exactly when the tweet is an interaction.
    pub fn validate(&self, dim: usize) -> Result<(), IngestError> {
        let id = || self.tweet_id.clone();
        if self.author_id.is_empty() {
            return Err(IngestError::Invalid {
                tweet_id: id(),
                reason: "empty author id".into(),
            });
        }
        if self.embedding.len() != dim {
            return Err(IngestError::DimensionMismatch {
                tweet_id: id(),
                expected: dim,
                found: self.embedding.len(),
            });
        }
        if let Some(index) = self.embedding.iter().position(|x| !x.is_finite()) {
            return Err(IngestError::NonFinite {
                tweet_id: id(),
                index,
            });
        }
        if !(-1.0..=1.0).contains(&self.sentiment) {
            return Err(IngestError::Sentiment {
                tweet_id: id(),
                value: self.sentiment,
            });
        }
        match (&self.target_id, self.kind) {
            (Some(t), InteractionKind::None) => Err(IngestError::Invalid {
                tweet_id: id(),
                reason: format!("target {t:?} given for a non-interaction tweet"),
            }),
            (None, k) if k != InteractionKind::None => Err(IngestError::Invalid {
                tweet_id: id(),
                reason: "interaction tweet without target".into(),
            }),
            (Some(t), _) if t.is_empty() => Err(IngestError::Invalid {
                tweet_id: id(),
                reason: "empty target id".into(),
            }),
            _ => Ok(()),
        }
    }
}

/// Sentiment of a three-class model output mapped onto `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SentimentClass {
    Negative,
    Neutral,
    Positive,
}

impl SentimentClass {
    pub fn score(self) -> f64 {
        match self {
            SentimentClass::Negative => -1.0,
            SentimentClass::Neutral => 0.0,
            SentimentClass::Positive => 1.0,
        }
    }
}

/// Expected sentiment under class probabilities (negative, neutral, positive).
/// The probabilities are renormalised if they do not sum to one.
pub fn expected_sentiment(negative: f64, neutral: f64, positive: f64) -> Option<f64> {
    let total = negative + neutral + positive;
    if !(total > 0.0) || negative < 0.0 || neutral < 0.0 || positive < 0.0 {
        return None;
    }
    Some(((positive - negative) / total).clamp(-1.0, 1.0))
}

/// Per-user running mean of tweet embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct UserFeatureTable {
    dim: usize,
    rows: HashMap<String, FeatureRow>,
}

#[derive(Clone, Debug, PartialEq)]
struct FeatureRow {
    mean: Vec<f64>,
    count: u64,
}

impl UserFeatureTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Folds one tweet into its author's running mean.
    pub fn add(&mut self, record: &TweetRecord) -> Result<(), IngestError> {
        record.validate(self.dim)?;
        let row = self
            .rows
            .entry(record.author_id.clone())
            .or_insert_with(|| FeatureRow {
                mean: vec![0.0; self.dim],
                count: 0,
            });
        row.count += 1;
        let n = row.count as f64;
        for (m, &x) in row.mean.iter_mut().zip(&record.embedding) {
            *m += (x as f64 - *m) / n;
        }
        Ok(())
    }

    /// Combines two partial tables built over disjoint record shards.
    pub fn merge(&mut self, other: UserFeatureTable) -> Result<(), IngestError> {
        if other.dim != self.dim {
            return Err(IngestError::DimensionMismatch {
                tweet_id: "<merge>".into(),
                expected: self.dim,
                found: other.dim,
            });
        }
        for (user, theirs) in other.rows {
            match self.rows.get_mut(&user) {
                None => {
                    self.rows.insert(user, theirs);
                }
                Some(mine) => {
                    let total = mine.count + theirs.count;
                    let w = theirs.count as f64 / total as f64;
                    for (m, t) in mine.mean.iter_mut().zip(&theirs.mean) {
                        *m += (t - *m) * w;
                    }
                    mine.count = total;
                }
            }
        }
        Ok(())
    }

    pub fn feature(&self, user: &str) -> Option<Vec<f32>> {
        self.rows
            .get(user)
            .map(|r| r.mean.iter().map(|&x| x as f32).collect())
    }

    pub fn tweet_count(&self, user: &str) -> u64 {
        self.rows.get(user).map_or(0, |r| r.count)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }
}

/// Single-pass mean pooling of embeddings per author.
pub fn pool_user_features<'a, I>(records: I, dim: usize) -> Result<UserFeatureTable, IngestError>
where
    I: IntoIterator<Item = &'a TweetRecord>,
{
    let mut table = UserFeatureTable::new(dim);
    for r in records {
        table.add(r)?;
    }
    Ok(table)
}

/// Summary of a graph build.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize)]
pub struct IngestStats {
    pub nodes: usize,
    pub edges: usize,
    pub featureless_targets: usize,
    pub dropped_self_interactions: usize,
}

/// Builds the interaction graph. Nodes are all authors and targets, numbered
/// in lexicographic order of their ids, so the result does not depend on
/// record order. Users who only appear as targets get a zero feature vector.
pub fn build_interaction_graph(
    records: &[TweetRecord],
    features: &UserFeatureTable,
) -> Result<(InteractionGraph, IngestStats), IngestError> {
    let interactions = records.iter().filter_map(|r| {
        r.target_id.as_ref().map(|t| NamedInteraction {
            author: r.author_id.clone(),
            target: t.clone(),
            sentiment: r.sentiment,
        })
    });
    for r in records {
        r.validate(features.dim())?;
    }
    graph_from_interactions(interactions.collect::<Vec<_>>(), features)
}

/// Builds the graph from an explicit interaction list (e.g. an interactions
/// file) and a feature table.
pub fn graph_from_interactions(
    interactions: Vec<NamedInteraction>,
    features: &UserFeatureTable,
) -> Result<(InteractionGraph, IngestStats), IngestError> {
    if features.is_empty() && interactions.is_empty() {
        return Err(IngestError::Empty);
    }
    let mut names: BTreeSet<&str> = features.users().collect();
    for i in &interactions {
        names.insert(&i.author);
        names.insert(&i.target);
    }
    let users = Interner::from_names(names.iter().copied());
    let dim = features.dim();
    let mut matrix = vec![0.0f32; users.len() * dim];
    let mut counts = vec![0u32; users.len()];
    let mut featureless = 0usize;
    for (id, name) in users.names().iter().enumerate() {
        match features.feature(name) {
            Some(f) => {
                matrix[id * dim..(id + 1) * dim].copy_from_slice(&f);
                counts[id] = features.tweet_count(name).min(u32::MAX as u64) as u32;
            }
            None => featureless += 1,
        }
    }
    if featureless > 0 {
        warn!("{featureless} users appear only as interaction targets; using zero feature vectors");
    }
    let raw: Vec<RawInteraction> = interactions
        .iter()
        .map(|i| RawInteraction {
            source: users.get(&i.author).expect("interned"),
            target: users.get(&i.target).expect("interned"),
            sentiment: i.sentiment,
        })
        .collect();
    let consolidated = consolidate_interactions(raw)?;
    let stats = IngestStats {
        nodes: users.len(),
        edges: consolidated.edges.len(),
        featureless_targets: featureless,
        dropped_self_interactions: consolidated.dropped_self_loops,
    };
    let graph = InteractionGraph::new(users, consolidated.edges, matrix, dim, counts)?;
    Ok((graph, stats))
}

/// Reads newline-delimited JSON tweet records. Blank lines are skipped.
pub fn read_tweet_jsonl<R: BufRead>(input: R) -> Result<Vec<TweetRecord>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TweetRecord = serde_json::from_str(&line).map_err(|e| IngestError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_tweet_jsonl<W: Write>(mut out: W, records: &[TweetRecord]) -> Result<(), IngestError> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

const NO_TARGET: u32 = u32::MAX;

/// Writes the packed `TWE1` variant; every embedding must have length `dim`.
pub fn write_tweet_binary<W: Write>(
    mut w: W,
    dim: usize,
    records: &[TweetRecord],
) -> Result<(), IngestError> {
    w.write_all(TWEET_MAGIC)?;
    binio::write_u32(&mut w, 1)?;
    binio::write_u32(&mut w, dim as u32)?;
    binio::write_u64(&mut w, records.len() as u64)?;
    for r in records {
        r.validate(dim)?;
        binio::write_str(&mut w, &r.tweet_id)?;
        binio::write_str(&mut w, &r.author_id)?;
        match &r.target_id {
            Some(t) => binio::write_str(&mut w, t)?,
            None => binio::write_u32(&mut w, NO_TARGET)?,
        }
        binio::write_u8(&mut w, r.kind.code())?;
        binio::write_f64(&mut w, r.sentiment)?;
        for &x in &r.embedding {
            binio::write_f32(&mut w, x)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the packed `TWE1` variant. Returns the declared dimension and the
/// records.
pub fn read_tweet_binary<R: Read>(mut r: R) -> Result<(usize, Vec<TweetRecord>), IngestError> {
    binio::read_magic(&mut r, TWEET_MAGIC)?;
    let version = binio::read_u32(&mut r)?;
    if version != 1 {
        return Err(IngestError::Parse {
            line: 0,
            message: format!("unsupported TWE1 version {version}"),
        });
    }
    let dim = binio::read_u32(&mut r)? as usize;
    let n = binio::read_len(&mut r, u32::MAX as u64 * 16, "record")?;
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for i in 0..n {
        let bad = |message: String| IngestError::Parse { line: i + 1, message };
        let tweet_id = binio::read_str(&mut r)?;
        let author_id = binio::read_str(&mut r)?;
        let target_len = binio::read_u32(&mut r)?;
        let target_id = if target_len == NO_TARGET {
            None
        } else {
            Some(binio::read_string(&mut r, target_len)?)
        };
        let code = binio::read_u8(&mut r)?;
        let kind = InteractionKind::from_code(code).ok_or_else(|| bad(format!("bad kind code {code}")))?;
        let sentiment = binio::read_f64(&mut r)?;
        let mut embedding = Vec::with_capacity(dim);
        for _ in 0..dim {
            embedding.push(binio::read_f32(&mut r)?);
        }
        out.push(TweetRecord {
            tweet_id,
            author_id,
            target_id,
            kind,
            sentiment,
            embedding,
        });
    }
    Ok((dim, out))
}

/// Reads either tweet format, sniffing the `TWE1` magic.
pub fn read_tweets_any(bytes: &[u8]) -> Result<Vec<TweetRecord>, IngestError> {
    if bytes.starts_with(TWEET_MAGIC) {
        Ok(read_tweet_binary(bytes)?.1)
    } else {
        read_tweet_jsonl(bytes)
    }
}

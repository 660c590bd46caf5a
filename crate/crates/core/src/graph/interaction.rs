use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use super::{GraphError, Interner};
use crate::binio;

/// A single directed interaction between two interned users.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawInteraction {
    pub source: u32,
    pub target: u32,
    pub sentiment: f64,
}

/// One consolidated directed edge: the mean sentiment of all interactions
/// from `source` to `target`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedEdge {
    pub source: u32,
    pub target: u32,
    pub weight: f64,
    /// Number of raw interactions merged into this edge.
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Consolidation {
    /// Sorted by `(source, target)`.
    pub edges: Vec<SignedEdge>,
    pub dropped_self_loops: usize,
}

/// Merges all interactions of each ordered pair into one edge weighted by the
/// arithmetic mean sentiment. Self-interactions are dropped.
pub fn consolidate_interactions<I>(raw: I) -> Result<Consolidation, GraphError>
where
    I: IntoIterator<Item = RawInteraction>,
{
    let mut pairs: BTreeMap<(u32, u32), (f64, u32)> = BTreeMap::new();
    let mut dropped_self_loops = 0;
    for (index, r) in raw.into_iter().enumerate() {
        if !(-1.0..=1.0).contains(&r.sentiment) {
            return Err(GraphError::SentimentOutOfRange {
                index,
                value: r.sentiment,
            });
        }
        if r.source == r.target {
            dropped_self_loops += 1;
            continue;
        }
        let acc = pairs.entry((r.source, r.target)).or_insert((0.0, 0));
        acc.0 += r.sentiment;
        acc.1 += 1;
    }
    let edges = pairs
        .into_iter()
        .map(|((source, target), (sum, count))| SignedEdge {
            source,
            target,
            weight: (sum / count as f64).clamp(-1.0, 1.0),
            count,
        })
        .collect();
    Ok(Consolidation {
        edges,
        dropped_self_loops,
    })
}

/// Undirected neighbourhood view: a neighbour list per node (self excluded,
/// sorted by id) with the mean absolute sentiment of the directions present.
#[derive(Clone, Debug, PartialEq)]
pub struct UndirectedAdjacency {
    pub offsets: Vec<usize>,
    pub neighbors: Vec<u32>,
    pub strengths: Vec<f64>,
}

impl UndirectedAdjacency {
    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn strengths(&self, v: usize) -> &[f64] {
        &self.strengths[self.offsets[v]..self.offsets[v + 1]]
    }
}

/// Signed, weighted, attributed user–user graph with a dense feature matrix
/// (row-major, `n_nodes × dim`).
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionGraph {
    users: Interner,
    edges: Vec<SignedEdge>,
    features: Vec<f32>,
    dim: usize,
    tweet_counts: Vec<u32>,
}

impl InteractionGraph {
    pub fn new(
        users: Interner,
        edges: Vec<SignedEdge>,
        features: Vec<f32>,
        dim: usize,
        tweet_counts: Vec<u32>,
    ) -> Result<Self, GraphError> {
        let n = users.len();
        if dim == 0 {
            return Err(GraphError::Format("feature dimension must be ≥ 1".into()));
        }
        if features.len() != n * dim {
            return Err(GraphError::Format(format!(
                "feature matrix has {} values, expected {n}×{dim}",
                features.len()
            )));
        }
        if tweet_counts.len() != n {
            return Err(GraphError::Format("tweet count per node required".into()));
        }
        if let Some(i) = features.iter().position(|x| !x.is_finite()) {
            return Err(GraphError::NonFiniteFeature {
                node: users.name((i / dim) as u32).to_string(),
            });
        }
        for (i, e) in edges.iter().enumerate() {
            if e.source as usize >= n || e.target as usize >= n {
                return Err(GraphError::UnknownNode(format!("edge {i}")));
            }
            if e.source == e.target {
                return Err(GraphError::Format(format!("self-loop on edge {i}")));
            }
            if !(-1.0..=1.0).contains(&e.weight) {
                return Err(GraphError::SentimentOutOfRange {
                    index: i,
                    value: e.weight,
                });
            }
            if i > 0 && (edges[i - 1].source, edges[i - 1].target) >= (e.source, e.target) {
                return Err(GraphError::Format(
                    "edges must be sorted with one edge per ordered pair".into(),
                ));
            }
        }
        Ok(Self {
            users,
            edges,
            features,
            dim,
            tweet_counts,
        })
    }

    pub fn users(&self) -> &Interner {
        &self.users
    }

    pub fn n_nodes(&self) -> usize {
        self.users.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn edges(&self) -> &[SignedEdge] {
        &self.edges
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn feature_row(&self, node: u32) -> &[f32] {
        let i = node as usize * self.dim;
        &self.features[i..i + self.dim]
    }

    pub fn tweet_counts(&self) -> &[u32] {
        &self.tweet_counts
    }

    pub fn edge_weight(&self, source: u32, target: u32) -> Option<f64> {
        self.edges
            .binary_search_by_key(&(source, target), |e| (e.source, e.target))
            .ok()
            .map(|i| self.edges[i].weight)
    }

    /// Same topology with a replacement feature matrix.
    pub fn with_features(&self, features: Vec<f32>, dim: usize) -> Result<Self, GraphError> {
        Self::new(
            self.users.clone(),
            self.edges.clone(),
            features,
            dim,
            self.tweet_counts.clone(),
        )
    }

    /// Edge present between `u` and `v` if either direction exists.
    pub fn undirected(&self) -> UndirectedAdjacency {
        let n = self.n_nodes();
        let mut pairs: BTreeMap<(u32, u32), (f64, u32)> = BTreeMap::new();
        for e in &self.edges {
            let key = (e.source.min(e.target), e.source.max(e.target));
            let acc = pairs.entry(key).or_insert((0.0, 0));
            acc.0 += e.weight.abs();
            acc.1 += 1;
        }
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for ((a, b), (sum, count)) in pairs {
            let s = sum / count as f64;
            rows[a as usize].push((b, s));
            rows[b as usize].push((a, s));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut neighbors = Vec::new();
        let mut strengths = Vec::new();
        for mut row in rows {
            row.sort_by_key(|&(u, _)| u);
            for (u, s) in row {
                neighbors.push(u);
                strengths.push(s);
            }
            offsets.push(neighbors.len());
        }
        UndirectedAdjacency {
            offsets,
            neighbors,
            strengths,
        }
    }

    /// Writes the `SGI1` container. See `docs/FORMATS.md` for the layout.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), GraphError> {
        w.write_all(INTERACTION_MAGIC)?;
        binio::write_u32(&mut w, 1)?;
        binio::write_u64(&mut w, self.n_nodes() as u64)?;
        binio::write_u64(&mut w, self.dim as u64)?;
        binio::write_u64(&mut w, self.edges.len() as u64)?;
        for (i, name) in self.users.names().iter().enumerate() {
            binio::write_str(&mut w, name)?;
            binio::write_u32(&mut w, self.tweet_counts[i])?;
        }
        for &x in &self.features {
            binio::write_f32(&mut w, x)?;
        }
        for e in &self.edges {
            binio::write_u32(&mut w, e.source)?;
            binio::write_u32(&mut w, e.target)?;
            binio::write_f64(&mut w, e.weight)?;
            binio::write_u32(&mut w, e.count)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, GraphError> {
        binio::read_magic(&mut r, INTERACTION_MAGIC)?;
        let version = binio::read_u32(&mut r)?;
        if version != 1 {
            return Err(GraphError::Format(format!("unsupported version {version}")));
        }
        let n = binio::read_len(&mut r, u32::MAX as u64, "node")?;
        let dim = binio::read_len(&mut r, 1 << 20, "dimension")?;
        let ne = binio::read_len(&mut r, u32::MAX as u64 * 64, "edge")?;
        let mut users = Interner::with_capacity(n);
        let mut tweet_counts = Vec::with_capacity(n);
        for _ in 0..n {
            users.intern(&binio::read_str(&mut r)?);
            tweet_counts.push(binio::read_u32(&mut r)?);
        }
        if users.len() != n {
            return Err(GraphError::Format("duplicate user name".into()));
        }
        let mut features = Vec::with_capacity(n * dim);
        for _ in 0..n * dim {
            features.push(binio::read_f32(&mut r)?);
        }
        let mut edges = Vec::with_capacity(ne);
        for _ in 0..ne {
            edges.push(SignedEdge {
                source: binio::read_u32(&mut r)?,
                target: binio::read_u32(&mut r)?,
                weight: binio::read_f64(&mut r)?,
                count: binio::read_u32(&mut r)?,
            });
        }
        Self::new(users, edges, features, dim, tweet_counts)
    }
}

pub const INTERACTION_MAGIC: &[u8; 4] = b"SGI1";

/// One line of an interactions file.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedInteraction {
    pub author: String,
    pub target: String,
    pub sentiment: f64,
}

/// Parses `author_id<TAB>target_id<TAB>sentiment` lines; errors carry 1-based
/// line numbers.
pub fn read_interactions<R: BufRead>(input: R) -> Result<Vec<NamedInteraction>, GraphError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| GraphError::MalformedRecord {
            index: i + 1,
            reason,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(bad(format!("expected 3 columns, found {}", cols.len())));
        }
        if cols[0].is_empty() || cols[1].is_empty() {
            return Err(bad("empty user id".into()));
        }
        let sentiment: f64 = cols[2]
            .trim()
            .parse()
            .map_err(|e| bad(format!("bad sentiment {:?}: {e}", cols[2])))?;
        if !(-1.0..=1.0).contains(&sentiment) {
            return Err(GraphError::SentimentOutOfRange {
                index: i + 1,
                value: sentiment,
            });
        }
        out.push(NamedInteraction {
            author: cols[0].to_string(),
            target: cols[1].to_string(),
            sentiment,
        });
    }
    Ok(out)
}

pub fn write_interactions<W: Write>(mut out: W, rows: &[NamedInteraction]) -> std::io::Result<()> {
    for r in rows {
        writeln!(out, "{}\t{}\t{}", r.author, r.target, r.sentiment)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(source: u32, target: u32, sentiment: f64) -> RawInteraction {
        RawInteraction {
            source,
            target,
            sentiment,
        }
    }

    #[test]
    fn parallel_interactions_are_averaged() {
        let c = consolidate_interactions([raw(0, 1, 1.0), raw(0, 1, 0.0)]).unwrap();
        assert_eq!(c.edges.len(), 1);
        assert_eq!(c.edges[0].weight, 0.5);
        assert_eq!(c.edges[0].count, 2);
    }

    #[test]
    fn direction_is_preserved() {
        let c = consolidate_interactions([raw(0, 1, 0.8), raw(1, 0, -0.2)]).unwrap();
        assert_eq!(c.edges.len(), 2);
        assert_eq!((c.edges[0].source, c.edges[0].weight), (0, 0.8));
        assert_eq!((c.edges[1].source, c.edges[1].weight), (1, -0.2));
    }

    #[test]
    fn self_loops_dropped_and_range_checked() {
        let c = consolidate_interactions([raw(2, 2, 0.3), raw(0, 2, -1.0)]).unwrap();
        assert_eq!(c.dropped_self_loops, 1);
        assert_eq!(c.edges.len(), 1);
        let err = consolidate_interactions([raw(0, 1, 0.1), raw(0, 1, 1.5)]).unwrap_err();
        assert!(matches!(err, GraphError::SentimentOutOfRange { index: 1, .. }));
        let err = consolidate_interactions([raw(0, 1, f64::NAN)]).unwrap_err();
        assert!(matches!(err, GraphError::SentimentOutOfRange { index: 0, .. }));
    }

    #[test]
    fn consolidation_is_idempotent() {
        let c = consolidate_interactions([
            raw(0, 1, 0.25),
            raw(0, 1, -0.75),
            raw(2, 1, 0.5),
            raw(1, 0, 1.0),
        ])
        .unwrap();
        let again = consolidate_interactions(c.edges.iter().map(|e| raw(e.source, e.target, e.weight)))
            .unwrap();
        let w1: Vec<_> = c.edges.iter().map(|e| (e.source, e.target, e.weight)).collect();
        let w2: Vec<_> = again.edges.iter().map(|e| (e.source, e.target, e.weight)).collect();
        assert_eq!(w1, w2);
    }

    fn small_graph() -> InteractionGraph {
        let users = Interner::from_names(["a", "b", "c"]);
        let c = consolidate_interactions([raw(0, 1, 0.5), raw(1, 0, -0.1), raw(2, 1, -1.0)]).unwrap();
        InteractionGraph::new(users, c.edges, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, vec![1, 2, 1])
            .unwrap()
    }

    #[test]
    fn undirected_view_merges_directions() {
        let g = small_graph();
        let adj = g.undirected();
        assert_eq!(adj.neighbors(0), &[1]);
        assert_eq!(adj.neighbors(1), &[0, 2]);
        assert_eq!(adj.neighbors(2), &[1]);
        assert!((adj.strengths(0)[0] - 0.3).abs() < 1e-12);
        assert_eq!(adj.strengths(2)[0], 1.0);
        assert_eq!(g.edge_weight(2, 1), Some(-1.0));
        assert_eq!(g.edge_weight(1, 2), None);
    }

    #[test]
    fn validation_rejects_bad_graphs() {
        let users = Interner::from_names(["a", "b"]);
        let nan = InteractionGraph::new(users.clone(), vec![], vec![0.0, f32::NAN], 1, vec![1, 1]);
        assert!(matches!(nan, Err(GraphError::NonFiniteFeature { .. })));
        let dup = vec![
            SignedEdge { source: 0, target: 1, weight: 0.1, count: 1 },
            SignedEdge { source: 0, target: 1, weight: 0.2, count: 1 },
        ];
        assert!(InteractionGraph::new(users, dup, vec![0.0, 0.0], 1, vec![1, 1]).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let g = small_graph();
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        assert_eq!(InteractionGraph::read_binary(&buf[..]).unwrap(), g);
        assert!(InteractionGraph::read_binary(&buf[..10]).is_err());
    }

    #[test]
    fn interactions_file_parsing() {
        let rows = read_interactions("a\tb\t0.5\nb\ta\t-1\n".as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].sentiment, -1.0);
        let err = read_interactions("a\tb\t1.5\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::SentimentOutOfRange { index: 1, .. }));
        let err = read_interactions("a\tb\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::MalformedRecord { index: 1, .. }));
    }
}

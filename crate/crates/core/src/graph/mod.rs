//! Graph data model shared by both pipeline stages: the user–hashtag
//! bipartite graph and the consolidated user–user interaction graph.
//!
//! Graphs are immutable once built and can be shared between threads freely.

mod bipartite;
mod interaction;
mod intern;

pub use bipartite::{
    build_bipartite, read_posts, write_posts, BipartiteGraph, Post, SNAPSHOT_MAGIC,
    SNAPSHOT_VERSION,
};
pub use interaction::{
    consolidate_interactions, read_interactions, write_interactions, Consolidation,
    InteractionGraph, NamedInteraction, RawInteraction, SignedEdge, UndirectedAdjacency,
    INTERACTION_MAGIC,
};
pub use intern::{normalize_hashtag, Interner};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("input contains no edges")]
    EmptyGraph,
    #[error("record {index}: {reason}")]
    MalformedRecord { index: usize, reason: String },
    #[error("record {index}: sentiment {value} outside [-1, 1]")]
    SentimentOutOfRange { index: usize, value: f64 },
    #[error("zero weight on edge (user {user}, hashtag {hashtag})")]
    ZeroWeight { user: u32, hashtag: u32 },
    #[error("edge weight overflow")]
    WeightOverflow,
    #[error("unknown node: {0}")]
    UnknownNode(String),
    #[error("non-finite feature value for node {node:?}")]
    NonFiniteFeature { node: String },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

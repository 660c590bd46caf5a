//! Two-stage stance labeling for social-media users.
//!
//! Stage one runs reciprocal label propagation over the user–hashtag
//! bipartite graph, starting from a handful of seed hashtags per stance
//! ([`label_prop`]). Its noisy user labels then supervise a graph neural
//! network over the signed, attributed user–user interaction graph
//! ([`gnn`]), which labels every user, including those who never post a
//! hashtag.
//!
//! The remaining modules cover ingestion of precomputed tweet embeddings and
//! sentiment ([`ingest`]), evaluation ([`eval`]), synthetic planted-partition
//! datasets ([`synth`]), an optional zero-shot annotation client
//! ([`annotate`]) and the command-line front end ([`cli`]).

mod binio;

pub mod annotate;
pub mod cli;
pub mod eval;
pub mod gnn;
pub mod graph;
pub mod ingest;
pub mod label_prop;
pub mod stance;
pub mod synth;
pub mod tensor;

pub use graph::{BipartiteGraph, InteractionGraph, Interner};
pub use stance::{Assignment, Provenance, Stance, StanceAssignment, StanceNames};

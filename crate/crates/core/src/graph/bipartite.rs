use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use super::{normalize_hashtag, GraphError, Interner};
use crate::binio;

/// A user's post: the hashtags it carries, repeats allowed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Post {
    pub user: String,
    pub hashtags: Vec<String>,
}

impl Post {
    pub fn new<S: Into<String>>(user: impl Into<String>, hashtags: impl IntoIterator<Item = S>) -> Self {
        Self {
            user: user.into(),
            hashtags: hashtags.into_iter().map(Into::into).collect(),
        }
    }
}

/// Weighted user–hashtag incidence structure stored as two mirrored
/// compressed adjacency lists. Weights are posting counts (always ≥ 1);
/// neighbours are sorted by id within each row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BipartiteGraph {
    users: Interner,
    hashtags: Interner,
    user_offsets: Vec<usize>,
    user_tags: Vec<u32>,
    user_weights: Vec<u32>,
    tag_offsets: Vec<usize>,
    tag_users: Vec<u32>,
    tag_weights: Vec<u32>,
}

/// Counts hashtag occurrences per user. Hashtags are case-folded and stripped
/// of leading `#`.
pub fn build_bipartite<I>(posts: I) -> Result<BipartiteGraph, GraphError>
where
    I: IntoIterator<Item = Post>,
{
    let mut users = Interner::new();
    let mut hashtags = Interner::new();
    let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
    let mut n_posts = 0usize;
    for (index, post) in posts.into_iter().enumerate() {
        n_posts += 1;
        if post.user.trim().is_empty() {
            return Err(GraphError::MalformedRecord {
                index,
                reason: "empty user id".into(),
            });
        }
        let u = users.intern(post.user.trim());
        for raw in &post.hashtags {
            let tag = normalize_hashtag(raw).ok_or_else(|| GraphError::MalformedRecord {
                index,
                reason: format!("empty hashtag {raw:?}"),
            })?;
            let h = hashtags.intern(&tag);
            let c = counts.entry((u, h)).or_insert(0);
            *c = c.checked_add(1).ok_or(GraphError::WeightOverflow)?;
        }
    }
    if n_posts == 0 || counts.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    let edges = counts.into_iter().map(|((u, h), w)| (u, h, w)).collect();
    BipartiteGraph::from_parts(users, hashtags, edges)
}

impl BipartiteGraph {
    /// Builds the graph from `(user, hashtag, weight)` triples over existing
    /// symbol tables. Duplicate pairs are merged by summing their weights.
    pub fn from_parts(
        users: Interner,
        hashtags: Interner,
        mut edges: Vec<(u32, u32, u32)>,
    ) -> Result<Self, GraphError> {
        let (nu, nh) = (users.len(), hashtags.len());
        for &(u, h, w) in &edges {
            if u as usize >= nu || h as usize >= nh {
                return Err(GraphError::UnknownNode(format!("edge ({u}, {h})")));
            }
            if w == 0 {
                return Err(GraphError::ZeroWeight { user: u, hashtag: h });
            }
        }
        edges.sort_unstable_by_key(|&(u, h, _)| (u, h));
        let mut merged: Vec<(u32, u32, u32)> = Vec::with_capacity(edges.len());
        for (u, h, w) in edges {
            match merged.last_mut() {
                Some(last) if last.0 == u && last.1 == h => {
                    last.2 = last.2.checked_add(w).ok_or(GraphError::WeightOverflow)?;
                }
                _ => merged.push((u, h, w)),
            }
        }
        let mut user_offsets = vec![0usize; nu + 1];
        for &(u, _, _) in &merged {
            user_offsets[u as usize + 1] += 1;
        }
        for i in 0..nu {
            user_offsets[i + 1] += user_offsets[i];
        }
        let user_tags = merged.iter().map(|e| e.1).collect();
        let user_weights = merged.iter().map(|e| e.2).collect();
        drop(merged);
        Ok(Self::with_mirror(users, hashtags, user_offsets, user_tags, user_weights))
    }

    /// Builds from a user-side CSR: `offsets` has `users.len() + 1` entries,
    /// each row lists strictly increasing hashtag ids with nonzero weights.
    pub fn from_csr(
        users: Interner,
        hashtags: Interner,
        user_offsets: Vec<usize>,
        user_tags: Vec<u32>,
        user_weights: Vec<u32>,
    ) -> Result<Self, GraphError> {
        let (nu, nh, ne) = (users.len(), hashtags.len(), user_tags.len());
        if user_offsets.len() != nu + 1
            || user_offsets[0] != 0
            || user_offsets[nu] != ne
            || user_weights.len() != ne
            || user_offsets.windows(2).any(|p| p[0] > p[1])
        {
            return Err(GraphError::Format("inconsistent offsets".into()));
        }
        for u in 0..nu {
            let row = &user_tags[user_offsets[u]..user_offsets[u + 1]];
            if row.windows(2).any(|p| p[0] >= p[1]) || row.iter().any(|&h| h as usize >= nh) {
                return Err(GraphError::Format(format!("bad adjacency row for user {u}")));
            }
        }
        if user_weights.iter().any(|&w| w == 0) {
            return Err(GraphError::Format("zero edge weight".into()));
        }
        Ok(Self::with_mirror(users, hashtags, user_offsets, user_tags, user_weights))
    }

    /// Completes the hashtag-side mirror from a validated user-side CSR.
    fn with_mirror(
        users: Interner,
        hashtags: Interner,
        user_offsets: Vec<usize>,
        user_tags: Vec<u32>,
        user_weights: Vec<u32>,
    ) -> Self {
        let nh = hashtags.len();
        let mut tag_offsets = vec![0usize; nh + 1];
        for &h in &user_tags {
            tag_offsets[h as usize + 1] += 1;
        }
        for i in 0..nh {
            tag_offsets[i + 1] += tag_offsets[i];
        }
        let mut cursor = tag_offsets.clone();
        let mut tag_users = vec![0u32; user_tags.len()];
        let mut tag_weights = vec![0u32; user_tags.len()];
        for u in 0..users.len() {
            for e in user_offsets[u]..user_offsets[u + 1] {
                let h = user_tags[e] as usize;
                let slot = cursor[h];
                tag_users[slot] = u as u32;
                tag_weights[slot] = user_weights[e];
                cursor[h] += 1;
            }
        }
        Self {
            users,
            hashtags,
            user_offsets,
            user_tags,
            user_weights,
            tag_offsets,
            tag_users,
            tag_weights,
        }
    }

    pub fn users(&self) -> &Interner {
        &self.users
    }

    pub fn hashtags(&self) -> &Interner {
        &self.hashtags
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_hashtags(&self) -> usize {
        self.hashtags.len()
    }

    pub fn n_edges(&self) -> usize {
        self.user_tags.len()
    }

    /// `(hashtag, weight)` pairs of a user, sorted by hashtag id.
    pub fn user_neighbors(&self, user: u32) -> impl Iterator<Item = (u32, u32)> + '_ {
        let r = self.user_offsets[user as usize]..self.user_offsets[user as usize + 1];
        self.user_tags[r.clone()]
            .iter()
            .copied()
            .zip(self.user_weights[r].iter().copied())
    }

    /// `(user, weight)` pairs of a hashtag, sorted by user id.
    pub fn hashtag_neighbors(&self, hashtag: u32) -> impl Iterator<Item = (u32, u32)> + '_ {
        let r = self.tag_offsets[hashtag as usize]..self.tag_offsets[hashtag as usize + 1];
        self.tag_users[r.clone()]
            .iter()
            .copied()
            .zip(self.tag_weights[r].iter().copied())
    }

    pub fn user_degree(&self, user: u32) -> usize {
        self.user_offsets[user as usize + 1] - self.user_offsets[user as usize]
    }

    pub fn hashtag_degree(&self, hashtag: u32) -> usize {
        self.tag_offsets[hashtag as usize + 1] - self.tag_offsets[hashtag as usize]
    }

    /// All `(user, hashtag, weight)` edges in user-major order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        (0..self.n_users() as u32)
            .flat_map(move |u| self.user_neighbors(u).map(move |(h, w)| (u, h, w)))
    }

    pub fn total_weight(&self) -> u64 {
        self.user_weights.iter().map(|&w| w as u64).sum()
    }

    /// Checks that both incidence lists encode the same edge multiset, with no
    /// duplicate pairs and no zero weights.
    pub fn mirror_consistent(&self) -> bool {
        if self.user_tags.len() != self.tag_users.len() {
            return false;
        }
        let mut a: Vec<(u32, u32, u32)> = self.edges().collect();
        let mut b: Vec<(u32, u32, u32)> = (0..self.n_hashtags() as u32)
            .flat_map(|h| self.hashtag_neighbors(h).map(move |(u, w)| (u, h, w)))
            .collect();
        a.sort_unstable();
        b.sort_unstable();
        a == b
            && a.windows(2).all(|p| (p[0].0, p[0].1) != (p[1].0, p[1].1))
            && a.iter().all(|e| e.2 >= 1)
    }

    /// Copy with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: u32) -> Result<Self, GraphError> {
        let mut out = self.clone();
        for w in out.user_weights.iter_mut().chain(out.tag_weights.iter_mut()) {
            *w = w.checked_mul(factor).ok_or(GraphError::WeightOverflow)?;
        }
        Ok(out)
    }

    /// Writes the `SGR1` snapshot. See `docs/FORMATS.md` for the layout.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<(), GraphError> {
        w.write_all(SNAPSHOT_MAGIC)?;
        binio::write_u32(&mut w, SNAPSHOT_VERSION)?;
        binio::write_u64(&mut w, self.n_users() as u64)?;
        binio::write_u64(&mut w, self.n_hashtags() as u64)?;
        binio::write_u64(&mut w, self.n_edges() as u64)?;
        for name in self.users.names().iter().chain(self.hashtags.names()) {
            binio::write_str(&mut w, name)?;
        }
        for &o in &self.user_offsets {
            binio::write_u64(&mut w, o as u64)?;
        }
        for &h in &self.user_tags {
            binio::write_u32(&mut w, h)?;
        }
        for &x in &self.user_weights {
            binio::write_u32(&mut w, x)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self, GraphError> {
        binio::read_magic(&mut r, SNAPSHOT_MAGIC)?;
        let version = binio::read_u32(&mut r)?;
        if version != SNAPSHOT_VERSION {
            return Err(GraphError::Format(format!("unsupported snapshot version {version}")));
        }
        let nu = binio::read_len(&mut r, u32::MAX as u64, "user")?;
        let nh = binio::read_len(&mut r, u32::MAX as u64, "hashtag")?;
        let ne = binio::read_len(&mut r, u32::MAX as u64 * 64, "edge")?;
        let mut users = Interner::with_capacity(nu);
        for _ in 0..nu {
            users.intern(&binio::read_str(&mut r)?);
        }
        let mut hashtags = Interner::with_capacity(nh);
        for _ in 0..nh {
            hashtags.intern(&binio::read_str(&mut r)?);
        }
        if users.len() != nu || hashtags.len() != nh {
            return Err(GraphError::Format("duplicate symbol in snapshot".into()));
        }
        let mut user_offsets = Vec::with_capacity(nu + 1);
        for _ in 0..=nu {
            user_offsets.push(binio::read_u64(&mut r)? as usize);
        }
        if user_offsets[0] != 0
            || user_offsets[nu] != ne
            || user_offsets.windows(2).any(|p| p[0] > p[1])
        {
            return Err(GraphError::Format("inconsistent offsets".into()));
        }
        let mut user_tags = Vec::with_capacity(ne);
        for _ in 0..ne {
            user_tags.push(binio::read_u32(&mut r)?);
        }
        let mut user_weights = Vec::with_capacity(ne);
        for _ in 0..ne {
            user_weights.push(binio::read_u32(&mut r)?);
        }
        Self::from_csr(users, hashtags, user_offsets, user_tags, user_weights)
    }
}

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"SGR1";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Parses `user_id<TAB>hashtag[,hashtag...]` lines. Blank lines are skipped;
/// record indices in errors are 1-based line numbers.
pub fn read_posts<R: BufRead>(input: R) -> Result<Vec<Post>, GraphError> {
    let mut posts = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| GraphError::MalformedRecord {
            index: i + 1,
            reason: reason.to_string(),
        };
        let (user, tags) = line.split_once('\t').ok_or_else(|| bad("missing tab separator"))?;
        if user.trim().is_empty() {
            return Err(bad("empty user id"));
        }
        let hashtags: Vec<String> = tags.split(',').map(str::to_string).collect();
        if hashtags.iter().any(|t| normalize_hashtag(t).is_none()) {
            return Err(bad("empty hashtag"));
        }
        posts.push(Post {
            user: user.to_string(),
            hashtags,
        });
    }
    Ok(posts)
}

pub fn write_posts<W: Write>(mut out: W, posts: &[Post]) -> std::io::Result<()> {
    for p in posts {
        writeln!(out, "{}\t{}", p.user, p.hashtags.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(g: &BipartiteGraph, user: &str, tag: &str) -> Option<u32> {
        let u = g.users().get(user)?;
        let h = g.hashtags().get(tag)?;
        g.user_neighbors(u).find(|&(x, _)| x == h).map(|(_, w)| w)
    }

    #[test]
    fn weights_count_repeated_hashtags() {
        let g = build_bipartite([Post::new("u1", ["#a", "#a", "#b"])]).unwrap();
        assert_eq!(g.n_edges(), 2);
        assert_eq!(edge(&g, "u1", "a"), Some(2));
        assert_eq!(edge(&g, "u1", "b"), Some(1));
        assert!(g.mirror_consistent());
    }

    #[test]
    fn counts_accumulate_across_posts() {
        let g = build_bipartite([
            Post::new("u1", ["a"]),
            Post::new("u2", ["a", "c"]),
            Post::new("u1", ["a", "b"]),
        ])
        .unwrap();
        assert_eq!(edge(&g, "u1", "a"), Some(2));
        assert_eq!(g.total_weight(), 5);
    }

    #[test]
    fn case_folding_merges_hashtags() {
        let g = build_bipartite([Post::new("u1", ["#A"]), Post::new("u2", ["#a"])]).unwrap();
        assert_eq!(g.n_hashtags(), 1);
        let h = g.hashtags().get("a").unwrap();
        assert_eq!(g.hashtag_degree(h), 2);
    }

    #[test]
    fn seed_table_builds_ten_hashtags() {
        let seeds = [
            "actonclimate",
            "climatecrisis",
            "climateaction",
            "climateemergency",
            "climateactionnow",
            "climatechangehoax",
            "globalwarminghoax",
            "globalcooling",
            "globalwarmingisahoax",
            "climatehoax",
        ];
        let posts = (0..3).map(|i| Post::new(format!("u{i}"), seeds));
        let g = build_bipartite(posts).unwrap();
        assert_eq!(g.n_hashtags(), 10);
        assert_eq!(g.n_edges(), 30);
        assert!(g.edges().all(|(_, _, w)| w == 1));
    }

    #[test]
    fn empty_and_malformed_input_are_rejected() {
        assert!(matches!(
            build_bipartite(Vec::<Post>::new()),
            Err(GraphError::EmptyGraph)
        ));
        let err = build_bipartite([Post::new("u1", ["a"]), Post::new("u2", ["#"])]).unwrap_err();
        assert!(matches!(err, GraphError::MalformedRecord { index: 1, .. }));
        let err = build_bipartite([Post::new(" ", ["a"])]).unwrap_err();
        assert!(matches!(err, GraphError::MalformedRecord { index: 0, .. }));
    }

    #[test]
    fn posts_file_parsing() {
        let text = "u1\t#A,b\n\nu2\tb\n";
        let posts = read_posts(text.as_bytes()).unwrap();
        assert_eq!(posts.len(), 2);
        let g = build_bipartite(posts).unwrap();
        assert_eq!(g.n_hashtags(), 2);
        let err = read_posts("u1 a\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::MalformedRecord { index: 1, .. }));
        let err = read_posts("u1\ta\nu2\ta,,b\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::MalformedRecord { index: 2, .. }));
    }

    #[test]
    fn snapshot_round_trip_and_corruption() {
        let g = build_bipartite([
            Post::new("u1", ["a", "a", "b"]),
            Post::new("u2", ["b", "c"]),
            Post::new("u3", ["c"]),
        ])
        .unwrap();
        let mut buf = Vec::new();
        g.write_snapshot(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SGR1");
        let back = BipartiteGraph::read_snapshot(&buf[..]).unwrap();
        assert_eq!(back, g);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(BipartiteGraph::read_snapshot(&bad[..]).is_err());
        assert!(BipartiteGraph::read_snapshot(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn scaling_multiplies_all_weights() {
        let g = build_bipartite([Post::new("u1", ["a", "a", "b"])]).unwrap();
        let s = g.scaled(3).unwrap();
        assert_eq!(s.total_weight(), 9);
        assert!(s.mirror_consistent());
    }
}

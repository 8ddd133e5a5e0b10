//! The quenched environment: a supercritical Galton-Watson tree realised
//! lazily as a pure function of `(env_seed, node path)`.
//!
//! Quenched experiments re-sample percolation thousands of times on one
//! fixed tree whose full extent is astronomically large. Making the
//! offspring count of every node a deterministic function of the seed and
//! the node's path keeps the environment re-usable and shardable across
//! workers in O(explored) memory, and lets caches be evicted freely.
//!
//! # Node hashing (bit-exact contract)
//!
//! The mixing function is the SplitMix64 finalizer:
//!
//! ```text
//! mix64(z): z ^= z >> 30; z *= 0xbf58476d1ce4e5b9;
//!           z ^= z >> 27; z *= 0x94d049bb133111eb;
//!           z ^= z >> 31; return z
//! ```
//!
//! A node's key is obtained by folding its path (child indices from the
//! root) into the seed:
//!
//! ```text
//! key(root)        = mix64(env_seed ^ 0x9e3779b97f4a7c15)
//! key(child i of v) = mix64(key(v) ^ (i + 1))
//! ```
//!
//! The offspring count of a node is the single-uniform inverse CDF of the
//! ambient law evaluated at
//!
//! ```text
//! u = (mix64(key ^ 0xd6e8feb86659fd93) >> 11) * 2^-53
//! ```
//!
//! All three steps are fixed; environments are reproducible across
//! platforms and languages from `(law, env_seed)` alone.

use std::sync::Arc;

use dashmap::DashMap;
use thiserror::Error;

use crate::laws::{LawSpec, OffspringLaw};

/// Default cap on the number of nodes any single expansion may touch.
pub const DEFAULT_NODE_BUDGET: u64 = 100_000_000;

/// Default bound on the offspring memo table.
const DEFAULT_CACHE_CAP: usize = 1 << 20;

#[derive(Debug, Error, PartialEq)]
pub enum ArborError {
    #[error("invalid node: child index {index} at depth {depth} >= offspring count {count}")]
    InvalidNode { depth: usize, index: u32, count: u64 },
    #[error("expansion budget exceeded: more than {0} nodes")]
    BudgetExceeded(u64),
    #[error("plane-tree enumeration capped at 10 vertices, asked for {0}")]
    TooLarge(usize),
    #[error("ambient law must have support >= 1 and mean > 1")]
    NotAmbient,
    #[error("malformed preorder child-count sequence")]
    MalformedCounts,
}

/// SplitMix64 finalizer; a 64-bit avalanche permutation.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const VALUE_SALT: u64 = 0xd6e8_feb8_6659_fd93;

#[inline]
fn unit_from_bits(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A vertex of the ambient tree, named by its path of child indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct NodeId {
    path: Vec<u32>,
}

impl NodeId {
    pub fn root() -> Self {
        NodeId { path: Vec::new() }
    }

    pub fn from_path(path: Vec<u32>) -> Self {
        NodeId { path }
    }

    pub fn child(&self, index: u32) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        NodeId { path }
    }

    pub fn depth(&self) -> usize {
        self.path.len()
    }

    pub fn path(&self) -> &[u32] {
        &self.path
    }
}

/// A lightweight handle to an ambient node: its mixed key and depth.
///
/// Cursors support O(1) descent and are the hot path for percolation
/// exploration; they carry no path and are only meaningful relative to the
/// environment that produced them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeCursor {
    pub key: u64,
    pub depth: u32,
}

/// Identity of an environment: seed plus a fingerprint of the ambient law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvId {
    pub env_seed: u64,
    pub law_fingerprint: u64,
}

/// Environment descriptor as written to configs and output records.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnvDescriptor {
    pub law: LawSpec,
    pub env_seed: u64,
}

fn fingerprint_law(spec: &LawSpec) -> u64 {
    let mut h = mix64(0x6c62_272e_07bb_0142);
    match spec {
        LawSpec::Table { pmf } => {
            h = mix64(h ^ 1);
            for (k, p) in pmf {
                for b in k.bytes() {
                    h = mix64(h ^ b as u64);
                }
                h = mix64(h ^ p.to_bits());
            }
        }
        LawSpec::Power { alpha } => {
            h = mix64(h ^ 2);
            h = mix64(h ^ alpha.to_bits());
        }
    }
    h
}

/// The quenched environment `T`: an infinite supercritical tree expanded on
/// demand.
///
/// `offspring_count` is a pure function of `(env_seed, path)`; the memo
/// table is an optimisation whose fills are idempotent, so concurrent racing
/// fills and evictions are harmless. Cloning shares the law and the cache.
#[derive(Debug, Clone)]
pub struct LazyAmbientTree {
    law: Arc<OffspringLaw>,
    env_seed: u64,
    cache: Arc<DashMap<NodeId, u64>>,
    cache_cap: usize,
    id: EnvId,
}

impl LazyAmbientTree {
    pub fn new(law: Arc<OffspringLaw>, env_seed: u64) -> Result<Self, ArborError> {
        if law.support_min() < 1 || law.mean() <= 1.0 {
            return Err(ArborError::NotAmbient);
        }
        let spec = law.spec().ok_or(ArborError::NotAmbient)?;
        let id = EnvId { env_seed, law_fingerprint: fingerprint_law(spec) };
        Ok(LazyAmbientTree {
            law,
            env_seed,
            cache: Arc::new(DashMap::new()),
            cache_cap: DEFAULT_CACHE_CAP,
            id,
        })
    }

    pub fn from_descriptor(desc: &EnvDescriptor) -> Result<Self, ArborError> {
        let law = desc.law.build().map_err(|_| ArborError::NotAmbient)?;
        Self::new(Arc::new(law), desc.env_seed)
    }

    pub fn descriptor(&self) -> EnvDescriptor {
        EnvDescriptor {
            law: self.law.spec().expect("ambient laws carry a spec").clone(),
            env_seed: self.env_seed,
        }
    }

    pub fn law(&self) -> &OffspringLaw {
        &self.law
    }

    pub fn env_seed(&self) -> u64 {
        self.env_seed
    }

    pub fn id(&self) -> EnvId {
        self.id
    }

    pub fn root_cursor(&self) -> NodeCursor {
        NodeCursor { key: mix64(self.env_seed ^ SEED_SALT), depth: 0 }
    }

    /// Descends to the `index`-th child. Purely arithmetic; validity of the
    /// index against the parent's offspring count is the caller's business.
    #[inline]
    pub fn child_cursor(&self, cursor: NodeCursor, index: u32) -> NodeCursor {
        NodeCursor {
            key: mix64(cursor.key ^ (index as u64 + 1)),
            depth: cursor.depth + 1,
        }
    }

    /// Offspring count at a cursor: pure, uncached, always >= 1.
    #[inline]
    pub fn cursor_offspring(&self, cursor: NodeCursor) -> u64 {
        let u = unit_from_bits(mix64(cursor.key ^ VALUE_SALT));
        let k = self.law.quantile(u);
        debug_assert!(k >= 1, "ambient law has support >= 1");
        k
    }

    /// Offspring count of a node named by path, checking every prefix.
    ///
    /// Results are memoised in a bounded concurrent table; repeated queries
    /// return identical values with or without cache eviction.
    pub fn offspring_count(&self, node: &NodeId) -> Result<u64, ArborError> {
        if let Some(hit) = self.cache.get(node) {
            return Ok(*hit);
        }
        let mut cursor = self.root_cursor();
        for (depth, &index) in node.path().iter().enumerate() {
            let count = self.cursor_offspring(cursor);
            if (index as u64) >= count {
                return Err(ArborError::InvalidNode { depth, index, count });
            }
            cursor = self.child_cursor(cursor, index);
        }
        let count = self.cursor_offspring(cursor);
        if self.cache.len() < self.cache_cap {
            self.cache.insert(node.clone(), count);
        }
        Ok(count)
    }

    /// Drops all memoised counts. Purely an optimisation knob; observable
    /// behaviour is unchanged.
    pub fn clear_cache(&self) {
        self.cache.clear();
    }

    /// Exact generation sizes `|T_0|, ..., |T_max_level|`.
    ///
    /// Refuses (rather than crashes) when the estimated or actual node count
    /// exceeds `budget`: supercritical growth makes accidental full
    /// expansion fatal.
    pub fn generation_sizes_with_budget(
        &self,
        max_level: u32,
        budget: u64,
    ) -> Result<Vec<u64>, ArborError> {
        // A-priori estimate sum_{l<=L} mu^l, using the ambient mean.
        let mu = self.law.mean();
        let mut estimate = 0.0f64;
        let mut term = 1.0f64;
        for _ in 0..=max_level {
            estimate += term;
            term *= mu;
            if !estimate.is_finite() || estimate > budget as f64 {
                return Err(ArborError::BudgetExceeded(budget));
            }
        }

        let mut counts = vec![0u64; max_level as usize + 1];
        counts[0] = 1;
        let mut visited: u64 = 1;
        if max_level == 0 {
            return Ok(counts);
        }

        struct Frame {
            cursor: NodeCursor,
            offspring: u64,
            next: u64,
        }
        let root = self.root_cursor();
        let mut stack = vec![Frame { cursor: root, offspring: self.cursor_offspring(root), next: 0 }];
        while let Some(top) = stack.last_mut() {
            if top.next == top.offspring {
                stack.pop();
                continue;
            }
            let index = top.next as u32;
            top.next += 1;
            let child = self.child_cursor(top.cursor, index);
            counts[child.depth as usize] += 1;
            visited += 1;
            if visited > budget {
                return Err(ArborError::BudgetExceeded(budget));
            }
            if child.depth < max_level {
                let offspring = self.cursor_offspring(child);
                stack.push(Frame { cursor: child, offspring, next: 0 });
            }
        }
        Ok(counts)
    }

    pub fn generation_sizes(&self, max_level: u32) -> Result<Vec<u64>, ArborError> {
        self.generation_sizes_with_budget(max_level, DEFAULT_NODE_BUDGET)
    }

    /// The additive martingale `W_m = |T_m| / mu^m`.
    pub fn martingale_w(&self, level: u32) -> Result<MartingaleEstimate, ArborError> {
        let sizes = self.generation_sizes(level)?;
        let generation_size = *sizes.last().unwrap();
        let value = generation_size as f64 / self.law.mean().powi(level as i32);
        Ok(MartingaleEstimate { level, generation_size, value })
    }
}

/// One evaluation of the martingale `W_m = |T_m| / mu^m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleEstimate {
    pub level: u32,
    pub generation_size: u64,
    pub value: f64,
}

/// A finite rooted plane tree with vertices indexed in lexicographic
/// (depth-first, left-to-right) order; the root is vertex 0.
///
/// Children are stored in CSR form to keep large clusters compact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaneTree {
    parent: Vec<u32>, // parent[0] = NO_PARENT
    depth: Vec<u32>,
    child_start: Vec<u32>,
    child_list: Vec<u32>,
}

const NO_PARENT: u32 = u32::MAX;

impl PlaneTree {
    /// Builds a tree from child counts in preorder (the Lukasiewicz data).
    pub fn from_preorder_child_counts(counts: &[u64]) -> Result<PlaneTree, ArborError> {
        if counts.is_empty() {
            return Err(ArborError::MalformedCounts);
        }
        let n = counts.len();
        let total_children: u64 = counts.iter().sum();
        if total_children != n as u64 - 1 {
            return Err(ArborError::MalformedCounts);
        }
        let mut parent = vec![NO_PARENT; n];
        let mut depth = vec![0u32; n];
        // stack of (vertex, remaining children to attach)
        let mut stack: Vec<(u32, u64)> = vec![(0, counts[0])];
        for v in 1..n {
            loop {
                let top = stack.last_mut().ok_or(ArborError::MalformedCounts)?;
                if top.1 == 0 {
                    stack.pop();
                } else {
                    top.1 -= 1;
                    parent[v] = top.0;
                    depth[v] = depth[top.0 as usize] + 1;
                    break;
                }
            }
            stack.push((v as u32, counts[v]));
        }
        Ok(Self::from_parent_arrays(parent, depth, counts))
    }

    fn from_parent_arrays(parent: Vec<u32>, depth: Vec<u32>, counts: &[u64]) -> PlaneTree {
        let n = parent.len();
        let mut child_start = vec![0u32; n + 1];
        for (v, &c) in counts.iter().enumerate() {
            child_start[v + 1] = child_start[v] + c as u32;
        }
        let mut fill = child_start.clone();
        let mut child_list = vec![0u32; n - 1];
        for v in 1..n {
            let p = parent[v] as usize;
            child_list[fill[p] as usize] = v as u32;
            fill[p] += 1;
        }
        PlaneTree { parent, depth, child_start, child_list }
    }

    /// Builds from parallel parent/depth arrays in preorder; children of each
    /// vertex must appear in increasing index order (true for preorder).
    pub fn from_preorder_parents(parent: Vec<u32>, depth: Vec<u32>) -> PlaneTree {
        let n = parent.len();
        let mut counts = vec![0u64; n];
        for v in 1..n {
            counts[parent[v] as usize] += 1;
        }
        Self::from_parent_arrays(parent, depth, &counts)
    }

    pub fn singleton() -> PlaneTree {
        PlaneTree {
            parent: vec![NO_PARENT],
            depth: vec![0],
            child_start: vec![0, 0],
            child_list: Vec::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.parent.len()
    }

    pub fn parent(&self, v: u32) -> Option<u32> {
        let p = self.parent[v as usize];
        (p != NO_PARENT).then_some(p)
    }

    pub fn depth(&self, v: u32) -> u32 {
        self.depth[v as usize]
    }

    pub fn depths(&self) -> &[u32] {
        &self.depth
    }

    pub fn children(&self, v: u32) -> &[u32] {
        let v = v as usize;
        &self.child_list[self.child_start[v] as usize..self.child_start[v + 1] as usize]
    }

    pub fn child_count(&self, v: u32) -> u64 {
        (self.child_start[v as usize + 1] - self.child_start[v as usize]) as u64
    }

    pub fn height(&self) -> u32 {
        *self.depth.iter().max().unwrap()
    }

    /// Number of vertices at each generation 0..=height.
    pub fn generation_sizes(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.height() as usize + 1];
        for &d in &self.depth {
            out[d as usize] += 1;
        }
        out
    }

    pub fn preorder_child_counts(&self) -> Vec<u64> {
        (0..self.size() as u32).map(|v| self.child_count(v)).collect()
    }

    /// Structural sanity check used by tests and debug builds.
    pub fn validate(&self) -> bool {
        let n = self.size();
        if self.depth[0] != 0 || self.parent[0] != NO_PARENT {
            return false;
        }
        for v in 1..n {
            let p = self.parent[v];
            if p as usize >= n || self.depth[v] != self.depth[p as usize] + 1 {
                return false;
            }
            // preorder: parent precedes child
            if p as usize >= v {
                return false;
            }
        }
        // children lists sorted (lexicographic order) and consistent
        for v in 0..n as u32 {
            let ch = self.children(v);
            if ch.windows(2).any(|w| w[0] >= w[1]) {
                return false;
            }
            if ch.iter().any(|&c| self.parent[c as usize] != v) {
                return false;
            }
        }
        true
    }
}

/// All plane trees with exactly `n_vertices` vertices, in a fixed order;
/// there are Catalan(n-1) of them. Exhaustive oracle for the codec tests.
pub fn enumerate_plane_trees(n_vertices: usize) -> Result<Vec<PlaneTree>, ArborError> {
    if n_vertices == 0 {
        return Err(ArborError::MalformedCounts);
    }
    if n_vertices > 10 {
        return Err(ArborError::TooLarge(n_vertices));
    }
    // Ordered forests with m vertices, as (tree count, concatenated
    // preorder child counts).
    fn forests(m: usize, memo: &mut Vec<Option<Vec<Vec<u64>>>>) -> Vec<(u64, Vec<u64>)> {
        let mut out = Vec::new();
        if m == 0 {
            out.push((0, Vec::new()));
            return out;
        }
        for s in 1..=m {
            let ts = trees(s, memo);
            let rests = forests(m - s, memo);
            for t in &ts {
                for (k, rest) in &rests {
                    let mut seq = t.clone();
                    seq.extend_from_slice(rest);
                    out.push((k + 1, seq));
                }
            }
        }
        out
    }
    fn trees(n: usize, memo: &mut Vec<Option<Vec<Vec<u64>>>>) -> Vec<Vec<u64>> {
        if let Some(cached) = &memo[n] {
            return cached.clone();
        }
        let mut out = Vec::new();
        if n == 1 {
            out.push(vec![0]);
        } else {
            for (k, f) in forests(n - 1, memo) {
                let mut seq = Vec::with_capacity(n);
                seq.push(k);
                seq.extend_from_slice(&f);
                out.push(seq);
            }
        }
        memo[n] = Some(out.clone());
        out
    }
    let mut memo = vec![None; n_vertices + 1];
    trees(n_vertices, &mut memo)
        .into_iter()
        .map(|seq| PlaneTree::from_preorder_child_counts(&seq))
        .collect()
}

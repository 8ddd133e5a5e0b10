//! Bernoulli percolation on the lazy environment.
//!
//! Everything here is quenched: the environment is fixed, the randomness is
//! the caller's RNG deciding which edges are kept. Exploration is
//! depth-first so cluster vertices come out in lexicographic order, and only
//! O(cluster size) ambient nodes are ever touched.

use rand::Rng;
use thiserror::Error;

use crate::arbor::{EnvId, LazyAmbientTree, NodeCursor, NodeId, PlaneTree};

/// Default cap on explored nodes per cluster; protects against p > 1/mu
/// misconfiguration on an infinite tree.
pub const DEFAULT_EXPLORATION_CAP: u64 = 10_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum PercoError {
    #[error("edge probability {0} outside [0, 1]")]
    BadEdgeProbability(f64),
    #[error("exploration budget exceeded: cluster grew past {0} nodes")]
    ExplorationBudgetExceeded(u64),
    #[error("no conditioned sample after {attempts} attempts")]
    MaxAttemptsExceeded { attempts: u64 },
    #[error("clusters come from different environments")]
    DifferentEnvironments,
    #[error("need {needed} clusters, got {got}")]
    NotEnoughClusters { needed: usize, got: usize },
    #[error("level expansion budget exceeded ({0} nodes)")]
    BudgetExceeded(u64),
    #[error("reps must be >= 1")]
    ZeroReps,
    #[error("condition threshold must be >= 1")]
    BadThreshold,
}

/// Conditioning event for rejection sampling.
///
/// `SizeWindow` is an artifact addition used by the contour-scaling
/// experiments; the limit statements condition on `{size >= n}` but
/// self-similarity checks are cleaner on windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionEvent {
    SizeAtLeast(u64),
    HeightAtLeast(u32),
    SizeWindow { lo: u64, hi: u64 },
}

impl ConditionEvent {
    fn check(&self) -> Result<(), PercoError> {
        let ok = match *self {
            ConditionEvent::SizeAtLeast(n) => n >= 1,
            ConditionEvent::HeightAtLeast(n) => n >= 1,
            ConditionEvent::SizeWindow { lo, hi } => lo >= 1 && hi >= lo,
        };
        if ok {
            Ok(())
        } else {
            Err(PercoError::BadThreshold)
        }
    }

    fn holds(&self, cluster: &Cluster) -> bool {
        match *self {
            ConditionEvent::SizeAtLeast(n) => cluster.size() >= n,
            ConditionEvent::HeightAtLeast(h) => cluster.height() >= h,
            ConditionEvent::SizeWindow { lo, hi } => {
                let s = cluster.size();
                lo <= s && s <= hi
            }
        }
    }
}

/// The root percolation cluster: a rooted plane subtree of the environment.
#[derive(Debug, Clone)]
pub struct Cluster {
    shape: PlaneTree,
    /// For each vertex, the child index of its ambient edge (root: 0, unused).
    ambient_child_index: Vec<u32>,
    env: EnvId,
    gen_sizes: Vec<u64>,
}

impl Cluster {
    pub fn shape(&self) -> &PlaneTree {
        &self.shape
    }

    pub fn size(&self) -> u64 {
        self.shape.size() as u64
    }

    pub fn height(&self) -> u32 {
        self.shape.height()
    }

    /// Generation sizes `Y_k = #C_k` for k = 0..=height.
    pub fn gen_sizes(&self) -> &[u64] {
        &self.gen_sizes
    }

    pub fn env_id(&self) -> EnvId {
        self.env
    }

    pub fn ambient_child_indices(&self) -> &[u32] {
        &self.ambient_child_index
    }

    /// Ambient identity of a cluster vertex (path from the root of T).
    pub fn ambient_id(&self, v: u32) -> NodeId {
        let mut rev = Vec::with_capacity(self.shape.depth(v) as usize);
        let mut cur = v;
        while let Some(p) = self.shape.parent(cur) {
            rev.push(self.ambient_child_index[cur as usize]);
            cur = p;
        }
        rev.reverse();
        NodeId::from_path(rev)
    }

    /// Type invariants; exercised by debug builds after every sampling op.
    pub fn validate(&self, env: &LazyAmbientTree) -> bool {
        if env.id() != self.env || !self.shape.validate() {
            return false;
        }
        if self.gen_sizes != self.shape.generation_sizes() {
            return false;
        }
        if self.gen_sizes.iter().sum::<u64>() != self.size() {
            return false;
        }
        // Ambient consistency: each vertex's edge index is valid, and sibling
        // order matches ambient order (planar consistency).
        let mut cursors = vec![env.root_cursor(); self.shape.size()];
        for v in 0..self.shape.size() as u32 {
            if let Some(p) = self.shape.parent(v) {
                let idx = self.ambient_child_index[v as usize];
                if (idx as u64) >= env.cursor_offspring(cursors[p as usize]) {
                    return false;
                }
                cursors[v as usize] = env.child_cursor(cursors[p as usize], idx);
            }
            let ch = self.shape.children(v);
            if ch.windows(2).any(|w| {
                self.ambient_child_index[w[0] as usize] >= self.ambient_child_index[w[1] as usize]
            }) {
                return false;
            }
        }
        true
    }
}

struct Explorer<'a, R: Rng + ?Sized> {
    env: &'a LazyAmbientTree,
    p: f64,
    rng: &'a mut R,
    max_depth: u32,
    max_nodes: u64,
}

impl<'a, R: Rng + ?Sized> Explorer<'a, R> {
    /// Depth-first exploration; vertices are numbered in preorder, which is
    /// the lexicographic order of their ambient ids.
    fn run(&mut self) -> Result<Cluster, PercoError> {
        let mut parent: Vec<u32> = vec![u32::MAX];
        let mut depth: Vec<u32> = vec![0];
        let mut amb: Vec<u32> = vec![0];
        // stack entries: (cursor, ambient child index, parent slot)
        let mut stack: Vec<(NodeCursor, u32, u32)> = Vec::new();
        let root = self.env.root_cursor();
        self.expand(root, 0, &mut stack);
        while let Some((cursor, index, parent_slot)) = stack.pop() {
            let v = parent.len() as u32;
            if v as u64 > self.max_nodes {
                return Err(PercoError::ExplorationBudgetExceeded(self.max_nodes));
            }
            parent.push(parent_slot);
            depth.push(cursor.depth);
            amb.push(index);
            self.expand(cursor, v, &mut stack);
        }
        let shape = PlaneTree::from_preorder_parents(parent, depth);
        let gen_sizes = shape.generation_sizes();
        Ok(Cluster {
            shape,
            ambient_child_index: amb,
            env: self.env.id(),
            gen_sizes,
        })
    }

    /// Draws the keep/drop decisions for all ambient children of `cursor`
    /// (in ambient order) and pushes the kept ones in reverse, so the stack
    /// pops them left to right.
    fn expand(&mut self, cursor: NodeCursor, slot: u32, stack: &mut Vec<(NodeCursor, u32, u32)>) {
        if cursor.depth >= self.max_depth {
            return;
        }
        let k = self.env.cursor_offspring(cursor);
        let before = stack.len();
        for i in 0..k {
            if self.rng.random::<f64>() < self.p {
                stack.push((self.env.child_cursor(cursor, i as u32), i as u32, slot));
            }
        }
        stack[before..].reverse();
    }
}

fn check_p(p: f64) -> Result<(), PercoError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(PercoError::BadEdgeProbability(p))
    }
}

/// The root percolation cluster: keep each edge independently with
/// probability `p`, return the connected component of the root.
pub fn percolate_root_cluster<R: Rng + ?Sized>(
    env: &LazyAmbientTree,
    p: f64,
    rng: &mut R,
) -> Result<Cluster, PercoError> {
    percolate_with_limits(env, p, rng, u32::MAX, DEFAULT_EXPLORATION_CAP)
}

/// As [`percolate_root_cluster`] with an explicit exploration cap and a
/// depth truncation: the result is the root cluster of percolation on
/// `T_{<= max_depth}`.
pub fn percolate_with_limits<R: Rng + ?Sized>(
    env: &LazyAmbientTree,
    p: f64,
    rng: &mut R,
    max_depth: u32,
    max_nodes: u64,
) -> Result<Cluster, PercoError> {
    check_p(p)?;
    let cluster = Explorer { env, p, rng, max_depth, max_nodes }.run()?;
    debug_assert!(cluster.validate(env));
    Ok(cluster)
}

/// Cluster size censored at `cap`: returns `min(|C|, cap + 1)`, where
/// `cap + 1` means "strictly larger than cap". Structure is not retained,
/// so this is the cheap primitive behind tail curves.
pub fn censored_cluster_size<R: Rng + ?Sized>(
    env: &LazyAmbientTree,
    p: f64,
    cap: u64,
    rng: &mut R,
) -> Result<u64, PercoError> {
    check_p(p)?;
    let mut count: u64 = 0;
    let mut stack: Vec<NodeCursor> = vec![env.root_cursor()];
    while let Some(cursor) = stack.pop() {
        count += 1;
        if count > cap {
            return Ok(cap + 1);
        }
        let k = env.cursor_offspring(cursor);
        for i in 0..k {
            if rng.random::<f64>() < p {
                stack.push(env.child_cursor(cursor, i as u32));
            }
        }
    }
    Ok(count)
}

/// Cluster height censored at `max_depth`: max generation reached by the
/// root cluster, capped. Only explores `T_{<= max_depth}`.
pub fn censored_cluster_height<R: Rng + ?Sized>(
    env: &LazyAmbientTree,
    p: f64,
    max_depth: u32,
    rng: &mut R,
    max_nodes: u64,
) -> Result<u32, PercoError> {
    check_p(p)?;
    let mut best = 0u32;
    let mut count = 0u64;
    let mut stack: Vec<NodeCursor> = vec![env.root_cursor()];
    while let Some(cursor) = stack.pop() {
        count += 1;
        if count > max_nodes {
            return Err(PercoError::ExplorationBudgetExceeded(max_nodes));
        }
        best = best.max(cursor.depth);
        if cursor.depth == max_depth {
            return Ok(max_depth);
        }
        let k = env.cursor_offspring(cursor);
        for i in 0..k {
            if rng.random::<f64>() < p {
                stack.push(env.child_cursor(cursor, i as u32));
            }
        }
    }
    Ok(best)
}

/// Rejection sampling: the first cluster in an i.i.d. sequence satisfying
/// the conditioning event.
///
/// Intended for `p = 1/mu`; warns when `|p * mu - 1| > 1e-9` since the
/// conditioned limit statements are about the critical point.
pub fn sample_conditioned_cluster<R: Rng + ?Sized>(
    env: &LazyAmbientTree,
    p: f64,
    cond: ConditionEvent,
    rng: &mut R,
    max_attempts: u64,
) -> Result<Cluster, PercoError> {
    check_p(p)?;
    cond.check()?;
    if (p * env.law().mean() - 1.0).abs() > 1e-9 {
        log::warn!(
            "conditioned sampling at p = {p}, but criticality needs p = 1/mu = {}",
            1.0 / env.law().mean()
        );
    }
    // Window conditioning can reject as soon as the size cap is passed.
    let max_nodes = match cond {
        ConditionEvent::SizeWindow { hi, .. } => hi,
        _ => DEFAULT_EXPLORATION_CAP,
    };
    for _ in 0..max_attempts {
        match percolate_with_limits(env, p, rng, u32::MAX, max_nodes) {
            Ok(cluster) => {
                if cond.holds(&cluster) {
                    return Ok(cluster);
                }
            }
            Err(PercoError::ExplorationBudgetExceeded(_)) => {
                if let ConditionEvent::SizeWindow { .. } = cond {
                    continue; // overshot the window: plain rejection
                }
                return Err(PercoError::ExplorationBudgetExceeded(max_nodes));
            }
            Err(e) => return Err(e),
        }
    }
    Err(PercoError::MaxAttemptsExceeded { attempts: max_attempts })
}

/// `count` independent percolations of the same environment.
pub fn iid_cluster_family<R: Rng + ?Sized>(
    env: &LazyAmbientTree,
    p: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Cluster>, PercoError> {
    (0..count).map(|_| percolate_root_cluster(env, p, rng)).collect()
}

/// The subtree of vertices present in both clusters, matched by ambient
/// identity. Both clusters must come from the same environment.
pub fn cluster_intersection(a: &Cluster, b: &Cluster) -> Result<PlaneTree, PercoError> {
    if a.env_id() != b.env_id() {
        return Err(PercoError::DifferentEnvironments);
    }
    let mut parent: Vec<u32> = vec![u32::MAX];
    let mut depth: Vec<u32> = vec![0];
    // stack of (vertex in a, vertex in b, parent slot in the intersection)
    let mut stack: Vec<(u32, u32, u32)> = Vec::new();
    push_common_children(a, b, 0, 0, 0, &mut stack);
    while let Some((va, vb, slot)) = stack.pop() {
        let v = parent.len() as u32;
        parent.push(slot);
        depth.push(a.shape.depth(va));
        push_common_children(a, b, va, vb, v, &mut stack);
    }
    Ok(PlaneTree::from_preorder_parents(parent, depth))
}

fn push_common_children(
    a: &Cluster,
    b: &Cluster,
    va: u32,
    vb: u32,
    slot: u32,
    stack: &mut Vec<(u32, u32, u32)>,
) {
    let ca = a.shape.children(va);
    let cb = b.shape.children(vb);
    let before = stack.len();
    let (mut i, mut j) = (0, 0);
    while i < ca.len() && j < cb.len() {
        let ia = a.ambient_child_index[ca[i] as usize];
        let ib = b.ambient_child_index[cb[j] as usize];
        match ia.cmp(&ib) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                stack.push((ca[i], cb[j], slot));
                i += 1;
                j += 1;
            }
        }
    }
    stack[before..].reverse();
}

/// Parameters of the decoupling event diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct EventParams {
    pub n: u64,
    pub alpha: f64,
    /// Cut level exponent; defaults to (alpha - 1) / (5 alpha).
    pub epsilon: Option<f64>,
    /// Index-range exponent; the decoupling argument fixes some
    /// r > 3/2 + 1/(4(alpha-1)).
    pub r: f64,
    /// Evaluating all ~n^{2r} intersections is quadratic; beyond this many
    /// pairs the A-event is checked on a uniform subsample (a deviation from
    /// the literal all-pairs event, flagged in the output).
    pub pair_budget: usize,
}

impl EventParams {
    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or((self.alpha - 1.0) / (5.0 * self.alpha))
    }
}

/// Outcome of the four decoupling events for one family of clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventFlags {
    /// All (checked) pairwise intersections among the first n^r clusters
    /// have height <= n^epsilon.
    pub a: bool,
    /// At least n of the first n^r clusters have height >= n^{1/4}.
    pub b: bool,
    /// sum_{i <= n^{1-2eps}} #C^i_{<= n^eps} <= n^{1 - eps/2}.
    pub d: bool,
    /// sum_{i <= n^{1-2eps}} #C^i > n^{1 + eps/2} (strict threshold).
    pub e: bool,
    pub pairs_checked: u64,
    pub pairs_subsampled: bool,
}

/// Evaluates the decoupling events on a family of clusters from one
/// environment.
pub fn event_diagnostics<R: Rng + ?Sized>(
    clusters: &[Cluster],
    params: &EventParams,
    rng: &mut R,
) -> Result<EventFlags, PercoError> {
    let n = params.n as f64;
    let eps = params.epsilon();
    let m_r = n.powf(params.r).floor() as usize;
    let m_d = n.powf(1.0 - 2.0 * eps).floor() as usize;
    let needed = m_r.max(m_d).max(1);
    if clusters.len() < needed {
        return Err(PercoError::NotEnoughClusters { needed, got: clusters.len() });
    }
    for w in clusters.windows(2) {
        if w[0].env_id() != w[1].env_id() {
            return Err(PercoError::DifferentEnvironments);
        }
    }

    let cut = n.powf(eps);
    let cut_level = cut.floor() as u32;

    // Event A over pairs i < j <= m_r (intersection is symmetric).
    let total_pairs = m_r as u64 * (m_r as u64).saturating_sub(1) / 2;
    let subsample = total_pairs > params.pair_budget as u64;
    let mut a = true;
    let mut pairs_checked = 0u64;
    if !subsample {
        'outer: for i in 0..m_r {
            for j in (i + 1)..m_r {
                let inter = cluster_intersection(&clusters[i], &clusters[j])?;
                pairs_checked += 1;
                if f64::from(inter.height()) > cut {
                    a = false;
                    break 'outer;
                }
            }
        }
    } else {
        for _ in 0..params.pair_budget {
            let i = rng.random_range(0..m_r);
            let mut j = rng.random_range(0..m_r - 1);
            if j >= i {
                j += 1;
            }
            let inter = cluster_intersection(&clusters[i], &clusters[j])?;
            pairs_checked += 1;
            if f64::from(inter.height()) > cut {
                a = false;
                break;
            }
        }
    }

    let tall = n.powf(0.25);
    let b_count = clusters[..m_r]
        .iter()
        .filter(|c| f64::from(c.height()) >= tall)
        .count() as u64;
    let b = b_count >= params.n;

    let mut low_mass = 0u64;
    let mut total_mass = 0u64;
    for c in &clusters[..m_d] {
        low_mass += c.gen_sizes().iter().take(cut_level as usize + 1).sum::<u64>();
        total_mass += c.size();
    }
    let d = (low_mass as f64) <= n.powf(1.0 - eps / 2.0);
    let e = (total_mass as f64) > n.powf(1.0 + eps / 2.0);

    Ok(EventFlags { a, b, d, e, pairs_checked, pairs_subsampled: subsample })
}

/// Parameters of the two-arm diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct TwoArmParams {
    /// Size-threshold exponent slack; the event asks for subtree clusters of
    /// size >= n^{1 - 2 delta}.
    pub delta: f64,
    /// Level exponent slack in m = floor((1+eps)/(alpha log mu) * log n).
    pub eps: f64,
    /// Cap on nodes expanded per replica while reaching level m.
    pub level_budget: u64,
}

impl Default for TwoArmParams {
    fn default() -> Self {
        TwoArmParams { delta: 0.05, eps: 0.1, level_budget: 1 << 24 }
    }
}

/// Monte Carlo estimate of a two-arm probability at level m(n).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoArmReport {
    pub estimate: f64,
    pub stderr: f64,
    pub level: u32,
    pub reps: u64,
}

/// Estimates `P_T(exists u != v in T_m : root <-> (u, v) and both subtree
/// clusters C^(u), C^(v) have size >= n^{1-2delta})`, at the diagnostic
/// level `m = floor((1+eps)/(alpha log mu) log n)`.
pub fn two_arm_estimate<R: Rng + ?Sized>(
    env: &LazyAmbientTree,
    p: f64,
    n: u64,
    reps: u64,
    params: &TwoArmParams,
    rng: &mut R,
) -> Result<TwoArmReport, PercoError> {
    check_p(p)?;
    if reps == 0 {
        return Err(PercoError::ZeroReps);
    }
    let alpha = env.law().alpha();
    let mu = env.law().mean();
    let m = ((1.0 + params.eps) / (alpha * mu.ln()) * (n as f64).ln()).floor() as u32;
    if m == 0 {
        // no two distinct vertices at level 0
        return Ok(TwoArmReport { estimate: 0.0, stderr: 0.0, level: 0, reps });
    }
    if mu.powi(m as i32) > params.level_budget as f64 {
        return Err(PercoError::BudgetExceeded(params.level_budget));
    }
    let threshold = (n as f64).powf(1.0 - 2.0 * params.delta).ceil() as u64;

    let mut hits = 0u64;
    for _ in 0..reps {
        // Percolate within T_{<= m}, keeping the cluster vertices at level m.
        let mut at_level: Vec<NodeCursor> = Vec::new();
        let mut stack: Vec<NodeCursor> = vec![env.root_cursor()];
        let mut visited = 0u64;
        while let Some(cursor) = stack.pop() {
            visited += 1;
            if visited > params.level_budget {
                return Err(PercoError::BudgetExceeded(params.level_budget));
            }
            if cursor.depth == m {
                at_level.push(cursor);
                continue;
            }
            let k = env.cursor_offspring(cursor);
            for i in 0..k {
                if rng.random::<f64>() < p {
                    stack.push(env.child_cursor(cursor, i as u32));
                }
            }
        }
        if at_level.len() < 2 {
            continue;
        }
        // Count level-m vertices whose subtree cluster reaches the size
        // threshold; two suffice.
        let mut arms = 0;
        for &u in &at_level {
            let mut count = 0u64;
            let mut sub: Vec<NodeCursor> = vec![u];
            while let Some(cursor) = sub.pop() {
                count += 1;
                if count >= threshold {
                    break;
                }
                let k = env.cursor_offspring(cursor);
                for i in 0..k {
                    if rng.random::<f64>() < p {
                        sub.push(env.child_cursor(cursor, i as u32));
                    }
                }
            }
            if count >= threshold {
                arms += 1;
                if arms == 2 {
                    break;
                }
            }
        }
        if arms >= 2 {
            hits += 1;
        }
    }
    let est = hits as f64 / reps as f64;
    let stderr = (est * (1.0 - est) / reps as f64).sqrt();
    Ok(TwoArmReport { estimate: est, stderr, level: m, reps })
}

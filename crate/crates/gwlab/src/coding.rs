//! Coding functions for plane forests: contour, height, Lukasiewicz path,
//! local time, hitting times, level cuts, and the level-cut coupling map.
//!
//! # Conventions
//!
//! For a single tree with `m` vertices:
//! - the contour has `2(m-1)` unit steps, hence `2(m-1)+1` values, starting
//!   and ending at 0;
//! - the Lukasiewicz path has `m` increments `(children - 1)`, value -1 at
//!   the end;
//! - the height sequence lists the generation of each vertex in
//!   lexicographic order.
//!
//! Forests concatenate contours and heights directly, and Lukasiewicz paths
//! by increments, so tree `i` is an excursion from `-(i-1)` down to `-i`.
//!
//! Local time comes in two flavours. At Lukasiewicz times,
//! `Lambda_j = 1 - min_{i <= j} W_i` (the path only takes unit negative
//! steps). At contour times, tree `i` occupies the half-open interval of
//! length `2(size_i - 1)` between the cumulative segment boundaries; trees
//! of size 1 occupy an empty interval, so the contour-time local time jumps
//! over them (by the number of consecutive singletons) and is clamped to the
//! last tree index at the final boundary.

use thiserror::Error;

use crate::arbor::PlaneTree;
use crate::perco::Cluster;

#[derive(Debug, Error, PartialEq)]
pub enum CodingError {
    #[error("Lukasiewicz increment below -1 at position {0}")]
    MalformedPath(usize),
    #[error("malformed contour: {0}")]
    MalformedContour(&'static str),
    #[error("codings do not describe the same forest: {0}")]
    MismatchedForests(&'static str),
    #[error("coupling undefined at time {k}: no future excursion above the cut level")]
    CouplingUndefined { k: usize },
    #[error("certified coupling inequality violated at time {k}: {what}")]
    InequalityViolated { what: &'static str, k: usize },
    #[error("horizon {horizon} exceeds contour length {len}")]
    HorizonTooLarge { horizon: usize, len: usize },
    #[error("empty forest")]
    EmptyForest,
}

/// Contour of a plane tree: heights of a particle traversing the boundary
/// clockwise at unit speed; `2(size-1)+1` values, `[0]` for a singleton.
pub fn contour(tree: &PlaneTree) -> Vec<i64> {
    let mut x = Vec::with_capacity(2 * tree.size() - 1);
    x.push(0);
    // Iterative DFS: descend to each child in order, recording the height
    // after every unit move.
    let mut stack: Vec<(u32, usize)> = vec![(0, 0)];
    while let Some(&mut (v, ref mut next)) = stack.last_mut() {
        let children = tree.children(v);
        if *next < children.len() {
            let c = children[*next];
            *next += 1;
            x.push(tree.depth(c) as i64);
            stack.push((c, 0));
        } else {
            stack.pop();
            if let Some(&(p, _)) = stack.last() {
                x.push(tree.depth(p) as i64);
            }
        }
    }
    x
}

/// Heights (generations) of the vertices in lexicographic order.
pub fn height_seq(tree: &PlaneTree) -> Vec<i64> {
    tree.depths().iter().map(|&d| d as i64).collect()
}

/// Lukasiewicz path of a single tree: `W_0 = 0`,
/// `W_{i+1} = W_i + (children of the i-th vertex) - 1`; ends at -1.
pub fn lukasiewicz(tree: &PlaneTree) -> Vec<i64> {
    let mut w = Vec::with_capacity(tree.size() + 1);
    w.push(0);
    let mut cur = 0i64;
    for v in 0..tree.size() as u32 {
        cur += tree.child_count(v) as i64 - 1;
        w.push(cur);
    }
    w
}

/// Height process from a (possibly concatenated) Lukasiewicz path:
/// `H_m = #{j < m : W_j = min_{j <= k <= m} W_k}`, in O(n) amortised via a
/// monotone stack. Input of length `L` yields `L - 1` heights.
pub fn height_from_lukasiewicz(w: &[i64]) -> Result<Vec<i64>, CodingError> {
    for (i, pair) in w.windows(2).enumerate() {
        if pair[1] - pair[0] < -1 {
            return Err(CodingError::MalformedPath(i));
        }
    }
    if w.is_empty() {
        return Ok(Vec::new());
    }
    let mut heights = Vec::with_capacity(w.len() - 1);
    // Stack holds the values W_j for the ancestors j of the current vertex,
    // i.e. the j < m with W_j = min over [j, m]; nondecreasing from bottom.
    let mut stack: Vec<i64> = Vec::new();
    for m in 0..w.len() - 1 {
        heights.push(stack.len() as i64);
        // Move to m+1: m becomes a candidate ancestor, then anything
        // exceeding W_{m+1} stops being a running minimum.
        stack.push(w[m]);
        while let Some(&top) = stack.last() {
            if top > w[m + 1] {
                stack.pop();
            } else {
                break;
            }
        }
    }
    Ok(heights)
}

/// Concatenated coding of a forest.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestCoding {
    /// Concatenated contour; length `1 + sum 2(size_i - 1)`.
    pub x: Vec<i64>,
    /// Concatenated height sequences; length `sum size_i`.
    pub h: Vec<i64>,
    /// Concatenated Lukasiewicz path (by increments); length `1 + sum size_i`.
    pub w: Vec<i64>,
    /// Local time at Lukasiewicz times: `1 - min_{i <= j} W_i`.
    pub lambda_luk: Vec<i64>,
    /// Local time at contour times (tree index per time, 1-based).
    pub lambda_contour: Vec<i64>,
    /// Hitting times `tau_i = inf{m : W_m = -i}`, i = 1..=#trees.
    pub tau: Vec<usize>,
    /// Vertex counts per tree.
    pub tree_sizes: Vec<u64>,
    /// Cumulative contour segment boundaries; tree i (1-based) codes the
    /// half-open interval `[contour_ends[i-1], contour_ends[i])`.
    pub contour_ends: Vec<usize>,
}

impl ForestCoding {
    pub fn tree_count(&self) -> usize {
        self.tree_sizes.len()
    }
}

/// Concatenates the codings of a forest of plane trees.
pub fn forest_coding<'a, I>(trees: I) -> Result<ForestCoding, CodingError>
where
    I: IntoIterator<Item = &'a PlaneTree>,
{
    let mut x = vec![0i64];
    let mut h = Vec::new();
    let mut w = vec![0i64];
    let mut tau = Vec::new();
    let mut tree_sizes = Vec::new();
    let mut contour_ends = Vec::new();
    for tree in trees {
        let seg = contour(tree);
        x.extend_from_slice(&seg[1..]); // shared boundary zero
        contour_ends.push(x.len() - 1);
        h.extend(height_seq(tree));
        let base = *w.last().unwrap();
        let luk = lukasiewicz(tree);
        w.extend(luk[1..].iter().map(|v| v + base));
        tau.push(w.len() - 1);
        tree_sizes.push(tree.size() as u64);
    }
    if tree_sizes.is_empty() {
        return Err(CodingError::EmptyForest);
    }

    let mut lambda_luk = Vec::with_capacity(w.len());
    let mut min = 0i64;
    for &v in &w {
        min = min.min(v);
        lambda_luk.push(1 - min);
    }

    let k_trees = tree_sizes.len() as i64;
    let mut lambda_contour = Vec::with_capacity(x.len());
    let mut completed = 0usize;
    for t in 0..x.len() {
        while completed < contour_ends.len() && contour_ends[completed] <= t {
            completed += 1;
        }
        lambda_contour.push((completed as i64 + 1).min(k_trees));
    }

    Ok(ForestCoding { x, h, w, lambda_luk, lambda_contour, tau, tree_sizes, contour_ends })
}

/// Coding of a forest of percolation clusters (their shapes).
pub fn forest_coding_of_clusters(clusters: &[Cluster]) -> Result<ForestCoding, CodingError> {
    forest_coding(clusters.iter().map(|c| c.shape()))
}

/// Inverse of [`contour`]: the unique plane tree with the given contour.
pub fn decode_contour(x: &[i64]) -> Result<PlaneTree, CodingError> {
    if x.is_empty() {
        return Err(CodingError::MalformedContour("empty sequence"));
    }
    if x[0] != 0 || *x.last().unwrap() != 0 {
        return Err(CodingError::MalformedContour("must start and end at 0"));
    }
    if x.len() == 1 {
        return Ok(PlaneTree::singleton());
    }
    let mut parent = vec![u32::MAX];
    let mut depth = vec![0u32];
    let mut stack: Vec<u32> = vec![0];
    for i in 1..x.len() {
        let step = x[i] - x[i - 1];
        match step {
            1 => {
                let &top = stack.last().unwrap();
                let v = parent.len() as u32;
                parent.push(top);
                depth.push(depth[top as usize] + 1);
                stack.push(v);
            }
            -1 => {
                stack.pop();
                if stack.is_empty() {
                    return Err(CodingError::MalformedContour("walk descends below the root"));
                }
            }
            _ => return Err(CodingError::MalformedContour("steps must be +-1")),
        }
    }
    if stack.len() != 1 {
        return Err(CodingError::MalformedContour("walk does not return to the root"));
    }
    Ok(PlaneTree::from_preorder_parents(parent, depth))
}

/// Ordered subtrees rooted at the level-`level` vertices of one tree
/// (left to right); `level = 0` returns a copy of the tree itself.
pub fn cut_tree_at_level(tree: &PlaneTree, level: u32) -> Vec<PlaneTree> {
    if level == 0 {
        return vec![tree.clone()];
    }
    let n = tree.size();
    let mut out = Vec::new();
    let mut v = 0usize;
    while v < n {
        if tree.depth(v as u32) == level {
            // Preorder: the subtree of v is the contiguous block until the
            // next vertex at depth <= level.
            let mut end = v + 1;
            while end < n && tree.depth(end as u32) > level {
                end += 1;
            }
            let mut parent = Vec::with_capacity(end - v);
            let mut depth = Vec::with_capacity(end - v);
            parent.push(u32::MAX);
            depth.push(0);
            for u in v + 1..end {
                parent.push(tree.parent(u as u32).unwrap() - v as u32);
                depth.push(tree.depth(u as u32) - level);
            }
            out.push(PlaneTree::from_preorder_parents(parent, depth));
            v = end;
        } else {
            v += 1;
        }
    }
    out
}

/// Level cut of a cluster forest.
#[derive(Debug, Clone)]
pub struct CutForest {
    /// Subtrees rooted at level `level`, in lexicographic (cluster, root)
    /// order.
    pub subtrees: Vec<PlaneTree>,
    /// Per-cluster counts `Y^i_level` (0 when the cluster does not reach the
    /// level); `subtrees.len() == y.iter().sum()`.
    pub y: Vec<u64>,
}

/// Cuts every cluster of the forest at `level`, concatenating the subtree
/// lists in lexicographic order.
pub fn cut_at_level(forest: &[Cluster], level: u32) -> CutForest {
    let mut subtrees = Vec::new();
    let mut y = Vec::with_capacity(forest.len());
    for cluster in forest {
        let parts = cut_tree_at_level(cluster.shape(), level);
        y.push(parts.len() as u64);
        subtrees.extend(parts);
    }
    CutForest { subtrees, y }
}

/// The coupling between a forest contour `X` and its level-cut contour
/// `X^{>= level}`.
///
/// `phi_prime(k) = inf{i >= k : X_i >= level}`; `phi(k)` is the cut-contour
/// time of the same boundary visit, so that
/// `X^{>= level}_{phi(k)} = X_{phi_prime(k)} - level` exactly and
/// `|X_k - X^{>= level}_{phi(k)}| <= level` wherever defined.
#[derive(Debug, Clone)]
pub struct CouplingMap {
    pub level: u32,
    pub horizon: usize,
    phi: Vec<Option<usize>>,
    phi_prime: Vec<Option<usize>>,
    /// Defined entries of phi.
    pub defined: u64,
    /// max |k - phi(k)| over defined k (diagnostic; event-dependent bound).
    pub max_time_displacement: u64,
    /// max |X_k - Xcut_{phi(k)}| over defined k (certified <= level).
    pub max_trajectory_gap: i64,
    /// max of |sum_{m <= Lambda_k} Y^m - Lambda_cut_{phi(k)}| - Y^{Lambda_k}
    /// over defined k (certified <= 0); i64::MIN when nothing was defined.
    pub max_local_time_slack: i64,
}

impl CouplingMap {
    pub fn phi(&self, k: usize) -> Result<usize, CodingError> {
        self.phi
            .get(k)
            .copied()
            .flatten()
            .ok_or(CodingError::CouplingUndefined { k })
    }

    pub fn phi_prime(&self, k: usize) -> Result<usize, CodingError> {
        self.phi_prime
            .get(k)
            .copied()
            .flatten()
            .ok_or(CodingError::CouplingUndefined { k })
    }

    pub fn is_defined(&self, k: usize) -> bool {
        self.phi.get(k).copied().flatten().is_some()
    }
}

/// Builds the coupling between `full` and its level-cut coding `cut`,
/// certifying the trajectory and local-time inequalities at every defined
/// time `k <= horizon`.
///
/// Both inequalities are structural facts about codings of the same forest,
/// so `InequalityViolated` signals an implementation bug (or mismatched
/// inputs), never bad luck.
pub fn build_coupling(
    full: &ForestCoding,
    cut: &ForestCoding,
    level: u32,
    horizon: usize,
) -> Result<CouplingMap, CodingError> {
    if horizon >= full.x.len() {
        return Err(CodingError::HorizonTooLarge { horizon, len: full.x.len() });
    }
    let lvl = level as i64;

    if level == 0 {
        // The cut is the identity; phi is the identity with zero slack.
        if cut.x != full.x {
            return Err(CodingError::MismatchedForests("level-0 cut must equal the forest"));
        }
        return Ok(CouplingMap {
            level,
            horizon,
            phi: (0..=horizon).map(Some).collect(),
            phi_prime: (0..=horizon).map(Some).collect(),
            defined: horizon as u64 + 1,
            max_time_displacement: 0,
            max_trajectory_gap: 0,
            max_local_time_slack: i64::MIN,
        });
    }

    // Map each full-contour time with X_i >= level to its cut-contour time.
    // Times at height >= level form excursions; every time except an
    // excursion's closing step generates one cut-contour step, and the
    // excursions enumerate the cut subtrees in lexicographic order.
    let len = full.x.len();
    let mut ctime: Vec<usize> = vec![usize::MAX; len];
    let mut cnt = 0usize;
    // Per-tree counts of level-`level` vertices (= excursion starts).
    let mut y = vec![0u64; full.tree_count()];
    for i in 0..len {
        if full.x[i] < lvl {
            continue;
        }
        ctime[i] = cnt;
        if full.x[i] == lvl && (i == 0 || full.x[i - 1] < lvl) {
            // Excursion start = a vertex at generation `level`; attribute it
            // to the tree whose (open) contour interval contains i.
            let tree = full.lambda_contour[i] as usize;
            y[tree - 1] += 1;
        }
        let closes = full.x[i] == lvl && (i + 1 == len || full.x[i + 1] < lvl);
        if !closes {
            cnt += 1;
            if cnt >= cut.x.len() {
                return Err(CodingError::MismatchedForests("cut contour shorter than expected"));
            }
        }
        if cut.x[ctime[i]] != full.x[i] - lvl {
            return Err(CodingError::MismatchedForests("cut contour disagrees with excursions"));
        }
    }
    if cnt != cut.x.len() - 1 {
        return Err(CodingError::MismatchedForests("cut contour longer than expected"));
    }
    if y.iter().sum::<u64>() != cut.tree_count() as u64 {
        return Err(CodingError::MismatchedForests("cut subtree count disagrees"));
    }

    // phi'(k): next time at height >= level.
    let mut next_ge: Vec<Option<usize>> = vec![None; len];
    let mut next: Option<usize> = None;
    for i in (0..len).rev() {
        if full.x[i] >= lvl {
            next = Some(i);
        }
        next_ge[i] = next;
    }

    let mut prefix_y = vec![0u64; y.len() + 1];
    for (i, &v) in y.iter().enumerate() {
        prefix_y[i + 1] = prefix_y[i] + v;
    }

    let mut phi = vec![None; horizon + 1];
    let mut phi_prime = vec![None; horizon + 1];
    let mut defined = 0u64;
    let mut max_disp = 0u64;
    let mut max_gap = 0i64;
    let mut max_slack = i64::MIN;
    for k in 0..=horizon {
        let Some(ip) = next_ge[k] else { continue };
        let fk = ctime[ip];
        phi[k] = Some(fk);
        phi_prime[k] = Some(ip);
        defined += 1;

        let gap = (full.x[k] - cut.x[fk]).abs();
        max_gap = max_gap.max(gap);
        if gap > lvl {
            return Err(CodingError::InequalityViolated { what: "|X_k - Xcut_phi(k)| <= level", k });
        }
        max_disp = max_disp.max(k.abs_diff(fk) as u64);

        // Local time comparison. The full-forest side uses the half-open
        // interval convention; the cut side counts subtrees ending strictly
        // before phi(k). With that reading the bound holds at every
        // boundary, including trees that never reach the cut level.
        let tree = full.lambda_contour[k] as usize;
        let sum_y = prefix_y[tree] as i64;
        let lambda_cut = cut.contour_ends.partition_point(|&e| e < fk) as i64;
        let slack = (sum_y - lambda_cut).abs() - y[tree - 1] as i64;
        max_slack = max_slack.max(slack);
        if slack > 0 {
            return Err(CodingError::InequalityViolated {
                what: "|sum_{m<=Lambda_k} Y^m - Lambda_cut_phi(k)| <= Y^{Lambda_k}",
                k,
            });
        }
    }

    Ok(CouplingMap {
        level,
        horizon,
        phi,
        phi_prime,
        defined,
        max_time_displacement: max_disp,
        max_trajectory_gap: max_gap,
        max_local_time_slack: max_slack,
    })
}

/// Brute-force reference implementations, kept deliberately independent of
/// the production code paths; used by the test and acceptance suites.
pub mod oracle {
    /// Direct evaluation of the set-cardinality formula
    /// `H_m = #{j < m : W_j = min_{j <= k <= m} W_k}`, in O(m^2).
    pub fn height_from_lukasiewicz_naive(w: &[i64]) -> Vec<i64> {
        let n = w.len().saturating_sub(1);
        let mut heights = Vec::with_capacity(n);
        for m in 0..n {
            let mut count = 0;
            for j in 0..m {
                let min = *w[j..=m].iter().min().unwrap();
                if w[j] == min {
                    count += 1;
                }
            }
            heights.push(count);
        }
        heights
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arbor::enumerate_plane_trees;

    fn cherry() -> PlaneTree {
        PlaneTree::from_preorder_child_counts(&[2, 0, 0]).unwrap()
    }

    fn path3() -> PlaneTree {
        PlaneTree::from_preorder_child_counts(&[1, 1, 0]).unwrap()
    }

    fn path4() -> PlaneTree {
        PlaneTree::from_preorder_child_counts(&[1, 1, 1, 0]).unwrap()
    }

    #[test]
    fn contour_hand_examples() {
        assert_eq!(contour(&PlaneTree::singleton()), vec![0]);
        assert_eq!(contour(&cherry()), vec![0, 1, 0, 1, 0]);
        assert_eq!(contour(&path3()), vec![0, 1, 2, 1, 0]);
    }

    #[test]
    fn height_hand_examples() {
        assert_eq!(height_seq(&PlaneTree::singleton()), vec![0]);
        assert_eq!(height_seq(&cherry()), vec![0, 1, 1]);
        assert_eq!(height_seq(&path3()), vec![0, 1, 2]);
    }

    #[test]
    fn lukasiewicz_hand_examples() {
        assert_eq!(lukasiewicz(&PlaneTree::singleton()), vec![0, -1]);
        assert_eq!(lukasiewicz(&cherry()), vec![0, 1, 0, -1]);
        assert_eq!(lukasiewicz(&path3()), vec![0, 0, 0, -1]);
    }

    #[test]
    fn height_from_lukasiewicz_hand_examples() {
        assert_eq!(height_from_lukasiewicz(&[0, -1]).unwrap(), vec![0]);
        assert_eq!(height_from_lukasiewicz(&[0, 1, 0, -1]).unwrap(), vec![0, 1, 1]);
        // Concatenation of cherry twice (by increments).
        assert_eq!(
            height_from_lukasiewicz(&[0, 1, 0, -1, 0, -1, -2]).unwrap(),
            vec![0, 1, 1, 0, 1, 1]
        );
    }

    #[test]
    fn malformed_path_rejected() {
        assert_eq!(
            height_from_lukasiewicz(&[0, 1, -1]).unwrap_err(),
            CodingError::MalformedPath(1)
        );
    }

    #[test]
    fn stack_matches_naive_and_height_seq() {
        for n in 1..=7 {
            for t in enumerate_plane_trees(n).unwrap() {
                let w = lukasiewicz(&t);
                let fast = height_from_lukasiewicz(&w).unwrap();
                assert_eq!(fast, oracle::height_from_lukasiewicz_naive(&w));
                assert_eq!(fast, height_seq(&t));
            }
        }
    }

    #[test]
    fn decode_inverts_contour_small() {
        assert_eq!(decode_contour(&[0]).unwrap(), PlaneTree::singleton());
        assert_eq!(decode_contour(&[0, 1, 0, 1, 0]).unwrap(), cherry());
        for n in 1..=7 {
            for t in enumerate_plane_trees(n).unwrap() {
                assert_eq!(decode_contour(&contour(&t)).unwrap(), t);
            }
        }
    }

    #[test]
    fn decode_rejects_malformed() {
        assert!(decode_contour(&[]).is_err());
        assert!(decode_contour(&[1, 0]).is_err());
        assert!(decode_contour(&[0, 1]).is_err());
        assert!(decode_contour(&[0, 2, 0]).is_err());
        assert!(decode_contour(&[0, 1, 0, -1, 0]).is_err());
    }

    #[test]
    fn forest_coding_two_cherries() {
        let trees = [cherry(), cherry()];
        let fc = forest_coding(trees.iter()).unwrap();
        assert_eq!(fc.x, vec![0, 1, 0, 1, 0, 1, 0, 1, 0]);
        assert_eq!(fc.h, vec![0, 1, 1, 0, 1, 1]);
        assert_eq!(fc.w, vec![0, 1, 0, -1, 0, -1, -2]);
        // Contour-time local time: 1 on [0,4), 2 on [4,8].
        assert_eq!(fc.lambda_contour, vec![1, 1, 1, 1, 2, 2, 2, 2, 2]);
        assert_eq!(fc.tau, vec![3, 6]);
        assert_eq!(fc.contour_ends, vec![4, 8]);
    }

    #[test]
    fn lambda_luk_is_one_minus_running_min() {
        let trees = [cherry(), PlaneTree::singleton(), path3()];
        let fc = forest_coding(trees.iter()).unwrap();
        let mut min = 0;
        for (j, &v) in fc.w.iter().enumerate() {
            min = min.min(v);
            assert_eq!(fc.lambda_luk[j], 1 - min);
        }
        // tau_i = first time W hits -i.
        for (i, &t) in fc.tau.iter().enumerate() {
            assert_eq!(fc.w[t], -(i as i64 + 1));
            assert!(fc.w[..t].iter().all(|&v| v > -(i as i64 + 1)));
        }
    }

    #[test]
    fn singleton_trees_jump_contour_local_time() {
        // [singleton, cherry]: the singleton occupies an empty interval, so
        // contour time 0 already belongs to tree 2.
        let trees = [PlaneTree::singleton(), cherry()];
        let fc = forest_coding(trees.iter()).unwrap();
        assert_eq!(fc.x, vec![0, 1, 0, 1, 0]);
        assert_eq!(fc.lambda_contour, vec![2, 2, 2, 2, 2]);
        // Lukasiewicz-time local time needs no convention.
        assert_eq!(fc.w, vec![0, -1, 0, -1, -2]);
        assert_eq!(fc.lambda_luk, vec![1, 2, 2, 2, 3]);
        // [cherry, singleton]: the trailing boundary clamps to tree 2.
        let trees = [cherry(), PlaneTree::singleton()];
        let fc = forest_coding(trees.iter()).unwrap();
        assert_eq!(fc.lambda_contour, vec![1, 1, 1, 1, 2]);
        // single tree: tau is the excursion length.
        let fc = forest_coding([cherry()].iter()).unwrap();
        assert_eq!(fc.tau, vec![3]);
    }

    #[test]
    fn cut_examples() {
        // Root with 2 children each having 1 child, cut at 1: two 2-vertex
        // paths.
        let t = PlaneTree::from_preorder_child_counts(&[2, 1, 0, 1, 0]).unwrap();
        let parts = cut_tree_at_level(&t, 1);
        assert_eq!(parts.len(), 2);
        for p in &parts {
            assert_eq!(p.size(), 2);
            assert_eq!(p.height(), 1);
        }
        // level 0 is the identity.
        let parts = cut_tree_at_level(&t, 0);
        assert_eq!(parts, vec![t.clone()]);
        // partition identity: sum of subtree sizes + vertices below = size.
        let below: usize = t.depths().iter().filter(|&&d| d < 1).count();
        let cut_total: usize = cut_tree_at_level(&t, 1).iter().map(|p| p.size()).sum();
        assert_eq!(below + cut_total, t.size());
    }

    #[test]
    fn coupling_hand_example_path_of_height_3() {
        let full = forest_coding([path4()].iter()).unwrap();
        let cut_trees = cut_tree_at_level(&path4(), 1);
        let cut = forest_coding(cut_trees.iter()).unwrap();
        assert_eq!(full.x, vec![0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(cut.x, vec![0, 1, 2, 1, 0]);
        let map = build_coupling(&full, &cut, 1, 6).unwrap();
        assert_eq!(map.phi(2).unwrap(), 1);
        assert_eq!((full.x[2] - cut.x[1]).abs(), 1);
        assert!(map.max_trajectory_gap <= 1);
        assert!(map.max_local_time_slack <= 0);
    }

    #[test]
    fn coupling_level_zero_is_identity() {
        let trees = [cherry(), path3(), cherry()];
        let fc = forest_coding(trees.iter()).unwrap();
        let map = build_coupling(&fc, &fc, 0, fc.x.len() - 1).unwrap();
        for k in 0..fc.x.len() {
            assert_eq!(map.phi(k).unwrap(), k);
        }
        assert_eq!(map.max_trajectory_gap, 0);
        assert_eq!(map.max_time_displacement, 0);
    }

    #[test]
    fn coupling_undefined_past_last_excursion() {
        // cherry has height 1; at level 1 the last time above the level is
        // time 3, so k = 4 has no future excursion.
        let full = forest_coding([cherry()].iter()).unwrap();
        let cut = forest_coding(cut_tree_at_level(&cherry(), 1).iter()).unwrap();
        let map = build_coupling(&full, &cut, 1, 4).unwrap();
        assert!(map.is_defined(3));
        assert!(!map.is_defined(4));
        assert_eq!(map.phi(4).unwrap_err(), CodingError::CouplingUndefined { k: 4 });
    }

    #[test]
    fn coupling_short_tree_before_tall_tree() {
        // A cherry (height 1 < level 2) followed by a path of height 2: the
        // boundary convention on the cut local time must absorb the jump.
        let trees = [cherry(), path3()];
        let full = forest_coding(trees.iter()).unwrap();
        let cut = forest_coding(cut_tree_at_level(&path3(), 2).iter()).unwrap();
        let map = build_coupling(&full, &cut, 2, full.x.len() - 1).unwrap();
        assert!(map.max_local_time_slack <= 0);
        assert!(map.max_trajectory_gap <= 2);
    }

    #[test]
    fn coupling_detects_mismatched_forests() {
        let full = forest_coding([path4()].iter()).unwrap();
        let wrong_cut = forest_coding([cherry()].iter()).unwrap();
        assert!(matches!(
            build_coupling(&full, &wrong_cut, 1, 4),
            Err(CodingError::MismatchedForests(_))
        ));
    }

    #[test]
    fn coupling_horizon_bounds_checked() {
        let full = forest_coding([cherry()].iter()).unwrap();
        assert!(matches!(
            build_coupling(&full, &full, 0, 100),
            Err(CodingError::HorizonTooLarge { .. })
        ));
    }
}

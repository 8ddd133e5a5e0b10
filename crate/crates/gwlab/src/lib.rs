//! Desk-scale simulation toolkit for critical percolation on supercritical
//! Galton-Watson trees.
//!
//! The crate is organised around the objects of that setting:
//!
//! - [`laws`]: offspring distributions (finite tables, the zeta-type power
//!   law) and their binomial thinnings.
//! - [`arbor`]: the quenched environment — an infinite supercritical tree
//!   realised lazily as a pure function of `(env_seed, node path)` — plus
//!   plane trees and exhaustive enumeration oracles.
//! - [`perco`]: Bernoulli percolation on the environment: root clusters,
//!   conditioned clusters, i.i.d. families, intersections, event diagnostics.
//! - [`coding`]: contour / height / Lukasiewicz / local-time codings of
//!   forests, decoding, level cuts and the level-cut coupling map.
//! - [`ghp`]: finite pointed metric-measure spaces and a correspondence
//!   surrogate for the pointed Gromov-Hausdorff-Prokhorov distance.
//! - [`stats`]: exact combinatorial oracles (Otter-Dwass), tail estimators,
//!   slope fits, and random walks on clusters.

pub mod arbor;
pub mod coding;
pub mod ghp;
pub mod laws;
pub mod perco;
pub mod special;
pub mod stats;

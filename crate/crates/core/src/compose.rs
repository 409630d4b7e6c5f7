//! Recomposition of a task graph after a local change: reclaim every edge's
//! threshold over the changed region, then pick the start-to-goal path with
//! the largest product of reclaimed thresholds.
//!
//! Edge weights are `-log2 ρ̃⁻`, so the product is recovered exactly as
//! `2^-weight`. Edges with nothing left to reclaim are dropped.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::bounds::{FeedForwardNetwork, PolicySpec};
use crate::error::{check_dim, Error, Result};
use crate::infimum::RefinementConfig;
use crate::model::{check_probability, Edge, Region, TaskGraph, Vertex};
use crate::reclaim::{reclaim, ReclaimResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeAsset {
    pub certificate: FeedForwardNetwork,
    /// Threshold the certificate proved before the change.
    pub threshold: f64,
    pub policy: PolicySpec,
}

/// One asset per graph edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeAssets {
    assets: BTreeMap<Edge, EdgeAsset>,
}

impl EdgeAssets {
    pub fn new(graph: &TaskGraph, assets: BTreeMap<Edge, EdgeAsset>) -> Result<Self> {
        for e in graph.edges() {
            if !assets.contains_key(e) {
                return Err(Error::input(format!("edge {e:?} has no asset")));
            }
        }
        for (e, a) in &assets {
            if !graph.has_edge(*e) {
                return Err(Error::input(format!("asset for unknown edge {e:?}")));
            }
            check_probability("edge threshold", a.threshold)?;
            check_dim("edge certificate output", 1, a.certificate.output_dim())?;
        }
        Ok(Self { assets })
    }

    pub fn get(&self, e: Edge) -> Option<&EdgeAsset> {
        self.assets.get(&e)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Edge, &EdgeAsset)> {
        self.assets.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeThreshold {
    pub from: Vertex,
    pub to: Vertex,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositePlan {
    pub path: Vec<Vertex>,
    pub global_threshold: f64,
    /// Thresholds of the edges along `path`, in order.
    pub per_edge_thresholds: Vec<EdgeThreshold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeReclaim {
    pub from: Vertex,
    pub to: Vertex,
    pub result: ReclaimResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recomposition {
    /// `None` when the goal is unreachable over the surviving edges.
    pub plan: Option<CompositePlan>,
    pub edges: Vec<EdgeReclaim>,
}

/// Search label: accumulated weight, then the path itself.
#[derive(PartialEq)]
struct Label {
    weight: f64,
    path: Vec<Vertex>,
}

impl Eq for Label {}

impl Ord for Label {
    // Reversed for a min-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .weight
            .total_cmp(&self.weight)
            .then_with(|| other.path.cmp(&self.path))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Start-to-goal path maximising the product of `thresholds` (edges missing
/// from the map are absent). Ties go to the lexicographically smallest path.
pub fn max_product_path(
    graph: &TaskGraph,
    thresholds: &BTreeMap<Edge, f64>,
) -> Result<Option<CompositePlan>> {
    let mut weights: BTreeMap<Vertex, Vec<(Vertex, f64)>> = BTreeMap::new();
    for (e, rho) in thresholds {
        if !graph.has_edge(*e) {
            return Err(Error::input(format!("threshold for unknown edge {e:?}")));
        }
        check_probability("edge threshold", *rho)?;
        if *rho > 0.0 {
            weights.entry(e.0).or_default().push((e.1, -rho.log2()));
        }
    }

    let mut done = BTreeSet::new();
    let mut heap = BinaryHeap::from([Label {
        weight: 0.0,
        path: vec![graph.v_start()],
    }]);
    while let Some(Label { weight, path }) = heap.pop() {
        let v = *path.last().expect("paths are never empty");
        if !done.insert(v) {
            continue;
        }
        if v == graph.v_goal() {
            let per_edge_thresholds = path
                .windows(2)
                .map(|p| EdgeThreshold {
                    from: p[0],
                    to: p[1],
                    threshold: thresholds[&(p[0], p[1])],
                })
                .collect();
            return Ok(Some(CompositePlan {
                global_threshold: (-weight).exp2(),
                path,
                per_edge_thresholds,
            }));
        }
        for (next, w) in weights.get(&v).into_iter().flatten() {
            if done.contains(next) {
                continue;
            }
            let mut p = path.clone();
            p.push(*next);
            heap.push(Label {
                weight: weight + w,
                path: p,
            });
        }
    }
    Ok(None)
}

/// Reclaim every edge over `changed` and recompose the best path.
pub fn recycle_graph(
    graph: &TaskGraph,
    assets: &EdgeAssets,
    changed: &Region,
    cfg: &RefinementConfig,
) -> Result<Recomposition> {
    let jobs: Vec<(Edge, &EdgeAsset)> = graph
        .edges()
        .iter()
        .map(|e| {
            assets
                .get(*e)
                .map(|a| (*e, a))
                .ok_or_else(|| Error::input(format!("edge {e:?} has no asset")))
        })
        .collect::<Result<_>>()?;
    let run = |(e, a): (Edge, &EdgeAsset)| -> Result<EdgeReclaim> {
        Ok(EdgeReclaim {
            from: e.0,
            to: e.1,
            result: reclaim(&a.certificate, a.threshold, changed, cfg)?,
        })
    };

    #[cfg(feature = "parallel")]
    let edges: Vec<EdgeReclaim> = {
        use rayon::prelude::*;
        jobs.into_par_iter().map(run).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let edges: Vec<EdgeReclaim> = jobs.into_iter().map(run).collect::<Result<_>>()?;

    let thresholds = edges
        .iter()
        .map(|r| ((r.from, r.to), r.result.guaranteed()))
        .collect();
    Ok(Recomposition {
        plan: max_product_path(graph, &thresholds)?,
        edges,
    })
}

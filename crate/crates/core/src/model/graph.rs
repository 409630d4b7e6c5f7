use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Region;

pub type Vertex = usize;
pub type Edge = (Vertex, Vertex);

/// Task decomposition graph `(V, E, v_start, v_goal, β)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct TaskGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    v_start: Vertex,
    v_goal: Vertex,
    beta_vertex: BTreeMap<Vertex, Region>,
    beta_edge: BTreeMap<Edge, Region>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    v_start: Vertex,
    v_goal: Vertex,
    #[serde(default)]
    beta_vertex: BTreeMap<Vertex, Region>,
    #[serde(default)]
    beta_edge: Vec<RawEdgeRegion>,
}

#[derive(Serialize, Deserialize)]
struct RawEdgeRegion {
    from: Vertex,
    to: Vertex,
    region: Region,
}

impl TryFrom<RawGraph> for TaskGraph {
    type Error = Error;

    fn try_from(raw: RawGraph) -> Result<Self> {
        let beta_edge = raw
            .beta_edge
            .into_iter()
            .map(|e| ((e.from, e.to), e.region))
            .collect();
        TaskGraph::new(
            raw.vertices,
            raw.edges,
            raw.v_start,
            raw.v_goal,
            raw.beta_vertex,
            beta_edge,
        )
    }
}

impl From<TaskGraph> for RawGraph {
    fn from(g: TaskGraph) -> Self {
        RawGraph {
            vertices: g.vertices,
            edges: g.edges,
            v_start: g.v_start,
            v_goal: g.v_goal,
            beta_vertex: g.beta_vertex,
            beta_edge: g
                .beta_edge
                .into_iter()
                .map(|((from, to), region)| RawEdgeRegion { from, to, region })
                .collect(),
        }
    }
}

impl TaskGraph {
    pub fn new(
        vertices: Vec<Vertex>,
        edges: Vec<Edge>,
        v_start: Vertex,
        v_goal: Vertex,
        beta_vertex: BTreeMap<Vertex, Region>,
        beta_edge: BTreeMap<Edge, Region>,
    ) -> Result<Self> {
        let vset: BTreeSet<Vertex> = vertices.iter().copied().collect();
        if vset.len() != vertices.len() {
            return Err(Error::input("graph vertices must be unique"));
        }
        for v in [v_start, v_goal] {
            if !vset.contains(&v) {
                return Err(Error::input(format!("vertex {v} is not in the graph")));
            }
        }
        let mut seen = BTreeSet::new();
        for &(a, b) in &edges {
            if !vset.contains(&a) || !vset.contains(&b) {
                return Err(Error::input(format!(
                    "edge ({a}, {b}) has an unknown endpoint"
                )));
            }
            if a == b {
                return Err(Error::input(format!("self-loop at vertex {a}")));
            }
            if !seen.insert((a, b)) {
                return Err(Error::input(format!("duplicate edge ({a}, {b})")));
            }
        }
        for v in beta_vertex.keys() {
            if !vset.contains(v) {
                return Err(Error::input(format!(
                    "β assigns a region to unknown vertex {v}"
                )));
            }
        }
        for e in beta_edge.keys() {
            if !seen.contains(e) {
                return Err(Error::input(format!(
                    "β assigns a region to unknown edge {e:?}"
                )));
            }
        }
        Ok(Self {
            vertices,
            edges,
            v_start,
            v_goal,
            beta_vertex,
            beta_edge,
        })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn v_start(&self) -> Vertex {
        self.v_start
    }

    pub fn v_goal(&self) -> Vertex {
        self.v_goal
    }

    pub fn has_edge(&self, e: Edge) -> bool {
        self.edges.contains(&e)
    }

    pub fn beta_vertex(&self, v: Vertex) -> Option<&Region> {
        self.beta_vertex.get(&v)
    }

    pub fn beta_edge(&self, e: Edge) -> Option<&Region> {
        self.beta_edge.get(&e)
    }

    pub fn successors(&self, v: Vertex) -> impl Iterator<Item = Vertex> + '_ {
        self.edges.iter().filter(move |e| e.0 == v).map(|e| e.1)
    }
}

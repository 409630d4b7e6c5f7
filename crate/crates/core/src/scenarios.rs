//! Built-in benchmark fixtures: the stochastic nine-rooms navigation task and
//! a one-dimensional toy system.
//!
//! Nine rooms: `X = [0,3]²`, `U = [-2,2]²`, `W = [-0.005,0.005]²` with
//! symmetric triangular noise and `x' = x + 0.1·clip(u, -1, 1) + w`. Room `v`
//! occupies column `v mod 3` and row `⌊v/3⌋`; its centre square is
//! `[0.4 + v mod 3, 0.6 + v mod 3] × [0.4 + ⌊v/3⌋, 0.6 + ⌊v/3⌋]`. Border walls
//! are 0.05 thick, interior walls 0.1 thick, and every graph edge between
//! neighbouring rooms gets a 0.4-wide door centred on the shared wall.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bounds::{Activation, FeedForwardNetwork, Layer, PolicySpec};
use crate::error::{Error, Result};
use crate::model::{
    Aabb, DynamicsSpec, Edge, NoiseModel, ReachAvoidSpec, Region, StochasticSystem, TaskGraph,
    Vertex,
};

pub const NINE_ROOMS_EDGES: [Edge; 9] = [
    (0, 1),
    (0, 3),
    (1, 2),
    (3, 4),
    (4, 5),
    (2, 5),
    (4, 7),
    (5, 8),
    (7, 8),
];

const BORDER_WALL: f64 = 0.05;
const INTERIOR_WALL: f64 = 0.1;
const DOOR_WIDTH: f64 = 0.4;
/// Gain of the built-in proportional edge policies.
pub const EDGE_POLICY_GAIN: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub system: StochasticSystem,
    #[serde(rename = "spec")]
    pub global_spec: ReachAvoidSpec,
    pub graph: TaskGraph,
    /// Policy for the global task, when one exists.
    pub policy: PolicySpec,
}

/// On-disk scenario layout.
#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    #[serde(default)]
    name: String,
    state_space: Aabb,
    input_space: Aabb,
    noise: NoiseModel,
    dynamics: DynamicsSpec,
    spec: ReachAvoidSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    graph: Option<TaskGraph>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    policy: Option<PolicySpec>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Format {
            what: "scenario".into(),
            message: e.to_string(),
        })?;
        let system =
            StochasticSystem::new(raw.state_space, raw.input_space, raw.dynamics, raw.noise)?;
        raw.spec.validate(&system.state_space)?;
        let graph = match raw.graph {
            Some(g) => g,
            None => single_edge_graph(&raw.spec)?,
        };
        for v in graph.vertices() {
            if let Some(r) = graph.beta_vertex(*v) {
                if !r.within(&system.state_space) {
                    return Err(Error::input(format!("β({v}) lies outside the state space")));
                }
            }
        }
        let policy = raw.policy.unwrap_or_else(|| {
            PolicySpec::proportional(EDGE_POLICY_GAIN, target_centre(&raw.spec))
        });
        policy.validate_for(&system)?;
        Ok(Self {
            name: raw.name,
            system,
            global_spec: raw.spec,
            graph,
            policy,
        })
    }

    pub fn to_json(&self) -> String {
        let raw = ScenarioFile {
            name: self.name.clone(),
            state_space: self.system.state_space.clone(),
            input_space: self.system.input_space.clone(),
            noise: self.system.noise.clone(),
            dynamics: self.system.dynamics.clone(),
            spec: self.global_spec.clone(),
            graph: Some(self.graph.clone()),
            policy: Some(self.policy.clone()),
        };
        serde_json::to_string_pretty(&raw).expect("scenario serializes")
    }

    /// Subtask of `edge`: from `β(source)` to `β(target)` avoiding `β(edge)`.
    pub fn edge_subtask(&self, edge: Edge, rho: f64) -> Result<ReachAvoidSpec> {
        if !self.graph.has_edge(edge) {
            return Err(Error::input(format!("unknown edge {edge:?}")));
        }
        let beta = |v: Vertex| {
            self.graph
                .beta_vertex(v)
                .cloned()
                .ok_or_else(|| Error::input(format!("vertex {v} has no β region")))
        };
        ReachAvoidSpec::new(
            beta(edge.1)?,
            self.graph.beta_edge(edge).cloned().unwrap_or_default(),
            beta(edge.0)?,
            rho,
        )
    }

    /// Proportional policy steering to the centre of `β(edge.1)`.
    pub fn edge_policy(&self, edge: Edge) -> Result<PolicySpec> {
        let target = self
            .graph
            .beta_vertex(edge.1)
            .and_then(|r| r.boxes().first())
            .ok_or_else(|| Error::input(format!("vertex {} has no β region", edge.1)))?;
        Ok(PolicySpec::proportional(EDGE_POLICY_GAIN, target.center()))
    }
}

fn target_centre(spec: &ReachAvoidSpec) -> Vec<f64> {
    spec.target
        .boxes()
        .first()
        .map(Aabb::center)
        .unwrap_or_default()
}

fn single_edge_graph(spec: &ReachAvoidSpec) -> Result<TaskGraph> {
    let beta_vertex = BTreeMap::from([(0, spec.initial.clone()), (1, spec.target.clone())]);
    let beta_edge = BTreeMap::from([((0, 1), spec.unsafe_set.clone())]);
    TaskGraph::new(vec![0, 1], vec![(0, 1)], 0, 1, beta_vertex, beta_edge)
}

/// `β(v)` for the nine-rooms layout.
pub fn room_centre(v: Vertex) -> Aabb {
    let (cx, cy) = ((v % 3) as f64, (v / 3) as f64);
    Aabb::new(vec![0.4 + cx, 0.4 + cy], vec![0.6 + cx, 0.6 + cy]).expect("valid room square")
}

/// Full extent `[v mod 3, v mod 3 + 1] × [⌊v/3⌋, ⌊v/3⌋ + 1]` of room `v`.
pub fn room_region(v: Vertex) -> Region {
    let (cx, cy) = ((v % 3) as f64, (v / 3) as f64);
    Region::from(Aabb::new(vec![cx, cy], vec![cx + 1.0, cy + 1.0]).expect("valid room"))
}

/// Wall boxes of the nine-rooms layout with doors for `edges`.
pub fn nine_rooms_walls(edges: &[Edge]) -> Region {
    let b = |x0: f64, y0: f64, x1: f64, y1: f64| Aabb::new(vec![x0, y0], vec![x1, y1]).unwrap();
    let connected = |a: Vertex, c: Vertex| edges.contains(&(a, c)) || edges.contains(&(c, a));
    let mut walls = vec![
        b(0.0, 0.0, 3.0, BORDER_WALL),
        b(0.0, 3.0 - BORDER_WALL, 3.0, 3.0),
        b(0.0, 0.0, BORDER_WALL, 3.0),
        b(3.0 - BORDER_WALL, 0.0, 3.0, 3.0),
    ];
    let half = INTERIOR_WALL / 2.0;
    let door = DOOR_WIDTH / 2.0;
    for k in 1..3usize {
        let pos = k as f64;
        // Vertical wall at x = k separates column k-1 from column k.
        let mut start = 0.0;
        for row in 0..3usize {
            if connected(k - 1 + 3 * row, k + 3 * row) {
                let mid = row as f64 + 0.5;
                walls.push(b(pos - half, start, pos + half, mid - door));
                start = mid + door;
            }
        }
        walls.push(b(pos - half, start, pos + half, 3.0));
        // Horizontal wall at y = k separates row k-1 from row k.
        let mut start = 0.0;
        for col in 0..3usize {
            if connected(col + 3 * (k - 1), col + 3 * k) {
                let mid = col as f64 + 0.5;
                walls.push(b(start, pos - half, mid - door, pos + half));
                start = mid + door;
            }
        }
        walls.push(b(start, pos - half, 3.0, pos + half));
    }
    Region::new(walls).expect("walls share a dimension")
}

pub fn nine_rooms_system() -> StochasticSystem {
    StochasticSystem::new(
        Aabb::cube(2, 0.0, 3.0).unwrap(),
        Aabb::cube(2, -2.0, 2.0).unwrap(),
        DynamicsSpec::SaturatedAffine {
            step: 0.1,
            u_clip: [-1.0, 1.0],
        },
        NoiseModel::symmetric(2, 0.005).unwrap(),
    )
    .expect("nine-rooms system is well formed")
}

pub fn nine_rooms() -> Scenario {
    let walls = nine_rooms_walls(&NINE_ROOMS_EDGES);
    let beta_vertex = (0..9).map(|v| (v, Region::from(room_centre(v)))).collect();
    let beta_edge = NINE_ROOMS_EDGES
        .iter()
        .map(|e| (*e, walls.clone()))
        .collect();
    let graph = TaskGraph::new(
        (0..9).collect(),
        NINE_ROOMS_EDGES.to_vec(),
        0,
        8,
        beta_vertex,
        beta_edge,
    )
    .expect("nine-rooms graph is well formed");
    let global_spec = ReachAvoidSpec::new(
        Region::from(room_centre(8)),
        walls,
        Region::from(room_centre(0)),
        0.5,
    )
    .unwrap();
    Scenario {
        name: "nine_rooms".into(),
        system: nine_rooms_system(),
        global_spec,
        graph,
        policy: PolicySpec::proportional(EDGE_POLICY_GAIN, room_centre(8).center()),
    }
}

/// Edge subtask of the nine-rooms benchmark.
pub fn edge_subtask(scenario: &Scenario, edge: Edge, rho: f64) -> Result<ReachAvoidSpec> {
    scenario.edge_subtask(edge, rho)
}

/// `X = [0, 1]`, `x' = clip(x + 0.1·u + w, 0, 1)` under the constant input
/// `u = 1`, starting in `[0, 0.05]`, target `[0.9, 1]`, nothing unsafe.
pub fn toy_1d() -> Scenario {
    let system = StochasticSystem::new(
        Aabb::cube(1, 0.0, 1.0).unwrap(),
        Aabb::cube(1, -1.0, 1.0).unwrap(),
        DynamicsSpec::SaturatedAffine {
            step: 0.1,
            u_clip: [-1.0, 1.0],
        },
        NoiseModel::symmetric(1, 0.005).unwrap(),
    )
    .unwrap();
    let spec = ReachAvoidSpec::new(
        Region::from(Aabb::cube(1, 0.9, 1.0).unwrap()),
        Region::empty(),
        Region::from(Aabb::cube(1, 0.0, 0.05).unwrap()),
        0.9,
    )
    .unwrap();
    let graph = single_edge_graph(&spec).unwrap();
    Scenario {
        name: "toy_1d".into(),
        system,
        global_spec: spec,
        graph,
        policy: PolicySpec::Network(FeedForwardNetwork::constant(1, 1.0).unwrap()),
    }
}

/// `C(x) = relu(1 - x)`, written as a two-layer network.
pub fn toy_certificate() -> FeedForwardNetwork {
    FeedForwardNetwork::new(vec![
        Layer::new(vec![vec![-1.0]], vec![1.0], Activation::Relu).unwrap(),
        Layer::new(vec![vec![1.0]], vec![0.0], Activation::Relu).unwrap(),
    ])
    .unwrap()
}

/// Toy variant with unsafe band `[0, 0.1]` behind the start `[0.5, 0.55]`, and
/// a certificate `relu(1 - x) + relu(31·(0.2 - x))` whose minimum on the band
/// is exactly 4, so the safety condition caps `ρ` at `1 - 1/4 = 0.75`.
pub fn toy_safety_capped() -> (Scenario, FeedForwardNetwork) {
    let mut s = toy_1d();
    s.name = "toy_1d_safety_capped".into();
    s.global_spec = ReachAvoidSpec::new(
        Region::from(Aabb::cube(1, 0.9, 1.0).unwrap()),
        Region::from(Aabb::cube(1, 0.0, 0.1).unwrap()),
        Region::from(Aabb::cube(1, 0.5, 0.55).unwrap()),
        0.5,
    )
    .unwrap();
    s.graph = single_edge_graph(&s.global_spec).unwrap();
    let cert = FeedForwardNetwork::new(vec![
        Layer::new(
            vec![vec![-1.0], vec![-31.0]],
            vec![1.0, 6.2],
            Activation::Relu,
        )
        .unwrap(),
        Layer::new(vec![vec![1.0, 1.0]], vec![0.0], Activation::Relu).unwrap(),
    ])
    .unwrap();
    (s, cert)
}

//! Browser demo over the nine-rooms scenario with two bundled edge
//! certificates. The page draws a certificate heatmap, lets the user drag a
//! changed region, reclaims a threshold for it and checks the result against
//! an absorbing Monte Carlo run.
//!
//! The `Session` methods are thin wrappers; the plain functions below them
//! carry the logic so they can be tested natively.

use reclaim_core::bounds::{FeedForwardNetwork, PolicySpec};
use reclaim_core::infimum::RefinementConfig;
use reclaim_core::model::{Aabb, Edge, ReachAvoidSpec, Region};
use reclaim_core::reclaim::reclaim;
use reclaim_core::scenarios::{self, Scenario};
use reclaim_core::simulate::{estimate_reach_avoid, make_absorbing, SimConfig};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Reachability threshold the bundled certificates were trained for.
pub const RHO: f64 = 0.5;

const CERTIFICATES: [(Edge, &str); 2] = [
    (
        (4, 5),
        include_str!("../../../fixtures/certs/nine_rooms_4_5.json"),
    ),
    (
        (0, 1),
        include_str!("../../../fixtures/certs/nine_rooms_0_1.json"),
    ),
];

pub struct EdgeTask {
    pub edge: Edge,
    pub certificate: FeedForwardNetwork,
    pub spec: ReachAvoidSpec,
    pub policy: PolicySpec,
}

pub fn load_tasks(scenario: &Scenario) -> reclaim_core::Result<Vec<EdgeTask>> {
    CERTIFICATES
        .iter()
        .map(|(edge, text)| {
            Ok(EdgeTask {
                edge: *edge,
                certificate: serde_json::from_str(text)
                    .map_err(|e| reclaim_core::Error::input(format!("bundled certificate: {e}")))?,
                spec: scenario.edge_subtask(*edge, RHO)?,
                policy: scenario.edge_policy(*edge)?,
            })
        })
        .collect()
}

/// Certificate values on an `n × n` grid over `space`, rows bottom to top.
pub fn heatmap_values(
    cert: &FeedForwardNetwork,
    space: &Aabb,
    n: usize,
) -> reclaim_core::Result<Vec<f64>> {
    let n = n.max(2);
    let step = |i: usize, k: usize| space.lower()[i] + space.width(i) * k as f64 / (n - 1) as f64;
    let mut out = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            out.push(cert.evaluate(&[step(0, col), step(1, row)])?[0]);
        }
    }
    Ok(out)
}

fn changed_box(
    scenario: &Scenario,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
) -> reclaim_core::Result<Region> {
    let b = Aabb::new(vec![x0.min(x1), y0.min(y1)], vec![x0.max(x1), y0.max(y1)])?;
    match b.intersection(&scenario.system.state_space) {
        Some(b) => Ok(Region::from(b)),
        None => Err(reclaim_core::Error::input(
            "region lies outside the state space",
        )),
    }
}

/// Reclaim report for a dragged box, as JSON.
pub fn reclaim_report(
    task: &EdgeTask,
    scenario: &Scenario,
    x: [f64; 4],
) -> reclaim_core::Result<String> {
    let region = changed_box(scenario, x[0], x[1], x[2], x[3])?;
    let cfg = RefinementConfig {
        max_cells: 2_000,
        ..Default::default()
    };
    let r = reclaim(&task.certificate, task.spec.rho, &region, &cfg)?;
    let mut report = r.report();
    report["rho"] = json!(task.spec.rho);
    Ok(report.to_string())
}

/// Absorbing Monte Carlo estimate from the centre of the start room, as JSON.
pub fn simulate_report(
    task: &EdgeTask,
    scenario: &Scenario,
    x: [f64; 4],
    trajectories: usize,
    seed: u64,
) -> reclaim_core::Result<String> {
    let region = changed_box(scenario, x[0], x[1], x[2], x[3])?;
    let sys = make_absorbing(&scenario.system, &region)?;
    let start = task.spec.initial.boxes()[0].center();
    let cfg = SimConfig {
        horizon: 300,
        trajectories,
        seed,
        confidence: 0.99,
    };
    let summary = estimate_reach_avoid(&sys, &task.policy, &task.spec, &[start], &cfg)?;
    Ok(serde_json::to_string(&summary.worst).expect("estimates serialize"))
}

fn js(e: reclaim_core::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[wasm_bindgen]
pub struct Session {
    scenario: Scenario,
    tasks: Vec<EdgeTask>,
    current: usize,
}

#[wasm_bindgen]
impl Session {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<Session, JsValue> {
        let scenario = scenarios::nine_rooms();
        let tasks = load_tasks(&scenario).map_err(js)?;
        Ok(Session {
            scenario,
            tasks,
            current: 0,
        })
    }

    /// Edge labels such as `"4→5"`, in selection order.
    pub fn edges(&self) -> Vec<String> {
        self.tasks
            .iter()
            .map(|t| format!("{}→{}", t.edge.0, t.edge.1))
            .collect()
    }

    pub fn select(&mut self, index: usize) {
        self.current = index.min(self.tasks.len() - 1);
    }

    /// Unsafe boxes of the selected edge task, flattened as `x0,y0,x1,y1`.
    pub fn walls(&self) -> Vec<f64> {
        let task = &self.tasks[self.current];
        boxes_flat(&task.spec.unsafe_set)
    }

    /// Start and goal squares, flattened like `walls`.
    pub fn endpoints(&self) -> Vec<f64> {
        let task = &self.tasks[self.current];
        let mut out = boxes_flat(&task.spec.initial);
        out.extend(boxes_flat(&task.spec.target));
        out
    }

    pub fn heatmap(&self, n: usize) -> Result<Vec<f64>, JsValue> {
        heatmap_values(
            &self.tasks[self.current].certificate,
            &self.scenario.system.state_space,
            n,
        )
        .map_err(js)
    }

    pub fn reclaim(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> Result<String, JsValue> {
        reclaim_report(&self.tasks[self.current], &self.scenario, [x0, y0, x1, y1]).map_err(js)
    }

    pub fn simulate(
        &self,
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        trajectories: usize,
        seed: u64,
    ) -> Result<String, JsValue> {
        simulate_report(
            &self.tasks[self.current],
            &self.scenario,
            [x0, y0, x1, y1],
            trajectories,
            seed,
        )
        .map_err(js)
    }
}

fn boxes_flat(r: &Region) -> Vec<f64> {
    r.boxes()
        .iter()
        .flat_map(|b| [b.lower()[0], b.lower()[1], b.upper()[0], b.upper()[1]])
        .collect()
}

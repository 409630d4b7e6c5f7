//! Input loading with provenance: every file read is hashed into the report.

use std::path::{Path, PathBuf};

use reclaim_core::bounds::{FeedForwardNetwork, PolicySpec};
use reclaim_core::compose::{EdgeAsset, EdgeAssets};
use reclaim_core::model::{Aabb, Edge, Region, TaskGraph};
use reclaim_core::scenarios::{self, Scenario, EDGE_POLICY_GAIN};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub role: String,
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

#[derive(Default)]
pub struct Inputs {
    pub records: Vec<InputRecord>,
}

impl Inputs {
    fn read(&mut self, role: &str, path: &Path) -> Result<String, Failure> {
        let bytes = std::fs::read(path).map_err(|e| {
            Failure::input(format!("cannot read {role} file {}: {e}", path.display()))
        })?;
        let digest = Sha256::digest(&bytes);
        self.records.push(InputRecord {
            role: role.into(),
            source: path.display().to_string(),
            sha256: Some(digest.iter().map(|b| format!("{b:02x}")).collect()),
        });
        String::from_utf8(bytes).map_err(|_| Failure::input(format!("{role} file is not UTF-8")))
    }

    fn builtin(&mut self, role: &str, source: &str) {
        self.records.push(InputRecord {
            role: role.into(),
            source: source.into(),
            sha256: None,
        });
    }

    pub fn json<T: DeserializeOwned>(&mut self, role: &str, path: &Path) -> Result<T, Failure> {
        let text = self.read(role, path)?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::input(format!("malformed {role} file {}: {e}", path.display())))
    }

    /// A scenario file, or `builtin:nine_rooms` / `builtin:toy_1d`.
    pub fn scenario(&mut self, spec: &str) -> Result<Scenario, Failure> {
        if let Some(name) = spec.strip_prefix("builtin:") {
            let s = match name {
                "nine_rooms" => scenarios::nine_rooms(),
                "toy_1d" => scenarios::toy_1d(),
                _ => return Err(Failure::input(format!("unknown builtin scenario {name:?}"))),
            };
            self.builtin("scenario", spec);
            return Ok(s);
        }
        let text = self.read("scenario", Path::new(spec))?;
        Ok(Scenario::from_json(&text)?)
    }

    pub fn network(&mut self, role: &str, path: &Path) -> Result<FeedForwardNetwork, Failure> {
        self.json(role, path)
    }

    pub fn policy(&mut self, path: &Path) -> Result<PolicySpec, Failure> {
        self.json("policy", path)
    }

    /// A region file, `room:V` for a nine-rooms room, or `empty`, checked
    /// against `dim` and, when given, the state space.
    pub fn region(
        &mut self,
        spec: &str,
        dim: usize,
        space: Option<&Aabb>,
    ) -> Result<Region, Failure> {
        let region = if spec == "empty" {
            self.builtin("region", spec);
            Region::empty()
        } else if let Some(v) = spec.strip_prefix("room:") {
            let v: usize = v
                .parse()
                .ok()
                .filter(|v| *v < 9)
                .ok_or_else(|| Failure::input(format!("room must be 0..8, got {v:?}")))?;
            self.builtin("region", spec);
            scenarios::room_region(v)
        } else {
            self.json("region", Path::new(spec))?
        };
        if let Some(d) = region.dim() {
            if d != dim {
                return Err(Failure::input(format!(
                    "region has dimension {d}, expected {dim}"
                )));
            }
        }
        if space.is_some_and(|s| !region.within(s)) {
            return Err(Failure::input("region lies outside the state space"));
        }
        Ok(region)
    }

    /// Graph file with per-edge asset references, resolved relative to it.
    pub fn graph(&mut self, path: &Path) -> Result<(TaskGraph, EdgeAssets), Failure> {
        let file: GraphFile = self.json("graph", path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut assets = std::collections::BTreeMap::new();
        for a in file.assets {
            let edge: Edge = (a.from, a.to);
            let cert_path: PathBuf = dir.join(&a.certificate);
            let certificate =
                self.network(&format!("certificate {}->{}", a.from, a.to), &cert_path)?;
            let policy = match a.policy {
                Some(p) => p,
                None => {
                    let goal = file
                        .graph
                        .beta_vertex(a.to)
                        .and_then(|r| r.boxes().first())
                        .map(Aabb::center)
                        .ok_or_else(|| {
                            Failure::input(format!("vertex {} has no β region", a.to))
                        })?;
                    PolicySpec::proportional(EDGE_POLICY_GAIN, goal)
                }
            };
            if assets
                .insert(
                    edge,
                    EdgeAsset {
                        certificate,
                        threshold: a.threshold,
                        policy,
                    },
                )
                .is_some()
            {
                return Err(Failure::input(format!("duplicate asset for edge {edge:?}")));
            }
        }
        let assets = EdgeAssets::new(&file.graph, assets)?;
        Ok((file.graph, assets))
    }
}

#[derive(Deserialize)]
struct GraphFile {
    graph: TaskGraph,
    assets: Vec<AssetRef>,
}

#[derive(Deserialize)]
struct AssetRef {
    from: usize,
    to: usize,
    certificate: PathBuf,
    threshold: f64,
    #[serde(default)]
    policy: Option<PolicySpec>,
}

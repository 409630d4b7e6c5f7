//! Spaces, regions, noise, systems, specifications and task graphs.

mod geometry;
mod graph;
mod noise;
mod spec;
mod system;

pub use geometry::{Aabb, Region};
pub use graph::{Edge, TaskGraph, Vertex};
pub use noise::{NoiseModel, Triangular};
pub(crate) use spec::check_probability;
pub use spec::{safety_level, ReachAvoidSpec};
pub use system::{DynamicsSpec, StochasticSystem};

/// Membership of `point` in `region`.
pub fn region_contains(region: &Region, point: &[f64]) -> crate::Result<bool> {
    region.contains(point)
}

/// Probability mass the noise law puts on `cell`.
pub fn noise_cell_probability(noise: &NoiseModel, cell: &Aabb) -> crate::Result<f64> {
    noise.cell_probability(cell)
}

/// Uniform partition of the noise support with cell masses.
pub fn partition_noise(
    noise: &NoiseModel,
    cells_per_dim: usize,
) -> crate::Result<Vec<(Aabb, f64)>> {
    noise.partition(cells_per_dim)
}

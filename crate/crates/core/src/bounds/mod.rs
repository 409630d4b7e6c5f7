//! Networks, intervals and sound box images.

mod images;
mod interval;
mod network;

pub(crate) use images::image as dynamics_image_unchecked;
pub use images::{dynamics_image, policy_image, PolicySpec};
pub use interval::Interval;
pub use network::{Activation, FeedForwardNetwork, Layer};

/// Exact forward pass.
pub fn evaluate(net: &FeedForwardNetwork, x: &[f64]) -> crate::Result<Vec<f64>> {
    net.evaluate(x)
}

/// Sound output enclosures over a box.
pub fn propagate_box(
    net: &FeedForwardNetwork,
    cell: &crate::model::Aabb,
) -> crate::Result<Vec<Interval>> {
    net.propagate_box(cell)
}

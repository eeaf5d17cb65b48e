//! Minimal CPU network engine: layers with explicit forward/backward passes.
//!
//! Layers are generic over [`Scalar`] so the same graph runs in `f32` for
//! training and in `f64` for finite-difference gradient checks.

mod adam;
mod blocks;
mod hrnet;
mod layers;
mod scalar;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use hrnet::{ForwardOptions, NetCache, Network, HEATMAP_PRIOR_BIAS, MAX_STRIDE, OUTPUT_STRIDE};
pub use layers::{BatchNorm2d, Conv2d};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Parameter and buffer traversal in a fixed canonical order.
///
/// The order defines the checkpoint layout and the optimizer-state layout.
pub trait Module<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&[T]));
    /// Visits `(value, grad)` pairs.
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [T], &mut [T]));
    /// Non-trainable state (normalization running statistics).
    fn visit_buffers(&self, f: &mut dyn FnMut(&[T]));
    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&mut [T]));
}

//! Floating-point scalar abstraction: f32 or f64.

use num_traits::{Float, FromPrimitive};

/// Scalar trait for the embedding-geometry kernel.
pub trait Real: Float + FromPrimitive + core::fmt::Debug + Send + Sync + 'static {}

impl<T> Real for T where T: Float + FromPrimitive + core::fmt::Debug + Send + Sync + 'static {}

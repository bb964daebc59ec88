//! Scalar abstraction over the floating-point element type.
//!
//! Training code runs on `f32`; gradient verification runs the same layer
//! code on `f64`, where central differences are accurate enough to resolve
//! errors below 1e-4.

use std::fmt::{Debug, Display};

use num_traits::Float;

/// Element type of tensors and parameters.
pub trait Scalar: Float + num_traits::NumAssignOps + Debug + Display + Default + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn into_f64(self) -> f64;

    fn from_f32(v: f32) -> Self {
        Self::from_f64(v as f64)
    }
    fn into_f32(self) -> f32 {
        self.into_f64() as f32
    }
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn into_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn into_f64(self) -> f64 {
        self
    }
}

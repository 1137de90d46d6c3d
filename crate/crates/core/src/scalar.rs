//! Scalar abstraction so the numeric core runs in `f32` or `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar type the model, losses and gradients are generic over.
///
/// `f32` is the storage/training default; `f64` is used where extra precision
/// matters (finite-difference gradient checks, metric oracles).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` constant.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

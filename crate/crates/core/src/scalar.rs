use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar the embedding math is generic over.
///
/// Implemented for `f32` and `f64`. Data ingestion and statistics are
/// computed in `f64` and narrowed through [`Scalar::cast`]; aggregate
/// results are widened back through [`Scalar::widen`] so reports are
/// always `f64` regardless of the training precision.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Narrows an `f64` into this scalar type.
    fn cast(value: f64) -> Self {
        Self::from_f64(value).expect("f64 must convert into Scalar")
    }

    /// Widens this scalar into an `f64`.
    fn widen(self) -> f64 {
        self.to_f64().expect("Scalar must convert into f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

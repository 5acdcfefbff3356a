//! Scalar abstraction shared by every numeric routine in the crate.

use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar type the operators, solvers and recurrences are generic over.
///
/// Implemented for `f32` and `f64`. All reported values and file formats go
/// through `f64`.
pub trait Scalar: nalgebra::RealField + Copy + FromPrimitive + ToPrimitive {
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn from_count(k: u64) -> Self {
        <Self as FromPrimitive>::from_u64(k).expect("count representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

//! Scalar abstraction over the floating-point types supported by the crate.

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar every numerical routine in this crate is generic over.
///
/// The associated constants centralize the tolerances that must differ between
/// precisions. All documented guarantees are calibrated for `f64`; the `f32`
/// instantiation exists for callers that accept the looser bounds.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Display
    + Default
    + 'static
{
    /// Frobenius tolerance for `‖QᵀQ − I‖` when a matrix must be orthonormal.
    const ORTHO_TOL: Self;
    /// Relative tolerance for `‖VᵀH‖ / ‖H‖` when a vector must be horizontal.
    const TANGENT_TOL: Self;
    /// Looser tangency gate applied by the exponential map.
    const EXP_TANGENT_TOL: Self;
    /// Relative symmetry tolerance for eigendecomposition inputs.
    const SYM_TOL: Self;
    /// `σ_min ≤ RANK_REL · σ_max` flags a matrix as rank deficient.
    const RANK_REL: Self;
    /// Largest amount a canonical cosine may exceed 1 before it is an error.
    const COS_EXCESS: Self;
    /// Norms at or below this floor are degenerate in divisions.
    const NORM_FLOOR: Self;
    /// Tangent norms below this floor skip the exponential map entirely.
    const STEP_FLOOR: Self;

    /// Converts an `f64` constant into this scalar type.
    fn cast(value: f64) -> Self {
        Self::from_f64(value).expect("constant must be representable")
    }

    /// Widens to `f64` for error reporting and serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const ORTHO_TOL: Self = 1e-10;
    const TANGENT_TOL: Self = 1e-8;
    const EXP_TANGENT_TOL: Self = 1e-6;
    const SYM_TOL: Self = 1e-10;
    const RANK_REL: Self = 1e-12;
    const COS_EXCESS: Self = 1e-9;
    const NORM_FLOOR: Self = 1e-12;
    const STEP_FLOOR: Self = 1e-15;
}

impl Scalar for f32 {
    const ORTHO_TOL: Self = 1e-4;
    const TANGENT_TOL: Self = 1e-3;
    const EXP_TANGENT_TOL: Self = 1e-2;
    const SYM_TOL: Self = 1e-4;
    const RANK_REL: Self = 1e-6;
    const COS_EXCESS: Self = 1e-4;
    const NORM_FLOOR: Self = 1e-6;
    const STEP_FLOOR: Self = 1e-7;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cast_round_trips_constants() {
        assert_eq!(f64::cast(0.25), 0.25);
        assert_eq!(f32::cast(0.25), 0.25f32);
        assert_eq!(0.5f64.as_f64(), 0.5);
    }

    #[test]
    fn tolerances_are_positive() {
        fn check<T: Scalar>() {
            assert!(T::ORTHO_TOL > T::zero());
            assert!(T::TANGENT_TOL > T::zero());
            assert!(T::RANK_REL > T::zero());
            assert!(T::STEP_FLOOR > T::zero());
        }
        check::<f32>();
        check::<f64>();
    }
}

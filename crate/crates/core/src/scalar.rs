//! Scalar abstraction: every numeric kernel in this crate is generic over a
//! floating-point type implementing [`Scalar`]. Concrete aliases for the
//! common instantiations live at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssign, NumCast, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating-point scalar the numeric kernels operate on.
///
/// Implemented for `f32` and `f64`. The sampling hooks keep random draws in
/// the scalar's own precision so that an `f32` pipeline does not silently
/// round an `f64` stream.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant (tolerance, hyperparameter) into `Self`.
    fn cast(value: f64) -> Self {
        <Self as NumCast>::from(value).expect("finite f64 constant converts to scalar")
    }

    /// Widens to `f64` for reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar widens to f64")
    }

    /// One draw from N(0, 1).
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from Uniform[0, 1).
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Scalar for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f64>()
    }
}

impl Scalar for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f32>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn casts_round_trip_for_both_widths() {
        assert_eq!(<f64 as Scalar>::cast(0.25), 0.25);
        assert_eq!(<f32 as Scalar>::cast(0.25), 0.25f32);
        assert_eq!(0.25f32.as_f64(), 0.25);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..16 {
            assert_eq!(
                <f64 as Scalar>::standard_normal(&mut a),
                <f64 as Scalar>::standard_normal(&mut b)
            );
        }
    }
}

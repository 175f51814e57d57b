//! Scalar abstraction for the chunk algebra.
//!
//! Everything the competition machinery needs from a number type:
//! ring arithmetic, signs, ordering, and conversion to/from `f64`.
//! The simulator runs on `f64`; the win-probability oracle runs the
//! same code on `BigRational` so its answers are exact.

use std::fmt::{Debug, Display};

use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Number type usable as chunk weight, intensity, and mood.
///
/// `from_f64` must embed floats exactly where the type permits it
/// (`f64` is the identity, `BigRational::from_f64` is the exact dyadic
/// expansion); coin flips convert probabilities back with `to_f64`.
pub trait Scalar:
    Num
    + Signed
    + FromPrimitive
    + ToPrimitive
    + PartialOrd
    + Clone
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
}

impl<T> Scalar for T where
    T: Num
        + Signed
        + FromPrimitive
        + ToPrimitive
        + PartialOrd
        + Clone
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn assert_scalar<T: Scalar>() {}

    #[test]
    fn implemented_for_floats_and_rationals() {
        assert_scalar::<f32>();
        assert_scalar::<f64>();
        assert_scalar::<BigRational>();
    }

    #[test]
    fn rational_embedding_is_exact() {
        let half = BigRational::from_f64(0.5).unwrap();
        assert_eq!(half, BigRational::new(1.into(), 2.into()));
        // 0.1 is not 1/10 in binary; the embedding must preserve the
        // double bit pattern, not the decimal spelling.
        let tenth = BigRational::from_f64(0.1).unwrap();
        assert_ne!(tenth, BigRational::new(1.into(), 10.into()));
        assert_eq!(tenth.to_f64().unwrap(), 0.1);
    }
}

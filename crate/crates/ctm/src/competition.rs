//! Competition functions: how much a chunk shouts.
//!
//! A competition function f maps a chunk to a nonnegative score used
//! by every up-tree node. `Intensity` and `IntensityPlusMood` are
//! additive (f of a merged chunk is the sum of f over the children),
//! which is what makes winner probabilities proportional to f-shares.
//! `AbsMood` is deliberately not additive and exists to demonstrate
//! that the proportional-share result needs additivity.

use std::error::Error;
use std::fmt;

use crate::chunk::Chunk;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub enum CompetitionFunction<S> {
    /// f(chunk) = intensity.
    Intensity,
    /// f(chunk) = intensity + c * mood with |c| < 1, so f stays
    /// nonnegative wherever |mood| <= intensity.
    IntensityPlusMood { c: S },
    /// f(chunk) = |mood|. Not additive.
    AbsMood,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CompetitionError {
    /// The mood coefficient must lie strictly inside (-1, 1).
    CoefficientOutOfRange { c: String },
    /// f evaluated below zero, which no valid chunk can produce.
    NegativeScore { value: String },
}

impl fmt::Display for CompetitionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompetitionError::CoefficientOutOfRange { c } => {
                write!(f, "mood coefficient {c} outside the open interval (-1, 1)")
            }
            CompetitionError::NegativeScore { value } => write!(
                f,
                "competition function returned {value} < 0; input chunk violates \
                 |mood| <= intensity"
            ),
        }
    }
}

impl Error for CompetitionError {}

impl<S: Scalar> CompetitionFunction<S> {
    pub fn intensity() -> Self {
        CompetitionFunction::Intensity
    }

    pub fn abs_mood() -> Self {
        CompetitionFunction::AbsMood
    }

    /// Builds the mixed function, rejecting coefficients outside (-1, 1).
    pub fn intensity_plus_mood(c: S) -> Result<Self, CompetitionError> {
        if c.abs() < S::one() {
            Ok(CompetitionFunction::IntensityPlusMood { c })
        } else {
            Err(CompetitionError::CoefficientOutOfRange { c: c.to_string() })
        }
    }

    /// Additive functions distribute over chunk merges.
    pub fn is_additive(&self) -> bool {
        !matches!(self, CompetitionFunction::AbsMood)
    }

    /// Scores a chunk.
    pub fn eval(&self, chunk: &Chunk<S>) -> Result<S, CompetitionError> {
        self.eval_parts(chunk.intensity(), chunk.mood())
    }

    /// Scores from the (intensity, mood) pair alone. All supported
    /// functions depend only on these two fields, which is what lets
    /// the exact oracle work on subtree sums.
    pub fn eval_parts(&self, intensity: &S, mood: &S) -> Result<S, CompetitionError> {
        let value = match self {
            CompetitionFunction::Intensity => intensity.clone(),
            CompetitionFunction::IntensityPlusMood { c } => {
                intensity.clone() + c.clone() * mood.clone()
            }
            CompetitionFunction::AbsMood => mood.abs(),
        };
        if value < S::zero() {
            return Err(CompetitionError::NegativeScore {
                value: value.to_string(),
            });
        }
        Ok(value)
    }
}

impl CompetitionFunction<f64> {
    /// Exact rational image of this function.
    pub fn to_exact(&self) -> Option<CompetitionFunction<num_rational::BigRational>> {
        use num_traits::FromPrimitive;
        Some(match self {
            CompetitionFunction::Intensity => CompetitionFunction::Intensity,
            CompetitionFunction::IntensityPlusMood { c } => CompetitionFunction::IntensityPlusMood {
                c: num_rational::BigRational::from_f64(*c)?,
            },
            CompetitionFunction::AbsMood => CompetitionFunction::AbsMood,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunk::{Address, Gist, Modality};

    fn chunk(w: f64) -> Chunk<f64> {
        Chunk::leaf(Address::new(0), 1, Gist::text(Modality::Speech, "x").unwrap(), w).unwrap()
    }

    #[test]
    fn intensity_scores_magnitude() {
        let f = CompetitionFunction::intensity();
        assert_eq!(f.eval(&chunk(-4.0)).unwrap(), 4.0);
        assert_eq!(f.eval(&chunk(4.0)).unwrap(), 4.0);
    }

    #[test]
    fn mixed_function_on_example_chunk() {
        // intensity 4, mood -4, c = 0.5 -> 4 + 0.5 * (-4) = 2.
        let f = CompetitionFunction::intensity_plus_mood(0.5).unwrap();
        assert_eq!(f.eval(&chunk(-4.0)).unwrap(), 2.0);
    }

    #[test]
    fn nil_chunk_scores_zero_under_every_function() {
        let nil: Chunk<f64> = Chunk::nil(Address::new(1), 0);
        for f in [
            CompetitionFunction::intensity(),
            CompetitionFunction::intensity_plus_mood(0.5).unwrap(),
            CompetitionFunction::abs_mood(),
        ] {
            assert_eq!(f.eval(&nil).unwrap(), 0.0);
        }
    }

    #[test]
    fn coefficient_bounds_are_strict() {
        assert!(CompetitionFunction::intensity_plus_mood(0.999).is_ok());
        assert!(CompetitionFunction::intensity_plus_mood(-0.999).is_ok());
        for c in [1.0, -1.0, 1.5, -2.0] {
            assert!(matches!(
                CompetitionFunction::intensity_plus_mood(c),
                Err(CompetitionError::CoefficientOutOfRange { .. })
            ));
        }
    }

    #[test]
    fn invariant_violating_chunk_is_reported() {
        // Hand-built chunk with mood outside intensity.
        let bad = Chunk::from_parts(
            Address::new(0),
            1,
            Gist::nil(),
            0.0f64,
            1.0,
            -3.0,
        );
        let f = CompetitionFunction::intensity_plus_mood(0.9).unwrap();
        assert!(matches!(
            f.eval(&bad),
            Err(CompetitionError::NegativeScore { .. })
        ));
    }

    #[test]
    fn additivity_flags() {
        assert!(CompetitionFunction::<f64>::intensity().is_additive());
        assert!(CompetitionFunction::intensity_plus_mood(0.25)
            .unwrap()
            .is_additive());
        assert!(!CompetitionFunction::<f64>::abs_mood().is_additive());
    }
}

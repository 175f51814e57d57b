//! Chunks: the unit of information that competes for consciousness.
//!
//! A chunk is an immutable six-tuple (address, t, gist, weight,
//! intensity, mood). Leaf chunks are made by processors and satisfy
//! intensity = |weight| and mood = weight; merged chunks keep the
//! winner's identity fields while intensity and mood accumulate sums
//! up the tree, so |mood| <= intensity holds everywhere.

use std::error::Error;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Discrete simulation time. Tick 0 is the assembled-but-idle state.
pub type Tick = u64;

/// Upper bound on gist payloads, in bits.
pub const DEFAULT_GIST_SIZE_LIMIT_BITS: u64 = 1 << 14;

/// Identity of an LTM processor; ids are dense in `[0, N)`.
#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Address(u32);

impl Address {
    pub fn new(id: u32) -> Self {
        Address(id)
    }

    pub fn id(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Coarse tag for what kind of content a gist carries.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Speech,
    Vision,
    Sensation,
    Feeling,
    Unsymbolized,
    Command,
    Nil,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Speech => "speech",
            Modality::Vision => "vision",
            Modality::Sensation => "sensation",
            Modality::Feeling => "feeling",
            Modality::Unsymbolized => "unsymbolized",
            Modality::Command => "command",
            Modality::Nil => "nil",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "speech" => Modality::Speech,
            "vision" => Modality::Vision,
            "sensation" => Modality::Sensation,
            "feeling" => Modality::Feeling,
            "unsymbolized" => Modality::Unsymbolized,
            "command" => Modality::Command,
            "nil" => Modality::Nil,
            _ => return None,
        })
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Errors from gist and chunk construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChunkError {
    /// Empty payload is reserved for the nil modality and vice versa.
    NilMismatch { modality: Modality, payload_len: usize },
    /// Payload exceeds the configured size limit.
    GistTooLarge { bits: u64, limit_bits: u64 },
}

impl fmt::Display for ChunkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChunkError::NilMismatch {
                modality,
                payload_len,
            } => write!(
                f,
                "modality {modality} with a {payload_len}-byte payload: \
                 nil modality and empty payload imply each other"
            ),
            ChunkError::GistTooLarge { bits, limit_bits } => {
                write!(f, "gist of {bits} bits exceeds the {limit_bits}-bit limit")
            }
        }
    }
}

impl Error for ChunkError {}

/// Opaque bounded payload plus a modality tag and optional label.
///
/// Payload and label are shared, never mutated; cloning a gist is a
/// refcount bump.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Gist {
    payload: Arc<[u8]>,
    modality: Modality,
    label: Option<Arc<str>>,
}

impl Gist {
    /// The empty gist carried by NIL chunks.
    pub fn nil() -> Self {
        Gist {
            payload: Arc::from(&[][..]),
            modality: Modality::Nil,
            label: None,
        }
    }

    pub fn new(
        modality: Modality,
        payload: impl Into<Vec<u8>>,
        label: Option<&str>,
    ) -> Result<Self, ChunkError> {
        let payload: Vec<u8> = payload.into();
        let is_nil = modality == Modality::Nil;
        if is_nil != payload.is_empty() {
            return Err(ChunkError::NilMismatch {
                modality,
                payload_len: payload.len(),
            });
        }
        Ok(Gist {
            payload: payload.into(),
            modality,
            label: label.map(Arc::from),
        })
    }

    /// Text gist whose payload and label are the same UTF-8 string.
    pub fn text(modality: Modality, s: &str) -> Result<Self, ChunkError> {
        Gist::new(modality, s.as_bytes().to_vec(), Some(s))
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn size_bits(&self) -> u64 {
        self.payload.len() as u64 * 8
    }

    pub fn is_nil(&self) -> bool {
        self.payload.is_empty()
    }
}

/// The six-tuple that flows through the up-tree and STM.
#[derive(Clone, Debug, PartialEq)]
pub struct Chunk<S> {
    address: Address,
    t: Tick,
    gist: Gist,
    weight: S,
    intensity: S,
    mood: S,
}

impl<S: Scalar> Chunk<S> {
    /// Leaf chunk as a processor submits it: intensity = |weight|,
    /// mood = weight. Checked against the default gist size limit.
    pub fn leaf(address: Address, t: Tick, gist: Gist, weight: S) -> Result<Self, ChunkError> {
        Chunk::leaf_bounded(address, t, gist, weight, DEFAULT_GIST_SIZE_LIMIT_BITS)
    }

    /// Leaf chunk checked against an explicit gist size limit.
    pub fn leaf_bounded(
        address: Address,
        t: Tick,
        gist: Gist,
        weight: S,
        limit_bits: u64,
    ) -> Result<Self, ChunkError> {
        if gist.size_bits() > limit_bits {
            return Err(ChunkError::GistTooLarge {
                bits: gist.size_bits(),
                limit_bits,
            });
        }
        let intensity = weight.abs();
        let mood = weight.clone();
        Ok(Chunk {
            address,
            t,
            gist,
            weight,
            intensity,
            mood,
        })
    }

    /// The NIL chunk: nothing to say, zero everywhere.
    pub fn nil(address: Address, t: Tick) -> Self {
        Chunk {
            address,
            t,
            gist: Gist::nil(),
            weight: S::zero(),
            intensity: S::zero(),
            mood: S::zero(),
        }
    }

    /// Assembles a merged chunk. Callers (the up-tree) are responsible
    /// for the |mood| <= intensity invariant, which summation preserves.
    pub(crate) fn from_parts(
        address: Address,
        t: Tick,
        gist: Gist,
        weight: S,
        intensity: S,
        mood: S,
    ) -> Self {
        Chunk {
            address,
            t,
            gist,
            weight,
            intensity,
            mood,
        }
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn t(&self) -> Tick {
        self.t
    }

    pub fn gist(&self) -> &Gist {
        &self.gist
    }

    pub fn weight(&self) -> &S {
        &self.weight
    }

    pub fn intensity(&self) -> &S {
        &self.intensity
    }

    pub fn mood(&self) -> &S {
        &self.mood
    }

    pub fn is_nil(&self) -> bool {
        self.gist.is_nil() && self.weight.is_zero()
    }

    /// |mood| <= intensity; true for every chunk the tree produces.
    pub fn mood_within_intensity(&self) -> bool {
        self.mood.abs() <= self.intensity
    }
}

impl Chunk<f64> {
    /// Exact rational image of this chunk (each double embedded as a
    /// dyadic rational). None if any field is non-finite.
    pub fn to_exact(&self) -> Option<Chunk<num_rational::BigRational>> {
        use num_traits::FromPrimitive;
        Some(Chunk {
            address: self.address,
            t: self.t,
            gist: self.gist.clone(),
            weight: num_rational::BigRational::from_f64(self.weight)?,
            intensity: num_rational::BigRational::from_f64(self.intensity)?,
            mood: num_rational::BigRational::from_f64(self.mood)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;

    fn addr(i: u32) -> Address {
        Address::new(i)
    }

    #[test]
    fn leaf_chunk_derives_intensity_and_mood_from_weight() {
        let g = Gist::text(Modality::Speech, "a").unwrap();
        let c = Chunk::leaf(addr(0), 3, g, -2.5f64).unwrap();
        assert_eq!(*c.weight(), -2.5);
        assert_eq!(*c.intensity(), 2.5);
        assert_eq!(*c.mood(), -2.5);
        assert!(c.mood_within_intensity());
        assert!(!c.is_nil());
    }

    #[test]
    fn nil_chunk_is_all_zero() {
        let c: Chunk<f64> = Chunk::nil(addr(7), 0);
        assert!(c.is_nil());
        assert_eq!(*c.weight(), 0.0);
        assert_eq!(*c.intensity(), 0.0);
        assert_eq!(*c.mood(), 0.0);
        assert_eq!(c.gist().modality(), Modality::Nil);
        assert_eq!(c.address(), addr(7));
    }

    #[test]
    fn gist_nil_modality_must_match_empty_payload() {
        assert!(matches!(
            Gist::new(Modality::Nil, b"x".to_vec(), None),
            Err(ChunkError::NilMismatch { .. })
        ));
        assert!(matches!(
            Gist::new(Modality::Speech, Vec::new(), Some("empty")),
            Err(ChunkError::NilMismatch { .. })
        ));
        assert!(Gist::new(Modality::Nil, Vec::new(), None).is_ok());
    }

    #[test]
    fn oversized_gist_is_rejected_at_chunk_construction() {
        let big = vec![0u8; 4096]; // 32768 bits > 2^14
        let g = Gist::new(Modality::Vision, big, None).unwrap();
        let err = Chunk::leaf(addr(0), 1, g.clone(), 1.0f64).unwrap_err();
        assert_eq!(
            err,
            ChunkError::GistTooLarge {
                bits: 32768,
                limit_bits: DEFAULT_GIST_SIZE_LIMIT_BITS
            }
        );
        // A wider explicit limit admits the same gist.
        assert!(Chunk::leaf_bounded(addr(0), 1, g, 1.0f64, 1 << 16).is_ok());
    }

    #[test]
    fn default_limit_matches_two_to_the_fourteen() {
        assert_eq!(DEFAULT_GIST_SIZE_LIMIT_BITS, 16384);
    }

    #[test]
    fn exact_image_preserves_every_field() {
        let g = Gist::text(Modality::Feeling, "hm").unwrap();
        let c = Chunk::leaf(addr(2), 9, g, 0.1f64).unwrap();
        let e = c.to_exact().unwrap();
        assert_eq!(e.address(), c.address());
        assert_eq!(e.t(), c.t());
        assert_eq!(e.weight().to_f64(), Some(0.1));
        assert!(e.mood_within_intensity());
        assert!(Chunk::leaf(addr(0), 0, Gist::nil(), f64::NAN)
            .unwrap()
            .to_exact()
            .is_none());
    }
}

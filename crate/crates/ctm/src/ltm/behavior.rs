//! The plug-in surface for processor behaviors.
//!
//! A behavior sees its deliveries at the start of a tick, proposes at
//! most one submission per tick, and may mark broadcasts from other
//! processors as useful (which feeds link formation). Behaviors stay
//! ignorant of powers, moods, and interrupts; the owning processor
//! applies all of that.

use std::error::Error;
use std::fmt;

use crate::chunk::{Address, Gist, Tick};
use crate::Chunk;

/// Sign a behavior attaches to its proposed weight. `Unclear` adopts
/// the sign of the current mood.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Valence {
    Positive,
    Negative,
    Unclear,
}

/// One tick's proposed submission before power scaling and mood
/// modulation. The magnitude must be nonnegative and finite.
#[derive(Clone, Debug)]
pub struct Proposal {
    pub gist: Gist,
    pub magnitude: f64,
    pub valence: Valence,
}

/// Everything a processor is handed at the start of a tick.
#[derive(Clone, Copy, Debug)]
pub struct TickInputs<'a> {
    pub t: Tick,
    /// The chunk broadcast at t - 1, once the machine is past tick 0.
    pub broadcast: Option<&'a Chunk>,
    /// Chunks sent over active links at t - 1.
    pub link_chunks: &'a [Chunk],
    /// Sensor chunks the input map scheduled for t.
    pub sensor_chunks: &'a [Chunk],
    pub current_mood: f64,
    pub current_intensity: f64,
}

/// A behavior failure. The processor turns it into a NIL submission
/// and the trace carries the message as a warning note.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BehaviorError {
    pub message: String,
}

impl BehaviorError {
    pub fn new(message: impl Into<String>) -> Self {
        BehaviorError {
            message: message.into(),
        }
    }
}

impl fmt::Display for BehaviorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl Error for BehaviorError {}

pub trait Behavior: Send {
    /// Registry name of this behavior kind.
    fn kind(&self) -> &'static str;

    /// Observes the tick's deliveries; returns the addresses whose
    /// broadcast chunks were useful to this behavior.
    fn receive(&mut self, inputs: &TickInputs<'_>) -> Vec<Address> {
        let _ = inputs;
        Vec::new()
    }

    /// Proposes this tick's submission; `None` means nothing to say.
    fn propose(&mut self, t: Tick) -> Result<Option<Proposal>, BehaviorError>;

    /// Whether this behavior's work is directly relevant to the given
    /// interrupt chunk, i.e. may continue while interrupted.
    fn relevant_to(&self, interrupt: &Chunk) -> bool {
        let _ = interrupt;
        false
    }

    /// Applies a correction carried by feedback. Default: no memory to
    /// correct.
    fn apply_correction(&mut self, correction: &Gist) {
        let _ = correction;
    }

    /// Label pushed onto the work stack when an interrupt suspends
    /// this processor.
    fn task_label(&self) -> String {
        self.kind().to_string()
    }
}

//! A deterministic, seedable simulator of a global-workspace machine.
//!
//! N long-term-memory processors submit weighted chunks to a pipelined
//! binary up-tree; the winner occupies the single-chunk short-term
//! memory and is broadcast back to every processor one tick later.
//! Around that loop sit sleeping-experts weight updates, link
//! formation between processors, high-intensity interrupts, and a
//! mood signal that leans on every submission.
//!
//! The chunk algebra and the probability oracle are generic over the
//! scalar, so the same code path runs fast on `f64` and exactly on
//! `BigRational`. Simulation uses the [`Real`] aliases; oracles and
//! equality tests use the `Exact*` ones.

pub mod chunk;
pub mod competition;
pub mod fixtures;
pub mod ltm;
pub mod machine;
pub mod rng;
pub mod scalar;
pub mod scenario;
pub mod trace;
pub mod uptree;
pub mod verify;

pub use chunk::{Address, Gist, Modality, Tick};
pub use machine::{
    mood_modulate, Ctm, EnvironmentScript, Judgment, MachineConfig, MachineError, ProcessorDecl,
    RunStats, RunSummary, SensorEvent,
};
pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioError};
pub use uptree::{height_for, CompetitionMode};
pub use verify::{
    permutation_invariance, verify_theorem, PermutationReport, VerifyError, WinRateReport,
};

/// Scalar used for simulation.
pub type Real = f64;
/// Scalar used for exact oracles.
pub type Rational = num_rational::BigRational;

pub type Chunk = chunk::Chunk<Real>;
pub type ExactChunk = chunk::Chunk<Rational>;
pub type CompetitionFunction = competition::CompetitionFunction<Real>;
pub type ExactCompetitionFunction = competition::CompetitionFunction<Rational>;
pub type UpTree = uptree::UpTree<Real>;
pub type ExactUpTree = uptree::UpTree<Rational>;

//! Scenario files: a whole machine and its scripted environment as
//! one JSON document.
//!
//! ```json
//! {
//!   "machine": {
//!     "lifetime": 40,
//!     "mode": "probabilistic",
//!     "competition_function": { "kind": "intensity_plus_mood", "c": 0.5 },
//!     "interrupt_threshold": 100.0,
//!     "mood_delta": 0.25,
//!     "link_threshold": 3,
//!     "seed": 7
//!   },
//!   "processors": [
//!     { "address": 0, "kind": "const_emitter",
//!       "params": { "gist": "a", "weight": 3.0 } },
//!     { "address": 1, "kind": "word_memory", "intensity_power": 1.0,
//!       "params": { "words": { "caffeine": "caffeine" } } }
//!   ],
//!   "environment": {
//!     "sensor_events": [
//!       { "tick": 1, "target": 1,
//!         "gist": { "modality": "command", "label": "spell?",
//!                   "payload": "caffeine" } }
//!     ],
//!     "judgments": [
//!       { "tick": 4, "competition_tick": 1, "truth": "caffeine",
//!         "targets": [1] }
//!     ],
//!     "actuator_expectations": [
//!       { "tick": 9, "gist_label": "reach" }
//!     ]
//!   }
//! }
//! ```
//!
//! Every machine field has the same default as `MachineConfig::new`,
//! so a minimal scenario is just processors. Unknown fields are
//! rejected everywhere: a typo should fail loudly, not silently run a
//! different experiment.
//!
//! Loading validates more than shape. Judgments must respect the
//! pipeline: a competition at tick `t` is broadcast at `t + height + 1`,
//! so no judgment may be scheduled before that. Sensor and judgment
//! targets must name declared processors, and every behavior is
//! instantiated once against its parameters before the scenario is
//! accepted.

use std::error::Error;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::chunk::{Address, Tick};
use crate::competition::CompetitionError;
use crate::ltm::{BehaviorError, BehaviorRegistry, GistSpec};
use crate::machine::{
    Ctm, EnvironmentScript, Judgment, MachineConfig, MachineError, ProcessorDecl, RunSummary,
    SensorEvent,
};
use crate::trace::TraceSink;
use crate::uptree::CompetitionMode;
use crate::{height_for, CompetitionFunction};

#[derive(Debug)]
pub enum ScenarioError {
    Io {
        path: PathBuf,
        source: io::Error,
    },
    Parse(serde_json::Error),
    Function(CompetitionError),
    BadGist {
        context: String,
        source: BehaviorError,
    },
    UnknownTarget {
        context: String,
        address: Address,
        n: usize,
    },
    /// Sensor events start at tick 1; tick 0 is before the machine
    /// wakes.
    SensorBeforeStart {
        target: Address,
    },
    /// The judged competition's result is not broadcast yet.
    EarlyJudgment {
        tick: Tick,
        competition_tick: Tick,
        ready_at: Tick,
    },
    JudgmentOfTickZero {
        tick: Tick,
    },
    Machine(MachineError),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Io { path, source } => {
                write!(f, "reading {}: {source}", path.display())
            }
            ScenarioError::Parse(e) => write!(f, "parsing scenario: {e}"),
            ScenarioError::Function(e) => write!(f, "competition function: {e}"),
            ScenarioError::BadGist { context, source } => write!(f, "{context}: {source}"),
            ScenarioError::UnknownTarget {
                context,
                address,
                n,
            } => write!(
                f,
                "{context} targets {address}, but only addresses 0..{n} exist"
            ),
            ScenarioError::SensorBeforeStart { target } => {
                write!(f, "sensor event for {target} at tick 0; ticks start at 1")
            }
            ScenarioError::EarlyJudgment {
                tick,
                competition_tick,
                ready_at,
            } => write!(
                f,
                "judgment at tick {tick} concerns the competition of tick \
                 {competition_tick}, whose result is only broadcast at tick {ready_at}"
            ),
            ScenarioError::JudgmentOfTickZero { tick } => write!(
                f,
                "judgment at tick {tick} names competition tick 0; competitions start at 1"
            ),
            ScenarioError::Machine(e) => write!(f, "{e}"),
        }
    }
}

// Display already tells the whole story, so no `source` chain: reporters
// that walk causes would print each layer twice.
impl Error for ScenarioError {}

impl From<serde_json::Error> for ScenarioError {
    fn from(e: serde_json::Error) -> Self {
        ScenarioError::Parse(e)
    }
}

impl From<MachineError> for ScenarioError {
    fn from(e: MachineError) -> Self {
        ScenarioError::Machine(e)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    machine: MachineSection,
    processors: Vec<ProcessorDecl>,
    #[serde(default)]
    environment: EnvironmentSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MachineSection {
    #[serde(default = "default_lifetime")]
    lifetime: Tick,
    #[serde(default)]
    mode: Mode,
    #[serde(default)]
    competition_function: FunctionSpec,
    #[serde(default = "default_interrupt_threshold")]
    interrupt_threshold: f64,
    #[serde(default = "default_mood_delta")]
    mood_delta: f64,
    #[serde(default = "default_link_threshold")]
    link_threshold: u32,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    gist_size_limit_bits: Option<u64>,
    #[serde(default)]
    leaf_assignment: Option<Vec<usize>>,
}

impl Default for MachineSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields default")
    }
}

fn default_lifetime() -> Tick {
    100
}

fn default_interrupt_threshold() -> f64 {
    1e9
}

fn default_mood_delta() -> f64 {
    0.25
}

fn default_link_threshold() -> u32 {
    3
}

/// Local mirror of `CompetitionMode` so the scenario schema stays
/// decoupled from internals (and defaults to deterministic).
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Mode {
    #[default]
    Deterministic,
    Probabilistic,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
enum FunctionSpec {
    #[default]
    Intensity,
    IntensityPlusMood {
        c: f64,
    },
    AbsMood,
}

impl FunctionSpec {
    fn build(&self) -> Result<CompetitionFunction, CompetitionError> {
        match self {
            FunctionSpec::Intensity => Ok(CompetitionFunction::intensity()),
            FunctionSpec::IntensityPlusMood { c } => CompetitionFunction::intensity_plus_mood(*c),
            FunctionSpec::AbsMood => Ok(CompetitionFunction::abs_mood()),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvironmentSection {
    #[serde(default)]
    sensor_events: Vec<SensorEventSpec>,
    #[serde(default)]
    judgments: Vec<JudgmentSpec>,
    #[serde(default)]
    actuator_expectations: Vec<ExpectationSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorEventSpec {
    tick: Tick,
    target: Address,
    gist: GistSpec,
    #[serde(default)]
    weight: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JudgmentSpec {
    tick: Tick,
    competition_tick: Tick,
    truth: String,
    #[serde(default)]
    targets: Option<Vec<Address>>,
    #[serde(default)]
    correction: Option<GistSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpectationSpec {
    tick: Tick,
    gist_label: String,
}

/// A validated machine configuration plus its environment script.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: MachineConfig,
    pub environment: EnvironmentScript,
}

impl Scenario {
    /// Assembles a fresh machine and runs it for the configured
    /// lifetime.
    pub fn run(
        &self,
        registry: &BehaviorRegistry,
        sink: &mut dyn TraceSink,
    ) -> Result<(Ctm, RunSummary), MachineError> {
        let mut machine = Ctm::assemble(self.config.clone(), registry)?;
        let summary = machine.run(&self.environment, self.config.lifetime, sink)?;
        Ok((machine, summary))
    }
}

fn check_target(context: &str, address: Address, n: usize) -> Result<(), ScenarioError> {
    if address.index() >= n {
        return Err(ScenarioError::UnknownTarget {
            context: context.to_string(),
            address,
            n,
        });
    }
    Ok(())
}

/// Parses and validates a scenario document. `registry` is consulted
/// to instantiate every declared behavior once, so bad parameters are
/// caught here rather than mid-run.
pub fn parse_scenario(text: &str, registry: &BehaviorRegistry) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text)?;
    let m = file.machine;

    let mut config = MachineConfig::new(file.processors);
    config.lifetime = m.lifetime;
    config.mode = match m.mode {
        Mode::Deterministic => CompetitionMode::Deterministic,
        Mode::Probabilistic => CompetitionMode::Probabilistic,
    };
    config.function = m
        .competition_function
        .build()
        .map_err(ScenarioError::Function)?;
    config.interrupt_threshold = m.interrupt_threshold;
    config.mood_delta = m.mood_delta;
    config.link_threshold = m.link_threshold;
    config.seed = m.seed;
    if let Some(bits) = m.gist_size_limit_bits {
        config.gist_size_limit_bits = bits;
    }
    config.leaf_assignment = m.leaf_assignment;

    config.validate()?;
    let n = config.n();
    let height = height_for(n);

    let mut environment = EnvironmentScript::new();
    for (i, e) in file.environment.sensor_events.iter().enumerate() {
        let context = format!("sensor event #{i}");
        check_target(&context, e.target, n)?;
        if e.tick == 0 {
            return Err(ScenarioError::SensorBeforeStart { target: e.target });
        }
        let gist = e.gist.to_gist().map_err(|source| ScenarioError::BadGist {
            context: format!("{context} gist"),
            source,
        })?;
        environment.add_sensor(
            e.tick,
            SensorEvent {
                target: e.target,
                gist,
                weight: e.weight,
            },
        );
    }
    for (i, j) in file.environment.judgments.iter().enumerate() {
        let context = format!("judgment #{i}");
        if j.competition_tick == 0 {
            return Err(ScenarioError::JudgmentOfTickZero { tick: j.tick });
        }
        let ready_at = j.competition_tick + height as Tick + 1;
        if j.tick < ready_at {
            return Err(ScenarioError::EarlyJudgment {
                tick: j.tick,
                competition_tick: j.competition_tick,
                ready_at,
            });
        }
        if let Some(targets) = &j.targets {
            for &target in targets {
                check_target(&context, target, n)?;
            }
        }
        let correction = match &j.correction {
            None => None,
            Some(spec) => Some(spec.to_gist().map_err(|source| ScenarioError::BadGist {
                context: format!("{context} correction"),
                source,
            })?),
        };
        environment.add_judgment(
            j.tick,
            Judgment {
                competition_tick: j.competition_tick,
                truth: j.truth.clone(),
                targets: j.targets.clone(),
                correction,
            },
        );
    }
    for e in &file.environment.actuator_expectations {
        environment.expect_actuation(e.tick, e.gist_label.clone());
    }

    // Dry-run assembly: checks config invariants, the leaf
    // assignment, and every behavior's parameters.
    Ctm::assemble(config.clone(), registry)?;

    Ok(Scenario {
        config,
        environment,
    })
}

pub fn load_scenario(
    path: impl AsRef<Path>,
    registry: &BehaviorRegistry,
) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, registry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::MemorySink;

    fn registry() -> BehaviorRegistry {
        BehaviorRegistry::with_builtins()
    }

    const MINIMAL: &str = r#"{
        "processors": [
            { "address": 0, "kind": "const_emitter",
              "params": { "gist": "a", "weight": 3.0 } },
            { "address": 1, "kind": "const_emitter",
              "params": { "gist": "b", "weight": 1.0 } }
        ]
    }"#;

    #[test]
    fn minimal_scenario_uses_defaults() {
        let s = parse_scenario(MINIMAL, &registry()).unwrap();
        assert_eq!(s.config.lifetime, 100);
        assert_eq!(s.config.mode, CompetitionMode::Deterministic);
        assert_eq!(s.config.function, CompetitionFunction::intensity());
        assert_eq!(s.config.mood_delta, 0.25);
        assert_eq!(s.config.link_threshold, 3);
        assert_eq!(s.config.seed, 0);
        assert!(s.config.leaf_assignment.is_none());
    }

    #[test]
    fn full_scenario_round_trips_and_runs() {
        let text = r#"{
            "machine": {
                "lifetime": 12,
                "mode": "probabilistic",
                "competition_function": { "kind": "intensity_plus_mood", "c": 0.5 },
                "mood_delta": 0.125,
                "seed": 42,
                "leaf_assignment": [1, 0]
            },
            "processors": [
                { "address": 0, "kind": "const_emitter",
                  "params": { "gist": "a", "weight": 3.0 } },
                { "address": 1, "kind": "input_relay" }
            ],
            "environment": {
                "sensor_events": [
                    { "tick": 2, "target": 1, "gist": "nudge", "weight": 9.0 }
                ],
                "judgments": [
                    { "tick": 6, "competition_tick": 2, "truth": "nudge",
                      "targets": [1] }
                ],
                "actuator_expectations": [
                    { "tick": 9, "gist_label": "never-happens" }
                ]
            }
        }"#;
        let s = parse_scenario(text, &registry()).unwrap();
        assert_eq!(s.config.mode, CompetitionMode::Probabilistic);
        assert_eq!(s.config.leaf_assignment, Some(vec![1, 0]));
        let mut sink = MemorySink::default();
        let (machine, summary) = s.run(&registry(), &mut sink).unwrap();
        assert_eq!(machine.clock(), 12);
        assert_eq!(summary.ticks, 12);
        assert_eq!(summary.unmet_expectations, vec![(9, "never-happens".to_string())]);
        assert!(!sink.records().is_empty());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{
            "machine": { "liftime": 10 },
            "processors": [
                { "address": 0, "kind": "const_emitter",
                  "params": { "gist": "a", "weight": 1.0 } }
            ]
        }"#;
        assert!(matches!(
            parse_scenario(text, &registry()),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn early_judgments_are_rejected() {
        let text = r#"{
            "processors": [
                { "address": 0, "kind": "const_emitter",
                  "params": { "gist": "a", "weight": 3.0 } },
                { "address": 1, "kind": "const_emitter",
                  "params": { "gist": "b", "weight": 1.0 } }
            ],
            "environment": {
                "judgments": [
                    { "tick": 2, "competition_tick": 1, "truth": "a" }
                ]
            }
        }"#;
        // Two processors: height 1, so tick 1 results broadcast at 3.
        match parse_scenario(text, &registry()) {
            Err(ScenarioError::EarlyJudgment {
                tick: 2,
                competition_tick: 1,
                ready_at: 3,
            }) => {}
            other => panic!("expected early-judgment error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_targets_and_bad_params_are_rejected() {
        let text = r#"{
            "processors": [
                { "address": 0, "kind": "const_emitter",
                  "params": { "gist": "a", "weight": 3.0 } }
            ],
            "environment": {
                "sensor_events": [
                    { "tick": 1, "target": 5, "gist": "x" }
                ]
            }
        }"#;
        assert!(matches!(
            parse_scenario(text, &registry()),
            Err(ScenarioError::UnknownTarget { .. })
        ));

        let text = r#"{
            "processors": [
                { "address": 0, "kind": "const_emitter",
                  "params": { "gist": "a", "weight": 3.0, "volume": 11 } }
            ]
        }"#;
        assert!(matches!(
            parse_scenario(text, &registry()),
            Err(ScenarioError::Machine(_))
        ));

        let text = r#"{
            "processors": [
                { "address": 0, "kind": "psychic",
                  "params": {} }
            ]
        }"#;
        assert!(matches!(
            parse_scenario(text, &registry()),
            Err(ScenarioError::Machine(MachineError::Ltm(_)))
        ));
    }

    #[test]
    fn bad_function_coefficients_are_rejected() {
        let text = r#"{
            "machine": {
                "competition_function": { "kind": "intensity_plus_mood", "c": 1.5 }
            },
            "processors": [
                { "address": 0, "kind": "const_emitter",
                  "params": { "gist": "a", "weight": 3.0 } }
            ]
        }"#;
        assert!(matches!(
            parse_scenario(text, &registry()),
            Err(ScenarioError::Function(_))
        ));
    }

    #[test]
    fn files_load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.json");
        std::fs::write(&path, MINIMAL).unwrap();
        let s = load_scenario(&path, &registry()).unwrap();
        assert_eq!(s.config.n(), 2);
        assert!(matches!(
            load_scenario(dir.path().join("missing.json"), &registry()),
            Err(ScenarioError::Io { .. })
        ));
    }
}

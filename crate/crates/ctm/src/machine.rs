//! The assembled machine.
//!
//! A machine is the seven components wired together: STM (the
//! workspace), LTM (the processors), the up-tree, the down-tree, the
//! link table, the input map, and the output map. `tick` advances all
//! of them by one step of the global clock.
//!
//! Timing: a chunk submitted at tick t reaches STM at t + h (h = tree
//! height) and is broadcast to every processor at t + h + 1. The
//! down-tree is one chunk wide and one tick deep.

use std::collections::{BTreeMap, BTreeSet};
use std::error::Error;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chunk::{Address, ChunkError, Gist, Modality, Tick, DEFAULT_GIST_SIZE_LIMIT_BITS};
use crate::ltm::{
    BehaviorRegistry, Feedback, FeedbackOutcome, InterruptTransition, LinkTable, LtmError,
    ProcessorState, TickInputs,
};
use crate::trace::{
    ChunkRecord, FeedbackStatus, InterruptPhase, TraceError, TraceEvent, TraceRecord, TraceSink,
};
use crate::uptree::{CompetitionMode, ShapePolicy, UpTreeError};
use crate::{Chunk, CompetitionFunction, UpTree};

#[derive(Debug)]
pub enum MachineError {
    NoProcessors,
    AddressOutOfRange { address: Address, n: usize },
    DuplicateAddress { address: Address },
    BadMoodDelta { delta: f64 },
    BadInterruptThreshold { threshold: f64 },
    BadGistLimit,
    UnknownProcessor { address: Address },
    EarlyJudgment { tick: Tick, competition_tick: Tick, ready_at: Tick },
    WarmUp { t: Tick, ready_at: Tick },
    UnknownTick { t: Tick },
    Chunk(ChunkError),
    Ltm(LtmError),
    UpTree(UpTreeError),
    Trace(TraceError),
}

impl fmt::Display for MachineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MachineError::NoProcessors => write!(f, "a machine needs at least one processor"),
            MachineError::AddressOutOfRange { address, n } => {
                write!(f, "{address} is out of range for {n} processors")
            }
            MachineError::DuplicateAddress { address } => {
                write!(f, "{address} is declared twice")
            }
            MachineError::BadMoodDelta { delta } => {
                write!(f, "mood delta must lie strictly between 0 and 1, got {delta}")
            }
            MachineError::BadInterruptThreshold { threshold } => {
                write!(f, "interrupt threshold must be positive, got {threshold}")
            }
            MachineError::BadGistLimit => write!(f, "gist size limit must be positive"),
            MachineError::UnknownProcessor { address } => {
                write!(f, "no processor at {address}")
            }
            MachineError::EarlyJudgment {
                tick,
                competition_tick,
                ready_at,
            } => write!(
                f,
                "judgment at tick {tick} for competition {competition_tick} \
                 arrives before its broadcast; earliest valid tick is {ready_at}"
            ),
            MachineError::WarmUp { t, ready_at } => write!(
                f,
                "tick {t} is still pipeline warm-up; meaningful from tick {ready_at}"
            ),
            MachineError::UnknownTick { t } => write!(f, "tick {t} has not happened"),
            MachineError::Chunk(e) => write!(f, "{e}"),
            MachineError::Ltm(e) => write!(f, "{e}"),
            MachineError::UpTree(e) => write!(f, "{e}"),
            MachineError::Trace(e) => write!(f, "{e}"),
        }
    }
}

// Wrapped errors pass straight through Display, so no `source` chain.
impl Error for MachineError {}

impl From<ChunkError> for MachineError {
    fn from(e: ChunkError) -> Self {
        MachineError::Chunk(e)
    }
}

impl From<LtmError> for MachineError {
    fn from(e: LtmError) -> Self {
        MachineError::Ltm(e)
    }
}

impl From<UpTreeError> for MachineError {
    fn from(e: UpTreeError) -> Self {
        MachineError::UpTree(e)
    }
}

impl From<TraceError> for MachineError {
    fn from(e: TraceError) -> Self {
        MachineError::Trace(e)
    }
}

/// Mood's thumb on the scale: a positive current mood adds
/// `delta * |w|` to every nonzero submission weight, a negative mood
/// subtracts it, a neutral mood changes nothing.
pub fn mood_modulate(weight: f64, current_mood: f64, delta: f64) -> f64 {
    if current_mood == 0.0 || weight == 0.0 {
        return weight;
    }
    weight + current_mood.signum() * delta * weight.abs()
}

fn default_power() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

/// One processor slot in a machine configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessorDecl {
    pub address: Address,
    pub kind: String,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default = "default_power")]
    pub intensity_power: f64,
    #[serde(default = "default_true")]
    pub competes: bool,
    #[serde(default)]
    pub lighter_demotion: Option<f64>,
}

impl ProcessorDecl {
    pub fn new(address: u32, kind: &str) -> Self {
        ProcessorDecl {
            address: Address::new(address),
            kind: kind.to_string(),
            params: serde_json::Value::Null,
            intensity_power: 1.0,
            competes: true,
            lighter_demotion: None,
        }
    }

    pub fn with_params(mut self, params: serde_json::Value) -> Self {
        self.params = params;
        self
    }

    pub fn with_power(mut self, power: f64) -> Self {
        self.intensity_power = power;
        self
    }

    pub fn non_competing(mut self) -> Self {
        self.competes = false;
        self
    }

    pub fn with_lighter_demotion(mut self, factor: f64) -> Self {
        self.lighter_demotion = Some(factor);
        self
    }
}

#[derive(Clone, Debug)]
pub struct MachineConfig {
    pub lifetime: Tick,
    pub mode: CompetitionMode,
    pub function: CompetitionFunction,
    pub interrupt_threshold: f64,
    pub mood_delta: f64,
    pub link_threshold: u32,
    pub seed: u64,
    pub gist_size_limit_bits: u64,
    pub processors: Vec<ProcessorDecl>,
    /// address id -> leaf position; identity when absent.
    pub leaf_assignment: Option<Vec<usize>>,
}

impl MachineConfig {
    /// Deterministic intensity competition with quiet defaults.
    pub fn new(processors: Vec<ProcessorDecl>) -> Self {
        MachineConfig {
            lifetime: 100,
            mode: CompetitionMode::Deterministic,
            function: CompetitionFunction::intensity(),
            interrupt_threshold: 1e9,
            mood_delta: 0.25,
            link_threshold: 3,
            seed: 0,
            gist_size_limit_bits: DEFAULT_GIST_SIZE_LIMIT_BITS,
            processors,
            leaf_assignment: None,
        }
    }

    pub fn n(&self) -> usize {
        self.processors.len()
    }

    pub fn validate(&self) -> Result<(), MachineError> {
        let n = self.processors.len();
        if n == 0 {
            return Err(MachineError::NoProcessors);
        }
        let mut seen = vec![false; n];
        for d in &self.processors {
            let idx = d.address.index();
            if idx >= n {
                return Err(MachineError::AddressOutOfRange {
                    address: d.address,
                    n,
                });
            }
            if seen[idx] {
                return Err(MachineError::DuplicateAddress { address: d.address });
            }
            seen[idx] = true;
        }
        if !(self.mood_delta > 0.0 && self.mood_delta < 1.0) {
            return Err(MachineError::BadMoodDelta {
                delta: self.mood_delta,
            });
        }
        if !(self.interrupt_threshold.is_finite() && self.interrupt_threshold > 0.0) {
            return Err(MachineError::BadInterruptThreshold {
                threshold: self.interrupt_threshold,
            });
        }
        if self.gist_size_limit_bits == 0 {
            return Err(MachineError::BadGistLimit);
        }
        if self.link_threshold == 0 {
            return Err(MachineError::Ltm(LtmError::ZeroLinkThreshold));
        }
        Ok(())
    }
}

/// A scripted sensor delivery: `gist` with `weight` lands at `target`.
#[derive(Clone, Debug)]
pub struct SensorEvent {
    pub target: Address,
    pub gist: Gist,
    pub weight: f64,
}

/// External ground truth about one past competition. `targets`
/// restricts who hears it; everyone does when absent.
#[derive(Clone, Debug)]
pub struct Judgment {
    pub competition_tick: Tick,
    pub truth: String,
    pub targets: Option<Vec<Address>>,
    pub correction: Option<Gist>,
}

/// Everything the outside world does to (and expects from) a machine,
/// keyed by tick.
#[derive(Clone, Debug, Default)]
pub struct EnvironmentScript {
    sensors: BTreeMap<Tick, Vec<SensorEvent>>,
    judgments: BTreeMap<Tick, Vec<Judgment>>,
    expectations: BTreeMap<Tick, Vec<String>>,
}

impl EnvironmentScript {
    pub fn new() -> Self {
        EnvironmentScript::default()
    }

    pub fn add_sensor(&mut self, tick: Tick, event: SensorEvent) {
        self.sensors.entry(tick).or_default().push(event);
    }

    pub fn add_judgment(&mut self, tick: Tick, judgment: Judgment) {
        self.judgments.entry(tick).or_default().push(judgment);
    }

    pub fn expect_actuation(&mut self, tick: Tick, gist_label: impl Into<String>) {
        self.expectations
            .entry(tick)
            .or_default()
            .push(gist_label.into());
    }

    pub fn sensors_at(&self, t: Tick) -> &[SensorEvent] {
        self.sensors.get(&t).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn judgments_at(&self, t: Tick) -> &[Judgment] {
        self.judgments.get(&t).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter_sensors(&self) -> impl Iterator<Item = (Tick, &SensorEvent)> + '_ {
        self.sensors
            .iter()
            .flat_map(|(&t, v)| v.iter().map(move |e| (t, e)))
    }

    pub fn iter_judgments(&self) -> impl Iterator<Item = (Tick, &Judgment)> + '_ {
        self.judgments
            .iter()
            .flat_map(|(&t, v)| v.iter().map(move |j| (t, j)))
    }

    /// Latest tick the script mentions; a natural minimum run length.
    pub fn last_tick(&self) -> Tick {
        let s = self.sensors.keys().next_back().copied().unwrap_or(0);
        let j = self.judgments.keys().next_back().copied().unwrap_or(0);
        let e = self.expectations.keys().next_back().copied().unwrap_or(0);
        s.max(j).max(e)
    }

    pub fn unmet_expectations(&self, output: &OutputMap) -> Vec<(Tick, String)> {
        let mut unmet = Vec::new();
        for (&tick, labels) in &self.expectations {
            for label in labels {
                let met = output
                    .actuations()
                    .iter()
                    .any(|(t, c)| *t == tick && c.gist().label() == Some(label.as_str()));
                if !met {
                    unmet.push((tick, label.clone()));
                }
            }
        }
        unmet
    }
}

/// Short-term memory: the single chunk under the spotlight plus the
/// full conscious stream behind it.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    current: Option<Chunk>,
    stream: Vec<Chunk>,
    current_mood: f64,
    current_intensity: f64,
}

impl Workspace {
    pub fn current(&self) -> Option<&Chunk> {
        self.current.as_ref()
    }

    /// stream[t - 1] is the chunk STM held at tick t.
    pub fn stream(&self) -> &[Chunk] {
        &self.stream
    }

    pub fn current_mood(&self) -> f64 {
        self.current_mood
    }

    pub fn current_intensity(&self) -> f64 {
        self.current_intensity
    }
}

/// The broadcast fan-out: one chunk wide, one tick deep.
#[derive(Clone, Debug, Default)]
pub struct DownTree {
    pending: Option<Chunk>,
}

impl DownTree {
    /// The chunk that will reach every processor next tick.
    pub fn pending(&self) -> Option<&Chunk> {
        self.pending.as_ref()
    }
}

/// Log of sensor chunks that entered the machine, in delivery order.
#[derive(Clone, Debug, Default)]
pub struct InputMap {
    delivered: Vec<(Tick, Chunk)>,
}

impl InputMap {
    pub fn delivered(&self) -> &[(Tick, Chunk)] {
        &self.delivered
    }
}

/// Log of command broadcasts that drove actuators.
#[derive(Clone, Debug, Default)]
pub struct OutputMap {
    actuations: Vec<(Tick, Chunk)>,
}

impl OutputMap {
    pub fn actuations(&self) -> &[(Tick, Chunk)] {
        &self.actuations
    }
}

/// Counters and series accumulated over a run; reconstructible from
/// the trace, which keeps the trace honest.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunStats {
    /// STM records whose wavefront was a real competition (t >= 1).
    pub warm_broadcasts: u64,
    /// Warm records where nobody had anything to say.
    pub nil_broadcasts: u64,
    /// Warm non-NIL winners by address.
    pub winner_counts: BTreeMap<Address, u64>,
    pub interrupts_entered: u64,
    pub interrupts_resumed: u64,
    pub links_activated: u64,
    pub promotions: u64,
    pub demotions: u64,
    pub actuations: u64,
    /// mood_series[i] = current mood during tick i + 1.
    pub mood_series: Vec<f64>,
    pub intensity_series: Vec<f64>,
}

impl RunStats {
    /// Rebuilds the statistics from a trace; equal to the stats the
    /// run itself accumulated.
    pub fn from_records(records: &[TraceRecord]) -> Self {
        let mut stats = RunStats::default();
        let mut active_pairs: BTreeSet<(Address, Address)> = BTreeSet::new();
        for r in records {
            match &r.event {
                TraceEvent::Stm { chunk } => {
                    if chunk.t >= 1 {
                        stats.warm_broadcasts += 1;
                        if chunk.is_nil() {
                            stats.nil_broadcasts += 1;
                        } else {
                            *stats.winner_counts.entry(chunk.address).or_insert(0) += 1;
                        }
                    }
                }
                TraceEvent::Broadcast { chunk } => {
                    stats.mood_series.push(chunk.mood);
                    stats.intensity_series.push(chunk.intensity);
                }
                TraceEvent::Interrupt { phase, .. } => match phase {
                    InterruptPhase::Enter => stats.interrupts_entered += 1,
                    InterruptPhase::Resume => stats.interrupts_resumed += 1,
                },
                TraceEvent::LinkAck {
                    from,
                    originator,
                    active,
                    ..
                } => {
                    if *active {
                        let key = if from <= originator {
                            (*from, *originator)
                        } else {
                            (*originator, *from)
                        };
                        if active_pairs.insert(key) {
                            stats.links_activated += 1;
                        }
                    }
                }
                TraceEvent::Feedback { outcome, .. } => match outcome {
                    FeedbackStatus::Promoted => stats.promotions += 1,
                    FeedbackStatus::Demoted => stats.demotions += 1,
                    FeedbackStatus::StmRight | FeedbackStatus::AlreadyChecked => {}
                },
                TraceEvent::Actuator { .. } => stats.actuations += 1,
                TraceEvent::Submission { .. } | TraceEvent::LinkSend { .. } => {}
            }
        }
        stats
    }
}

/// What a finished run reports back.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub ticks: Tick,
    pub stats: RunStats,
    pub unmet_expectations: Vec<(Tick, String)>,
}

/// The machine itself. Assemble it at tick 0, then drive it one tick
/// at a time.
pub struct Ctm {
    config: MachineConfig,
    height: usize,
    clock: Tick,
    stm: Workspace,
    ltm: Vec<ProcessorState>,
    up_tree: UpTree,
    down_tree: DownTree,
    links: LinkTable,
    input: InputMap,
    output: OutputMap,
    /// recipient -> chunks forwarded over links last tick.
    pending_links: BTreeMap<Address, Vec<Chunk>>,
    stats: RunStats,
}

impl Ctm {
    pub fn assemble(
        config: MachineConfig,
        registry: &BehaviorRegistry,
    ) -> Result<Self, MachineError> {
        config.validate()?;
        let mut decls = config.processors.clone();
        decls.sort_by_key(|d| d.address);
        let mut ltm = Vec::with_capacity(decls.len());
        for d in &decls {
            let behavior = registry.instantiate(&d.kind, &d.params)?;
            let mut p = ProcessorState::new(d.address, behavior, d.intensity_power)?;
            p.set_competes(d.competes);
            p.set_lighter_demotion(d.lighter_demotion)?;
            ltm.push(p);
        }
        let mut up_tree =
            crate::uptree::UpTree::build(decls.len(), ShapePolicy::Balanced)?.with_seed(config.seed);
        if let Some(assignment) = &config.leaf_assignment {
            up_tree = up_tree.with_assignment(assignment)?;
        }
        let links = LinkTable::new(config.link_threshold)?;
        // The down-tree starts loaded with the init root so every
        // processor hears something at tick 1.
        let down_tree = DownTree {
            pending: Some(up_tree.root_chunk().clone()),
        };
        Ok(Ctm {
            height: up_tree.height(),
            clock: 0,
            stm: Workspace::default(),
            ltm,
            up_tree,
            down_tree,
            links,
            input: InputMap::default(),
            output: OutputMap::default(),
            pending_links: BTreeMap::new(),
            stats: RunStats::default(),
            config,
        })
    }

    pub fn assemble_with_builtins(config: MachineConfig) -> Result<Self, MachineError> {
        Ctm::assemble(config, &BehaviorRegistry::with_builtins())
    }

    pub fn config(&self) -> &MachineConfig {
        &self.config
    }

    pub fn clock(&self) -> Tick {
        self.clock
    }

    /// Up-tree height; also the STM latency in ticks.
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn stm(&self) -> &Workspace {
        &self.stm
    }

    pub fn ltm(&self) -> &[ProcessorState] {
        &self.ltm
    }

    pub fn up_tree(&self) -> &UpTree {
        &self.up_tree
    }

    pub fn down_tree(&self) -> &DownTree {
        &self.down_tree
    }

    pub fn links(&self) -> &LinkTable {
        &self.links
    }

    pub fn input(&self) -> &InputMap {
        &self.input
    }

    pub fn output(&self) -> &OutputMap {
        &self.output
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    /// The mood in force during tick t: the mood of the chunk
    /// broadcast at t, i.e. of the STM chunk of t - 1. Warm-up ticks
    /// (all-NIL pipeline) are refused rather than reported as zero.
    pub fn current_mood_at(&self, t: Tick) -> Result<f64, MachineError> {
        self.broadcast_source_at(t).map(|c| *c.mood())
    }

    pub fn current_intensity_at(&self, t: Tick) -> Result<f64, MachineError> {
        self.broadcast_source_at(t).map(|c| *c.intensity())
    }

    fn broadcast_source_at(&self, t: Tick) -> Result<&Chunk, MachineError> {
        let ready_at = self.height as Tick + 2;
        if t < ready_at {
            return Err(MachineError::WarmUp { t, ready_at });
        }
        if t > self.clock + 1 {
            return Err(MachineError::UnknownTick { t });
        }
        Ok(&self.stm.stream[(t - 2) as usize])
    }

    /// Advances the global clock by one tick.
    pub fn tick(
        &mut self,
        env: &EnvironmentScript,
        sink: &mut dyn TraceSink,
    ) -> Result<(), MachineError> {
        let t = self.clock + 1;
        let n = self.ltm.len();

        // Phase 1: deliveries. The down-tree hands every processor the
        // previous tick's STM chunk; link forwards and sensor chunks
        // from the environment land alongside it.
        let broadcast = self.down_tree.pending.take();
        debug_assert!(broadcast.is_some(), "the down-tree is never empty");
        if let Some(b) = &broadcast {
            self.stm.current_mood = *b.mood();
            self.stm.current_intensity = *b.intensity();
            sink.record(&TraceRecord {
                tick: t,
                event: TraceEvent::Broadcast {
                    chunk: ChunkRecord::of(b),
                },
            })?;
            if !b.is_nil() && b.gist().modality() == Modality::Command {
                self.output.actuations.push((t, b.clone()));
                self.stats.actuations += 1;
                sink.record(&TraceRecord {
                    tick: t,
                    event: TraceEvent::Actuator {
                        chunk: ChunkRecord::of(b),
                    },
                })?;
            }
        }
        self.stats.mood_series.push(self.stm.current_mood);
        self.stats.intensity_series.push(self.stm.current_intensity);

        let link_deliveries = std::mem::take(&mut self.pending_links);
        let mut sensor_map: BTreeMap<Address, Vec<Chunk>> = BTreeMap::new();
        for e in env.sensors_at(t) {
            if e.target.index() >= n {
                return Err(MachineError::UnknownProcessor { address: e.target });
            }
            let chunk = Chunk::leaf_bounded(
                e.target,
                t,
                e.gist.clone(),
                e.weight,
                self.config.gist_size_limit_bits,
            )?;
            self.input.delivered.push((t, chunk.clone()));
            sensor_map.entry(e.target).or_default().push(chunk);
        }

        let mut transition: Option<InterruptTransition> = None;
        let mut acks: Vec<(Address, Address)> = Vec::new();
        for (i, p) in self.ltm.iter_mut().enumerate() {
            let a = p.address();
            let inputs = TickInputs {
                t,
                broadcast: broadcast.as_ref(),
                link_chunks: link_deliveries.get(&a).map(Vec::as_slice).unwrap_or(&[]),
                sensor_chunks: sensor_map.get(&a).map(Vec::as_slice).unwrap_or(&[]),
                current_mood: self.stm.current_mood,
                current_intensity: self.stm.current_intensity,
            };
            let r = p.receive(&inputs, self.config.interrupt_threshold);
            // The threshold test is uniform, so every processor
            // transitions together.
            if i == 0 {
                transition = r.transition;
            } else {
                debug_assert_eq!(transition, r.transition);
            }
            for originator in r.acks {
                if originator != a {
                    acks.push((a, originator));
                }
            }
        }
        if let Some(tr) = transition {
            let phase = match tr {
                InterruptTransition::Entered => {
                    self.stats.interrupts_entered += 1;
                    InterruptPhase::Enter
                }
                InterruptTransition::Resumed => {
                    self.stats.interrupts_resumed += 1;
                    InterruptPhase::Resume
                }
            };
            sink.record(&TraceRecord {
                tick: t,
                event: TraceEvent::Interrupt {
                    phase,
                    intensity: self.stm.current_intensity,
                },
            })?;
        }
        for (from, originator) in acks {
            let ack = self.links.register_ack(from, originator)?;
            if ack.active && ack.count == self.links.threshold() {
                self.stats.links_activated += 1;
            }
            sink.record(&TraceRecord {
                tick: t,
                event: TraceEvent::LinkAck {
                    from,
                    originator,
                    count: ack.count,
                    active: ack.active,
                },
            })?;
        }

        // Phase 2: judgments about past competitions become
        // per-processor feedback.
        for j in env.judgments_at(t) {
            let ct = j.competition_tick;
            let ready_at = ct + self.height as Tick + 1;
            if ct == 0 || t < ready_at {
                return Err(MachineError::EarlyJudgment {
                    tick: t,
                    competition_tick: ct,
                    ready_at,
                });
            }
            let stm_chunk = &self.stm.stream[(ct + self.height as Tick - 1) as usize];
            let stm_was_right = stm_chunk.gist().label() == Some(j.truth.as_str());
            let stm_gist = stm_chunk.gist().clone();
            let targets: Option<BTreeSet<Address>> =
                j.targets.as_ref().map(|v| v.iter().copied().collect());
            if let Some(ts) = &targets {
                for a in ts {
                    if a.index() >= n {
                        return Err(MachineError::UnknownProcessor { address: *a });
                    }
                }
            }
            for p in &mut self.ltm {
                if let Some(ts) = &targets {
                    if !ts.contains(&p.address()) {
                        continue;
                    }
                }
                let own = &p.story()[(ct - 1) as usize].submitted;
                let p_was_right = own.gist().label() == Some(j.truth.as_str());
                let feedback = Feedback {
                    t: ct,
                    stm_was_right,
                    p_was_right,
                    correction: j.correction.clone(),
                    stm_gist: Some(stm_gist.clone()),
                };
                let outcome = p.apply_feedback(&feedback)?;
                let status = match outcome {
                    FeedbackOutcome::StmRight => FeedbackStatus::StmRight,
                    FeedbackOutcome::AlreadyChecked => FeedbackStatus::AlreadyChecked,
                    FeedbackOutcome::Promoted { .. } => {
                        self.stats.promotions += 1;
                        FeedbackStatus::Promoted
                    }
                    FeedbackOutcome::Demoted { .. } => {
                        self.stats.demotions += 1;
                        FeedbackStatus::Demoted
                    }
                };
                sink.record(&TraceRecord {
                    tick: t,
                    event: TraceEvent::Feedback {
                        processor: p.address(),
                        competition_tick: ct,
                        stm_was_right,
                        p_was_right,
                        outcome: status,
                        intensity_power: p.intensity_power(),
                    },
                })?;
            }
        }

        // Phase 3: submissions, mood-modulated inside each processor.
        let mut leaves = Vec::with_capacity(n);
        for p in &mut self.ltm {
            let sub = p.submit(
                t,
                self.stm.current_mood,
                self.config.mood_delta,
                self.config.gist_size_limit_bits,
            );
            if !sub.chunk.is_nil() || sub.note.is_some() {
                sink.record(&TraceRecord {
                    tick: t,
                    event: TraceEvent::Submission {
                        chunk: ChunkRecord::of(&sub.chunk),
                        note: sub.note,
                    },
                })?;
            }
            leaves.push(sub.chunk);
        }

        // Links bypass the competition: every non-NIL submission also
        // goes straight to the sender's active peers, landing next
        // tick whether or not it wins STM.
        for chunk in &leaves {
            if chunk.is_nil() {
                continue;
            }
            let sender = chunk.address();
            let peers = self.links.active_peers(sender);
            if peers.is_empty() {
                continue;
            }
            for &peer in &peers {
                self.pending_links
                    .entry(peer)
                    .or_default()
                    .push(chunk.clone());
            }
            sink.record(&TraceRecord {
                tick: t,
                event: TraceEvent::LinkSend {
                    sender,
                    recipients: peers,
                    chunk: ChunkRecord::of(chunk),
                },
            })?;
        }

        // Phases 4 and 5: one pipelined tree step; the root goes to
        // STM, the stream, and the down-tree.
        let root = self
            .up_tree
            .step(&leaves, t, self.config.mode, &self.config.function)?;
        sink.record(&TraceRecord {
            tick: t,
            event: TraceEvent::Stm {
                chunk: ChunkRecord::of(&root),
            },
        })?;
        if root.t() >= 1 {
            self.stats.warm_broadcasts += 1;
            if root.is_nil() {
                self.stats.nil_broadcasts += 1;
            } else {
                *self.stats.winner_counts.entry(root.address()).or_insert(0) += 1;
            }
        }
        self.stm.stream.push(root.clone());
        self.stm.current = Some(root.clone());
        self.down_tree.pending = Some(root);

        self.clock = t;
        Ok(())
    }

    /// Runs until the clock reaches `until`.
    pub fn run(
        &mut self,
        env: &EnvironmentScript,
        until: Tick,
        sink: &mut dyn TraceSink,
    ) -> Result<RunSummary, MachineError> {
        while self.clock < until {
            self.tick(env, sink)?;
        }
        sink.flush()?;
        Ok(RunSummary {
            ticks: self.clock,
            stats: self.stats.clone(),
            unmet_expectations: env.unmet_expectations(&self.output),
        })
    }
}

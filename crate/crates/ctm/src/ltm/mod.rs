//! Long-term memory processors.
//!
//! Each processor wraps a behavior with the machinery the workspace
//! expects: a tick-indexed story of everything received and submitted,
//! an intensity-giving power adjusted by sleeping-experts feedback, an
//! interrupt mode with a work stack, and link bookkeeping shared
//! through the machine's link table.

mod behavior;
mod builtins;

pub use behavior::{Behavior, BehaviorError, Proposal, TickInputs, Valence};
pub use builtins::{
    rule_spell, BehaviorRegistry, ConstEmitter, EchoProbe, FuelGauge, GistSpec, InputRelay,
    NoiseEmitter, PainSource, SpellingRule, WordMemory, SPELL_QUERY,
};

use std::collections::BTreeMap;
use std::error::Error;
use std::fmt;

use crate::chunk::{Address, Gist, Tick};
use crate::machine::mood_modulate;
use crate::Chunk;

/// Sleeping-experts promotion applied when the workspace got it wrong
/// and this processor had it right.
pub const PROMOTE_FACTOR: f64 = 1.5;
/// Demotion applied when this processor was wrong too.
pub const DEMOTE_FACTOR: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub enum LtmError {
    NonPositivePower { power: f64 },
    BadDemotionFactor { factor: f64 },
    /// Acking one's own broadcast says nothing about communication.
    SelfAck { address: Address },
    ZeroLinkThreshold,
    UnknownStoryTick { t: Tick, recorded: usize },
    UnknownBehaviorKind { kind: String },
    BadBehaviorParams { kind: String, message: String },
}

impl fmt::Display for LtmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LtmError::NonPositivePower { power } => {
                write!(f, "intensity power must be positive and finite, got {power}")
            }
            LtmError::BadDemotionFactor { factor } => write!(
                f,
                "lighter demotion factor must lie in (0, 1], got {factor}"
            ),
            LtmError::SelfAck { address } => {
                write!(f, "{address} tried to ack its own broadcast")
            }
            LtmError::ZeroLinkThreshold => write!(f, "link threshold must be at least 1"),
            LtmError::UnknownStoryTick { t, recorded } => write!(
                f,
                "feedback for tick {t}, but the story records {recorded} ticks"
            ),
            LtmError::UnknownBehaviorKind { kind } => {
                write!(f, "no behavior kind named {kind:?} is registered")
            }
            LtmError::BadBehaviorParams { kind, message } => {
                write!(f, "bad parameters for behavior {kind:?}: {message}")
            }
        }
    }
}

impl Error for LtmError {}

/// One tick of a processor's life. The story grows by exactly one
/// entry per tick and is never pruned.
#[derive(Clone, Debug)]
pub struct StoryEntry {
    pub t: Tick,
    pub submitted: Chunk,
    pub received_broadcast: Option<Chunk>,
    pub received_links: Vec<Chunk>,
    pub received_inputs: Vec<Chunk>,
    /// Set once sleeping-experts feedback has consumed this entry.
    pub checked: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ProcessorMode {
    Normal,
    Interrupted,
}

/// Work suspended by an interrupt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskFrame {
    pub label: String,
    pub since: Tick,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum InterruptTransition {
    Entered,
    Resumed,
}

/// What receiving a tick's deliveries produced.
#[derive(Debug)]
pub struct Reception {
    pub acks: Vec<Address>,
    pub transition: Option<InterruptTransition>,
}

/// A submission plus an optional warning note for the trace.
#[derive(Clone, Debug)]
pub struct Submission {
    pub chunk: Chunk,
    pub note: Option<String>,
}

/// Ground truth about one past competition, as this processor hears it.
#[derive(Clone, Debug)]
pub struct Feedback {
    /// Tick of the judged competition.
    pub t: Tick,
    pub stm_was_right: bool,
    pub p_was_right: bool,
    pub correction: Option<Gist>,
    /// What the workspace actually broadcast for that competition;
    /// consulted by the lighter-demotion policy.
    pub stm_gist: Option<Gist>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FeedbackOutcome {
    /// STM was right: nothing changes and the entry stays uncheckable
    /// until a wrong broadcast comes along.
    StmRight,
    /// The entry was already consumed; feedback is idempotent.
    AlreadyChecked,
    Promoted { power: f64 },
    Demoted { power: f64 },
}

pub struct ProcessorState {
    address: Address,
    behavior: Box<dyn Behavior>,
    intensity_power: f64,
    competes: bool,
    /// Optional softer demotion factor used when the broadcast gist
    /// differed from this processor's own submission.
    lighter_demotion: Option<f64>,
    story: Vec<StoryEntry>,
    mode: ProcessorMode,
    work_stack: Vec<TaskFrame>,
    interrupt_cause: Option<Chunk>,
}

impl fmt::Debug for ProcessorState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProcessorState")
            .field("address", &self.address)
            .field("kind", &self.behavior.kind())
            .field("intensity_power", &self.intensity_power)
            .field("mode", &self.mode)
            .field("story_len", &self.story.len())
            .finish()
    }
}

impl ProcessorState {
    pub fn new(
        address: Address,
        behavior: Box<dyn Behavior>,
        intensity_power: f64,
    ) -> Result<Self, LtmError> {
        if !(intensity_power.is_finite() && intensity_power > 0.0) {
            return Err(LtmError::NonPositivePower {
                power: intensity_power,
            });
        }
        Ok(ProcessorState {
            address,
            behavior,
            intensity_power,
            competes: true,
            lighter_demotion: None,
            story: Vec::new(),
            mode: ProcessorMode::Normal,
            work_stack: Vec::new(),
            interrupt_cause: None,
        })
    }

    /// Disables competition: the processor still listens but always
    /// submits NIL.
    pub fn set_competes(&mut self, competes: bool) {
        self.competes = competes;
    }

    pub fn set_lighter_demotion(&mut self, factor: Option<f64>) -> Result<(), LtmError> {
        if let Some(f) = factor {
            if !(f.is_finite() && f > 0.0 && f <= 1.0) {
                return Err(LtmError::BadDemotionFactor { factor: f });
            }
        }
        self.lighter_demotion = factor;
        Ok(())
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn intensity_power(&self) -> f64 {
        self.intensity_power
    }

    pub fn mode(&self) -> ProcessorMode {
        self.mode
    }

    pub fn stack_depth(&self) -> usize {
        self.work_stack.len()
    }

    pub fn story(&self) -> &[StoryEntry] {
        &self.story
    }

    pub fn behavior(&self) -> &dyn Behavior {
        self.behavior.as_ref()
    }

    /// Phase 1 of a tick: logs deliveries, handles interrupt
    /// transitions, and lets the behavior observe.
    ///
    /// An arriving broadcast with intensity at or above `threshold`
    /// stacks the current task; the first one back below releases it.
    pub fn receive(&mut self, inputs: &TickInputs<'_>, threshold: f64) -> Reception {
        debug_assert_eq!(self.story.len() + 1, inputs.t as usize, "one entry per tick");
        let mut transition = None;
        if let Some(b) = inputs.broadcast {
            if *b.intensity() >= threshold {
                if self.mode == ProcessorMode::Normal {
                    self.work_stack.push(TaskFrame {
                        label: self.behavior.task_label(),
                        since: inputs.t,
                    });
                    self.mode = ProcessorMode::Interrupted;
                    transition = Some(InterruptTransition::Entered);
                }
                self.interrupt_cause = Some(b.clone());
            } else if self.mode == ProcessorMode::Interrupted {
                self.work_stack.pop();
                self.mode = ProcessorMode::Normal;
                self.interrupt_cause = None;
                transition = Some(InterruptTransition::Resumed);
            }
        }
        let acks = self.behavior.receive(inputs);
        self.story.push(StoryEntry {
            t: inputs.t,
            submitted: Chunk::nil(self.address, inputs.t),
            received_broadcast: inputs.broadcast.cloned(),
            received_links: inputs.link_chunks.to_vec(),
            received_inputs: inputs.sensor_chunks.to_vec(),
            checked: false,
        });
        Reception { acks, transition }
    }

    /// Phase 3 of a tick: the behavior's proposal becomes a leaf chunk
    /// with weight = sign * (power * magnitude), mood-modulated last.
    /// Anything that goes wrong degrades to a NIL submission plus a
    /// note. Interrupted processors submit NIL unless their behavior
    /// finds the interrupt relevant to its own work.
    pub fn submit(
        &mut self,
        t: Tick,
        current_mood: f64,
        mood_delta: f64,
        gist_limit_bits: u64,
    ) -> Submission {
        let mut note = None;
        let chunk = self.build_submission(t, current_mood, mood_delta, gist_limit_bits, &mut note);
        let entry = self.story.last_mut().expect("receive precedes submit");
        debug_assert_eq!(entry.t, t);
        entry.submitted = chunk.clone();
        Submission { chunk, note }
    }

    fn build_submission(
        &mut self,
        t: Tick,
        current_mood: f64,
        mood_delta: f64,
        gist_limit_bits: u64,
        note: &mut Option<String>,
    ) -> Chunk {
        let nil = Chunk::nil(self.address, t);
        if !self.competes {
            return nil;
        }
        if self.mode == ProcessorMode::Interrupted {
            let relevant = self
                .interrupt_cause
                .as_ref()
                .is_some_and(|cause| self.behavior.relevant_to(cause));
            if !relevant {
                return nil;
            }
        }
        let proposal = match self.behavior.propose(t) {
            Ok(Some(p)) => p,
            Ok(None) => return nil,
            Err(e) => {
                *note = Some(format!("behavior {}: {e}", self.behavior.kind()));
                return nil;
            }
        };
        if !(proposal.magnitude.is_finite() && proposal.magnitude >= 0.0) {
            *note = Some(format!(
                "behavior {}: bad magnitude {}",
                self.behavior.kind(),
                proposal.magnitude
            ));
            return nil;
        }
        let base = self.intensity_power * proposal.magnitude;
        let signed = match proposal.valence {
            Valence::Positive => base,
            Valence::Negative => -base,
            Valence::Unclear => {
                if current_mood < 0.0 {
                    -base
                } else {
                    base
                }
            }
        };
        let weight = mood_modulate(signed, current_mood, mood_delta);
        match Chunk::leaf_bounded(self.address, t, proposal.gist, weight, gist_limit_bits) {
            Ok(c) => c,
            Err(e) => {
                *note = Some(format!("behavior {}: {e}", self.behavior.kind()));
                nil
            }
        }
    }

    /// Sleeping-experts update for one judged competition.
    ///
    /// STM right: leave everything alone, entry stays unchecked. STM
    /// wrong and we were right: multiply power by 3/2 and check the
    /// entry off. Both wrong: apply the correction if one came along,
    /// halve the power, check off. Re-delivery of feedback for a
    /// checked entry is a no-op.
    pub fn apply_feedback(&mut self, feedback: &Feedback) -> Result<FeedbackOutcome, LtmError> {
        if feedback.t == 0 || feedback.t as usize > self.story.len() {
            return Err(LtmError::UnknownStoryTick {
                t: feedback.t,
                recorded: self.story.len(),
            });
        }
        let idx = (feedback.t - 1) as usize;
        if self.story[idx].checked {
            return Ok(FeedbackOutcome::AlreadyChecked);
        }
        if feedback.stm_was_right {
            return Ok(FeedbackOutcome::StmRight);
        }
        if feedback.p_was_right {
            self.intensity_power *= PROMOTE_FACTOR;
            self.story[idx].checked = true;
            Ok(FeedbackOutcome::Promoted {
                power: self.intensity_power,
            })
        } else {
            if let Some(correction) = &feedback.correction {
                self.behavior.apply_correction(correction);
            }
            let mut factor = DEMOTE_FACTOR;
            if let Some(lighter) = self.lighter_demotion {
                let own = self.story[idx].submitted.gist();
                if feedback.stm_gist.as_ref().is_some_and(|g| g != own) {
                    factor = lighter;
                }
            }
            self.intensity_power *= factor;
            self.story[idx].checked = true;
            Ok(FeedbackOutcome::Demoted {
                power: self.intensity_power,
            })
        }
    }
}

/// Result of registering one ack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkAck {
    pub count: u32,
    pub active: bool,
}

/// Symmetric ack counts between processor pairs. A pair's link turns
/// active once its count reaches the threshold and stays active; there
/// is no decrement.
#[derive(Clone, Debug)]
pub struct LinkTable {
    counts: BTreeMap<(Address, Address), u32>,
    threshold: u32,
}

impl LinkTable {
    pub fn new(threshold: u32) -> Result<Self, LtmError> {
        if threshold == 0 {
            return Err(LtmError::ZeroLinkThreshold);
        }
        Ok(LinkTable {
            counts: BTreeMap::new(),
            threshold,
        })
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    fn key(a: Address, b: Address) -> (Address, Address) {
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// Records that `from` found a broadcast of `originator` useful.
    pub fn register_ack(&mut self, from: Address, originator: Address) -> Result<LinkAck, LtmError> {
        if from == originator {
            return Err(LtmError::SelfAck { address: from });
        }
        let count = self.counts.entry(Self::key(from, originator)).or_insert(0);
        *count += 1;
        Ok(LinkAck {
            count: *count,
            active: *count >= self.threshold,
        })
    }

    pub fn count(&self, a: Address, b: Address) -> u32 {
        self.counts.get(&Self::key(a, b)).copied().unwrap_or(0)
    }

    pub fn is_active(&self, a: Address, b: Address) -> bool {
        self.count(a, b) >= self.threshold
    }

    /// All processors with an active link to `of`, in address order.
    pub fn active_peers(&self, of: Address) -> Vec<Address> {
        self.counts
            .iter()
            .filter(|(_, &c)| c >= self.threshold)
            .filter_map(|(&(a, b), _)| {
                if a == of {
                    Some(b)
                } else if b == of {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunk::Modality;

    fn addr(i: u32) -> Address {
        Address::new(i)
    }

    fn gist(s: &str) -> Gist {
        Gist::text(Modality::Speech, s).unwrap()
    }

    fn emitter(weight: f64) -> Box<dyn Behavior> {
        Box::new(ConstEmitter::new(gist("x"), weight))
    }

    fn feed(t: Tick, stm_right: bool, p_right: bool) -> Feedback {
        Feedback {
            t,
            stm_was_right: stm_right,
            p_was_right: p_right,
            correction: None,
            stm_gist: None,
        }
    }

    fn run_ticks(p: &mut ProcessorState, n: Tick) {
        for t in 1..=n {
            p.receive(
                &TickInputs {
                    t,
                    broadcast: None,
                    link_chunks: &[],
                    sensor_chunks: &[],
                    current_mood: 0.0,
                    current_intensity: 0.0,
                },
                100.0,
            );
            p.submit(t, 0.0, 0.25, 1 << 14);
        }
    }

    #[test]
    fn power_must_be_positive() {
        assert!(ProcessorState::new(addr(0), emitter(1.0), 0.0).is_err());
        assert!(ProcessorState::new(addr(0), emitter(1.0), -2.0).is_err());
        assert!(ProcessorState::new(addr(0), emitter(1.0), f64::NAN).is_err());
        assert!(ProcessorState::new(addr(0), emitter(1.0), 1.0).is_ok());
    }

    #[test]
    fn submissions_scale_by_power_and_log_to_story() {
        let mut p = ProcessorState::new(addr(3), emitter(2.0), 4.0).unwrap();
        run_ticks(&mut p, 3);
        assert_eq!(p.story().len(), 3);
        for (i, entry) in p.story().iter().enumerate() {
            assert_eq!(entry.t, i as Tick + 1);
            assert_eq!(*entry.submitted.weight(), 8.0);
            assert_eq!(entry.submitted.address(), addr(3));
            assert!(!entry.checked);
        }
    }

    #[test]
    fn sleeping_experts_promotion_demotion_and_idempotence() {
        let mut p = ProcessorState::new(addr(0), emitter(1.0), 1.0).unwrap();
        run_ticks(&mut p, 4);
        // STM right: no change, entry stays unchecked.
        assert_eq!(
            p.apply_feedback(&feed(1, true, false)).unwrap(),
            FeedbackOutcome::StmRight
        );
        assert_eq!(p.intensity_power(), 1.0);
        assert!(!p.story()[0].checked);
        // STM wrong, we were right: 3/2.
        assert_eq!(
            p.apply_feedback(&feed(2, false, true)).unwrap(),
            FeedbackOutcome::Promoted { power: 1.5 }
        );
        assert!(p.story()[1].checked);
        // STM wrong, we were wrong: 1/2.
        assert_eq!(
            p.apply_feedback(&feed(3, false, false)).unwrap(),
            FeedbackOutcome::Demoted { power: 0.75 }
        );
        // Checked entries shrug off re-delivery.
        assert_eq!(
            p.apply_feedback(&feed(2, false, true)).unwrap(),
            FeedbackOutcome::AlreadyChecked
        );
        assert_eq!(p.intensity_power(), 0.75);
        // Unknown ticks are rejected.
        assert!(matches!(
            p.apply_feedback(&feed(9, false, true)),
            Err(LtmError::UnknownStoryTick { t: 9, recorded: 4 })
        ));
    }

    #[test]
    fn equal_promotions_and_demotions_compound_to_three_quarters() {
        // 3/2 then 1/2 is exactly 3/4 per pair, no matter how the pairs
        // interleave; every intermediate product 3^a / 2^b is exact in
        // a double for the sizes tested here.
        let mut stream = crate::rng::RngStream::from_seed(11);
        for k in 1..=16u32 {
            let mut p = ProcessorState::new(addr(0), emitter(1.0), 1.0).unwrap();
            run_ticks(&mut p, 2 * k as Tick);
            let mut ops: Vec<bool> = (0..k).map(|_| true).chain((0..k).map(|_| false)).collect();
            stream.shuffle(&mut ops);
            for (i, promote) in ops.iter().enumerate() {
                p.apply_feedback(&feed(i as Tick + 1, false, *promote)).unwrap();
            }
            let mut expected = 1.0f64;
            for _ in 0..k {
                expected *= 0.75;
            }
            assert_eq!(p.intensity_power(), expected, "k={k}");
        }
    }

    #[test]
    fn lighter_demotion_applies_only_when_the_broadcast_differed() {
        let mut p = ProcessorState::new(addr(0), emitter(1.0), 1.0).unwrap();
        p.set_lighter_demotion(Some(0.9)).unwrap();
        run_ticks(&mut p, 2);
        // Broadcast carried our own gist: full demotion.
        let fb = Feedback {
            t: 1,
            stm_was_right: false,
            p_was_right: false,
            correction: None,
            stm_gist: Some(gist("x")),
        };
        assert_eq!(
            p.apply_feedback(&fb).unwrap(),
            FeedbackOutcome::Demoted { power: 0.5 }
        );
        // Broadcast carried someone else's gist: lighter demotion.
        let fb = Feedback {
            t: 2,
            stm_was_right: false,
            p_was_right: false,
            correction: None,
            stm_gist: Some(gist("y")),
        };
        assert_eq!(
            p.apply_feedback(&fb).unwrap(),
            FeedbackOutcome::Demoted { power: 0.45 }
        );
        assert!(p.set_lighter_demotion(Some(0.0)).is_err());
        assert!(p.set_lighter_demotion(Some(1.5)).is_err());
    }

    #[test]
    fn interrupts_stack_work_and_resume_on_calm() {
        let mut p = ProcessorState::new(addr(1), emitter(1.0), 1.0).unwrap();
        let loud = Chunk::leaf(addr(0), 1, gist("pain"), -150.0).unwrap();
        let quiet = Chunk::leaf(addr(0), 2, gist("ok"), 5.0).unwrap();
        let r = p.receive(
            &TickInputs {
                t: 1,
                broadcast: Some(&loud),
                link_chunks: &[],
                sensor_chunks: &[],
                current_mood: 0.0,
                current_intensity: 150.0,
            },
            100.0,
        );
        assert_eq!(r.transition, Some(InterruptTransition::Entered));
        assert_eq!(p.mode(), ProcessorMode::Interrupted);
        assert_eq!(p.stack_depth(), 1);
        // Interrupted and not relevant: forced NIL regardless of behavior.
        let s = p.submit(1, 0.0, 0.25, 1 << 14);
        assert!(s.chunk.is_nil());
        // A second loud broadcast does not stack again.
        let louder = Chunk::leaf(addr(2), 2, gist("pain"), -200.0).unwrap();
        let r = p.receive(
            &TickInputs {
                t: 2,
                broadcast: Some(&louder),
                link_chunks: &[],
                sensor_chunks: &[],
                current_mood: 0.0,
                current_intensity: 200.0,
            },
            100.0,
        );
        assert_eq!(r.transition, None);
        assert_eq!(p.stack_depth(), 1);
        p.submit(2, 0.0, 0.25, 1 << 14);
        // Calm broadcast: resume.
        let r = p.receive(
            &TickInputs {
                t: 3,
                broadcast: Some(&quiet),
                link_chunks: &[],
                sensor_chunks: &[],
                current_mood: 5.0,
                current_intensity: 5.0,
            },
            100.0,
        );
        assert_eq!(r.transition, Some(InterruptTransition::Resumed));
        assert_eq!(p.mode(), ProcessorMode::Normal);
        assert_eq!(p.stack_depth(), 0);
        let s = p.submit(3, 0.0, 0.25, 1 << 14);
        assert!(!s.chunk.is_nil());
    }

    #[test]
    fn boundary_intensity_interrupts() {
        let mut p = ProcessorState::new(addr(1), emitter(1.0), 1.0).unwrap();
        let exact = Chunk::leaf(addr(0), 1, gist("pain"), 100.0).unwrap();
        p.receive(
            &TickInputs {
                t: 1,
                broadcast: Some(&exact),
                link_chunks: &[],
                sensor_chunks: &[],
                current_mood: 0.0,
                current_intensity: 100.0,
            },
            100.0,
        );
        assert_eq!(p.mode(), ProcessorMode::Interrupted);
    }

    #[test]
    fn noncompeting_processors_submit_nil() {
        let mut p = ProcessorState::new(addr(0), emitter(3.0), 1.0).unwrap();
        p.set_competes(false);
        run_ticks(&mut p, 2);
        assert!(p.story().iter().all(|e| e.submitted.is_nil()));
    }

    #[test]
    fn link_counts_are_symmetric_and_activate_at_threshold() {
        let mut links = LinkTable::new(3).unwrap();
        assert!(LinkTable::new(0).is_err());
        for expected in 1..=2u32 {
            let ack = links.register_ack(addr(2), addr(0)).unwrap();
            assert_eq!(ack, LinkAck { count: expected, active: false });
        }
        // Third ack arrives from the other side; counts are shared.
        let ack = links.register_ack(addr(0), addr(2)).unwrap();
        assert_eq!(ack, LinkAck { count: 3, active: true });
        assert_eq!(links.count(addr(0), addr(2)), 3);
        assert_eq!(links.count(addr(2), addr(0)), 3);
        assert!(links.is_active(addr(0), addr(2)));
        assert!(!links.is_active(addr(0), addr(1)));
        assert_eq!(links.active_peers(addr(0)), vec![addr(2)]);
        assert_eq!(links.active_peers(addr(2)), vec![addr(0)]);
        assert_eq!(links.active_peers(addr(1)), Vec::<Address>::new());
        assert!(matches!(
            links.register_ack(addr(1), addr(1)),
            Err(LtmError::SelfAck { .. })
        ));
    }

    #[test]
    fn active_peers_come_out_in_address_order() {
        let mut links = LinkTable::new(1).unwrap();
        links.register_ack(addr(5), addr(9)).unwrap();
        links.register_ack(addr(5), addr(0)).unwrap();
        links.register_ack(addr(5), addr(7)).unwrap();
        assert_eq!(
            links.active_peers(addr(5)),
            vec![addr(0), addr(7), addr(9)]
        );
    }

    #[test]
    fn behavior_errors_degrade_to_nil_with_a_note() {
        struct Faulty;
        impl Behavior for Faulty {
            fn kind(&self) -> &'static str {
                "faulty"
            }
            fn propose(&mut self, _t: Tick) -> Result<Option<Proposal>, BehaviorError> {
                Err(BehaviorError::new("boom"))
            }
        }
        let mut p = ProcessorState::new(addr(0), Box::new(Faulty), 1.0).unwrap();
        p.receive(
            &TickInputs {
                t: 1,
                broadcast: None,
                link_chunks: &[],
                sensor_chunks: &[],
                current_mood: 0.0,
                current_intensity: 0.0,
            },
            100.0,
        );
        let s = p.submit(1, 0.0, 0.25, 1 << 14);
        assert!(s.chunk.is_nil());
        assert!(s.note.unwrap().contains("boom"));
    }

    #[test]
    fn unclear_valence_takes_the_mood_sign() {
        struct Ambivalent;
        impl Behavior for Ambivalent {
            fn kind(&self) -> &'static str {
                "ambivalent"
            }
            fn propose(&mut self, _t: Tick) -> Result<Option<Proposal>, BehaviorError> {
                Ok(Some(Proposal {
                    gist: Gist::text(Modality::Feeling, "hm").unwrap(),
                    magnitude: 2.0,
                    valence: Valence::Unclear,
                }))
            }
        }
        let run = |mood: f64| {
            let mut p = ProcessorState::new(addr(0), Box::new(Ambivalent), 1.0).unwrap();
            p.receive(
                &TickInputs {
                    t: 1,
                    broadcast: None,
                    link_chunks: &[],
                    sensor_chunks: &[],
                    current_mood: mood,
                    current_intensity: mood.abs(),
                },
                100.0,
            );
            *p.submit(1, mood, 0.0 + 0.25, 1 << 14).chunk.weight()
        };
        // Positive mood: +2 modulated up to 2.5. Negative: -2 down to -2.5.
        assert_eq!(run(5.0), 2.5);
        assert_eq!(run(-5.0), -2.5);
        // Zero mood: positive by convention, no modulation.
        assert_eq!(run(0.0), 2.0);
    }
}

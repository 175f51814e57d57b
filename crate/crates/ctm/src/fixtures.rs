//! Canned machines used by tests, examples, and the CLI demos.
//!
//! Each fixture is small enough to reason about by hand, and together
//! they cover the interesting regimes: deterministic tie-breaking,
//! proportional win shares, the non-additive counterexample, sleeping
//! experts, interrupts, link formation, and conservation under noise.

use crate::chunk::{Gist, Modality, Tick};
use crate::ltm::SPELL_QUERY;
use crate::machine::{
    EnvironmentScript, Judgment, MachineConfig, ProcessorDecl, SensorEvent,
};
use crate::uptree::CompetitionMode;
use crate::{Address, CompetitionFunction};
use serde_json::json;

fn emitter(address: u32, label: &str, weight: f64) -> ProcessorDecl {
    ProcessorDecl::new(address, "const_emitter")
        .with_params(json!({ "gist": label, "weight": weight }))
}

/// Four steady emitters with weights 3, 3, 1, 4 under the
/// deterministic rule. The 3-3 tie resolves toward the lower address,
/// so `a` beats `d`'s subtree 6 to 5 and wins every competition.
pub fn tied_pair_quartet() -> MachineConfig {
    let mut config = MachineConfig::new(vec![
        emitter(0, "a", 3.0),
        emitter(1, "b", 3.0),
        emitter(2, "c", 1.0),
        emitter(3, "d", 4.0),
    ]);
    config.lifetime = 30;
    config
}

/// The same quartet with leaves transposed so the pairs become
/// (a, c) and (b, d): now d's side carries 7 against a's 4, and d
/// wins. Same inputs, different arrangement, different deterministic
/// winner.
pub fn transposed_quartet() -> MachineConfig {
    let mut config = tied_pair_quartet();
    config.leaf_assignment = Some(vec![0, 2, 1, 3]);
    config
}

/// Weights 1, 3, 2, 4 under the probabilistic rule: win shares must
/// come out 0.1 / 0.3 / 0.2 / 0.4 regardless of arrangement.
pub fn share_quartet(seed: u64) -> MachineConfig {
    let mut config = MachineConfig::new(vec![
        emitter(0, "a", 1.0),
        emitter(1, "b", 3.0),
        emitter(2, "c", 2.0),
        emitter(3, "d", 4.0),
    ]);
    config.lifetime = 30;
    config.mode = CompetitionMode::Probabilistic;
    config.seed = seed;
    config
}

/// Moods +3, -3, +2, 0 scored by |mood|, which is not additive. In
/// the default arrangement the +3/-3 pair cancels to zero at its
/// parent and the +2 leaf always wins; pairing +3 with +2 instead
/// yields shares 3/8, 3/8, 1/4, 0. Arrangement changes outcomes,
/// which is exactly what additivity rules out.
pub fn mood_extremes_quartet(seed: u64) -> MachineConfig {
    let mut config = MachineConfig::new(vec![
        emitter(0, "up", 3.0),
        emitter(1, "down", -3.0),
        emitter(2, "mid", 2.0),
        emitter(3, "flat", 0.0),
    ]);
    config.lifetime = 30;
    config.mode = CompetitionMode::Probabilistic;
    config.function = CompetitionFunction::abs_mood();
    config.seed = seed;
    config
}

/// Pairs the `mood_extremes_quartet` moods as (+3, +2) and (-3, 0).
pub fn mood_extremes_transposed(seed: u64) -> MachineConfig {
    let mut config = mood_extremes_quartet(seed);
    config.leaf_assignment = Some(vec![0, 2, 1, 3]);
    config
}

pub const SPELLING_WORD: &str = "caffeine";
pub const SPELLING_PERIOD: Tick = 5;
/// Judgments arrive this long after each query's competition tick;
/// with two processors the answer is broadcast one tick earlier.
pub const SPELLING_VERDICT_LAG: Tick = 3;

/// A rule-based speller (power 8) against a one-word memory (power 1).
/// The environment asks for "caffeine" every five ticks and judges
/// each answer, telling only the memory whether the broadcast was
/// right. The rule misspells it, so the memory must out-shout a
/// starting 8:1 intensity deficit through promotions and demotions.
pub fn spelling_bee(lifetime: Tick) -> (MachineConfig, EnvironmentScript) {
    let mut config = MachineConfig::new(vec![
        ProcessorDecl::new(0, "spelling_rule").with_power(8.0),
        ProcessorDecl::new(1, "word_memory")
            .with_params(json!({ "words": { SPELLING_WORD: SPELLING_WORD } })),
    ]);
    config.lifetime = lifetime;

    let query = Gist::new(Modality::Command, SPELLING_WORD.as_bytes(), Some(SPELL_QUERY))
        .expect("query gist");
    let mut env = EnvironmentScript::new();
    let mut t = 1;
    while t + SPELLING_VERDICT_LAG <= lifetime {
        for target in [0, 1] {
            env.add_sensor(
                t,
                SensorEvent {
                    target: Address::new(target),
                    gist: query.clone(),
                    weight: 0.0,
                },
            );
        }
        env.add_judgment(
            t + SPELLING_VERDICT_LAG,
            Judgment {
                competition_tick: t,
                truth: SPELLING_WORD.to_string(),
                targets: Some(vec![Address::new(1)]),
                correction: None,
            },
        );
        t += SPELLING_PERIOD;
    }
    (config, env)
}

/// Two humming emitters and a pain source that fires once at tick 8
/// with weight -150, far above the interrupt threshold of 100. The
/// broadcast stalls every processor for exactly one tick; the next
/// quiet broadcast releases them.
pub fn pain_interrupt() -> MachineConfig {
    let mut config = MachineConfig::new(vec![
        emitter(0, "hum", 2.0),
        emitter(1, "murmur", 1.0),
        ProcessorDecl::new(2, "pain_source")
            .with_params(json!({ "tick": 8, "weight": -150.0 })),
    ]);
    config.lifetime = 20;
    config.interrupt_threshold = 100.0;
    config
}

/// A pinger, a silent probe that acknowledges every "ping" broadcast,
/// and a late loud emitter. Three acknowledgments form a link between
/// probe and pinger, after which the pinger's submissions are copied
/// straight to the probe — including once "shout" owns every
/// broadcast and "ping" no longer reaches anyone else.
pub fn ping_link() -> MachineConfig {
    let mut config = MachineConfig::new(vec![
        emitter(0, "ping", 5.0),
        ProcessorDecl::new(1, "echo_probe")
            .with_params(json!({ "pattern": "ping" }))
            .non_competing(),
        ProcessorDecl::new(2, "const_emitter")
            .with_params(json!({ "gist": "shout", "weight": 50.0, "active_from": 12 })),
    ]);
    config.lifetime = 20;
    config.link_threshold = 3;
    config
}

/// `n` dyadic noise emitters under the probabilistic rule. Every
/// weight is a multiple of 1/8 and the mood delta is 1/4, so all
/// arithmetic along the tree is exact in f64 and root intensity and
/// mood must equal the column sums of the submitted weights.
pub fn noise_field(n: u32, seed: u64) -> MachineConfig {
    let processors = (0..n)
        .map(|i| {
            ProcessorDecl::new(i, "noise_emitter").with_params(json!({
                "seed": seed.wrapping_add(u64::from(i).wrapping_mul(0x9e37_79b9)),
                "amplitude": 1.0,
                "quantum": 0.125,
            }))
        })
        .collect();
    let mut config = MachineConfig::new(processors);
    config.lifetime = 60;
    config.mode = CompetitionMode::Probabilistic;
    config.seed = seed;
    config
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltm::BehaviorRegistry;
    use crate::machine::Ctm;
    use crate::trace::NullSink;

    #[test]
    fn every_fixture_assembles() {
        let reg = BehaviorRegistry::with_builtins();
        let (spelling, _) = spelling_bee(40);
        for config in [
            tied_pair_quartet(),
            transposed_quartet(),
            share_quartet(5),
            mood_extremes_quartet(5),
            mood_extremes_transposed(5),
            spelling,
            pain_interrupt(),
            ping_link(),
            noise_field(6, 11),
        ] {
            Ctm::assemble(config, &reg).unwrap();
        }
    }

    #[test]
    fn spelling_bee_scripts_queries_and_verdicts_in_lockstep() {
        let (_, env) = spelling_bee(40);
        let queries: Vec<Tick> = env.iter_sensors().map(|(t, _)| t).collect();
        assert_eq!(queries, vec![1, 1, 6, 6, 11, 11, 16, 16, 21, 21, 26, 26, 31, 31, 36, 36]);
        for (t, j) in env.iter_judgments() {
            assert_eq!(t, j.competition_tick + SPELLING_VERDICT_LAG);
            assert_eq!(j.targets.as_deref(), Some(&[Address::new(1)][..]));
        }
    }

    #[test]
    fn quartet_winners_depend_on_arrangement() {
        let reg = BehaviorRegistry::with_builtins();
        let mut sink = NullSink;
        for (config, expected) in [(tied_pair_quartet(), "a"), (transposed_quartet(), "d")] {
            let mut m = Ctm::assemble(config, &reg).unwrap();
            let env = EnvironmentScript::new();
            m.run(&env, 10, &mut sink).unwrap();
            let stm = m.stm().current().expect("warm after ten ticks");
            assert_eq!(stm.gist().label(), Some(expected));
        }
    }
}

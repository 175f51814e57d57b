//! Randomized whole-machine properties. Weights are eighths and the
//! mood delta is a quarter, so every asserted equality is exact.

use proptest::collection::vec;
use proptest::prelude::*;
use serde_json::json;

use ctm::chunk::Tick;
use ctm::ltm::BehaviorRegistry;
use ctm::machine::{Ctm, EnvironmentScript, MachineConfig, ProcessorDecl, RunStats};
use ctm::trace::{ChunkRecord, JsonlSink, MemorySink, TraceEvent, TraceRecord};
use ctm::CompetitionMode;

fn arb_config() -> impl Strategy<Value = MachineConfig> {
    (
        vec(-16i32..=16, 1..=9),
        any::<u64>(),
        proptest::bool::ANY,
        5u64..=40,
    )
        .prop_map(|(eighths, seed, probabilistic, lifetime)| {
            let processors = eighths
                .iter()
                .enumerate()
                .map(|(i, k)| {
                    ProcessorDecl::new(i as u32, "const_emitter").with_params(json!({
                        "gist": format!("g{i}"),
                        "weight": f64::from(*k) / 8.0,
                    }))
                })
                .collect();
            let mut config = MachineConfig::new(processors);
            config.lifetime = lifetime;
            config.seed = seed;
            if probabilistic {
                config.mode = CompetitionMode::Probabilistic;
            }
            config
        })
}

fn run(config: &MachineConfig) -> (Ctm, Vec<TraceRecord>) {
    let registry = BehaviorRegistry::with_builtins();
    let mut machine = Ctm::assemble(config.clone(), &registry).unwrap();
    let mut sink = MemorySink::new();
    machine
        .run(&EnvironmentScript::new(), config.lifetime, &mut sink)
        .unwrap();
    (machine, sink.into_records())
}

fn chunks_of(records: &[TraceRecord]) -> impl Iterator<Item = &ChunkRecord> {
    records.iter().filter_map(|r| match &r.event {
        TraceEvent::Submission { chunk, .. }
        | TraceEvent::Stm { chunk }
        | TraceEvent::Broadcast { chunk }
        | TraceEvent::LinkSend { chunk, .. }
        | TraceEvent::Actuator { chunk } => Some(chunk),
        _ => None,
    })
}

proptest! {
    #[test]
    fn every_traced_chunk_keeps_mood_within_intensity(config in arb_config()) {
        let (_, records) = run(&config);
        for c in chunks_of(&records) {
            prop_assert!(
                c.mood.abs() <= c.intensity,
                "chunk {c:?} violates |mood| <= intensity"
            );
            prop_assert!(c.intensity >= 0.0);
        }
    }

    #[test]
    fn roots_conserve_submission_sums(config in arb_config()) {
        let (_, records) = run(&config);
        let mut sums: std::collections::BTreeMap<Tick, (f64, f64)> = Default::default();
        for r in &records {
            if let TraceEvent::Submission { chunk, .. } = &r.event {
                let e = sums.entry(chunk.t).or_insert((0.0, 0.0));
                e.0 += chunk.weight.abs();
                e.1 += chunk.weight;
            }
        }
        for r in &records {
            if let TraceEvent::Stm { chunk } = &r.event {
                if chunk.t >= 1 {
                    let (i, m) = sums.get(&chunk.t).copied().unwrap_or((0.0, 0.0));
                    prop_assert_eq!(chunk.intensity, i);
                    prop_assert_eq!(chunk.mood, m);
                }
            }
        }
    }

    #[test]
    fn replays_are_byte_identical(config in arb_config()) {
        let registry = BehaviorRegistry::with_builtins();
        let env = EnvironmentScript::new();
        let mut bytes = Vec::new();
        for _ in 0..2 {
            let mut machine = Ctm::assemble(config.clone(), &registry).unwrap();
            let mut sink = JsonlSink::new(Vec::new());
            machine.run(&env, config.lifetime, &mut sink).unwrap();
            bytes.push(sink.into_inner());
        }
        prop_assert_eq!(&bytes[0], &bytes[1]);
        prop_assert!(!bytes[0].is_empty());
    }

    #[test]
    fn stats_are_a_pure_function_of_the_trace(config in arb_config()) {
        let (machine, records) = run(&config);
        prop_assert_eq!(&RunStats::from_records(&records), machine.stats());
    }

    #[test]
    fn stm_always_holds_the_wavefront_from_height_ticks_ago(config in arb_config()) {
        let (machine, records) = run(&config);
        let h = machine.height() as Tick;
        for r in &records {
            if let TraceEvent::Stm { chunk } = &r.event {
                if r.tick <= h {
                    prop_assert!(chunk.is_nil(), "tick {} is before the first wavefront", r.tick);
                } else {
                    prop_assert_eq!(chunk.t, r.tick - h);
                }
            }
        }
    }

    #[test]
    fn warm_winners_are_processors_that_actually_spoke(config in arb_config()) {
        let (_, records) = run(&config);
        let mut spoke: std::collections::BTreeMap<Tick, Vec<u32>> = Default::default();
        for r in &records {
            if let TraceEvent::Submission { chunk, .. } = &r.event {
                spoke.entry(chunk.t).or_default().push(chunk.address.id());
            }
        }
        for r in &records {
            if let TraceEvent::Stm { chunk } = &r.event {
                if chunk.t >= 1 && !chunk.is_nil() {
                    let speakers = spoke.get(&chunk.t).cloned().unwrap_or_default();
                    prop_assert!(
                        speakers.contains(&chunk.address.id()),
                        "winner {} never submitted at {}",
                        chunk.address,
                        chunk.t
                    );
                }
            }
        }
    }
}

//! Stock behaviors and the registry that builds them from scenario
//! parameters.

use std::collections::{BTreeMap, VecDeque};

use serde::Deserialize;

use crate::chunk::{Address, Gist, Modality, Tick};
use crate::ltm::behavior::{Behavior, BehaviorError, Proposal, TickInputs, Valence};
use crate::ltm::LtmError;
use crate::rng::RngStream;
use crate::Chunk;

/// Gist label that marks a spelling query; the payload carries the
/// queried word.
pub const SPELL_QUERY: &str = "spell?";

/// How scenarios spell out a gist: a bare string is speech text, an
/// object picks the pieces.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum GistSpec {
    Text(String),
    Full {
        #[serde(default)]
        modality: Option<Modality>,
        #[serde(default)]
        label: Option<String>,
        #[serde(default)]
        payload: Option<String>,
    },
}

impl GistSpec {
    pub fn to_gist(&self) -> Result<Gist, BehaviorError> {
        let wrap = |e: crate::chunk::ChunkError| BehaviorError::new(e.to_string());
        match self {
            GistSpec::Text(s) => Gist::text(Modality::Speech, s).map_err(wrap),
            GistSpec::Full {
                modality,
                label,
                payload,
            } => {
                let modality = modality.unwrap_or(Modality::Speech);
                let bytes = match (payload, label) {
                    (Some(p), _) => p.as_bytes().to_vec(),
                    (None, Some(l)) => l.as_bytes().to_vec(),
                    (None, None) => {
                        return Err(BehaviorError::new("gist needs a label or a payload"))
                    }
                };
                Gist::new(modality, bytes, label.as_deref()).map_err(wrap)
            }
        }
    }
}

fn weight_proposal(gist: Gist, weight: f64) -> Proposal {
    let valence = if weight < 0.0 {
        Valence::Negative
    } else {
        Valence::Positive
    };
    Proposal {
        gist,
        magnitude: weight.abs(),
        valence,
    }
}

/// Words arriving as spelling queries this tick, in delivery order.
fn spelling_queries(inputs: &TickInputs<'_>) -> Vec<String> {
    inputs
        .sensor_chunks
        .iter()
        .filter(|c| {
            c.gist().modality() == Modality::Command && c.gist().label() == Some(SPELL_QUERY)
        })
        .map(|c| String::from_utf8_lossy(c.gist().payload()).into_owned())
        .collect()
}

/// "i before e except after c", applied blindly to every ei/ie pair.
pub fn rule_spell(word: &str) -> String {
    let chars: Vec<char> = word.chars().collect();
    let mut out = String::with_capacity(word.len());
    let mut i = 0;
    while i < chars.len() {
        let after_c = i > 0 && chars[i - 1] == 'c';
        if i + 1 < chars.len() {
            match (chars[i], chars[i + 1], after_c) {
                ('e', 'i', false) | ('i', 'e', true) => {
                    out.push(chars[i + 1]);
                    out.push(chars[i]);
                    i += 2;
                    continue;
                }
                _ => {}
            }
        }
        out.push(chars[i]);
        i += 1;
    }
    out
}

/// Emits one fixed gist with a fixed weight while active.
pub struct ConstEmitter {
    gist: Gist,
    weight: f64,
    active_from: Tick,
    active_until: Option<Tick>,
}

impl ConstEmitter {
    pub fn new(gist: Gist, weight: f64) -> Self {
        ConstEmitter {
            gist,
            weight,
            active_from: 1,
            active_until: None,
        }
    }

    pub fn windowed(gist: Gist, weight: f64, from: Tick, until: Option<Tick>) -> Self {
        ConstEmitter {
            gist,
            weight,
            active_from: from,
            active_until: until,
        }
    }
}

impl Behavior for ConstEmitter {
    fn kind(&self) -> &'static str {
        "const_emitter"
    }

    fn propose(&mut self, t: Tick) -> Result<Option<Proposal>, BehaviorError> {
        let active = t >= self.active_from && self.active_until.is_none_or(|u| t <= u);
        if !active || self.weight == 0.0 {
            return Ok(None);
        }
        Ok(Some(weight_proposal(self.gist.clone(), self.weight)))
    }
}

/// Replays sensor chunks into the competition, first in first out, one
/// per tick.
#[derive(Default)]
pub struct InputRelay {
    queue: VecDeque<(Gist, f64)>,
}

impl InputRelay {
    pub fn new() -> Self {
        InputRelay::default()
    }
}

impl Behavior for InputRelay {
    fn kind(&self) -> &'static str {
        "input_relay"
    }

    fn receive(&mut self, inputs: &TickInputs<'_>) -> Vec<Address> {
        for c in inputs.sensor_chunks {
            self.queue.push_back((c.gist().clone(), *c.weight()));
        }
        Vec::new()
    }

    fn propose(&mut self, _t: Tick) -> Result<Option<Proposal>, BehaviorError> {
        Ok(self
            .queue
            .pop_front()
            .map(|(gist, w)| weight_proposal(gist, w)))
    }
}

/// Answers spelling queries by rote application of the i-before-e
/// rule. Confidently wrong on the exceptions.
#[derive(Default)]
pub struct SpellingRule {
    pending: VecDeque<String>,
}

impl SpellingRule {
    pub fn new() -> Self {
        SpellingRule::default()
    }
}

impl Behavior for SpellingRule {
    fn kind(&self) -> &'static str {
        "spelling_rule"
    }

    fn receive(&mut self, inputs: &TickInputs<'_>) -> Vec<Address> {
        self.pending.extend(spelling_queries(inputs));
        Vec::new()
    }

    fn propose(&mut self, _t: Tick) -> Result<Option<Proposal>, BehaviorError> {
        let Some(word) = self.pending.pop_front() else {
            return Ok(None);
        };
        let spelled = rule_spell(&word);
        let gist =
            Gist::text(Modality::Speech, &spelled).map_err(|e| BehaviorError::new(e.to_string()))?;
        Ok(Some(Proposal {
            gist,
            magnitude: 1.0,
            valence: Valence::Positive,
        }))
    }
}

/// Answers spelling queries from a lookup table; stays silent on words
/// it has never seen. Corrections add entries, so it learns whenever a
/// teacher bothers to respond.
pub struct WordMemory {
    words: BTreeMap<String, String>,
    pending: VecDeque<String>,
}

impl WordMemory {
    pub fn new(words: BTreeMap<String, String>) -> Self {
        WordMemory {
            words,
            pending: VecDeque::new(),
        }
    }

    pub fn knows(&self, word: &str) -> bool {
        self.words.contains_key(word)
    }
}

impl Behavior for WordMemory {
    fn kind(&self) -> &'static str {
        "word_memory"
    }

    fn receive(&mut self, inputs: &TickInputs<'_>) -> Vec<Address> {
        self.pending.extend(spelling_queries(inputs));
        Vec::new()
    }

    fn propose(&mut self, _t: Tick) -> Result<Option<Proposal>, BehaviorError> {
        let Some(word) = self.pending.pop_front() else {
            return Ok(None);
        };
        let Some(spelling) = self.words.get(&word) else {
            return Ok(None);
        };
        let gist =
            Gist::text(Modality::Speech, spelling).map_err(|e| BehaviorError::new(e.to_string()))?;
        Ok(Some(Proposal {
            gist,
            magnitude: 1.0,
            valence: Valence::Positive,
        }))
    }

    fn apply_correction(&mut self, correction: &Gist) {
        let Some(label) = correction.label() else {
            return;
        };
        let payload = String::from_utf8_lossy(correction.payload()).into_owned();
        let spelling = if payload.is_empty() {
            label.to_string()
        } else {
            payload
        };
        self.words.insert(label.to_string(), spelling);
    }
}

/// Tracks a fuel level that burns down every tick; once below full it
/// campaigns with a negative-valence hunger chunk whose magnitude is
/// the deficit. Sensor chunks refuel by their weight.
pub struct FuelGauge {
    level: f64,
    full: f64,
    burn: f64,
}

impl FuelGauge {
    pub fn new(level: f64, full: f64, burn: f64) -> Self {
        FuelGauge { level, full, burn }
    }

    pub fn level(&self) -> f64 {
        self.level
    }
}

impl Behavior for FuelGauge {
    fn kind(&self) -> &'static str {
        "fuel_gauge"
    }

    fn receive(&mut self, inputs: &TickInputs<'_>) -> Vec<Address> {
        for c in inputs.sensor_chunks {
            self.level += *c.weight();
        }
        self.level = (self.level - self.burn).max(0.0);
        Vec::new()
    }

    fn propose(&mut self, _t: Tick) -> Result<Option<Proposal>, BehaviorError> {
        let deficit = self.full - self.level;
        if deficit <= 0.0 {
            return Ok(None);
        }
        let gist =
            Gist::text(Modality::Feeling, "hungry").map_err(|e| BehaviorError::new(e.to_string()))?;
        Ok(Some(Proposal {
            gist,
            magnitude: deficit,
            valence: Valence::Negative,
        }))
    }
}

/// Injects a pain chunk for a fixed window. Pain is its own business:
/// it keeps submitting even while the machine is interrupted by it.
pub struct PainSource {
    tick: Tick,
    duration: Tick,
    weight: f64,
}

impl PainSource {
    pub fn new(tick: Tick, duration: Tick, weight: f64) -> Self {
        PainSource {
            tick,
            duration,
            weight,
        }
    }
}

impl Behavior for PainSource {
    fn kind(&self) -> &'static str {
        "pain_source"
    }

    fn propose(&mut self, t: Tick) -> Result<Option<Proposal>, BehaviorError> {
        if t < self.tick || t >= self.tick.saturating_add(self.duration) {
            return Ok(None);
        }
        let gist =
            Gist::text(Modality::Sensation, "pain").map_err(|e| BehaviorError::new(e.to_string()))?;
        Ok(Some(weight_proposal(gist, self.weight)))
    }

    fn relevant_to(&self, interrupt: &Chunk) -> bool {
        interrupt.gist().label() == Some("pain")
    }
}

/// Acks every broadcast whose label contains a pattern; never competes.
pub struct EchoProbe {
    pattern: String,
}

impl EchoProbe {
    pub fn new(pattern: impl Into<String>) -> Self {
        EchoProbe {
            pattern: pattern.into(),
        }
    }
}

impl Behavior for EchoProbe {
    fn kind(&self) -> &'static str {
        "echo_probe"
    }

    fn receive(&mut self, inputs: &TickInputs<'_>) -> Vec<Address> {
        let Some(b) = inputs.broadcast else {
            return Vec::new();
        };
        if b.is_nil() {
            return Vec::new();
        }
        let matches = b
            .gist()
            .label()
            .is_some_and(|l| l.contains(&self.pattern));
        if matches {
            vec![b.address()]
        } else {
            Vec::new()
        }
    }

    fn propose(&mut self, _t: Tick) -> Result<Option<Proposal>, BehaviorError> {
        Ok(None)
    }
}

/// Emits seeded noise on a fixed quantum grid: each tick draws k
/// uniformly from [-levels, levels] and submits weight k * quantum,
/// staying silent when k is zero. With a dyadic quantum every weight,
/// intensity, and mood downstream stays exactly representable.
pub struct NoiseEmitter {
    stream: RngStream,
    levels: i64,
    quantum: f64,
}

impl NoiseEmitter {
    pub fn new(seed: u64, amplitude: f64, quantum: f64) -> Result<Self, BehaviorError> {
        if !(quantum.is_finite() && quantum > 0.0) {
            return Err(BehaviorError::new(format!(
                "quantum must be positive, got {quantum}"
            )));
        }
        if !amplitude.is_finite() || amplitude < quantum {
            return Err(BehaviorError::new(format!(
                "amplitude must be at least the quantum, got {amplitude}"
            )));
        }
        Ok(NoiseEmitter {
            stream: RngStream::from_seed(seed),
            levels: (amplitude / quantum).floor() as i64,
            quantum,
        })
    }
}

impl Behavior for NoiseEmitter {
    fn kind(&self) -> &'static str {
        "noise_emitter"
    }

    fn propose(&mut self, t: Tick) -> Result<Option<Proposal>, BehaviorError> {
        let span = (2 * self.levels + 1) as u64;
        let k = (self.stream.at_u64(t) % span) as i64 - self.levels;
        if k == 0 {
            return Ok(None);
        }
        let gist =
            Gist::text(Modality::Unsymbolized, "noise").map_err(|e| BehaviorError::new(e.to_string()))?;
        Ok(Some(weight_proposal(gist, k as f64 * self.quantum)))
    }
}

fn default_active_from() -> Tick {
    1
}

fn default_burn() -> f64 {
    1.0
}

fn default_duration() -> Tick {
    1
}

fn default_amplitude() -> f64 {
    1.0
}

fn default_quantum() -> f64 {
    0.125
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoParams {}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstEmitterParams {
    gist: GistSpec,
    weight: f64,
    #[serde(default = "default_active_from")]
    active_from: Tick,
    #[serde(default)]
    active_until: Option<Tick>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WordMemoryParams {
    #[serde(default)]
    words: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FuelGaugeParams {
    level: f64,
    full: f64,
    #[serde(default = "default_burn")]
    burn: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PainSourceParams {
    tick: Tick,
    #[serde(default = "default_duration")]
    duration: Tick,
    weight: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EchoProbeParams {
    pattern: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseEmitterParams {
    seed: u64,
    #[serde(default = "default_amplitude")]
    amplitude: f64,
    #[serde(default = "default_quantum")]
    quantum: f64,
}

type BehaviorFactory =
    Box<dyn Fn(&serde_json::Value) -> Result<Box<dyn Behavior>, LtmError> + Send + Sync>;

/// Maps behavior kind names to factories. Scenario loading goes
/// through here, so embedders can register their own kinds alongside
/// the stock ones.
pub struct BehaviorRegistry {
    factories: BTreeMap<String, BehaviorFactory>,
}

fn bad_params(kind: &str, message: impl Into<String>) -> LtmError {
    LtmError::BadBehaviorParams {
        kind: kind.to_string(),
        message: message.into(),
    }
}

fn parse_params<T: serde::de::DeserializeOwned>(
    kind: &str,
    value: &serde_json::Value,
) -> Result<T, LtmError> {
    let value = if value.is_null() {
        serde_json::Value::Object(serde_json::Map::new())
    } else {
        value.clone()
    };
    serde_json::from_value(value).map_err(|e| bad_params(kind, e.to_string()))
}

impl BehaviorRegistry {
    pub fn new() -> Self {
        BehaviorRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut reg = BehaviorRegistry::new();
        reg.register("const_emitter", |v| {
            let p: ConstEmitterParams = parse_params("const_emitter", v)?;
            if !p.weight.is_finite() {
                return Err(bad_params("const_emitter", "weight must be finite"));
            }
            let gist = p
                .gist
                .to_gist()
                .map_err(|e| bad_params("const_emitter", e.to_string()))?;
            Ok(Box::new(ConstEmitter::windowed(
                gist,
                p.weight,
                p.active_from,
                p.active_until,
            )))
        });
        reg.register("input_relay", |v| {
            let _: NoParams = parse_params("input_relay", v)?;
            Ok(Box::new(InputRelay::new()))
        });
        reg.register("spelling_rule", |v| {
            let _: NoParams = parse_params("spelling_rule", v)?;
            Ok(Box::new(SpellingRule::new()))
        });
        reg.register("word_memory", |v| {
            let p: WordMemoryParams = parse_params("word_memory", v)?;
            Ok(Box::new(WordMemory::new(p.words)))
        });
        reg.register("fuel_gauge", |v| {
            let p: FuelGaugeParams = parse_params("fuel_gauge", v)?;
            if !(p.level.is_finite() && p.level >= 0.0) {
                return Err(bad_params("fuel_gauge", "level must be nonnegative"));
            }
            if !(p.full.is_finite() && p.full > 0.0) {
                return Err(bad_params("fuel_gauge", "full must be positive"));
            }
            if !(p.burn.is_finite() && p.burn >= 0.0) {
                return Err(bad_params("fuel_gauge", "burn must be nonnegative"));
            }
            Ok(Box::new(FuelGauge::new(p.level, p.full, p.burn)))
        });
        reg.register("pain_source", |v| {
            let p: PainSourceParams = parse_params("pain_source", v)?;
            if !p.weight.is_finite() {
                return Err(bad_params("pain_source", "weight must be finite"));
            }
            Ok(Box::new(PainSource::new(p.tick, p.duration, p.weight)))
        });
        reg.register("echo_probe", |v| {
            let p: EchoProbeParams = parse_params("echo_probe", v)?;
            if p.pattern.is_empty() {
                return Err(bad_params("echo_probe", "pattern must be nonempty"));
            }
            Ok(Box::new(EchoProbe::new(p.pattern)))
        });
        reg.register("noise_emitter", |v| {
            let p: NoiseEmitterParams = parse_params("noise_emitter", v)?;
            NoiseEmitter::new(p.seed, p.amplitude, p.quantum)
                .map(|b| Box::new(b) as Box<dyn Behavior>)
                .map_err(|e| bad_params("noise_emitter", e.to_string()))
        });
        reg
    }

    pub fn register<F>(&mut self, kind: &str, factory: F)
    where
        F: Fn(&serde_json::Value) -> Result<Box<dyn Behavior>, LtmError> + Send + Sync + 'static,
    {
        self.factories.insert(kind.to_string(), Box::new(factory));
    }

    pub fn contains(&self, kind: &str) -> bool {
        self.factories.contains_key(kind)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn instantiate(
        &self,
        kind: &str,
        params: &serde_json::Value,
    ) -> Result<Box<dyn Behavior>, LtmError> {
        let factory = self
            .factories
            .get(kind)
            .ok_or_else(|| LtmError::UnknownBehaviorKind {
                kind: kind.to_string(),
            })?;
        factory(params)
    }
}

impl Default for BehaviorRegistry {
    fn default() -> Self {
        BehaviorRegistry::with_builtins()
    }
}

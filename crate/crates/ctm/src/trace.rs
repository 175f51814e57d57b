//! Run traces: a flat, tick-ordered record stream serialized as JSON
//! lines. Two runs of the same machine on the same seed produce
//! byte-identical streams.

use std::error::Error;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chunk::{Address, Modality, Tick};
use crate::Chunk;

#[derive(Debug)]
pub enum TraceError {
    Io(io::Error),
    Serialize(serde_json::Error),
    OutOfOrder { last: Tick, got: Tick },
}

impl fmt::Display for TraceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceError::Io(e) => write!(f, "trace io: {e}"),
            TraceError::Serialize(e) => write!(f, "trace serialization: {e}"),
            TraceError::OutOfOrder { last, got } => {
                write!(f, "trace ticks must not decrease: {got} after {last}")
            }
        }
    }
}

// Display already tells the whole story, so no `source` chain: reporters
// that walk causes would print each layer twice.
impl Error for TraceError {}

impl From<io::Error> for TraceError {
    fn from(e: io::Error) -> Self {
        TraceError::Io(e)
    }
}

impl From<serde_json::Error> for TraceError {
    fn from(e: serde_json::Error) -> Self {
        TraceError::Serialize(e)
    }
}

/// A chunk flattened for the record stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub address: Address,
    pub t: Tick,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gist_label: Option<String>,
    pub modality: Modality,
    pub weight: f64,
    pub intensity: f64,
    pub mood: f64,
}

impl ChunkRecord {
    pub fn of(chunk: &Chunk) -> Self {
        ChunkRecord {
            address: chunk.address(),
            t: chunk.t(),
            gist_label: chunk.gist().label().map(str::to_string),
            modality: chunk.gist().modality(),
            weight: *chunk.weight(),
            intensity: *chunk.intensity(),
            mood: *chunk.mood(),
        }
    }

    pub fn is_nil(&self) -> bool {
        self.modality == Modality::Nil
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterruptPhase {
    Enter,
    Resume,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackStatus {
    StmRight,
    AlreadyChecked,
    Promoted,
    Demoted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    /// A non-NIL (or noteworthy) chunk entered the competition.
    Submission {
        chunk: ChunkRecord,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        note: Option<String>,
    },
    /// The root chunk that reached short-term memory this tick.
    Stm { chunk: ChunkRecord },
    /// The previous tick's STM chunk arriving at every processor.
    Broadcast { chunk: ChunkRecord },
    /// A processor acknowledged a useful broadcast.
    LinkAck {
        from: Address,
        originator: Address,
        count: u32,
        active: bool,
    },
    /// A submission forwarded over active links, STM not consulted.
    LinkSend {
        sender: Address,
        recipients: Vec<Address>,
        chunk: ChunkRecord,
    },
    /// Every processor entered or left interrupt mode together.
    Interrupt {
        phase: InterruptPhase,
        intensity: f64,
    },
    /// A judged competition reached a processor.
    Feedback {
        processor: Address,
        competition_tick: Tick,
        stm_was_right: bool,
        p_was_right: bool,
        outcome: FeedbackStatus,
        intensity_power: f64,
    },
    /// A command broadcast drove the output map.
    Actuator { chunk: ChunkRecord },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: Tick,
    #[serde(flatten)]
    pub event: TraceEvent,
}

pub trait TraceSink {
    fn record(&mut self, record: &TraceRecord) -> Result<(), TraceError>;

    fn flush(&mut self) -> Result<(), TraceError> {
        Ok(())
    }
}

/// Writes one JSON object per line and refuses to travel back in time.
pub struct JsonlSink<W: Write> {
    out: W,
    last_tick: Option<Tick>,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        JsonlSink {
            out,
            last_tick: None,
        }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl JsonlSink<io::BufWriter<fs::File>> {
    pub fn create(path: &Path) -> Result<Self, TraceError> {
        Ok(JsonlSink::new(io::BufWriter::new(fs::File::create(path)?)))
    }
}

impl<W: Write> TraceSink for JsonlSink<W> {
    fn record(&mut self, record: &TraceRecord) -> Result<(), TraceError> {
        if let Some(last) = self.last_tick {
            if record.tick < last {
                return Err(TraceError::OutOfOrder {
                    last,
                    got: record.tick,
                });
            }
        }
        self.last_tick = Some(record.tick);
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    fn flush(&mut self) -> Result<(), TraceError> {
        self.out.flush()?;
        Ok(())
    }
}

/// Collects records in memory; handy for tests and stats replay.
#[derive(Default)]
pub struct MemorySink {
    records: Vec<TraceRecord>,
}

impl MemorySink {
    pub fn new() -> Self {
        MemorySink::default()
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TraceRecord> {
        self.records
    }
}

impl TraceSink for MemorySink {
    fn record(&mut self, record: &TraceRecord) -> Result<(), TraceError> {
        self.records.push(record.clone());
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _record: &TraceRecord) -> Result<(), TraceError> {
        Ok(())
    }
}

/// Parses a JSONL trace back into records.
pub fn read_jsonl(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(TraceError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunk::Gist;

    fn sample_chunk() -> Chunk {
        Chunk::leaf(
            Address::new(2),
            7,
            Gist::text(Modality::Speech, "hello").unwrap(),
            -2.5,
        )
        .unwrap()
    }

    fn sample_records() -> Vec<TraceRecord> {
        let chunk = ChunkRecord::of(&sample_chunk());
        vec![
            TraceRecord {
                tick: 7,
                event: TraceEvent::Submission {
                    chunk: chunk.clone(),
                    note: None,
                },
            },
            TraceRecord {
                tick: 7,
                event: TraceEvent::Stm {
                    chunk: chunk.clone(),
                },
            },
            TraceRecord {
                tick: 8,
                event: TraceEvent::Broadcast {
                    chunk: chunk.clone(),
                },
            },
            TraceRecord {
                tick: 8,
                event: TraceEvent::LinkAck {
                    from: Address::new(1),
                    originator: Address::new(2),
                    count: 3,
                    active: true,
                },
            },
            TraceRecord {
                tick: 8,
                event: TraceEvent::LinkSend {
                    sender: Address::new(2),
                    recipients: vec![Address::new(1), Address::new(4)],
                    chunk: chunk.clone(),
                },
            },
            TraceRecord {
                tick: 9,
                event: TraceEvent::Interrupt {
                    phase: InterruptPhase::Enter,
                    intensity: 150.0,
                },
            },
            TraceRecord {
                tick: 10,
                event: TraceEvent::Feedback {
                    processor: Address::new(1),
                    competition_tick: 7,
                    stm_was_right: false,
                    p_was_right: true,
                    outcome: FeedbackStatus::Promoted,
                    intensity_power: 1.5,
                },
            },
            TraceRecord {
                tick: 11,
                event: TraceEvent::Actuator { chunk },
            },
        ]
    }

    #[test]
    fn records_round_trip_through_jsonl() {
        let records = sample_records();
        let mut sink = JsonlSink::new(Vec::new());
        for r in &records {
            sink.record(r).unwrap();
        }
        let text = String::from_utf8(sink.into_inner()).unwrap();
        assert_eq!(text.lines().count(), records.len());
        let back = read_jsonl(&text).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn lines_lead_with_tick_and_kind() {
        let mut sink = JsonlSink::new(Vec::new());
        sink.record(&sample_records()[1]).unwrap();
        let text = String::from_utf8(sink.into_inner()).unwrap();
        assert!(
            text.starts_with(r#"{"tick":7,"kind":"stm""#),
            "unexpected layout: {text}"
        );
    }

    #[test]
    fn an_absent_note_is_absent_from_the_json() {
        let mut sink = JsonlSink::new(Vec::new());
        sink.record(&sample_records()[0]).unwrap();
        let text = String::from_utf8(sink.into_inner()).unwrap();
        assert!(!text.contains("note"));
        assert!(!text.contains("null"));
    }

    #[test]
    fn ticks_must_not_decrease() {
        let records = sample_records();
        let mut sink = JsonlSink::new(Vec::new());
        sink.record(&records[2]).unwrap();
        let err = sink.record(&records[0]).unwrap_err();
        assert!(matches!(err, TraceError::OutOfOrder { last: 8, got: 7 }));
    }

    #[test]
    fn memory_sink_keeps_everything_in_order() {
        let records = sample_records();
        let mut sink = MemorySink::new();
        for r in &records {
            sink.record(r).unwrap();
        }
        assert_eq!(sink.records(), records.as_slice());
        assert_eq!(sink.into_records(), records);
    }

    #[test]
    fn nil_chunks_are_recognized_in_records() {
        let rec = ChunkRecord::of(&Chunk::nil(Address::new(0), 3));
        assert!(rec.is_nil());
        assert_eq!(rec.gist_label, None);
        assert_eq!(rec.weight, 0.0);
        assert!(!ChunkRecord::of(&sample_chunk()).is_nil());
    }
}

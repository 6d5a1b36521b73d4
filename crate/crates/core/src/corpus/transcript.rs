use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::engine::{Action, Event, GameState, Outcome, ReplayError, Status, Timestamp, Timing};
use crate::world::World;

/// Value of the `format` field on every persisted transcript line.
pub const TRANSCRIPT_FORMAT: &str = "oc-transcript-1";

/// One finished dialogue: its world, the accepted events and the outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub format: String,
    pub dialogue_id: String,
    pub world: World,
    pub started_at: Timestamp,
    pub first_speaker: usize,
    pub events: Vec<Event>,
    pub outcome: Outcome,
    pub num_shared: usize,
    /// Source fields with no home in this schema.
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("format {0:?} is not {TRANSCRIPT_FORMAT:?}")]
    Format(String),
    #[error("num_shared {field} disagrees with world ({world})")]
    SharedCount { field: usize, world: usize },
    #[error("events do not replay: {0}")]
    Replay(#[from] ReplayError),
    #[error("recorded outcome {recorded:?} but replay gives {replayed:?}")]
    OutcomeMismatch {
        recorded: Outcome,
        replayed: Outcome,
    },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl Transcript {
    /// Build from a finished session.
    pub fn from_state(
        dialogue_id: impl Into<String>,
        state: &GameState,
        first_speaker: usize,
        now: Timestamp,
    ) -> Transcript {
        let outcome = state
            .outcome(now)
            .unwrap_or_else(|_| Outcome::from_selections(state.selections));
        Transcript {
            format: TRANSCRIPT_FORMAT.to_string(),
            dialogue_id: dialogue_id.into(),
            num_shared: state.world.num_shared,
            world: state.world.clone(),
            started_at: state.started_at,
            first_speaker,
            events: state.events.clone(),
            outcome,
            extra: Map::new(),
        }
    }

    pub fn messages(&self) -> impl Iterator<Item = (usize, &str)> {
        self.events.iter().filter_map(|e| match &e.action {
            Action::Message { text } => Some((e.agent, text.as_str())),
            Action::Select { .. } => None,
        })
    }

    pub fn is_success(&self) -> bool {
        self.outcome.status == Status::Success
    }

    /// Check the schema tag, the shared count, that the events replay
    /// through the engine, and that the recorded outcome agrees with them.
    pub fn validate(&self) -> Result<(), TranscriptError> {
        if self.format != TRANSCRIPT_FORMAT {
            return Err(TranscriptError::Format(self.format.clone()));
        }
        if self.num_shared != self.world.num_shared {
            return Err(TranscriptError::SharedCount {
                field: self.num_shared,
                world: self.world.num_shared,
            });
        }
        let state = GameState::replay(
            self.world.clone(),
            self.started_at,
            self.first_speaker,
            Timing::default(),
            &self.events,
        )?;
        let replayed = Outcome::from_selections(state.selections);
        let consistent = match self.outcome.status {
            Status::Success | Status::Failure => replayed == self.outcome,
            Status::Expired => {
                replayed.status == Status::Expired && replayed.selections == self.outcome.selections
            }
        };
        if !consistent {
            return Err(TranscriptError::OutcomeMismatch {
                recorded: self.outcome,
                replayed,
            });
        }
        Ok(())
    }
}

pub fn to_jsonl(transcripts: &[Transcript]) -> String {
    let mut out = String::new();
    for t in transcripts {
        out.push_str(&serde_json::to_string(t).expect("transcript serializes"));
        out.push('\n');
    }
    out
}

/// Parse JSON-lines, naming the first bad line (1-based).
pub fn from_jsonl(text: &str) -> Result<Vec<Transcript>, TranscriptError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| TranscriptError::Parse {
                line: i + 1,
                source,
            })
        })
        .collect()
}

//! Rules of one two-player session.
//!
//! The engine never reads a clock; every call carries `now` in milliseconds.
//! A session reads for [`Timing::reading_ms`], then runs for at most
//! [`Timing::active_ms`]. Messages strictly alternate between the agents.
//! Each agent selects once, not before [`Timing::select_lockout_ms`] into the
//! active phase, and selecting does not use up a message turn.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{structural_violations, Violation, World};

/// Milliseconds since an arbitrary epoch.
pub type Timestamp = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub reading_ms: u64,
    pub active_ms: u64,
    pub select_lockout_ms: u64,
}

impl Default for Timing {
    fn default() -> Self {
        Timing {
            reading_ms: 20_000,
            active_ms: 360_000,
            select_lockout_ms: 60_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Reading,
    Active,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Action {
    Message { text: String },
    Select { entity_id: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub ts: Timestamp,
    pub agent: usize,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Success,
    Failure,
    Expired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub status: Status,
    pub selections: [Option<u32>; 2],
}

impl Outcome {
    /// Success iff both selected the same entity, Failure if they differ,
    /// Expired when a selection is missing.
    pub fn from_selections(selections: [Option<u32>; 2]) -> Outcome {
        let status = match selections {
            [Some(a), Some(b)] if a == b => Status::Success,
            [Some(_), Some(_)] => Status::Failure,
            _ => Status::Expired,
        };
        Outcome { status, selections }
    }
}

/// Rejection reasons for [`GameState::apply`]. Each has a stable wire code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("it is the other player's turn to send a message")]
    NotYourTurn,
    #[error("selection is locked for the first minute of play")]
    TooEarlyToSelect,
    #[error("you have already selected")]
    AlreadySelected,
    #[error("that entity is not in your view")]
    EntityNotVisible,
    #[error("the session is over")]
    SessionOver,
    #[error("the session has not started yet")]
    NotActiveYet,
    #[error("event timestamp precedes the last accepted event")]
    ClockRegression,
    #[error("agent index must be 0 or 1")]
    UnknownAgent,
}

impl RuleError {
    pub fn code(&self) -> &'static str {
        match self {
            RuleError::NotYourTurn => "NotYourTurn",
            RuleError::TooEarlyToSelect => "TooEarlyToSelect",
            RuleError::AlreadySelected => "AlreadySelected",
            RuleError::EntityNotVisible => "EntityNotVisible",
            RuleError::SessionOver => "SessionOver",
            RuleError::NotActiveYet => "NotActiveYet",
            RuleError::ClockRegression => "ClockRegression",
            RuleError::UnknownAgent => "UnknownAgent",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid world: {violations:?}")]
pub struct InvalidWorld {
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("session not finished")]
pub struct NotDone;

/// Immutable session value; [`apply`](GameState::apply) returns a successor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub world: World,
    pub timing: Timing,
    pub started_at: Timestamp,
    /// Phase as of the last accepted event. Use [`phase_at`](Self::phase_at)
    /// for the clock-aware value.
    pub phase: Phase,
    pub events: Vec<Event>,
    pub selections: [Option<u32>; 2],
    pub next_speaker: usize,
    /// Set when the session was cut short (e.g. a player left).
    pub aborted_at: Option<Timestamp>,
}

impl GameState {
    /// Start a session. Worlds are held to [`structural_violations`] only, so
    /// imported worlds with foreign geometry are accepted.
    pub fn new(
        world: World,
        started_at: Timestamp,
        first_speaker: usize,
    ) -> Result<GameState, InvalidWorld> {
        Self::with_timing(world, started_at, first_speaker, Timing::default())
    }

    pub fn with_timing(
        world: World,
        started_at: Timestamp,
        first_speaker: usize,
        timing: Timing,
    ) -> Result<GameState, InvalidWorld> {
        let violations = structural_violations(&world);
        if !violations.is_empty() {
            return Err(InvalidWorld { violations });
        }
        Ok(GameState {
            world,
            timing,
            started_at,
            phase: Phase::Reading,
            events: Vec::new(),
            selections: [None, None],
            next_speaker: first_speaker & 1,
            aborted_at: None,
        })
    }

    pub fn active_start(&self) -> Timestamp {
        self.started_at + self.timing.reading_ms
    }

    pub fn active_end(&self) -> Timestamp {
        self.active_start() + self.timing.active_ms
    }

    pub fn select_opens_at(&self) -> Timestamp {
        self.active_start() + self.timing.select_lockout_ms
    }

    pub fn both_selected(&self) -> bool {
        self.selections.iter().all(Option::is_some)
    }

    pub fn phase_at(&self, now: Timestamp) -> Phase {
        if self.both_selected() || self.aborted_at.is_some() || now > self.active_end() {
            Phase::Done
        } else if now < self.active_start() {
            Phase::Reading
        } else {
            Phase::Active
        }
    }

    /// Milliseconds left in the current phase (0 once done).
    pub fn remaining_ms(&self, now: Timestamp) -> u64 {
        match self.phase_at(now) {
            Phase::Reading => self.active_start() - now,
            Phase::Active => self.active_end() - now,
            Phase::Done => 0,
        }
    }

    pub fn apply(
        &self,
        agent: usize,
        action: Action,
        now: Timestamp,
    ) -> Result<GameState, RuleError> {
        if agent > 1 {
            return Err(RuleError::UnknownAgent);
        }
        match self.phase_at(now) {
            Phase::Done => return Err(RuleError::SessionOver),
            Phase::Reading => return Err(RuleError::NotActiveYet),
            Phase::Active => {}
        }
        if self.events.last().is_some_and(|e| e.ts > now) {
            return Err(RuleError::ClockRegression);
        }
        let mut next = self.clone();
        match &action {
            Action::Message { .. } => {
                if agent != self.next_speaker {
                    return Err(RuleError::NotYourTurn);
                }
                next.next_speaker = 1 - agent;
            }
            Action::Select { entity_id } => {
                if self.selections[agent].is_some() {
                    return Err(RuleError::AlreadySelected);
                }
                if now < self.select_opens_at() {
                    return Err(RuleError::TooEarlyToSelect);
                }
                if !self.world.views[agent].sees(*entity_id) {
                    return Err(RuleError::EntityNotVisible);
                }
                next.selections[agent] = Some(*entity_id);
            }
        }
        next.events.push(Event {
            ts: now,
            agent,
            action,
        });
        next.phase = next.phase_at(now);
        Ok(next)
    }

    /// End the session early; it reports as Expired unless both had selected.
    pub fn abort(&self, now: Timestamp) -> GameState {
        let mut next = self.clone();
        if next.aborted_at.is_none() && !next.both_selected() {
            next.aborted_at = Some(now);
        }
        next.phase = Phase::Done;
        next
    }

    pub fn outcome(&self, now: Timestamp) -> Result<Outcome, NotDone> {
        if self.both_selected() || self.phase_at(now) == Phase::Done {
            Ok(Outcome::from_selections(self.selections))
        } else {
            Err(NotDone)
        }
    }

    /// Re-run `events` from a fresh session; fails on the first rejected event.
    pub fn replay(
        world: World,
        started_at: Timestamp,
        first_speaker: usize,
        timing: Timing,
        events: &[Event],
    ) -> Result<GameState, ReplayError> {
        let mut state = GameState::with_timing(world, started_at, first_speaker, timing)
            .map_err(ReplayError::World)?;
        for (index, e) in events.iter().enumerate() {
            state = state
                .apply(e.agent, e.action.clone(), e.ts)
                .map_err(|error| ReplayError::Rejected { index, error })?;
        }
        Ok(state)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error(transparent)]
    World(InvalidWorld),
    #[error("event {index} rejected: {error}")]
    Rejected { index: usize, error: RuleError },
}

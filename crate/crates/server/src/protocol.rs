//! JSON frames exchanged over the WebSocket. Every frame is one text message
//! holding an object tagged by `type`.

use grounding_core::engine::{Phase, Status, Timestamp, Timing};
use grounding_core::world::{Observation, World};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientFrame {
    Join,
    Message { text: String },
    Select { entity_id: u32 },
}

/// One dot as drawn by a client, relative to that client's view center in
/// view radii, with raw size and gray level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dot {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub size: f64,
    pub color: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionTiming {
    pub started_at: Timestamp,
    pub reading_ms: u64,
    pub active_ms: u64,
    pub select_lockout_ms: u64,
}

impl SessionTiming {
    pub fn new(started_at: Timestamp, t: Timing) -> SessionTiming {
        SessionTiming {
            started_at,
            reading_ms: t.reading_ms,
            active_ms: t.active_ms,
            select_lockout_ms: t.select_lockout_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckOf {
    Message,
    Select,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServerFrame {
    /// Sent once the player has been queued and is waiting for a partner.
    Queued,
    Paired {
        session_id: String,
        agent: usize,
        first_speaker: usize,
        observation: Observation,
        dots: Vec<Dot>,
        timing: SessionTiming,
    },
    Message {
        from: usize,
        text: String,
        ts: Timestamp,
    },
    Ack {
        of: AckOf,
        ts: Timestamp,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        entity_id: Option<u32>,
    },
    Turn {
        next: usize,
    },
    Tick {
        now: Timestamp,
        phase: Phase,
        remaining_ms: u64,
        select_open: bool,
    },
    Outcome {
        status: Status,
        success: bool,
        you: Option<u32>,
        /// The partner's pick, or `null` when it is outside your view or
        /// missing; `partner_selected` tells the two apart.
        partner: Option<u32>,
        partner_selected: bool,
    },
    Error {
        code: String,
        message: String,
    },
}

impl ServerFrame {
    pub fn error(code: &str, message: impl Into<String>) -> ServerFrame {
        ServerFrame::Error {
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("frames serialize")
    }
}

pub fn dots_for(world: &World, agent: usize) -> Vec<Dot> {
    let view = &world.views[agent];
    world
        .visible_entities(agent)
        .into_iter()
        .map(|e| Dot {
            id: e.id,
            x: (e.x - view.center_x) / view.radius,
            y: (e.y - view.center_y) / view.radius,
            size: e.size,
            color: e.color,
        })
        .collect()
}

/// Entity ids a frame mentions. Used to audit that a client only ever hears
/// about its own dots.
pub fn mentioned_ids(frame: &ServerFrame) -> Vec<u32> {
    match frame {
        ServerFrame::Paired {
            observation, dots, ..
        } => {
            let mut ids = observation.entity_ids.clone();
            ids.extend(dots.iter().map(|d| d.id));
            ids
        }
        ServerFrame::Ack { entity_id, .. } => entity_id.iter().copied().collect(),
        ServerFrame::Outcome { you, partner, .. } => you.iter().chain(partner).copied().collect(),
        _ => Vec::new(),
    }
}

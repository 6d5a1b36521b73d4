//! Scripted WebSocket player for load tests and self-checks.

use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use grounding_core::engine::Phase;
use thiserror::Error;
use tokio_tungstenite::tungstenite::Message;

use crate::protocol::{ClientFrame, ServerFrame};

#[derive(Debug, Clone)]
pub struct BotScript {
    /// Messages to send, one per turn, once the active phase starts.
    pub messages: usize,
    /// Pick the highest visible id instead of the lowest.
    pub pick_last: bool,
    /// Close the socket right after being paired.
    pub leave_after_pairing: bool,
    pub timeout: Duration,
}

impl Default for BotScript {
    fn default() -> Self {
        BotScript {
            messages: 3,
            pick_last: false,
            leave_after_pairing: false,
            timeout: Duration::from_secs(60),
        }
    }
}

/// Everything one bot saw.
#[derive(Debug, Clone, Default)]
pub struct BotReport {
    pub session_id: Option<String>,
    pub agent: Option<usize>,
    pub visible_ids: Vec<u32>,
    pub frames: Vec<ServerFrame>,
}

impl BotReport {
    /// `(from, text)` of every relayed message, in arrival order.
    pub fn messages(&self) -> Vec<(usize, String)> {
        self.frames
            .iter()
            .filter_map(|f| match f {
                ServerFrame::Message { from, text, .. } => Some((*from, text.clone())),
                _ => None,
            })
            .collect()
    }

    pub fn outcome(&self) -> Option<&ServerFrame> {
        self.frames
            .iter()
            .find(|f| matches!(f, ServerFrame::Outcome { .. }))
    }
}

#[derive(Debug, Error)]
pub enum BotError {
    #[error("websocket: {0}")]
    Socket(#[from] tokio_tungstenite::tungstenite::Error),
    #[error("bad frame from server: {0}")]
    Frame(#[from] serde_json::Error),
    #[error("timed out after {0:?}")]
    Timeout(Duration),
}

/// Play one game at `url` (a `ws://…/ws` address).
pub async fn play(url: &str, script: BotScript) -> Result<BotReport, BotError> {
    let limit = script.timeout;
    match tokio::time::timeout(limit, play_inner(url, script)).await {
        Ok(r) => r,
        Err(_) => Err(BotError::Timeout(limit)),
    }
}

async fn play_inner(url: &str, script: BotScript) -> Result<BotReport, BotError> {
    let (mut ws, _) = tokio_tungstenite::connect_async(url).await?;
    let send =
        |f: &ClientFrame| Message::Text(serde_json::to_string(f).expect("frames serialize").into());
    ws.send(send(&ClientFrame::Join)).await?;
    let mut report = BotReport::default();
    let (mut my_turn, mut active, mut open, mut selected) = (false, false, false, false);
    let mut sent = 0;
    while let Some(msg) = ws.next().await {
        let text = match msg? {
            Message::Text(t) => t.as_str().to_owned(),
            Message::Close(_) => break,
            _ => continue,
        };
        let frame: ServerFrame = serde_json::from_str(&text)?;
        report.frames.push(frame.clone());
        match frame {
            ServerFrame::Paired {
                session_id,
                agent,
                first_speaker,
                observation,
                ..
            } => {
                report.session_id = Some(session_id);
                report.agent = Some(agent);
                report.visible_ids = observation.entity_ids;
                my_turn = first_speaker == agent;
                if script.leave_after_pairing {
                    ws.close(None).await?;
                    return Ok(report);
                }
            }
            ServerFrame::Tick {
                phase, select_open, ..
            } => {
                active = phase == Phase::Active;
                open = select_open;
            }
            ServerFrame::Turn { next } => my_turn = Some(next) == report.agent,
            ServerFrame::Outcome { .. } => {
                ws.close(None).await.ok();
                return Ok(report);
            }
            _ => {}
        }
        if active && my_turn && sent < script.messages {
            let agent = report.agent.unwrap_or(0);
            ws.send(send(&ClientFrame::Message {
                text: format!(
                    "agent {agent} line {sent} of {}",
                    report.session_id.as_deref().unwrap_or("?")
                ),
            }))
            .await?;
            sent += 1;
            my_turn = false;
        }
        if open && !selected && !report.visible_ids.is_empty() {
            let ids = &report.visible_ids;
            let id = if script.pick_last {
                ids[ids.len() - 1]
            } else {
                ids[0]
            };
            ws.send(send(&ClientFrame::Select { entity_id: id }))
                .await?;
            selected = true;
        }
    }
    Ok(report)
}

//! One live game, without any I/O: frames in, addressed frames out.

use grounding_core::corpus::Transcript;
use grounding_core::engine::{Action, GameState, Phase, Status, Timestamp, Timing};
use grounding_core::world::{observe, World};

use crate::protocol::{dots_for, AckOf, ClientFrame, ServerFrame, SessionTiming};

/// A frame for one side of the session.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: usize,
    pub frame: ServerFrame,
}

fn both(frame: ServerFrame) -> [Outbound; 2] {
    [
        Outbound {
            to: 0,
            frame: frame.clone(),
        },
        Outbound { to: 1, frame },
    ]
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub first_speaker: usize,
    pub created_at: Timestamp,
    state: GameState,
    finished: bool,
}

impl Session {
    pub fn new(
        id: String,
        world: World,
        now: Timestamp,
        first_speaker: usize,
        timing: Timing,
    ) -> Session {
        let state = GameState::with_timing(world, now, first_speaker, timing)
            .expect("generated worlds are valid");
        Session {
            id,
            first_speaker,
            created_at: now,
            state,
            finished: false,
        }
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// The `paired` frame for each side.
    pub fn start_frames(&self) -> Vec<Outbound> {
        let world = &self.state.world;
        (0..2)
            .map(|agent| Outbound {
                to: agent,
                frame: ServerFrame::Paired {
                    session_id: self.id.clone(),
                    agent,
                    first_speaker: self.first_speaker,
                    observation: observe(world, agent).expect("agent is 0 or 1"),
                    dots: dots_for(world, agent),
                    timing: SessionTiming::new(self.state.started_at, self.state.timing),
                },
            })
            .collect()
    }

    pub fn tick_frames(&self, now: Timestamp) -> Vec<Outbound> {
        let phase = self.state.phase_at(now);
        both(ServerFrame::Tick {
            now,
            phase,
            remaining_ms: self.state.remaining_ms(now),
            select_open: phase == Phase::Active && now >= self.state.select_opens_at(),
        })
        .into()
    }

    /// Apply one client frame from `agent`. Engine rejections go back to the
    /// sender only and leave the state untouched.
    pub fn handle(&mut self, agent: usize, frame: ClientFrame, now: Timestamp) -> Vec<Outbound> {
        if self.finished {
            return vec![Outbound {
                to: agent,
                frame: ServerFrame::error("SessionOver", "the session is over"),
            }];
        }
        let action = match frame {
            ClientFrame::Join => {
                return vec![Outbound {
                    to: agent,
                    frame: ServerFrame::error("DuplicateJoin", "already in a session"),
                }]
            }
            ClientFrame::Message { text } => Action::Message { text },
            ClientFrame::Select { entity_id } => Action::Select { entity_id },
        };
        let mut out = Vec::new();
        match self.state.apply(agent, action.clone(), now) {
            Err(e) => out.push(Outbound {
                to: agent,
                frame: ServerFrame::error(e.code(), e.to_string()),
            }),
            Ok(next) => {
                self.state = next;
                match action {
                    Action::Message { text } => {
                        out.extend(both(ServerFrame::Message {
                            from: agent,
                            text,
                            ts: now,
                        }));
                        out.push(Outbound {
                            to: agent,
                            frame: ServerFrame::Ack {
                                of: AckOf::Message,
                                ts: now,
                                entity_id: None,
                            },
                        });
                        out.extend(both(ServerFrame::Turn {
                            next: self.state.next_speaker,
                        }));
                    }
                    Action::Select { entity_id } => out.push(Outbound {
                        to: agent,
                        frame: ServerFrame::Ack {
                            of: AckOf::Select,
                            ts: now,
                            entity_id: Some(entity_id),
                        },
                    }),
                }
            }
        }
        out.extend(self.poll(now));
        out
    }

    /// Outcome frames once the session has ended by selection or time;
    /// empty while it is still running or after it has been reported.
    pub fn poll(&mut self, now: Timestamp) -> Vec<Outbound> {
        if self.finished || self.state.phase_at(now) != Phase::Done {
            return Vec::new();
        }
        self.finish()
    }

    /// A player left: the session ends now and reports as expired unless
    /// both had already selected.
    pub fn disconnect(&mut self, now: Timestamp) -> Vec<Outbound> {
        if self.finished {
            return Vec::new();
        }
        self.state = self.state.abort(now);
        self.finish()
    }

    fn finish(&mut self) -> Vec<Outbound> {
        self.finished = true;
        let outcome = grounding_core::engine::Outcome::from_selections(self.state.selections);
        (0..2)
            .map(|agent| {
                let partner_pick = outcome.selections[1 - agent];
                let visible = partner_pick.filter(|id| self.state.world.views[agent].sees(*id));
                Outbound {
                    to: agent,
                    frame: ServerFrame::Outcome {
                        status: outcome.status,
                        success: outcome.status == Status::Success,
                        you: outcome.selections[agent],
                        partner: visible,
                        partner_selected: partner_pick.is_some(),
                    },
                }
            })
            .collect()
    }

    /// The persisted record; only meaningful once finished.
    pub fn transcript(&self, now: Timestamp) -> Transcript {
        Transcript::from_state(self.id.clone(), &self.state, self.first_speaker, now)
    }
}

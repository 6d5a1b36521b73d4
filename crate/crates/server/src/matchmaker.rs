//! FIFO pairing of waiting connections.

use std::collections::VecDeque;

use grounding_core::rng::{self, ChaCha8Rng};
use grounding_core::world::{draw_shared_count, generate_world, World};
use thiserror::Error;

pub type ConnId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("connection {0} is already waiting")]
pub struct AlreadyQueued(pub ConnId);

/// Two connections and the world they will play in; `agents[i]` plays agent i.
#[derive(Debug, Clone, PartialEq)]
pub struct Pairing {
    pub session_id: String,
    pub agents: [ConnId; 2],
    pub world: World,
    pub first_speaker: usize,
}

#[derive(Debug)]
pub struct Matchmaker {
    queue: VecDeque<ConnId>,
    rng: ChaCha8Rng,
    prefix: String,
    next_index: u64,
}

impl Matchmaker {
    /// Session ids are `{prefix}-{index:06}` counting up from `first_index`.
    pub fn new(seed: u64, prefix: impl Into<String>, first_index: u64) -> Matchmaker {
        Matchmaker {
            queue: VecDeque::new(),
            rng: rng::seeded(seed),
            prefix: prefix.into(),
            next_index: first_index,
        }
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn is_queued(&self, conn: ConnId) -> bool {
        self.queue.contains(&conn)
    }

    /// Queue `conn`; returns a pairing when it completes one.
    pub fn join(&mut self, conn: ConnId) -> Result<Option<Pairing>, AlreadyQueued> {
        if self.is_queued(conn) {
            return Err(AlreadyQueued(conn));
        }
        self.queue.push_back(conn);
        if self.queue.len() < 2 {
            return Ok(None);
        }
        let a = self.queue.pop_front().expect("two queued");
        let b = self.queue.pop_front().expect("two queued");
        let k = draw_shared_count(&mut self.rng);
        let world_seed = rand::RngCore::next_u64(&mut self.rng);
        let world = generate_world(k, world_seed).expect("default geometry always generates");
        let first_speaker = rng::below(&mut self.rng, 2) as usize;
        let session_id = format!("{}-{:06}", self.prefix, self.next_index);
        self.next_index += 1;
        Ok(Some(Pairing {
            session_id,
            agents: [a, b],
            world,
            first_speaker,
        }))
    }

    /// Drop a waiting connection. False if it was not queued.
    pub fn leave(&mut self, conn: ConnId) -> bool {
        let before = self.queue.len();
        self.queue.retain(|c| *c != conn);
        self.queue.len() != before
    }
}

//! Scripted synthetic dialogues.
//!
//! Used as test fixtures, benchmark inputs and CLI smoke data. A scripted
//! speaker picks a shared dot and describes it by its size and darkness rank
//! and rough position within its own view; the partner confirms in its own
//! terms. Both then select, the partner agreeing with probability
//! [`AGREEMENT`].

use rand::RngCore;

use crate::corpus::Transcript;
use crate::engine::{Action, GameState};
use crate::rng::{self, ChaCha8Rng};
use crate::world::{self, observe, Observation};

pub const AGREEMENT: f64 = 0.8;

const SIZE_WORDS: [&str; 7] = ["tiny", "small", "small", "medium", "large", "large", "huge"];
const DARK_WORDS: [&str; 7] = [
    "black",
    "dark",
    "dark gray",
    "gray",
    "light gray",
    "light",
    "very light",
];

/// Words for slot `slot` of `obs`, by rank within the view.
pub fn describe(obs: &Observation, slot: usize) -> String {
    let rank = |col: usize| {
        let v = obs.rows[slot][col];
        obs.rows.iter().filter(|r| r[col] < v).count()
    };
    let size = SIZE_WORDS[rank(2)];
    let shade = DARK_WORDS[rank(3)];
    let [x, y, ..] = obs.rows[slot];
    let horiz = if x < -0.33 {
        "left"
    } else if x > 0.33 {
        "right"
    } else {
        "middle"
    };
    let vert = if y < -0.33 {
        "bottom"
    } else if y > 0.33 {
        "top"
    } else {
        "center"
    };
    format!("a {size} {shade} dot near the {vert} {horiz}")
}

const FILLERS: [&str; 6] = [
    "i think i see it",
    "is it slightly to the left of a cluster?",
    "maybe, let me check",
    "yes, exactly",
    "not sure, there are two like that",
    "ok it's very dark",
];

/// One scripted session on a fresh world.
pub fn dialogue(dialogue_id: &str, seed: u64) -> Transcript {
    let mut rng = rng::seeded(seed);
    let k = world::draw_shared_count(&mut rng);
    let w = world::generate_world(k, rng.next_u64()).expect("default geometry generates");
    let first = rng::below(&mut rng, 2) as usize;
    script(dialogue_id, w, first, &mut rng)
}

fn script(dialogue_id: &str, w: world::World, first: usize, rng: &mut ChaCha8Rng) -> Transcript {
    let shared = w.shared_ids();
    let target = shared[rng::below(rng, shared.len() as u64) as usize];
    let obs = [observe(&w, 0).unwrap(), observe(&w, 1).unwrap()];
    let slot = |a: usize, id: u32| w.views[a].slot_of(id).unwrap();

    let started_at = 1_600_000_000_000 + rng::below(rng, 1_000_000_000);
    let mut state = GameState::new(w.clone(), started_at, first).expect("valid world");
    let mut now = state.active_start() + 1_000;
    let speaker = first;
    let listener = 1 - first;

    let mut lines = vec![
        (
            speaker,
            format!("i have {}", describe(&obs[speaker], slot(speaker, target))),
        ),
        (
            listener,
            format!(
                "yes, i have {}",
                describe(&obs[listener], slot(listener, target))
            ),
        ),
    ];
    let extra = rng::below(rng, 4) as usize;
    for i in 0..extra {
        let who = if i % 2 == 0 { speaker } else { listener };
        lines.push((
            who,
            FILLERS[rng::below(rng, FILLERS.len() as u64) as usize].to_string(),
        ));
    }
    if lines.last().map(|l| l.0) == Some(speaker) {
        lines.push((listener, "ok, let's pick it".to_string()));
    } else {
        lines.push((speaker, "great, let's select it".to_string()));
    }
    for (who, text) in lines {
        state = state
            .apply(who, Action::Message { text }, now)
            .expect("scripted turns alternate");
        now += 4_000 + rng::below(rng, 8_000);
    }

    now = now.max(state.select_opens_at());
    let pick_other = rng::unit_f64(rng) >= AGREEMENT;
    for agent in [speaker, listener] {
        let choice = if agent == listener && pick_other {
            let options: Vec<u32> = w.views[agent]
                .visible_ids
                .iter()
                .copied()
                .filter(|id| *id != target)
                .collect();
            options[rng::below(rng, options.len() as u64) as usize]
        } else {
            target
        };
        state = state
            .apply(agent, Action::Select { entity_id: choice }, now)
            .expect("selection after lockout");
        now += 1_500;
    }
    Transcript::from_state(dialogue_id, &state, first, now)
}

/// `n` scripted dialogues with ids `synth-00000`, `synth-00001`, ...
pub fn corpus(n: usize, seed: u64) -> Vec<Transcript> {
    (0..n)
        .map(|i| dialogue(&format!("synth-{i:05}"), rng::derive_seed(seed, i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Status;

    #[test]
    fn deterministic() {
        assert_eq!(corpus(3, 5), corpus(3, 5));
    }

    #[test]
    fn mostly_successful() {
        let c = corpus(300, 1);
        let s = c
            .iter()
            .filter(|t| t.outcome.status == Status::Success)
            .count() as f64
            / 300.0;
        assert!((s - AGREEMENT).abs() < 0.08, "{s}");
    }
}

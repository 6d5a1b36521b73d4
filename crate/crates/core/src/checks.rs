//! Invariant suites runnable outside the test harness, shared by the
//! `selfcheck` command and the acceptance run.

use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::corpus::{
    build_vocab, from_jsonl, make_examples, make_test_variants, to_jsonl, TargetExample,
};
use crate::engine::{Action, Event, GameState, Phase, RuleError, Timing};
use crate::model::{accuracy, gradcheck, ModelConfig, Parameters, Variant};
use crate::rng;
use crate::synth;
use crate::world::{generate_world, validate_world, AttributeRanges, SHARED_COUNTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed_ms: u64,
}

impl Check {
    fn timed(name: &str, f: impl FnOnce() -> Result<String, String>) -> Check {
        let start = Instant::now();
        let result = f();
        let elapsed_ms = start.elapsed().as_millis() as u64;
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        Check {
            name: name.to_string(),
            passed,
            detail,
            elapsed_ms,
        }
    }
}

/// Upper-tail chi-square p-value of `values` against uniform on `[lo, hi]`.
pub fn uniformity_p(values: &[f64], lo: f64, hi: f64, bins: usize) -> f64 {
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = (((v - lo) / (hi - lo)) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let expected = values.len() as f64 / bins as f64;
    let stat: f64 = counts
        .iter()
        .map(|c| (*c as f64 - expected).powi(2) / expected)
        .sum();
    1.0 - ChiSquared::new((bins - 1) as f64)
        .expect("bins > 1")
        .cdf(stat)
}

/// `per_k` worlds for each shared count: all valid, sizes and gray levels
/// uniform (p > 0.001, 10 bins).
pub fn worlds(per_k: usize, seed: u64) -> Check {
    Check::timed("world generation", || {
        let ranges = AttributeRanges::default();
        let mut notes = Vec::new();
        for k in SHARED_COUNTS {
            let mut sizes = Vec::new();
            let mut colors = Vec::new();
            for i in 0..per_k as u64 {
                let s = rng::derive_seed(rng::derive_seed(seed, k as u64), i);
                let w = generate_world(k, s).map_err(|e| format!("k={k} world {i}: {e}"))?;
                let v = validate_world(&w);
                if !v.is_empty() {
                    return Err(format!("k={k} world {i}: {:?}", v[0]));
                }
                sizes.extend(w.entities.iter().map(|e| e.size));
                colors.extend(w.entities.iter().map(|e| e.color));
            }
            let ps = uniformity_p(&sizes, ranges.size_min, ranges.size_max, 10);
            let pc = uniformity_p(&colors, ranges.color_min, ranges.color_max, 10);
            if ps <= 0.001 || pc <= 0.001 {
                return Err(format!("k={k}: size p={ps:.4}, color p={pc:.4}"));
            }
            notes.push(format!("k={k} p(size)={ps:.3} p(color)={pc:.3}"));
        }
        Ok(format!(
            "{} worlds per k valid; {}",
            per_k,
            notes.join(", ")
        ))
    })
}

fn expect_err(r: Result<GameState, RuleError>, want: RuleError, what: &str) -> Result<(), String> {
    match r {
        Err(e) if e == want => Ok(()),
        Err(e) => Err(format!("{what}: got {e:?}, want {want:?}")),
        Ok(_) => Err(format!("{what}: accepted, want {want:?}")),
    }
}

fn fixed_rules(seed: u64) -> Result<(), String> {
    let t0 = 1_000_000;
    let timing = Timing::default();
    let w = generate_world(5, seed).map_err(|e| e.to_string())?;
    let s = GameState::new(w, t0, 0).map_err(|e| e.to_string())?;
    let active = t0 + timing.reading_ms;
    let id = s.world.views[0].visible_ids[0];
    let other = s.world.views[1]
        .visible_ids
        .iter()
        .copied()
        .find(|i| !s.world.views[0].sees(*i))
        .expect("some dot is private to agent 1");
    let msg = |t: &str| Action::Message { text: t.into() };
    let sel = |id| Action::Select { entity_id: id };

    expect_err(
        s.apply(0, msg("hi"), t0 + 1),
        RuleError::NotActiveYet,
        "message while reading",
    )?;
    expect_err(
        s.apply(0, sel(id), active + 59_000),
        RuleError::TooEarlyToSelect,
        "select at 59 s",
    )?;
    expect_err(
        s.apply(0, sel(id), active + 59_999),
        RuleError::TooEarlyToSelect,
        "select at 59.999 s",
    )?;
    expect_err(
        s.apply(1, msg("hi"), active),
        RuleError::NotYourTurn,
        "second speaker first",
    )?;
    let s1 = s
        .apply(0, msg("hi"), active)
        .map_err(|e| format!("first message: {e}"))?;
    expect_err(
        s1.apply(0, msg("again"), active + 1),
        RuleError::NotYourTurn,
        "same speaker twice",
    )?;
    let s2 = s1
        .apply(1, msg("hello"), active + 2)
        .map_err(|e| format!("reply: {e}"))?;
    expect_err(
        s2.apply(0, sel(other), active + 60_000),
        RuleError::EntityNotVisible,
        "select outside view",
    )?;
    let s3 = s2
        .apply(0, sel(id), active + 60_000)
        .map_err(|e| format!("select at 60 s: {e}"))?;
    expect_err(
        s3.apply(0, sel(id), active + 60_001),
        RuleError::AlreadySelected,
        "second select",
    )?;
    let s4 = s3
        .apply(0, msg("still talking"), active + 60_002)
        .map_err(|e| format!("message after select: {e}"))?;
    expect_err(
        s4.apply(0, msg("x"), active + 60_003),
        RuleError::NotYourTurn,
        "turn kept after select",
    )?;
    let end = active + timing.active_ms;
    expect_err(
        s4.apply(1, msg("late"), end + 1),
        RuleError::SessionOver,
        "message after time limit",
    )?;
    s4.apply(1, msg("just in time"), end)
        .map_err(|e| format!("message at the limit: {e}"))?;
    Ok(())
}

/// Random attempt log against the rules; returns accepted events.
fn random_log(seed: u64) -> Result<(GameState, Vec<Event>, usize), String> {
    let mut r = rng::seeded(seed);
    let k = SHARED_COUNTS[rng::below(&mut r, 3) as usize];
    let w = generate_world(k, r.next_u64()).map_err(|e| e.to_string())?;
    let first = rng::below(&mut r, 2) as usize;
    let t0 = 1_000;
    let mut state = GameState::new(w, t0, first).map_err(|e| e.to_string())?;
    let mut now = t0;
    let mut accepted = Vec::new();
    let attempts = rng::below(&mut r, 60) as usize;
    for i in 0..attempts {
        now += match rng::below(&mut r, 10) {
            0 => rng::below(&mut r, 120_000),
            1 => 0,
            _ => rng::below(&mut r, 8_000),
        };
        let agent = rng::below(&mut r, 2) as usize;
        let action = if rng::below(&mut r, 4) == 0 {
            let slot = rng::below(&mut r, 8) as usize;
            let id = state.world.views[agent]
                .visible_ids
                .get(slot)
                .copied()
                .unwrap_or(u32::MAX);
            Action::Select { entity_id: id }
        } else {
            Action::Message {
                text: format!("m{i}"),
            }
        };
        let was_done = state.phase_at(now) == Phase::Done;
        match state.apply(agent, action.clone(), now) {
            Ok(next) => {
                if was_done {
                    return Err(format!(
                        "log {seed}: event {i} accepted after the session ended"
                    ));
                }
                if let Action::Select { .. } = action {
                    if now < state.select_opens_at() {
                        return Err(format!("log {seed}: select accepted before lockout"));
                    }
                    if state.selections[agent].is_some() {
                        return Err(format!("log {seed}: second select accepted"));
                    }
                }
                accepted.push(Event {
                    ts: now,
                    agent,
                    action,
                });
                state = next;
            }
            Err(e) if was_done && e != RuleError::SessionOver => {
                return Err(format!("log {seed}: after end got {e:?}"));
            }
            Err(_) => {}
        }
    }
    let speakers: Vec<usize> = accepted
        .iter()
        .filter(|e| matches!(e.action, Action::Message { .. }))
        .map(|e| e.agent)
        .collect();
    if speakers
        .iter()
        .enumerate()
        .any(|(i, a)| *a != (first + i) % 2)
    {
        return Err(format!("log {seed}: messages do not alternate"));
    }
    if accepted.windows(2).any(|w| w[1].ts < w[0].ts) {
        return Err(format!("log {seed}: timestamps decrease"));
    }
    Ok((state, accepted, first))
}

/// Boundary rules plus `logs` random attempt logs, each replayed to an
/// identical state.
pub fn engine(logs: usize, seed: u64) -> Check {
    Check::timed("session rules", || {
        fixed_rules(seed)?;
        let mut events = 0;
        let mut finished = 0;
        for i in 0..logs as u64 {
            let s = rng::derive_seed(seed, i);
            let (state, accepted, first) = random_log(s)?;
            let replayed = GameState::replay(
                state.world.clone(),
                state.started_at,
                first,
                state.timing,
                &accepted,
            )
            .map_err(|e| format!("log {s}: replay failed: {e}"))?;
            if replayed != state {
                return Err(format!("log {s}: replay differs"));
            }
            events += accepted.len();
            finished += usize::from(state.both_selected());
        }
        Ok(format!(
            "boundary rules hold; {logs} random logs ({events} accepted events, {finished} with both selections) replay exactly"
        ))
    })
}

/// Transcripts of `n` scripted sessions validate and survive a JSON-lines
/// round trip.
pub fn transcripts(n: usize, seed: u64) -> Check {
    Check::timed("transcripts", || {
        let corpus = synth::corpus(n, seed);
        for t in &corpus {
            t.validate()
                .map_err(|e| format!("{}: {e}", t.dialogue_id))?;
        }
        let back = from_jsonl(&to_jsonl(&corpus)).map_err(|e| e.to_string())?;
        if back != corpus {
            return Err("round trip changed transcripts".into());
        }
        Ok(format!("{n} transcripts validate and round-trip"))
    })
}

fn guess_accuracy(examples: &[TargetExample], r: &mut rng::ChaCha8Rng) -> f64 {
    let hits = examples
        .iter()
        .filter(|e| rng::below(r, 7) as usize == e.label)
        .count();
    hits as f64 / examples.len().max(1) as f64
}

/// Uniform guessing and an untrained network on the three test variants of
/// a scripted corpus: accuracy within 1.5 points of 1/7.
pub fn random_baseline(dialogues: usize, seed: u64) -> Check {
    Check::timed("random baseline", || {
        let corpus = synth::corpus(dialogues, seed);
        let vocab = build_vocab(&corpus);
        let set = make_examples(&corpus, &vocab);
        let tests = make_test_variants(&set.examples, seed);
        let untrained = Parameters::init(&ModelConfig::new(Variant::FullRn, seed), vocab.len());
        let mut r = rng::seeded(rng::derive_seed(seed, 3));
        let chance = 1.0 / 7.0;
        let mut notes = Vec::new();
        let mut ok = true;
        for (name, ex) in [
            ("full", &tests.full),
            ("uncorrelated", &tests.uncorrelated),
            ("success-only", &tests.success_only),
        ] {
            let guess = guess_accuracy(ex, &mut r);
            let net = accuracy(&untrained, ex);
            ok &= (guess - chance).abs() <= 0.015 && (net - chance).abs() <= 0.015;
            notes.push(format!(
                "{name} (n={}): guess {:.2}%, untrained {:.2}%",
                ex.len(),
                100.0 * guess,
                100.0 * net
            ));
        }
        let detail = notes.join("; ");
        if ok {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

/// Finite-difference checks of every parameter of every variant and of the
/// observation gradient of both context encoders.
pub fn gradients(seed: u64) -> Check {
    Check::timed("gradients", || {
        let mut notes = Vec::new();
        let mut ok = true;
        for v in Variant::ALL {
            let tol = if v.uses_dialogue() { 1e-3 } else { 1e-4 };
            let err = gradcheck::loss_gradient_error(v, seed);
            ok &= err < tol;
            notes.push(format!("{v} {err:.1e}"));
        }
        for v in [Variant::ContextMlp, Variant::ContextRn] {
            let err = gradcheck::context_input_gradient_error(v, seed);
            ok &= err < 1e-4;
            notes.push(format!("{v} input {err:.1e}"));
        }
        let detail = format!("worst relative error: {}", notes.join(", "));
        if ok {
            Ok(detail)
        } else {
            Err(detail)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        for c in [
            worlds(50, 1),
            engine(50, 2),
            transcripts(20, 3),
            gradients(4),
        ] {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn uniformity_rejects_a_spike() {
        let spike = vec![0.05; 1000];
        assert!(uniformity_p(&spike, 0.0, 1.0, 10) < 1e-6);
        let even: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(uniformity_p(&even, 0.0, 1.0, 10) > 0.99);
    }
}

//! Importer for the public dialogue release.
//!
//! Expected record shape (JSON array or JSON-lines):
//!
//! ```text
//! { "uuid": "...", "scenario_uuid": "...",
//!   "scenario": { "kbs": [[{"id": "12", "x": 201.5, "y": 88.0,
//!                           "size": 10, "color": "rgb(96,96,96)"}, ...7],
//!                          [...7]] },
//!   "events": [{"agent": 0, "action": "message", "data": "hi", "time": 1.55e9},
//!              {"agent": 1, "action": "select",  "data": "12", "time": ...}],
//!   "outcome": {"reward": 1} }
//! ```
//!
//! Each agent's coordinates are local to its own view, drawn in a square
//! canvas whose circle has center [`ImportConfig::view_center`] and radius
//! [`ImportConfig::view_radius`]. The offset between the two views is
//! recovered from the shared entities. Positions are rescaled so views have
//! radius 1; sizes and gray levels are mapped affinely from the range seen
//! across the whole release onto the generator's ranges, which keeps their
//! order and relative spacing. Timestamps are kept when they replay under the
//! session rules and otherwise re-laid in order, the originals going to
//! `extra.source_times`.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value};
use thiserror::Error;

use super::transcript::{Transcript, TRANSCRIPT_FORMAT};
use crate::engine::{Action, Event, GameState, Outcome, ReplayError, Status, Timing};
use crate::world::{AgentView, AttributeRanges, Entity, World};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportConfig {
    pub view_center: (f64, f64),
    pub view_radius: f64,
    /// Drop records that fail to map instead of failing the import.
    pub skip_invalid: bool,
}

impl Default for ImportConfig {
    fn default() -> Self {
        ImportConfig {
            view_center: (215.0, 215.0),
            view_radius: 200.0,
            skip_invalid: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("cannot read release: {0}")]
    Io(#[from] std::io::Error),
    #[error("release is not JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("record {index} ({id}): {reason}")]
    Record {
        index: usize,
        id: String,
        reason: String,
    },
}

#[derive(Debug, Default)]
pub struct ImportReport {
    pub transcripts: Vec<Transcript>,
    pub skipped: Vec<String>,
}

/// Read a release file from disk.
pub fn import_release(
    path: &std::path::Path,
    config: &ImportConfig,
) -> Result<ImportReport, ImportError> {
    let text = std::fs::read_to_string(path)?;
    import_release_str(&text, config)
}

pub fn import_release_str(text: &str, config: &ImportConfig) -> Result<ImportReport, ImportError> {
    let records = parse_records(text)?;
    let mut raws = Vec::with_capacity(records.len());
    let mut report = ImportReport::default();
    for (index, rec) in records.into_iter().enumerate() {
        let id = rec
            .get("uuid")
            .or_else(|| rec.get("dialogue_id"))
            .and_then(Value::as_str)
            .unwrap_or("?")
            .to_string();
        match RawDialogue::parse(rec, config) {
            Ok(raw) => raws.push((index, raw)),
            Err(reason) if config.skip_invalid => report
                .skipped
                .push(format!("record {index} ({id}): {reason}")),
            Err(reason) => return Err(ImportError::Record { index, id, reason }),
        }
    }

    let source = source_ranges(raws.iter().map(|(_, r)| r));
    let target = AttributeRanges::default();
    for (index, raw) in raws {
        let id = raw.id.clone();
        match raw.into_transcript(&source, &target) {
            Ok(t) => report.transcripts.push(t),
            Err(reason) if config.skip_invalid => report
                .skipped
                .push(format!("record {index} ({id}): {reason}")),
            Err(reason) => return Err(ImportError::Record { index, id, reason }),
        }
    }
    Ok(report)
}

fn parse_records(text: &str) -> Result<Vec<Map<String, Value>>, ImportError> {
    let trimmed = text.trim_start();
    let values: Vec<Value> = if trimmed.starts_with('[') {
        serde_json::from_str(trimmed)?
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?
    };
    values
        .into_iter()
        .enumerate()
        .map(|(index, v)| match v {
            Value::Object(m) => Ok(m),
            _ => Err(ImportError::Record {
                index,
                id: "?".into(),
                reason: "record is not a JSON object".into(),
            }),
        })
        .collect()
}

struct RawEntity {
    id: u32,
    x: f64,
    y: f64,
    size: f64,
    color: f64,
}

struct RawDialogue {
    id: String,
    kbs: [Vec<RawEntity>; 2],
    events: Vec<(Option<f64>, Event)>,
    reward: Option<f64>,
    config: ImportConfig,
    extra: Map<String, Value>,
}

fn parse_number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn parse_color(v: &Value) -> Option<f64> {
    if let Some(n) = parse_number(v) {
        return Some(n);
    }
    let s = v.as_str()?.trim();
    let inner = s.strip_prefix("rgb(")?.strip_suffix(')')?;
    let channels: Vec<f64> = inner
        .split(',')
        .map(|c| c.trim().parse().ok())
        .collect::<Option<_>>()?;
    (channels.len() == 3).then(|| channels.iter().sum::<f64>() / 3.0)
}

fn parse_id(v: &Value) -> Option<u32> {
    match v {
        Value::Number(n) => n.as_u64().and_then(|n| u32::try_from(n).ok()),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

impl RawDialogue {
    fn parse(mut rec: Map<String, Value>, config: &ImportConfig) -> Result<RawDialogue, String> {
        let id = match rec.remove("uuid").or_else(|| rec.remove("dialogue_id")) {
            Some(Value::String(s)) => s,
            _ => return Err("missing string field `uuid`".into()),
        };
        let scenario = rec.remove("scenario").ok_or("missing field `scenario`")?;
        let kbs_value = scenario.get("kbs").ok_or("missing field `scenario.kbs`")?;
        let kbs_list = kbs_value
            .as_array()
            .ok_or("`scenario.kbs` is not an array")?;
        if kbs_list.len() != 2 {
            return Err(format!(
                "`scenario.kbs` has {} views, expected 2",
                kbs_list.len()
            ));
        }
        let mut kbs: [Vec<RawEntity>; 2] = [Vec::new(), Vec::new()];
        for (agent, kb) in kbs_list.iter().enumerate() {
            let list = kb
                .as_array()
                .ok_or_else(|| format!("`scenario.kbs[{agent}]` is not an array"))?;
            for (i, e) in list.iter().enumerate() {
                let field = |name: &str| {
                    e.get(name)
                        .ok_or_else(|| format!("kbs[{agent}][{i}] lacks `{name}`"))
                };
                let bad = |name: &str| format!("kbs[{agent}][{i}].{name} is malformed");
                kbs[agent].push(RawEntity {
                    id: parse_id(field("id")?).ok_or_else(|| bad("id"))?,
                    x: parse_number(field("x")?).ok_or_else(|| bad("x"))?,
                    y: parse_number(field("y")?).ok_or_else(|| bad("y"))?,
                    size: parse_number(field("size")?).ok_or_else(|| bad("size"))?,
                    color: parse_color(field("color")?).ok_or_else(|| bad("color"))?,
                });
            }
        }
        if let Some(uuid) = scenario.get("uuid") {
            rec.entry("scenario_uuid").or_insert_with(|| uuid.clone());
        }

        let raw_events = match rec.remove("events") {
            Some(Value::Array(a)) => a,
            _ => return Err("missing array field `events`".into()),
        };
        let mut events = Vec::new();
        for (i, e) in raw_events.iter().enumerate() {
            let agent = e
                .get("agent")
                .and_then(parse_id)
                .filter(|a| *a <= 1)
                .ok_or_else(|| format!("events[{i}].agent must be 0 or 1"))?
                as usize;
            let kind = e.get("action").and_then(Value::as_str).unwrap_or("");
            let data = e
                .get("data")
                .ok_or_else(|| format!("events[{i}] lacks `data`"))?;
            let action = match kind {
                "message" => Action::Message {
                    text: data
                        .as_str()
                        .ok_or_else(|| format!("events[{i}].data is not text"))?
                        .to_string(),
                },
                "select" => Action::Select {
                    entity_id: parse_id(data)
                        .ok_or_else(|| format!("events[{i}].data is not an entity id"))?,
                },
                other => {
                    return Err(format!(
                        "events[{i}].action {other:?} is neither message nor select"
                    ))
                }
            };
            let time = e.get("time").and_then(parse_number);
            events.push((
                time,
                Event {
                    ts: 0,
                    agent,
                    action,
                },
            ));
        }
        let reward = rec
            .remove("outcome")
            .and_then(|o| o.get("reward").and_then(parse_number));

        Ok(RawDialogue {
            id,
            kbs,
            events,
            reward,
            config: *config,
            extra: rec,
        })
    }

    fn into_transcript(
        self,
        source: &AttributeRanges,
        target: &AttributeRanges,
    ) -> Result<Transcript, String> {
        let ids0: BTreeSet<u32> = self.kbs[0].iter().map(|e| e.id).collect();
        let ids1: BTreeSet<u32> = self.kbs[1].iter().map(|e| e.id).collect();
        let shared: Vec<u32> = ids0.intersection(&ids1).copied().collect();
        if shared.is_empty() {
            return Err("views share no entity".into());
        }
        let pos = |agent: usize, id: u32| {
            self.kbs[agent]
                .iter()
                .find(|e| e.id == id)
                .map(|e| (e.x, e.y))
                .unwrap()
        };
        let (mut ox, mut oy) = (0.0, 0.0);
        for &id in &shared {
            let (a, b) = (pos(0, id), pos(1, id));
            ox += a.0 - b.0;
            oy += a.1 - b.1;
        }
        ox /= shared.len() as f64;
        oy /= shared.len() as f64;

        let (cx, cy) = self.config.view_center;
        let r = self.config.view_radius;
        let remap = |v: f64, lo: f64, hi: f64, tlo: f64, thi: f64| {
            if hi > lo {
                tlo + (v - lo) / (hi - lo) * (thi - tlo)
            } else {
                0.5 * (tlo + thi)
            }
        };
        let mut entities: BTreeMap<u32, Entity> = BTreeMap::new();
        for (agent, kb) in self.kbs.iter().enumerate() {
            for e in kb {
                let (wx, wy) = if agent == 0 {
                    (e.x, e.y)
                } else {
                    (e.x + ox, e.y + oy)
                };
                entities.entry(e.id).or_insert(Entity {
                    id: e.id,
                    x: (wx - cx) / r,
                    // canvas y grows downward
                    y: -(wy - cy) / r,
                    size: remap(
                        e.size,
                        source.size_min,
                        source.size_max,
                        target.size_min,
                        target.size_max,
                    ),
                    color: remap(
                        e.color,
                        source.color_min,
                        source.color_max,
                        target.color_min,
                        target.color_max,
                    ),
                });
            }
        }
        let world = World {
            world_id: self
                .extra
                .get("scenario_uuid")
                .and_then(Value::as_str)
                .unwrap_or(&self.id)
                .to_string(),
            num_shared: shared.len(),
            entities: entities.into_values().collect(),
            views: [
                AgentView {
                    center_x: 0.0,
                    center_y: 0.0,
                    radius: 1.0,
                    visible_ids: ids0.into_iter().collect(),
                },
                AgentView {
                    center_x: ox / r,
                    center_y: -oy / r,
                    radius: 1.0,
                    visible_ids: ids1.into_iter().collect(),
                },
            ],
            seed: 0,
        };

        let mut selections = [None, None];
        for (_, e) in &self.events {
            if let Action::Select { entity_id } = e.action {
                selections[e.agent].get_or_insert(entity_id);
            }
        }
        let outcome = Outcome::from_selections(selections);
        if let Some(reward) = self.reward {
            let success = outcome.status == Status::Success;
            if (reward > 0.0) != success {
                return Err(format!(
                    "reward {reward} contradicts selections {selections:?}"
                ));
            }
        }
        let first_speaker = self
            .events
            .iter()
            .find(|(_, e)| matches!(e.action, Action::Message { .. }))
            .map_or(0, |(_, e)| e.agent);

        let mut extra = self.extra;
        let timing = Timing::default();
        let (started_at, events) = match keep_times(&self.events, &timing) {
            Some((start, events))
                if replays(&world, start, first_speaker, &timing, &events).is_ok() =>
            {
                (start, events)
            }
            _ => {
                let times: Vec<Value> = self
                    .events
                    .iter()
                    .map(|(t, _)| t.map_or(Value::Null, Value::from))
                    .collect();
                extra.insert("source_times".into(), Value::Array(times));
                relay_times(&self.events, &timing)
            }
        };
        replays(&world, started_at, first_speaker, &timing, &events).map_err(|e| e.to_string())?;

        Ok(Transcript {
            format: TRANSCRIPT_FORMAT.into(),
            dialogue_id: self.id,
            num_shared: world.num_shared,
            world,
            started_at,
            first_speaker,
            events,
            outcome,
            extra,
        })
    }
}

fn replays(
    world: &World,
    start: u64,
    first: usize,
    timing: &Timing,
    events: &[Event],
) -> Result<GameState, ReplayError> {
    GameState::replay(world.clone(), start, first, *timing, events)
}

/// Source times (seconds, or milliseconds if large) anchored so the first
/// message opens the active phase.
fn keep_times(events: &[(Option<f64>, Event)], timing: &Timing) -> Option<(u64, Vec<Event>)> {
    let times: Vec<f64> = events.iter().map(|(t, _)| *t).collect::<Option<_>>()?;
    let first = *times.first()?;
    let scale = if first > 1e11 { 1.0 } else { 1000.0 };
    let ms: Vec<u64> = times
        .iter()
        .map(|t| (t * scale).round().max(0.0) as u64)
        .collect();
    let first_ms = *ms.first()?;
    let start = first_ms.checked_sub(timing.reading_ms)?;
    let out = events
        .iter()
        .zip(&ms)
        .map(|((_, e), ts)| Event {
            ts: *ts,
            ..e.clone()
        })
        .collect();
    Some((start, out))
}

/// Order-preserving synthetic clock: one second per message from the start of
/// play, with selections no earlier than the lockout.
fn relay_times(events: &[(Option<f64>, Event)], timing: &Timing) -> (u64, Vec<Event>) {
    let start = 0;
    let mut now = timing.reading_ms;
    let open = timing.reading_ms + timing.select_lockout_ms;
    let mut out = Vec::with_capacity(events.len());
    for (_, e) in events {
        if matches!(e.action, Action::Select { .. }) {
            now = now.max(open);
        }
        out.push(Event {
            ts: now,
            ..e.clone()
        });
        now += 1_000;
    }
    (start, out)
}

fn source_ranges<'a>(raws: impl Iterator<Item = &'a RawDialogue>) -> AttributeRanges {
    let mut r = AttributeRanges {
        size_min: f64::INFINITY,
        size_max: f64::NEG_INFINITY,
        color_min: f64::INFINITY,
        color_max: f64::NEG_INFINITY,
    };
    for raw in raws {
        for e in raw.kbs.iter().flatten() {
            r.size_min = r.size_min.min(e.size);
            r.size_max = r.size_max.max(e.size);
            r.color_min = r.color_min.min(e.color);
            r.color_max = r.color_max.max(e.color);
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn kb(ids: &[u32], dx: f64) -> Value {
        Value::Array(
            ids.iter()
                .map(|&id| {
                    json!({"id": id.to_string(), "x": 100.0 + 20.0 * id as f64 - dx, "y": 215.0 + 5.0 * id as f64,
                           "size": 7 + (id % 7), "color": format!("rgb({0},{0},{0})", 40 + 10 * id)})
                })
                .collect(),
        )
    }

    fn record(id: &str, sel: (u32, u32)) -> Value {
        json!({
            "uuid": id,
            "scenario_uuid": format!("S_{id}"),
            "scenario": {"kbs": [kb(&[1, 2, 3, 4, 5, 6, 7], 0.0), kb(&[3, 4, 5, 6, 7, 8, 9], 30.0)]},
            "events": [
                {"agent": 1, "action": "message", "data": "i see a dark one", "time": 1000.0},
                {"agent": 0, "action": "message", "data": "me too", "time": 1004.5},
                {"agent": 0, "action": "select", "data": sel.0.to_string(), "time": 1070.0},
                {"agent": 1, "action": "select", "data": sel.1.to_string(), "time": 1071.0}
            ],
            "outcome": {"reward": if sel.0 == sel.1 { 1 } else { 0 }},
            "agents_info": {"x": 1}
        })
    }

    #[test]
    fn maps_a_record() {
        let text = Value::Array(vec![record("C_1", (4, 4)), record("C_2", (3, 8))]).to_string();
        let report = import_release_str(&text, &ImportConfig::default()).unwrap();
        assert_eq!(report.transcripts.len(), 2);
        let t = &report.transcripts[0];
        t.validate().unwrap();
        assert_eq!(t.num_shared, 5);
        assert_eq!(t.world.entities.len(), 9);
        assert_eq!(t.outcome.status, Status::Success);
        assert_eq!(t.first_speaker, 1);
        assert_eq!(t.extra["agents_info"], json!({"x": 1}));
        assert_eq!(t.events[1].ts - t.events[0].ts, 4_500);
        // shared entity lands at one world position from both views
        assert!((t.world.views[1].center_x - 30.0 / 200.0).abs() < 1e-12);
        assert_eq!(report.transcripts[1].outcome.status, Status::Failure);
    }

    #[test]
    fn jsonl_input_and_retiming() {
        let mut r = record("C_3", (5, 5));
        // selection inside the lockout forces re-timing
        r["events"][2]["time"] = json!(1010.0);
        let report = import_release_str(&format!("{r}\n"), &ImportConfig::default()).unwrap();
        let t = &report.transcripts[0];
        t.validate().unwrap();
        assert!(t.extra.contains_key("source_times"));
    }

    #[test]
    fn reward_mismatch_names_record() {
        let mut r = record("C_bad", (4, 4));
        r["outcome"]["reward"] = json!(0);
        let err = import_release_str(
            &Value::Array(vec![record("C_ok", (4, 4)), r]).to_string(),
            &ImportConfig::default(),
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("record 1") && msg.contains("C_bad"), "{msg}");
    }

    #[test]
    fn missing_field_is_descriptive() {
        let text = json!([{"uuid": "C_x", "events": []}]).to_string();
        let err = import_release_str(&text, &ImportConfig::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains("scenario"), "{err}");
    }

    #[test]
    fn skip_invalid_collects() {
        let text = json!([{"uuid": "C_x"}, record("C_y", (4, 4))]).to_string();
        let cfg = ImportConfig {
            skip_invalid: true,
            ..ImportConfig::default()
        };
        let report = import_release_str(&text, &cfg).unwrap();
        assert_eq!(report.transcripts.len(), 1);
        assert_eq!(report.skipped.len(), 1);
    }
}

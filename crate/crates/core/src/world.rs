//! Continuous, partially observable two-agent worlds.
//!
//! A world is a set of dots (position, size, gray level) and two circular
//! views. Each view holds exactly [`VIEW_SIZE`] dots and the views share
//! exactly `k` of them, `k` in `{4, 5, 6}`.
//!
//! Generation works in a unitless frame: views are circles of radius
//! [`Geometry::radius`] centred symmetrically on the x-axis at `(-d/2, 0)` and
//! `(d/2, 0)`, with the offset `d` drawn per attempt. Shared dots are drawn
//! uniformly from the lens (inside both views by at least the margin), private
//! dots uniformly from each crescent (inside their own view, clear of the
//! other view by the margin). An attempt whose dots crowd each other is thrown
//! away whole, offset included, so the accepted sample is uniform conditioned
//! on the spacing constraint.

use std::collections::BTreeSet;
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, ChaCha8Rng};

/// Dots visible to each agent.
pub const VIEW_SIZE: usize = 7;
/// Length of a flattened [`Observation`].
pub const OBSERVATION_DIM: usize = VIEW_SIZE * 4;
/// Allowed shared counts.
pub const SHARED_COUNTS: [usize; 3] = [4, 5, 6];

/// Fraction of `(-1, 1)` that normalized size and color occupy. Keeps the
/// interval endpoints of the attribute ranges strictly inside `(-1, 1)`.
const ATTRIBUTE_SPAN: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub size: f64,
    /// Gray level; smaller is darker.
    pub color: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentView {
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
    /// Ascending entity ids.
    pub visible_ids: Vec<u32>,
}

impl AgentView {
    pub fn distance_to(&self, e: &Entity) -> f64 {
        (e.x - self.center_x).hypot(e.y - self.center_y)
    }

    pub fn sees(&self, id: u32) -> bool {
        self.visible_ids.binary_search(&id).is_ok()
    }

    /// Slot of `id` in this view (its rank among visible ids).
    pub fn slot_of(&self, id: u32) -> Option<usize> {
        self.visible_ids.binary_search(&id).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub world_id: String,
    pub num_shared: usize,
    /// Sorted by id.
    pub entities: Vec<Entity>,
    pub views: [AgentView; 2],
    pub seed: u64,
}

impl World {
    pub fn entity(&self, id: u32) -> Option<&Entity> {
        self.entities
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|i| &self.entities[i])
            .or_else(|| self.entities.iter().find(|e| e.id == id))
    }

    pub fn shared_ids(&self) -> Vec<u32> {
        self.views[0]
            .visible_ids
            .iter()
            .copied()
            .filter(|id| self.views[1].sees(*id))
            .collect()
    }

    /// The entities in `agent`'s view, in slot order.
    pub fn visible_entities(&self, agent: usize) -> Vec<Entity> {
        self.views[agent]
            .visible_ids
            .iter()
            .filter_map(|id| self.entity(*id).copied())
            .collect()
    }
}

/// Inclusive ranges of the two scalar attributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeRanges {
    pub size_min: f64,
    pub size_max: f64,
    pub color_min: f64,
    pub color_max: f64,
}

impl Default for AttributeRanges {
    fn default() -> Self {
        let g = Geometry::default();
        AttributeRanges {
            size_min: g.size_min,
            size_max: g.size_min + g.size_width,
            color_min: g.color_min,
            color_max: g.color_max,
        }
    }
}

impl AttributeRanges {
    pub fn normalize_size(&self, size: f64) -> f64 {
        affine_unit(size, self.size_min, self.size_max)
    }

    pub fn normalize_color(&self, color: f64) -> f64 {
        affine_unit(color, self.color_min, self.color_max)
    }

    pub fn contains(&self, e: &Entity) -> bool {
        (self.size_min..=self.size_max).contains(&e.size)
            && (self.color_min..=self.color_max).contains(&e.color)
    }
}

fn affine_unit(v: f64, lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    ATTRIBUTE_SPAN * (v - mid) / half
}

/// Constants governing generation and geometric validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub radius: f64,
    /// Center offset is drawn from `[offset_min, offset_max] * radius`.
    pub offset_min: f64,
    pub offset_max: f64,
    pub min_distance: f64,
    pub margin: f64,
    pub max_reject: usize,
    pub size_min: f64,
    pub size_width: f64,
    pub color_min: f64,
    pub color_max: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            radius: 1.0,
            offset_min: 0.2,
            offset_max: 1.2,
            min_distance: 0.12,
            margin: 0.03,
            max_reject: 10_000,
            size_min: 8.0,
            size_width: 7.0,
            color_min: 25.0,
            color_max: 205.0,
        }
    }
}

impl Geometry {
    pub fn ranges(&self) -> AttributeRanges {
        AttributeRanges {
            size_min: self.size_min,
            size_max: self.size_min + self.size_width,
            color_min: self.color_min,
            color_max: self.color_max,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("shared count {0} is not one of 4, 5, 6")]
    BadSharedCount(usize),
    #[error("agent index {0} is not 0 or 1")]
    BadAgent(usize),
    #[error("no valid world after {0} rejection rounds")]
    Exhausted(usize),
}

/// Generate a world with the default [`Geometry`].
pub fn generate_world(num_shared: usize, seed: u64) -> Result<World, WorldError> {
    generate_world_with(&Geometry::default(), num_shared, seed)
}

pub fn generate_world_with(
    geometry: &Geometry,
    num_shared: usize,
    seed: u64,
) -> Result<World, WorldError> {
    if !SHARED_COUNTS.contains(&num_shared) {
        return Err(WorldError::BadSharedCount(num_shared));
    }
    let mut rng = rng::seeded(seed);
    let g = geometry;
    let r = g.radius;
    let inner = r - g.margin * r;
    let outer = r + g.margin * r;
    let min_d = g.min_distance * r;
    let private = VIEW_SIZE - num_shared;

    for _ in 0..g.max_reject {
        let offset = rng::uniform(&mut rng, g.offset_min, g.offset_max) * r;
        let c0 = (-offset / 2.0, 0.0);
        let c1 = (offset / 2.0, 0.0);

        let mut points: Vec<(f64, f64)> = Vec::with_capacity(num_shared + 2 * private);
        let lens = |p: (f64, f64)| dist(p, c0) <= inner && dist(p, c1) <= inner;
        let crescent = |own: (f64, f64), other: (f64, f64)| {
            move |p: (f64, f64)| dist(p, own) <= inner && dist(p, other) >= outer
        };
        let lens_box = (c1.0 - inner, c0.0 + inner, -inner, inner);
        let box0 = (c0.0 - inner, c0.0 + inner, -inner, inner);
        let box1 = (c1.0 - inner, c1.0 + inner, -inner, inner);

        let mut ok = true;
        for _ in 0..num_shared {
            match sample_region(&mut rng, lens_box, lens, g.max_reject) {
                Some(p) => points.push(p),
                None => ok = false,
            }
        }
        for (bbox, pred) in [(box0, crescent(c0, c1)), (box1, crescent(c1, c0))] {
            for _ in 0..private {
                match sample_region(&mut rng, bbox, pred, g.max_reject) {
                    Some(p) => points.push(p),
                    None => ok = false,
                }
            }
        }
        if !ok {
            continue;
        }
        let crowded = points
            .iter()
            .enumerate()
            .any(|(i, a)| points[i + 1..].iter().any(|b| dist(*a, *b) < min_d));
        if crowded {
            continue;
        }

        // Ids are a random permutation so slot order carries no information
        // about which dots are shared.
        let n = points.len();
        let mut ids: Vec<u32> = (0..n as u32).collect();
        rng::shuffle(&mut rng, &mut ids);

        let mut entities = Vec::with_capacity(n);
        for (i, p) in points.iter().enumerate() {
            let size = g.size_min + g.size_width * rng::unit_f64(&mut rng);
            let color = rng::uniform(&mut rng, g.color_min, g.color_max);
            entities.push(Entity {
                id: ids[i],
                x: p.0,
                y: p.1,
                size,
                color,
            });
        }
        let shared: Vec<u32> = ids[..num_shared].to_vec();
        let mut v0: Vec<u32> = shared.clone();
        v0.extend_from_slice(&ids[num_shared..num_shared + private]);
        let mut v1 = shared;
        v1.extend_from_slice(&ids[num_shared + private..]);
        v0.sort_unstable();
        v1.sort_unstable();
        entities.sort_by_key(|e| e.id);

        return Ok(World {
            world_id: format!("k{num_shared}-{seed:016x}"),
            num_shared,
            entities,
            views: [
                AgentView {
                    center_x: c0.0,
                    center_y: c0.1,
                    radius: r,
                    visible_ids: v0,
                },
                AgentView {
                    center_x: c1.0,
                    center_y: c1.1,
                    radius: r,
                    visible_ids: v1,
                },
            ],
            seed,
        });
    }
    Err(WorldError::Exhausted(g.max_reject))
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn sample_region(
    rng: &mut ChaCha8Rng,
    (x0, x1, y0, y1): (f64, f64, f64, f64),
    inside: impl Fn((f64, f64)) -> bool,
    limit: usize,
) -> Option<(f64, f64)> {
    for _ in 0..limit {
        let p = (rng::uniform(rng, x0, x1), rng::uniform(rng, y0, y1));
        if inside(p) {
            return Some(p);
        }
    }
    None
}

/// One agent's normalized view: 7 rows of `(x, y, size, color)`, each
/// component in `(-1, 1)`, rows in ascending id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub agent: usize,
    pub rows: Vec<[f64; 4]>,
    pub entity_ids: Vec<u32>,
}

impl Observation {
    pub fn flatten(&self) -> Vec<f64> {
        self.rows.iter().flat_map(|r| r.iter().copied()).collect()
    }
}

/// Observation under the default attribute ranges.
pub fn observe(world: &World, agent: usize) -> Result<Observation, WorldError> {
    observe_with(world, agent, &AttributeRanges::default())
}

pub fn observe_with(
    world: &World,
    agent: usize,
    ranges: &AttributeRanges,
) -> Result<Observation, WorldError> {
    if agent > 1 {
        return Err(WorldError::BadAgent(agent));
    }
    let view = &world.views[agent];
    let entities = world.visible_entities(agent);
    let rows = entities
        .iter()
        .map(|e| {
            [
                (e.x - view.center_x) / view.radius,
                (e.y - view.center_y) / view.radius,
                ranges.normalize_size(e.size),
                ranges.normalize_color(e.color),
            ]
        })
        .collect();
    Ok(Observation {
        agent,
        rows,
        entity_ids: entities.iter().map(|e| e.id).collect(),
    })
}

/// A broken world invariant and the ids involved.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "invariant", rename_all = "snake_case")]
pub enum Violation {
    SharedCountOutOfRange { num_shared: usize },
    EntityCount { expected: usize, found: usize },
    DuplicateId { id: u32 },
    ViewSize { agent: usize, found: usize },
    ViewNotAscending { agent: usize },
    UnknownId { agent: usize, id: u32 },
    SharedCount { expected: usize, found: usize },
    Unobserved { id: u32 },
    OutsideView { agent: usize, id: u32 },
    ExclusiveTooClose { agent: usize, id: u32 },
    TooClose { a: u32, b: u32 },
    SizeRange { id: u32 },
    ColorRange { id: u32 },
    NonFinite { id: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", serde_json::to_string(self).unwrap_or_default())
    }
}

/// Every invariant, checked against the default [`Geometry`].
pub fn validate_world(world: &World) -> Vec<Violation> {
    validate_world_with(world, &Geometry::default())
}

pub fn validate_world_with(world: &World, geometry: &Geometry) -> Vec<Violation> {
    let mut out = structural_violations(world);
    let g = geometry;
    for (agent, view) in world.views.iter().enumerate() {
        let other = &world.views[1 - agent];
        let inner = view.radius * (1.0 - g.margin);
        let outer = other.radius * (1.0 + g.margin);
        for &id in &view.visible_ids {
            let Some(e) = world.entity(id) else { continue };
            if view.distance_to(e) > inner + 1e-12 {
                out.push(Violation::OutsideView { agent, id });
            }
            if !other.sees(id) && other.distance_to(e) < outer - 1e-12 {
                out.push(Violation::ExclusiveTooClose { agent, id });
            }
        }
    }
    let min_d = g.min_distance * g.radius;
    for (i, a) in world.entities.iter().enumerate() {
        for b in &world.entities[i + 1..] {
            if (a.x - b.x).hypot(a.y - b.y) < min_d {
                out.push(Violation::TooClose { a: a.id, b: b.id });
            }
        }
    }
    let ranges = g.ranges();
    for e in &world.entities {
        if !(ranges.size_min..=ranges.size_max).contains(&e.size) {
            out.push(Violation::SizeRange { id: e.id });
        }
        if !(ranges.color_min..=ranges.color_max).contains(&e.color) {
            out.push(Violation::ColorRange { id: e.id });
        }
    }
    out
}

/// Counting and visibility invariants only; no distance or range constants.
/// This is what worlds from outside the generator are held to.
pub fn structural_violations(world: &World) -> Vec<Violation> {
    let mut out = Vec::new();
    let k = world.num_shared;
    if !SHARED_COUNTS.contains(&k) {
        out.push(Violation::SharedCountOutOfRange { num_shared: k });
    }
    let expected = 2 * VIEW_SIZE - k.min(2 * VIEW_SIZE);
    if world.entities.len() != expected {
        out.push(Violation::EntityCount {
            expected,
            found: world.entities.len(),
        });
    }
    let mut ids = BTreeSet::new();
    for e in &world.entities {
        if !ids.insert(e.id) {
            out.push(Violation::DuplicateId { id: e.id });
        }
        if ![e.x, e.y, e.size, e.color].iter().all(|v| v.is_finite()) {
            out.push(Violation::NonFinite { id: e.id });
        }
    }
    for (agent, view) in world.views.iter().enumerate() {
        if view.visible_ids.len() != VIEW_SIZE {
            out.push(Violation::ViewSize {
                agent,
                found: view.visible_ids.len(),
            });
        }
        if view.visible_ids.windows(2).any(|w| w[0] >= w[1]) {
            out.push(Violation::ViewNotAscending { agent });
        }
        for &id in &view.visible_ids {
            if !ids.contains(&id) {
                out.push(Violation::UnknownId { agent, id });
            }
        }
    }
    let v0: BTreeSet<u32> = world.views[0].visible_ids.iter().copied().collect();
    let v1: BTreeSet<u32> = world.views[1].visible_ids.iter().copied().collect();
    let shared = v0.intersection(&v1).count();
    if shared != k {
        out.push(Violation::SharedCount {
            expected: k,
            found: shared,
        });
    }
    for id in &ids {
        if !v0.contains(id) && !v1.contains(id) {
            out.push(Violation::Unobserved { id: *id });
        }
    }
    out
}

/// Read one world per line.
pub fn read_worlds_jsonl(text: &str) -> Result<Vec<World>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Draw `k` uniformly from [`SHARED_COUNTS`].
pub fn draw_shared_count<R: RngCore + ?Sized>(rng: &mut R) -> usize {
    SHARED_COUNTS[rng::below(rng, SHARED_COUNTS.len() as u64) as usize]
}

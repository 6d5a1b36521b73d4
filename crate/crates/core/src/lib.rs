//! Two-player collaborative reference game over continuous, partially
//! observable dot worlds: world generation, session rules, transcripts and
//! corpus tooling, corpus statistics, and target-selection baselines.

pub mod analysis;
pub mod checks;
pub mod corpus;
pub mod engine;
pub mod model;
pub mod rng;
pub mod synth;
pub mod world;

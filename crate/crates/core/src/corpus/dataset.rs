use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use super::transcript::Transcript;
use crate::engine::Action;
use crate::rng;
use crate::world::{observe_with, AttributeRanges, Observation};

pub const UNK: &str = "<unk>";
pub const SELF_SPEAKER: &str = "<you>";
pub const PARTNER_SPEAKER: &str = "<them>";
pub const END_OF_DIALOGUE: &str = "<eod>";
pub const MIN_COUNT: usize = 10;

const SPECIALS: [&str; 4] = [UNK, SELF_SPEAKER, PARTNER_SPEAKER, END_OF_DIALOGUE];

/// Token index. Index 0 is the unknown token; the speaker and end markers
/// follow, then every training token seen at least `min_count` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_count: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    format: String,
    min_count: usize,
    tokens: Vec<String>,
}

impl From<VocabFile> for Vocabulary {
    fn from(f: VocabFile) -> Self {
        let index = f
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens: f.tokens,
            index,
            min_count: f.min_count,
        }
    }
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile {
            format: "grounding-vocab-1".into(),
            min_count: v.min_count,
            tokens: v.tokens,
        }
    }
}

impl Vocabulary {
    /// Keep tokens with count `>= min_count`, most frequent first, ties by
    /// byte order.
    pub fn from_counts(counts: &BTreeMap<String, usize>, min_count: usize) -> Vocabulary {
        let mut kept: Vec<(&String, usize)> = counts
            .iter()
            .filter(|(t, c)| **c >= min_count && !SPECIALS.contains(&t.as_str()))
            .map(|(t, c)| (t, *c))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens: Vec<String> = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t.clone()))
            .collect();
        VocabFile {
            format: String::new(),
            min_count,
            tokens,
        }
        .into()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Token counts over all messages in `transcripts`.
pub fn token_counts(transcripts: &[Transcript]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for t in transcripts {
        for (_, text) in t.messages() {
            for tok in tokenize(text) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Vocabulary from the training split only.
pub fn build_vocab(train: &[Transcript]) -> Vocabulary {
    Vocabulary::from_counts(&token_counts(train), MIN_COUNT)
}

/// One target-selection instance: an agent's observation, the dialogue from
/// its side, and the slot it selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetExample {
    pub dialogue_id: String,
    pub agent: usize,
    pub observation: Observation,
    pub token_ids: Vec<usize>,
    pub label: usize,
    pub success: bool,
    pub num_shared: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ExampleSet {
    pub examples: Vec<TargetExample>,
    /// Perspectives dropped for lacking that agent's selection.
    pub skipped: usize,
}

/// Dialogue tokens as seen by `agent`: each utterance opens with a
/// self/partner marker and the stream closes with the end marker.
pub fn encode_dialogue(t: &Transcript, agent: usize, vocab: &Vocabulary) -> Vec<usize> {
    let mut ids = Vec::new();
    for e in &t.events {
        if let Action::Message { text } = &e.action {
            ids.push(vocab.id(if e.agent == agent {
                SELF_SPEAKER
            } else {
                PARTNER_SPEAKER
            }));
            ids.extend(tokenize(text).iter().map(|tok| vocab.id(tok)));
        }
    }
    ids.push(vocab.id(END_OF_DIALOGUE));
    ids
}

/// Two examples per dialogue, one per agent with a recorded selection.
pub fn make_examples(transcripts: &[Transcript], vocab: &Vocabulary) -> ExampleSet {
    make_examples_with(transcripts, vocab, &AttributeRanges::default())
}

pub fn make_examples_with(
    transcripts: &[Transcript],
    vocab: &Vocabulary,
    ranges: &AttributeRanges,
) -> ExampleSet {
    let mut set = ExampleSet::default();
    for t in transcripts {
        for agent in 0..2 {
            let label = t.outcome.selections[agent].and_then(|id| t.world.views[agent].slot_of(id));
            let Some(label) = label else {
                set.skipped += 1;
                continue;
            };
            let observation = observe_with(&t.world, agent, ranges).expect("agent is 0 or 1");
            set.examples.push(TargetExample {
                dialogue_id: t.dialogue_id.clone(),
                agent,
                observation,
                token_ids: encode_dialogue(t, agent, vocab),
                label,
                success: t.is_success(),
                num_shared: t.num_shared,
            });
        }
    }
    set
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<Transcript>,
    pub valid: Vec<Transcript>,
    pub test: Vec<Transcript>,
}

/// 8:1:1 split by dialogue. Validation and test each get `round(n / 10)`
/// dialogues; the order is a seeded shuffle of the id-sorted input.
pub fn split_dataset(transcripts: &[Transcript], seed: u64) -> Split {
    let mut all: Vec<&Transcript> = transcripts.iter().collect();
    all.sort_by(|a, b| a.dialogue_id.cmp(&b.dialogue_id));
    let mut r = rng::seeded(seed);
    rng::shuffle(&mut r, &mut all);
    let n = all.len();
    let tenth = (n as f64 / 10.0).round() as usize;
    let n_train = n - 2 * tenth;
    let owned = |s: &[&Transcript]| s.iter().map(|t| (*t).clone()).collect::<Vec<_>>();
    Split {
        train: owned(&all[..n_train]),
        valid: owned(&all[n_train..n_train + tenth]),
        test: owned(&all[n_train + tenth..]),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TestVariants {
    pub full: Vec<TargetExample>,
    /// One perspective per dialogue.
    pub uncorrelated: Vec<TargetExample>,
    /// `uncorrelated` restricted to successful dialogues.
    pub success_only: Vec<TargetExample>,
}

pub fn make_test_variants(full: &[TargetExample], seed: u64) -> TestVariants {
    let mut by_dialogue: BTreeMap<&str, Vec<&TargetExample>> = BTreeMap::new();
    for ex in full {
        by_dialogue.entry(&ex.dialogue_id).or_default().push(ex);
    }
    let mut r = rng::seeded(seed);
    let uncorrelated: Vec<TargetExample> = by_dialogue
        .values()
        .map(|group| (*group[rng::below(&mut r, group.len() as u64) as usize]).clone())
        .collect();
    let success_only = uncorrelated.iter().filter(|e| e.success).cloned().collect();
    TestVariants {
        full: full.to_vec(),
        uncorrelated,
        success_only,
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::engine::Status;
    use crate::synth;

    fn counts(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
        pairs.iter().map(|(t, c)| (t.to_string(), *c)).collect()
    }

    #[test]
    fn cutoff_boundary() {
        let v = Vocabulary::from_counts(&counts(&[("nine", 9), ("ten", 10), ("many", 50)]), 10);
        assert_eq!(v.id("nine"), 0);
        assert_ne!(v.id("ten"), 0);
        assert_eq!(v.id("many"), 4);
        assert_eq!(v.id("ten"), 5);
        assert_eq!(v.len(), 6);
    }

    #[test]
    fn vocab_is_a_bijection() {
        let v = build_vocab(&synth::corpus(200, 3));
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), i);
        }
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn two_examples_per_dialogue() {
        let ts = synth::corpus(1, 8);
        let v = build_vocab(&ts);
        let set = make_examples(&ts, &v);
        assert_eq!(set.examples.len(), 2);
        assert_eq!(set.skipped, 0);
        let (a, b) = (&set.examples[0], &set.examples[1]);
        assert_ne!(a.observation, b.observation);
        // identical streams once the speaker markers are swapped
        let you = v.id(SELF_SPEAKER);
        let them = v.id(PARTNER_SPEAKER);
        let swapped: Vec<usize> = a
            .token_ids
            .iter()
            .map(|&t| {
                if t == you {
                    them
                } else if t == them {
                    you
                } else {
                    t
                }
            })
            .collect();
        assert_eq!(swapped, b.token_ids);
        assert_eq!(*a.token_ids.last().unwrap(), v.id(END_OF_DIALOGUE));
        assert!([you, them].contains(&a.token_ids[0]));
    }

    #[test]
    fn failed_dialogue_labels_differ() {
        let ts: Vec<_> = synth::corpus(100, 2)
            .into_iter()
            .filter(|t| t.outcome.status == Status::Failure)
            .take(1)
            .collect();
        let set = make_examples(&ts, &build_vocab(&ts));
        let ids: Vec<u32> = set
            .examples
            .iter()
            .map(|e| e.observation.entity_ids[e.label])
            .collect();
        assert_ne!(ids[0], ids[1]);
    }

    #[test]
    fn missing_selection_is_skipped() {
        let mut ts = synth::corpus(2, 4);
        ts[0].outcome.selections[1] = None;
        let set = make_examples(&ts, &build_vocab(&ts));
        assert_eq!(set.examples.len(), 3);
        assert_eq!(set.skipped, 1);
    }

    #[test]
    fn split_is_disjoint_and_deterministic() {
        let ts = synth::corpus(57, 1);
        let s = split_dataset(&ts, 3);
        assert_eq!(s, split_dataset(&ts, 3));
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (45, 6, 6));
        let ids = |v: &[Transcript]| {
            v.iter()
                .map(|t| t.dialogue_id.clone())
                .collect::<BTreeSet<_>>()
        };
        assert!(ids(&s.train).is_disjoint(&ids(&s.test)));
        assert!(ids(&s.train).is_disjoint(&ids(&s.valid)));
        assert!(ids(&s.valid).is_disjoint(&ids(&s.test)));
    }

    #[test]
    fn variants_shape() {
        let ts = synth::corpus(40, 6);
        let ex = make_examples(&ts, &build_vocab(&ts)).examples;
        let v = make_test_variants(&ex, 1);
        assert_eq!(v.uncorrelated.len(), 40);
        assert!(v.success_only.iter().all(|e| v.uncorrelated.contains(e)));
        assert_eq!(
            v.success_only.len(),
            ts.iter().filter(|t| t.is_success()).count()
        );
    }
}

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Transcript};

/// Summary statistics for one group of dialogues.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub dialogues: usize,
    pub utterances: usize,
    pub tokens: usize,
    pub avg_tokens_per_utterance: f64,
    /// A turn is one message event.
    pub avg_turns_per_dialogue: f64,
    pub success_rate: f64,
    pub unique_tokens: usize,
    /// Share of all tokens covered by the most frequent 10% of types
    /// (rounded up to a whole type).
    pub top_decile_occupancy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub overall: GroupStats,
    /// Keyed by shared count.
    pub by_shared: BTreeMap<usize, GroupStats>,
}

#[derive(Default)]
struct Acc {
    dialogues: usize,
    successes: usize,
    utterances: usize,
    counts: HashMap<String, usize>,
}

impl Acc {
    fn add(&mut self, t: &Transcript, tokens: &[Vec<String>]) {
        self.dialogues += 1;
        self.successes += t.is_success() as usize;
        self.utterances += tokens.len();
        for utt in tokens {
            for tok in utt {
                *self.counts.entry(tok.clone()).or_insert(0) += 1;
            }
        }
    }

    fn finish(self) -> GroupStats {
        let tokens: usize = self.counts.values().sum();
        let mut freqs: Vec<usize> = self.counts.values().copied().collect();
        freqs.sort_unstable_by(|a, b| b.cmp(a));
        let top = freqs.len().div_ceil(10);
        let covered: usize = freqs[..top].iter().sum();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        GroupStats {
            dialogues: self.dialogues,
            utterances: self.utterances,
            tokens,
            avg_tokens_per_utterance: ratio(tokens, self.utterances),
            avg_turns_per_dialogue: ratio(self.utterances, self.dialogues),
            success_rate: ratio(self.successes, self.dialogues),
            unique_tokens: freqs.len(),
            top_decile_occupancy: ratio(covered, tokens),
        }
    }
}

pub fn basic_stats(transcripts: &[Transcript]) -> CorpusStats {
    let mut overall = Acc::default();
    let mut groups: BTreeMap<usize, Acc> = BTreeMap::new();
    for t in transcripts {
        let tokens: Vec<Vec<String>> = t.messages().map(|(_, text)| tokenize(text)).collect();
        overall.add(t, &tokens);
        groups.entry(t.num_shared).or_default().add(t, &tokens);
    }
    CorpusStats {
        overall: overall.finish(),
        by_shared: groups.into_iter().map(|(k, a)| (k, a.finish())).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Action, Event, Outcome};
    use crate::synth;

    fn with_messages(msgs: &[&str]) -> Transcript {
        let mut t = synth::corpus(1, 0).remove(0);
        t.events = msgs
            .iter()
            .enumerate()
            .map(|(i, m)| Event {
                ts: i as u64,
                agent: i % 2,
                action: Action::Message {
                    text: m.to_string(),
                },
            })
            .collect();
        t.outcome = Outcome::from_selections([Some(1), Some(1)]);
        t
    }

    #[test]
    fn two_turns_three_tokens() {
        let s = basic_stats(&[with_messages(&["a b c", "d e f"])]);
        assert_eq!(s.overall.avg_tokens_per_utterance, 3.0);
        assert_eq!(s.overall.avg_turns_per_dialogue, 2.0);
        assert_eq!(s.overall.unique_tokens, 6);
        assert_eq!(s.overall.success_rate, 1.0);
    }

    #[test]
    fn empty_corpus_is_zero() {
        let s = basic_stats(&[]);
        assert_eq!(s.overall, GroupStats::default());
        assert!(s.by_shared.is_empty());
    }

    #[test]
    fn top_decile() {
        // 10 types: one with 91 tokens, nine with 1 → top type covers 91%
        let mut text = vec!["x"; 91];
        let rest = ["a", "b", "c", "d", "e", "f", "g", "h", "i"];
        text.extend(rest);
        let s = basic_stats(&[with_messages(&[&text.join(" ")])]);
        assert_eq!(s.overall.unique_tokens, 10);
        assert!((s.overall.top_decile_occupancy - 0.91).abs() < 1e-12);
    }

    #[test]
    fn order_invariant() {
        let mut c = synth::corpus(30, 2);
        let a = basic_stats(&c);
        c.reverse();
        assert_eq!(a, basic_stats(&c));
    }
}

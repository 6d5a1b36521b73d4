use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Transcript};

/// Keywords for one category of hedging or degree language. Multiword
/// keywords match as token sequences after tokenization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuanceDictionary {
    pub category: String,
    pub keywords: Vec<String>,
}

const SHIPPED: [&str; 5] = [
    include_str!("../../../../data/nuance/approximation.json"),
    include_str!("../../../../data/nuance/exactness.json"),
    include_str!("../../../../data/nuance/subtlety.json"),
    include_str!("../../../../data/nuance/extremity.json"),
    include_str!("../../../../data/nuance/uncertainty.json"),
];

impl NuanceDictionary {
    /// The five dictionaries under `data/nuance/`, compiled in.
    pub fn shipped() -> Vec<NuanceDictionary> {
        SHIPPED
            .iter()
            .map(|s| serde_json::from_str(s).expect("shipped dictionary parses"))
            .collect()
    }

    /// Every `*.json` in `dir`, sorted by file name.
    pub fn load_dir(dir: &Path) -> std::io::Result<Vec<NuanceDictionary>> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths
            .iter()
            .map(|p| {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text).map_err(|e| {
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("{}: {e}", p.display()),
                    )
                })
            })
            .collect()
    }

    fn patterns(&self) -> Vec<Vec<String>> {
        self.keywords
            .iter()
            .map(|k| tokenize(k))
            .filter(|p| !p.is_empty())
            .collect()
    }
}

/// Occurrences of `pattern` as a contiguous run in `tokens`.
fn occurrences(tokens: &[String], pattern: &[String]) -> usize {
    if pattern.len() > tokens.len() {
        return 0;
    }
    tokens
        .windows(pattern.len())
        .filter(|w| *w == pattern)
        .count()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NuanceRates {
    pub utterances: usize,
    pub counts: BTreeMap<String, usize>,
    /// Keyword occurrences per 100 utterances.
    pub per_100_utterances: BTreeMap<String, f64>,
}

pub fn nuance_counts(transcripts: &[Transcript], dictionaries: &[NuanceDictionary]) -> NuanceRates {
    let compiled: Vec<(&str, Vec<Vec<String>>)> = dictionaries
        .iter()
        .map(|d| (d.category.as_str(), d.patterns()))
        .collect();
    let mut counts: BTreeMap<String, usize> =
        compiled.iter().map(|(c, _)| (c.to_string(), 0)).collect();
    let mut utterances = 0;
    for t in transcripts {
        for (_, text) in t.messages() {
            utterances += 1;
            let tokens = tokenize(text);
            for (cat, patterns) in &compiled {
                let n: usize = patterns.iter().map(|p| occurrences(&tokens, p)).sum();
                *counts.get_mut(*cat).unwrap() += n;
            }
        }
    }
    let per_100_utterances = counts
        .iter()
        .map(|(c, n)| {
            let rate = if utterances == 0 {
                0.0
            } else {
                100.0 * *n as f64 / utterances as f64
            };
            (c.clone(), rate)
        })
        .collect();
    NuanceRates {
        utterances,
        counts,
        per_100_utterances,
    }
}

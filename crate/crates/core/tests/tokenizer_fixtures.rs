//! Reference tokenizations frozen from NLTK's word tokenizer (lowercased).

use grounding_core::corpus::tokenize;
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    input: String,
    tokens: Vec<String>,
}

#[test]
fn matches_reference_fixtures() {
    let cases: Vec<Case> = serde_json::from_str(include_str!("fixtures/tokenize.json")).unwrap();
    let mut failures = Vec::new();
    for c in &cases {
        let got = tokenize(&c.input);
        if got != c.tokens {
            failures.push(format!(
                "{:?}\n  want {:?}\n  got  {:?}",
                c.input, c.tokens, got
            ));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

// Double quotes are excluded: a closing `''` preceded by a space reads as an
// opening quote on the second pass.
#[test]
fn retokenizing_joined_output_is_identity() {
    let cases: Vec<Case> = serde_json::from_str(include_str!("fixtures/tokenize.json")).unwrap();
    for c in cases.iter().filter(|c| !c.input.contains('"')) {
        let once = tokenize(&c.input);
        assert_eq!(tokenize(&once.join(" ")), once, "{:?}", c.input);
    }
}

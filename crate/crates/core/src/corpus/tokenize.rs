//! Treebank-style word tokenization, lowercased.
//!
//! The rule cascade mirrors NLTK's `NLTKWordTokenizer` (starting quotes,
//! punctuation, brackets, ending quotes and clitics, MacIntyre contractions),
//! preceded by a plain sentence split on `.`, `!` or `?` followed by
//! whitespace, which stands in for the Punkt sentence splitter.

use std::sync::OnceLock;

use fancy_regex::Regex;

struct Rule {
    re: Regex,
    rep: &'static str,
}

fn rule(pattern: &str, rep: &'static str) -> Rule {
    Rule {
        re: Regex::new(pattern).expect("tokenizer pattern"),
        rep,
    }
}

struct Rules {
    starting_quotes: Vec<Rule>,
    punctuation: Vec<Rule>,
    parens: Rule,
    double_dashes: Rule,
    ending_quotes: Vec<Rule>,
    contractions: Vec<Rule>,
}

fn rules() -> &'static Rules {
    static RULES: OnceLock<Rules> = OnceLock::new();
    RULES.get_or_init(|| Rules {
        starting_quotes: vec![
            rule(r"([«“‘„]|[`]+)", " $1 "),
            rule(r#"^""#, "``"),
            rule(r"(``)", " $1 "),
            rule(r#"([ (\[{<])("|'{2})"#, "$1 `` "),
            rule(r"(?i)(?<!\w)(')(?!(?:re|ve|ll|m|t|s|d|n)\b)(?=\w)", "$1 "),
        ],
        punctuation: vec![
            rule(r#"([^.])(\.)([\])}>"'»”’ ]*)\s*$"#, "$1 $2 $3 "),
            rule(r"([:,])([^\d])", " $1 $2"),
            rule(r"([:,])$", " $1 "),
            rule(r"\.{2,}", " $0 "),
            rule(r"[;@#$%&]", " $0 "),
            rule(r"[\u{2012}-\u{2015}]", " $0 "),
            rule(r#"([^.])(\.)([\])}>"']*)\s*$"#, "$1 $2$3 "),
            rule(r"[?!]", " $0 "),
            rule(r"([^'])' ", "$1 ' "),
            rule(r"[*]", " $0 "),
        ],
        parens: rule(r"[\]\[(){}<>]", " $0 "),
        double_dashes: rule(r"--", " -- "),
        ending_quotes: vec![
            rule(r"([»”’])", " $1 "),
            rule(r"''", " '' "),
            rule(r#"""#, " '' "),
            rule(r"\s+", " "),
            rule(r"([^' ])('[sS]|'[mM]|'[dD]|') ", "$1 $2 "),
            rule(r"([^' ])('ll|'LL|'re|'RE|'ve|'VE|n't|N'T) ", "$1 $2 "),
        ],
        contractions: vec![
            rule(r"(?i)\b(can)(not)\b", " $1 $2 "),
            rule(r"(?i)\b(d)('ye)\b", " $1 $2 "),
            rule(r"(?i)\b(gim)(me)\b", " $1 $2 "),
            rule(r"(?i)\b(gon)(na)\b", " $1 $2 "),
            rule(r"(?i)\b(got)(ta)\b", " $1 $2 "),
            rule(r"(?i)\b(lem)(me)\b", " $1 $2 "),
            rule(r"(?i)\b(more)('n)\b", " $1 $2 "),
            rule(r"(?i)\b(wan)(na)(?=\s)", " $1 $2 "),
            rule(r"(?i) ('t)(is)\b", " $1 $2 "),
            rule(r"(?i) ('t)(was)\b", " $1 $2 "),
        ],
    })
}

fn apply(rule: &Rule, text: String) -> String {
    match rule.re.replace_all(&text, rule.rep) {
        std::borrow::Cow::Borrowed(_) => text,
        std::borrow::Cow::Owned(s) => s,
    }
}

/// Split on sentence-final punctuation followed by whitespace.
fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut prev: Option<char> = None;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if c.is_whitespace() && matches!(prev, Some('.' | '!' | '?')) {
            let piece = text[start..i].trim();
            if !piece.is_empty() {
                out.push(piece);
            }
            while let Some((_, n)) = iter.peek() {
                if n.is_whitespace() {
                    iter.next();
                } else {
                    break;
                }
            }
            start = iter.peek().map_or(text.len(), |(j, _)| *j);
            prev = None;
            continue;
        }
        prev = Some(c);
    }
    let tail = text[start.min(text.len())..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

fn word_tokenize(sentence: &str) -> Vec<String> {
    let r = rules();
    let mut text = sentence.to_string();
    for rule in &r.starting_quotes {
        text = apply(rule, text);
    }
    for rule in &r.punctuation {
        text = apply(rule, text);
    }
    text = apply(&r.parens, text);
    text = apply(&r.double_dashes, text);
    text = format!(" {text} ");
    for rule in &r.ending_quotes {
        text = apply(rule, text);
    }
    for rule in &r.contractions {
        text = apply(rule, text);
    }
    text.split_whitespace().map(str::to_string).collect()
}

/// Tokenize an utterance and lowercase every token.
pub fn tokenize(text: &str) -> Vec<String> {
    sentences(text)
        .into_iter()
        .flat_map(word_tokenize)
        .map(|t| t.to_lowercase())
        .collect()
}

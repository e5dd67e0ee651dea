//! Category word lists, tokenization and stance scoring.
//!
//! A lexicon directory holds one UTF-8 file per category
//! (`affiliation.txt`, `authority.txt`, `emotion.txt`, `negative.txt`,
//! `stance_pro.txt`, `stance_anti.txt`), one term per line. Lines whose first
//! non-blank character is `#` are comments. Terms are normalized with the same
//! tokenizer that is applied to tweets, so `#GetTheVaccine` and
//! `getthevaccine` are the same term and multi-word lines become phrases.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("unknown lexicon category `{0}`")]
    UnknownCategory(String),
    #[error("lexicon category `{0}` is empty")]
    EmptyCategory(Category),
    #[error("terms appear in both stance_pro and stance_anti: {0:?}")]
    OverlappingStance(Vec<String>),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Affiliation,
    Authority,
    Emotion,
    Negative,
    StancePro,
    StanceAnti,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Affiliation,
        Category::Authority,
        Category::Emotion,
        Category::Negative,
        Category::StancePro,
        Category::StanceAnti,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Affiliation => "affiliation",
            Category::Authority => "authority",
            Category::Emotion => "emotion",
            Category::Negative => "negative",
            Category::StancePro => "stance_pro",
            Category::StanceAnti => "stance_anti",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.txt", self.name())
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = LexiconError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| LexiconError::UnknownCategory(s.to_string()))
    }
}

/// Stance of a text towards the vaccine topic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    Pro,
    Anti,
    Neutral,
}

impl Stance {
    pub fn is_neutral(self) -> bool {
        self == Stance::Neutral
    }

    pub fn opposite(self) -> Stance {
        match self {
            Stance::Pro => Stance::Anti,
            Stance::Anti => Stance::Pro,
            Stance::Neutral => Stance::Neutral,
        }
    }

    /// Pro if `pro > anti`, Anti if `anti > pro`, Neutral on ties (including zero).
    pub fn from_counts(pro: usize, anti: usize) -> Stance {
        match pro.cmp(&anti) {
            std::cmp::Ordering::Greater => Stance::Pro,
            std::cmp::Ordering::Less => Stance::Anti,
            std::cmp::Ordering::Equal => Stance::Neutral,
        }
    }
}

/// Anything that can assign a stance to a text.
///
/// The lexicon implements this with term counting; an external classifier can
/// be swapped in at configuration time.
pub trait StanceClassifier: Send + Sync {
    fn stance(&self, text: &str) -> Stance;

    /// Same as [`StanceClassifier::stance`] when the caller already tokenized
    /// `text`. Implementations that work on tokens override this.
    fn stance_of_tokens(&self, text: &str, tokens: &[String]) -> Stance {
        let _ = tokens;
        self.stance(text)
    }
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn is_url(chunk: &str) -> bool {
    let lower = chunk.trim_start_matches(|c: char| !c.is_alphanumeric());
    let lower = lower.get(..8.min(lower.len())).unwrap_or("").to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

/// Drops the tail of a chunk starting at an embedded URL scheme.
fn cut_embedded_url(chunk: &str) -> &str {
    let lower = chunk.to_ascii_lowercase();
    match (lower.find("http://"), lower.find("https://")) {
        (None, None) => chunk,
        (a, b) => {
            let at = a.unwrap_or(usize::MAX).min(b.unwrap_or(usize::MAX));
            &chunk[..at]
        }
    }
}

/// Splits one whitespace-free chunk into lowercase word tokens, removing
/// @mentions. A mention is an `@` at the chunk start or after a non-word
/// character, followed by word characters or underscores.
fn push_chunk_tokens(chunk: &str, out: &mut Vec<String>) {
    let mut current = String::new();
    let mut prev: Option<char> = None;
    let mut in_mention = false;

    let flush = |current: &mut String, out: &mut Vec<String>| {
        let word = current.trim_matches(is_apostrophe);
        if !word.is_empty() {
            let mut token = String::with_capacity(word.len());
            for c in word.chars() {
                if is_apostrophe(c) {
                    token.push('\'');
                } else {
                    token.extend(c.to_lowercase());
                }
            }
            out.push(token);
        }
        current.clear();
    };

    for c in chunk.chars() {
        if in_mention {
            if c.is_alphanumeric() || c == '_' {
                prev = Some(c);
                continue;
            }
            in_mention = false;
        }
        if c == '@' && prev.is_none_or(|p| !p.is_alphanumeric()) {
            flush(&mut current, out);
            in_mention = true;
        } else if c.is_alphanumeric() || is_apostrophe(c) {
            current.push(c);
        } else {
            flush(&mut current, out);
        }
        prev = Some(c);
    }
    flush(&mut current, out);
}

/// Unicode-aware word tokenizer.
///
/// URLs and @mentions are removed, `#` is stripped from hashtags, every other
/// non-alphanumeric character separates words except apostrophes inside a
/// word. Output is lowercase.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        if is_url(chunk) {
            continue;
        }
        push_chunk_tokens(cut_embedded_url(chunk), &mut out);
    }
    out
}

/// Removes URL chunks and returns the remaining text with single spaces.
pub fn strip_urls(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for chunk in text.split_whitespace() {
        if is_url(chunk) {
            continue;
        }
        let kept = cut_embedded_url(chunk);
        if kept.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(kept);
    }
    out
}

/// Splits text into sentences at runs of `.`, `!` and `?` after URL removal.
/// Sentences without any word token are dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    strip_urls(text)
        .split(['.', '!', '?'])
        .map(str::trim)
        .filter(|s| !tokenize(s).is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Default)]
struct TermSet {
    /// Display form of every term (tokens joined by a single space).
    terms: BTreeSet<String>,
    singles: HashSet<String>,
    /// Multi-token phrases keyed by first token, longest first.
    phrases: HashMap<String, Vec<Vec<String>>>,
}

fn is_comment(line: &str) -> bool {
    line.strip_prefix('#')
        .is_some_and(|rest| rest.chars().next().is_none_or(char::is_whitespace))
}

impl TermSet {
    fn insert(&mut self, tokens: Vec<String>) {
        if tokens.is_empty() {
            return;
        }
        self.terms.insert(tokens.join(" "));
        if tokens.len() == 1 {
            self.singles.insert(tokens.into_iter().next().unwrap_or_default());
        } else {
            let entry = self.phrases.entry(tokens[0].clone()).or_default();
            if !entry.contains(&tokens) {
                entry.push(tokens);
                entry.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
            }
        }
    }

    /// Greedy, non-overlapping, longest-first matching from left to right.
    /// Calls `hit` with the matched token span.
    fn scan(&self, tokens: &[String], mut hit: impl FnMut(&[String])) {
        let mut i = 0;
        while i < tokens.len() {
            let token = &tokens[i];
            let mut advanced = false;
            if let Some(candidates) = self.phrases.get(token) {
                for phrase in candidates {
                    let end = i + phrase.len();
                    if end <= tokens.len() && tokens[i..end] == phrase[..] {
                        hit(&tokens[i..end]);
                        i = end;
                        advanced = true;
                        break;
                    }
                }
            }
            if advanced {
                continue;
            }
            if self.singles.contains(token) {
                hit(&tokens[i..=i]);
            }
            i += 1;
        }
    }

    fn count(&self, tokens: &[String]) -> usize {
        let mut n = 0;
        self.scan(tokens, |_| n += 1);
        n
    }

    fn matched_terms(&self, tokens: &[String]) -> BTreeSet<String> {
        let mut found = BTreeSet::new();
        self.scan(tokens, |span| {
            found.insert(span.join(" "));
        });
        found
    }
}

/// Six category term sets plus the SHA-256 digest of each source file.
#[derive(Debug, Clone)]
pub struct Lexicon {
    sets: Vec<TermSet>,
    digests: BTreeMap<Category, String>,
}

const BUILTIN: [(Category, &str); 6] = [
    (Category::Affiliation, include_str!("../lexicon/affiliation.txt")),
    (Category::Authority, include_str!("../lexicon/authority.txt")),
    (Category::Emotion, include_str!("../lexicon/emotion.txt")),
    (Category::Negative, include_str!("../lexicon/negative.txt")),
    (Category::StancePro, include_str!("../lexicon/stance_pro.txt")),
    (Category::StanceAnti, include_str!("../lexicon/stance_anti.txt")),
];

impl Lexicon {
    /// The word lists shipped with the crate.
    pub fn builtin() -> Lexicon {
        Lexicon::from_sources(BUILTIN.iter().map(|(c, s)| (*c, s.to_string())))
            .expect("builtin lexicon is valid")
    }

    /// Loads `<category>.txt` for every category from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Lexicon, LexiconError> {
        let mut sources = Vec::new();
        for category in Category::ALL {
            let path = dir.join(category.file_name());
            let text = std::fs::read_to_string(&path).map_err(|source| LexiconError::Io {
                path: path.display().to_string(),
                source,
            })?;
            sources.push((category, text));
        }
        Lexicon::from_sources(sources)
    }

    /// Builds a lexicon from `(category, file contents)` pairs. Categories not
    /// listed are empty, which fails validation.
    /// Lines that are blank after trimming, or start with `#` followed by
    /// whitespace (or nothing), are skipped; `#tag` is a term.
    pub fn from_sources(
        sources: impl IntoIterator<Item = (Category, String)>,
    ) -> Result<Lexicon, LexiconError> {
        let mut sets = vec![TermSet::default(); Category::ALL.len()];
        let mut digests = BTreeMap::new();
        for (category, text) in sources {
            digests.insert(category, hex::encode(Sha256::digest(text.as_bytes())));
            let set = &mut sets[category.index()];
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || is_comment(line) {
                    continue;
                }
                set.insert(tokenize(line));
            }
        }
        let lexicon = Lexicon { sets, digests };
        lexicon.validate()?;
        Ok(lexicon)
    }

    /// Builds a lexicon from in-memory term lists.
    pub fn from_terms<S: AsRef<str>>(
        terms: impl IntoIterator<Item = (Category, Vec<S>)>,
    ) -> Result<Lexicon, LexiconError> {
        Lexicon::from_sources(terms.into_iter().map(|(c, list)| {
            let text = list.iter().map(|t| t.as_ref()).collect::<Vec<_>>().join("\n");
            (c, text)
        }))
    }

    fn validate(&self) -> Result<(), LexiconError> {
        for category in Category::ALL {
            if self.sets[category.index()].terms.is_empty() {
                return Err(LexiconError::EmptyCategory(category));
            }
        }
        let pro = &self.set(Category::StancePro).terms;
        let anti = &self.set(Category::StanceAnti).terms;
        let overlap: Vec<String> = pro.intersection(anti).cloned().collect();
        if !overlap.is_empty() {
            return Err(LexiconError::OverlappingStance(overlap));
        }
        Ok(())
    }

    fn set(&self, category: Category) -> &TermSet {
        &self.sets[category.index()]
    }

    /// All terms of a category in display form.
    pub fn terms(&self, category: Category) -> &BTreeSet<String> {
        &self.set(category).terms
    }

    pub fn contains(&self, category: Category, term: &str) -> bool {
        self.set(category).terms.contains(term)
    }

    /// SHA-256 of each category's source text.
    pub fn digests(&self) -> &BTreeMap<Category, String> {
        &self.digests
    }

    /// Occurrences of category terms in `tokens`, with multiplicity.
    pub fn count(&self, tokens: &[String], category: Category) -> usize {
        self.set(category).count(tokens)
    }

    /// Distinct category terms present in `tokens`.
    pub fn matched_terms(&self, tokens: &[String], category: Category) -> BTreeSet<String> {
        self.set(category).matched_terms(tokens)
    }

    pub fn stance_of_tokens(&self, tokens: &[String]) -> Stance {
        Stance::from_counts(
            self.count(tokens, Category::StancePro),
            self.count(tokens, Category::StanceAnti),
        )
    }
}

impl StanceClassifier for Lexicon {
    fn stance(&self, text: &str) -> Stance {
        self.stance_of_tokens(&tokenize(text))
    }

    fn stance_of_tokens(&self, _text: &str, tokens: &[String]) -> Stance {
        Lexicon::stance_of_tokens(self, tokens)
    }
}

/// Counts category matches in a token list, looking the category up by name.
pub fn count_category(
    tokens: &[String],
    lexicon: &Lexicon,
    category: &str,
) -> Result<usize, LexiconError> {
    let category: Category = category.parse()?;
    Ok(lexicon.count(tokens, category))
}

/// Affiliation and authority terms found in a profile bio.
pub fn extract_profile_terms(bio: &str, lexicon: &Lexicon) -> (BTreeSet<String>, BTreeSet<String>) {
    let tokens = tokenize(bio);
    (
        lexicon.matched_terms(&tokens, Category::Affiliation),
        lexicon.matched_terms(&tokens, Category::Authority),
    )
}

pub fn stance_of(text: &str, lexicon: &Lexicon) -> Stance {
    lexicon.stance(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn small_lexicon() -> Lexicon {
        Lexicon::from_terms([
            (Category::Affiliation, vec!["dad", "teacher", "small business owner"]),
            (Category::Authority, vec!["ceo", "president", "surgeon general"]),
            (Category::Emotion, vec!["love", "fear", "disaster"]),
            (Category::Negative, vec!["disaster", "worse"]),
            (Category::StancePro, vec!["#GetTheVaccine", "vaccines work"]),
            (Category::StanceAnti, vec!["novaccine", "never have the vaccine"]),
        ])
        .unwrap()
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n\t").is_empty());
    }

    #[test]
    fn tokenize_strips_urls_mentions_and_hash() {
        assert_eq!(
            tokenize("Get the VACCINE! #NoVaccine @user1 https://x.co/a"),
            toks(&["get", "the", "vaccine", "novaccine"])
        );
    }

    #[test]
    fn tokenize_hyphen_and_apostrophe() {
        assert_eq!(tokenize("don't-panic"), toks(&["don't", "panic"]));
        assert_eq!(tokenize("'quoted' it’s"), toks(&["quoted", "it's"]));
    }

    #[test]
    fn tokenize_mentions_inside_punctuation() {
        assert_eq!(tokenize("RT @DrEricDing: Dangerous"), toks(&["rt", "dangerous"]));
        assert_eq!(tokenize("(@who_int) said"), toks(&["said"]));
        assert_eq!(tokenize("mail a@b.com"), toks(&["mail", "a", "b", "com"]));
    }

    #[test]
    fn tokenize_unicode() {
        assert_eq!(tokenize("Impfung GEGEN Öl"), toks(&["impfung", "gegen", "öl"]));
    }

    #[test]
    fn sentences_ignore_url_dots() {
        let s = split_sentences("Protect your community. #getthevaccine https://t.co/x.y");
        assert_eq!(s, vec!["Protect your community", "#getthevaccine"]);
        assert!(split_sentences("...!!").is_empty());
    }

    #[test]
    fn count_category_cases() {
        let lex = small_lexicon();
        assert_eq!(lex.count(&[], Category::Negative), 0);
        assert_eq!(lex.count(&toks(&["disaster", "disaster"]), Category::Negative), 2);
        let t = tokenize("this is a disaster and it's getting worse");
        assert_eq!(count_category(&t, &lex, "negative").unwrap(), 2);
        assert!(matches!(
            count_category(&t, &lex, "sarcasm"),
            Err(LexiconError::UnknownCategory(_))
        ));
    }

    #[test]
    fn phrases_are_greedy_and_non_overlapping() {
        let lex = small_lexicon();
        let t = tokenize("I will never have the vaccine, vaccines work vaccines work");
        assert_eq!(lex.count(&t, Category::StanceAnti), 1);
        assert_eq!(lex.count(&t, Category::StancePro), 2);
        let t = tokenize("a small business owner and dad");
        assert_eq!(
            lex.matched_terms(&t, Category::Affiliation),
            ["dad", "small business owner"].iter().map(|s| s.to_string()).collect()
        );
    }

    #[test]
    fn profile_terms() {
        let lex = small_lexicon();
        let (a, b) = extract_profile_terms("", &lex);
        assert!(a.is_empty() && b.is_empty());
        let (a, b) = extract_profile_terms("proud dad and teacher", &lex);
        assert_eq!(a, ["dad", "teacher"].iter().map(|s| s.to_string()).collect());
        assert!(b.is_empty());
        let (a, b) = extract_profile_terms("CEO of things", &lex);
        assert!(a.is_empty());
        assert_eq!(b, ["ceo".to_string()].into_iter().collect());
    }

    #[test]
    fn stance_rules() {
        let lex = small_lexicon();
        assert_eq!(stance_of("getthevaccine protect your community", &lex), Stance::Pro);
        assert_eq!(stance_of("", &lex), Stance::Neutral);
        assert_eq!(stance_of("#getthevaccine but #novaccine", &lex), Stance::Neutral);
        assert_eq!(stance_of("I will never have the vaccine", &lex), Stance::Anti);
    }

    #[test]
    fn validation_errors() {
        let err = Lexicon::from_terms([
            (Category::Affiliation, vec!["a"]),
            (Category::Authority, vec!["b"]),
            (Category::Emotion, vec!["c"]),
            (Category::Negative, vec!["d"]),
            (Category::StancePro, vec!["same"]),
            (Category::StanceAnti, vec!["same"]),
        ])
        .unwrap_err();
        assert!(matches!(err, LexiconError::OverlappingStance(_)));
        let err = Lexicon::from_terms([(Category::Affiliation, vec!["a"])]).unwrap_err();
        assert!(matches!(err, LexiconError::EmptyCategory(Category::Authority)));
    }

    #[test]
    fn builtin_loads_and_comments_skipped() {
        let lex = Lexicon::builtin();
        assert!(lex.contains(Category::Authority, "ceo"));
        assert!(lex.contains(Category::Authority, "surgeon general"));
        assert!(!lex.terms(Category::Emotion).iter().any(|t| t.starts_with('#')));
        assert_eq!(lex.digests().len(), 6);
    }

    proptest! {
        #[test]
        fn count_never_exceeds_token_count(words in proptest::collection::vec("[a-z]{1,8}|disaster|worse|vaccines|work", 0..40)) {
            let lex = small_lexicon();
            for c in Category::ALL {
                prop_assert!(lex.count(&words, c) <= words.len());
            }
        }

        #[test]
        fn stance_is_order_invariant(mut words in proptest::collection::vec("novaccine|getthevaccine|[a-z]{1,6}", 0..30), seed in any::<u64>()) {
            let lex = small_lexicon();
            let before = lex.stance_of_tokens(&words);
            let n = words.len();
            if n > 1 {
                let k = (seed as usize) % n;
                words.rotate_left(k);
                words.reverse();
            }
            prop_assert_eq!(before, lex.stance_of_tokens(&words));
        }

        #[test]
        fn profile_terms_are_vocabulary(bio in "[a-z ]{0,60}") {
            let lex = Lexicon::builtin();
            let (aff, auth) = extract_profile_terms(&bio, &lex);
            prop_assert!(aff.iter().all(|t| lex.contains(Category::Affiliation, t)));
            prop_assert!(auth.iter().all(|t| lex.contains(Category::Authority, t)));
        }
    }
}

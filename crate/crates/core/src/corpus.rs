//! Tweet and profile records, JSON-lines loading and per-user timelines.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::lexicon::{extract_profile_terms, Lexicon};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("not valid JSON: {0}")]
    InvalidJson(String),
    #[error("line is not a JSON object")]
    NotAnObject,
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("malformed value for `{field}`: {detail}")]
    MalformedValue { field: &'static str, detail: String },
    #[error("negative count in `{0}`")]
    NegativeCount(&'static str),
    #[error("bot_score {0} outside [0, 1]")]
    BotScoreOutOfRange(f64),
}

impl ParseError {
    /// Short grouping key for load reports.
    pub fn reason_key(&self) -> String {
        match self {
            ParseError::InvalidJson(_) => "invalid json".into(),
            ParseError::NotAnObject => "not an object".into(),
            ParseError::MissingField(f) => format!("missing field {f}"),
            ParseError::MalformedValue { field, .. } => format!("malformed {field}"),
            ParseError::NegativeCount(f) => format!("negative count {f}"),
            ParseError::BotScoreOutOfRange(_) => "bot_score out of range".into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate tweet_id `{0}`")]
    DuplicateTweetId(String),
    #[error("duplicate user_id `{0}`")]
    DuplicateUserId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("bot score {0} outside [0, 1]")]
pub struct DomainError(pub f64);

/// One post. Engagement counts are the regression targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub tweet_id: String,
    pub author_id: String,
    pub timestamp: i64,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retweeted_tweet_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quoted_tweet_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replied_to_tweet_id: Option<String>,
    #[serde(default)]
    pub mentioned_user_ids: Vec<String>,
    #[serde(default)]
    pub favorites: u64,
    #[serde(default)]
    pub retweets: u64,
    #[serde(default)]
    pub replies: u64,
    #[serde(default)]
    pub quotes: u64,
}

/// Identity under which repeated shares are grouped.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShareKey {
    Source(String),
    Text(String),
}

/// NFC-normalized, trimmed, case-preserved text.
pub fn normalize_text(text: &str) -> String {
    text.trim().nfc().collect()
}

impl TweetRecord {
    /// Source of a retweet or quote, retweet first.
    pub fn source_tweet_id(&self) -> Option<&str> {
        self.retweeted_tweet_id
            .as_deref()
            .or(self.quoted_tweet_id.as_deref())
    }

    fn is_rt_text(&self) -> bool {
        self.text.trim_start().starts_with("RT @")
    }

    /// Retweets and quotes. A record without source ids whose text starts
    /// with `RT @` also counts as a share.
    pub fn is_share(&self) -> bool {
        self.source_tweet_id().is_some() || self.is_rt_text()
    }

    pub fn is_retweet(&self) -> bool {
        self.retweeted_tweet_id.is_some() || (self.quoted_tweet_id.is_none() && self.is_rt_text())
    }

    pub fn share_key(&self) -> Option<ShareKey> {
        if let Some(id) = self.source_tweet_id() {
            Some(ShareKey::Source(id.to_string()))
        } else if self.is_rt_text() {
            Some(ShareKey::Text(normalize_text(&self.text)))
        } else {
            None
        }
    }

    pub fn engagement(&self, metric: Metric) -> u64 {
        match metric {
            Metric::Favorites => self.favorites,
            Metric::Retweets => self.retweets,
            Metric::Replies => self.replies,
            Metric::Quotes => self.quotes,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("tweet record serializes")
    }
}

/// Engagement metrics regressed on trigger indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Favorites,
    Retweets,
    Replies,
    Quotes,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Favorites, Metric::Retweets, Metric::Replies, Metric::Quotes];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Favorites => "favorites",
            Metric::Retweets => "retweets",
            Metric::Replies => "replies",
            Metric::Quotes => "quotes",
        }
    }
}

/// Account metadata. `affiliations` and `authority_terms` are filled by
/// [`Corpus::derive_profile_terms`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    #[serde(default)]
    pub bio: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bot_score: Option<f64>,
    #[serde(skip)]
    pub affiliations: BTreeSet<String>,
    #[serde(skip)]
    pub authority_terms: BTreeSet<String>,
}

impl UserProfile {
    pub fn new(user_id: impl Into<String>, bio: impl Into<String>, bot_score: Option<f64>) -> Self {
        UserProfile {
            user_id: user_id.into(),
            bio: bio.into(),
            bot_score,
            affiliations: BTreeSet::new(),
            authority_terms: BTreeSet::new(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("profile serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountClass {
    Bot,
    Human,
}

impl AccountClass {
    pub const ALL: [AccountClass; 2] = [AccountClass::Bot, AccountClass::Human];

    pub fn name(self) -> &'static str {
        match self {
            AccountClass::Bot => "bot",
            AccountClass::Human => "human",
        }
    }
}

pub const DEFAULT_BOT_CUTOFF: f64 = 0.7;

/// Bot iff `bot_score >= cutoff`.
pub fn classify_account(bot_score: f64, cutoff: f64) -> Result<AccountClass, DomainError> {
    if !(0.0..=1.0).contains(&bot_score) {
        return Err(DomainError(bot_score));
    }
    Ok(if bot_score >= cutoff {
        AccountClass::Bot
    } else {
        AccountClass::Human
    })
}

/// Shifted natural log, `ln(1 + count)`.
pub fn log_engagement(count: u64) -> f64 {
    (count as f64).ln_1p()
}

fn as_object(line: &str) -> Result<Map<String, Value>, ParseError> {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ParseError::NotAnObject),
        Err(e) => Err(ParseError::InvalidJson(e.to_string())),
    }
}

fn required_str(map: &Map<String, Value>, field: &'static str) -> Result<String, ParseError> {
    match map.get(field) {
        None | Some(Value::Null) => Err(ParseError::MissingField(field)),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(ParseError::MalformedValue {
            field,
            detail: format!("expected string, got {other}"),
        }),
    }
}

fn optional_str(map: &Map<String, Value>, field: &'static str) -> Result<Option<String>, ParseError> {
    match map.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(other) => Err(ParseError::MalformedValue {
            field,
            detail: format!("expected string, got {other}"),
        }),
    }
}

fn count_field(map: &Map<String, Value>, field: &'static str) -> Result<u64, ParseError> {
    match map.get(field) {
        None | Some(Value::Null) => Ok(0),
        Some(Value::Number(n)) => {
            if let Some(v) = n.as_u64() {
                Ok(v)
            } else if n.as_i64().is_some_and(|v| v < 0) || n.as_f64().is_some_and(|v| v < 0.0) {
                Err(ParseError::NegativeCount(field))
            } else {
                Err(ParseError::MalformedValue {
                    field,
                    detail: format!("expected integer, got {n}"),
                })
            }
        }
        Some(other) => Err(ParseError::MalformedValue {
            field,
            detail: format!("expected integer, got {other}"),
        }),
    }
}

/// Parses one JSON-lines tweet. Unknown fields are ignored; missing optional
/// fields default to absent or zero.
pub fn parse_tweet_record(line: &str) -> Result<TweetRecord, ParseError> {
    let map = as_object(line)?;
    let tweet_id = required_str(&map, "tweet_id")?;
    let author_id = required_str(&map, "author_id")?;
    let timestamp = match map.get("timestamp") {
        None | Some(Value::Null) => return Err(ParseError::MissingField("timestamp")),
        Some(Value::Number(n)) => n.as_i64().ok_or_else(|| ParseError::MalformedValue {
            field: "timestamp",
            detail: format!("expected integer seconds, got {n}"),
        })?,
        Some(other) => {
            return Err(ParseError::MalformedValue {
                field: "timestamp",
                detail: format!("expected integer seconds, got {other}"),
            })
        }
    };
    let text = required_str(&map, "text")?;
    let mentioned_user_ids = match map.get("mentioned_user_ids") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                other => Err(ParseError::MalformedValue {
                    field: "mentioned_user_ids",
                    detail: format!("expected string, got {other}"),
                }),
            })
            .collect::<Result<_, _>>()?,
        Some(other) => {
            return Err(ParseError::MalformedValue {
                field: "mentioned_user_ids",
                detail: format!("expected array, got {other}"),
            })
        }
    };
    Ok(TweetRecord {
        tweet_id,
        author_id,
        timestamp,
        text,
        retweeted_tweet_id: optional_str(&map, "retweeted_tweet_id")?,
        quoted_tweet_id: optional_str(&map, "quoted_tweet_id")?,
        replied_to_tweet_id: optional_str(&map, "replied_to_tweet_id")?,
        mentioned_user_ids,
        favorites: count_field(&map, "favorites")?,
        retweets: count_field(&map, "retweets")?,
        replies: count_field(&map, "replies")?,
        quotes: count_field(&map, "quotes")?,
    })
}

/// Parses one JSON-lines profile: `user_id`, optional `bio`, optional `bot_score`.
pub fn parse_profile_record(line: &str) -> Result<UserProfile, ParseError> {
    let map = as_object(line)?;
    let user_id = required_str(&map, "user_id")?;
    let bio = optional_str(&map, "bio")?.unwrap_or_default();
    let bot_score = match map.get("bot_score") {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) => {
            let v = n.as_f64().unwrap_or(f64::NAN);
            if !(0.0..=1.0).contains(&v) {
                return Err(ParseError::BotScoreOutOfRange(v));
            }
            Some(v)
        }
        Some(other) => {
            return Err(ParseError::MalformedValue {
                field: "bot_score",
                detail: format!("expected number, got {other}"),
            })
        }
    };
    Ok(UserProfile::new(user_id, bio, bot_score))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

/// Counts for one input file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FileReport {
    pub path: String,
    pub records_read: usize,
    pub loaded: usize,
    pub skipped: usize,
    pub reasons: BTreeMap<String, usize>,
    /// First skipped lines, capped at [`FileReport::MAX_EXAMPLES`].
    pub examples: Vec<SkippedLine>,
}

impl FileReport {
    pub const MAX_EXAMPLES: usize = 50;

    fn skip(&mut self, line: usize, err: &ParseError) {
        self.skipped += 1;
        *self.reasons.entry(err.reason_key()).or_default() += 1;
        if self.examples.len() < Self::MAX_EXAMPLES {
            self.examples.push(SkippedLine {
                line,
                reason: err.to_string(),
            });
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub tweets: FileReport,
    pub profiles: FileReport,
    /// Authors without a profile line; they get an empty bio and no score.
    pub synthesized_profiles: usize,
}

fn read_jsonl<T>(
    path: &Path,
    parse: impl Fn(&str) -> Result<T, ParseError>,
) -> Result<(Vec<T>, FileReport), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut report = FileReport {
        path: path.display().to_string(),
        ..FileReport::default()
    };
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        report.records_read += 1;
        match parse(&line) {
            Ok(record) => {
                report.loaded += 1;
                out.push(record);
            }
            Err(e) => report.skip(i + 1, &e),
        }
    }
    Ok((out, report))
}

/// Immutable, indexed corpus.
///
/// Tweets are stored sorted by `(timestamp, tweet_id)`, users sorted by
/// `user_id`, so every derived view is independent of input line order.
#[derive(Debug, Clone)]
pub struct Corpus {
    tweets: Vec<TweetRecord>,
    tweet_index: HashMap<String, usize>,
    tweet_author: Vec<usize>,
    users: Vec<UserProfile>,
    user_index: HashMap<String, usize>,
    timelines: Vec<Vec<usize>>,
    synthesized_profiles: usize,
}

impl Corpus {
    pub fn new(mut tweets: Vec<TweetRecord>, profiles: Vec<UserProfile>) -> Result<Corpus, CorpusError> {
        tweets.sort_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| a.tweet_id.cmp(&b.tweet_id))
        });
        let mut tweet_index = HashMap::with_capacity(tweets.len());
        for (i, t) in tweets.iter().enumerate() {
            if tweet_index.insert(t.tweet_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateTweetId(t.tweet_id.clone()));
            }
        }

        let mut by_id: BTreeMap<String, UserProfile> = BTreeMap::new();
        for p in profiles {
            if by_id.contains_key(&p.user_id) {
                return Err(CorpusError::DuplicateUserId(p.user_id));
            }
            by_id.insert(p.user_id.clone(), p);
        }
        let mut synthesized_profiles = 0;
        for t in &tweets {
            if !by_id.contains_key(&t.author_id) {
                by_id.insert(t.author_id.clone(), UserProfile::new(t.author_id.clone(), "", None));
                synthesized_profiles += 1;
            }
        }
        let users: Vec<UserProfile> = by_id.into_values().collect();
        let user_index: HashMap<String, usize> = users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.user_id.clone(), i))
            .collect();
        let mut timelines = vec![Vec::new(); users.len()];
        let mut tweet_author = Vec::with_capacity(tweets.len());
        for (i, t) in tweets.iter().enumerate() {
            let u = user_index[&t.author_id];
            timelines[u].push(i);
            tweet_author.push(u);
        }
        Ok(Corpus {
            tweets,
            tweet_index,
            tweet_author,
            users,
            user_index,
            timelines,
            synthesized_profiles,
        })
    }

    pub fn tweets(&self) -> &[TweetRecord] {
        &self.tweets
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    pub fn tweet_index(&self, tweet_id: &str) -> Option<usize> {
        self.tweet_index.get(tweet_id).copied()
    }

    pub fn tweet(&self, tweet_id: &str) -> Option<&TweetRecord> {
        self.tweet_index(tweet_id).map(|i| &self.tweets[i])
    }

    /// Index into [`Corpus::profiles`] of the author of tweet `idx`.
    pub fn author_index(&self, tweet_idx: usize) -> usize {
        self.tweet_author[tweet_idx]
    }

    pub fn profiles(&self) -> &[UserProfile] {
        &self.users
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.user_index.get(user_id).copied()
    }

    pub fn profile(&self, user_id: &str) -> Option<&UserProfile> {
        self.user_index(user_id).map(|i| &self.users[i])
    }

    /// Tweet indices of user `user_idx`, ordered by `(timestamp, tweet_id)`.
    pub fn timeline_indices(&self, user_idx: usize) -> &[usize] {
        &self.timelines[user_idx]
    }

    pub fn timeline(&self, user_id: &str) -> Vec<&TweetRecord> {
        self.user_index(user_id)
            .map(|u| self.timelines[u].iter().map(|&i| &self.tweets[i]).collect())
            .unwrap_or_default()
    }

    pub fn synthesized_profiles(&self) -> usize {
        self.synthesized_profiles
    }

    /// Fills every profile's affiliation and authority sets from its bio.
    pub fn derive_profile_terms(&mut self, lexicon: &Lexicon) {
        for p in &mut self.users {
            let (aff, auth) = extract_profile_terms(&p.bio, lexicon);
            p.affiliations = aff;
            p.authority_terms = auth;
        }
    }

    /// Class per user index; `None` for accounts without a bot score.
    pub fn account_classes(&self, cutoff: f64) -> AccountClasses {
        AccountClasses {
            classes: self
                .users
                .iter()
                .map(|p| p.bot_score.and_then(|s| classify_account(s, cutoff).ok()))
                .collect(),
        }
    }
}

/// Cohort of every user in a corpus, indexed like [`Corpus::profiles`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountClasses {
    classes: Vec<Option<AccountClass>>,
}

impl AccountClasses {
    pub fn of_user(&self, user_idx: usize) -> Option<AccountClass> {
        self.classes[user_idx]
    }

    pub fn of_tweet(&self, corpus: &Corpus, tweet_idx: usize) -> Option<AccountClass> {
        self.classes[corpus.author_index(tweet_idx)]
    }

    pub fn count(&self, class: AccountClass) -> usize {
        self.classes.iter().filter(|c| **c == Some(class)).count()
    }
}

/// Reads the tweet and profile JSON-lines files. Malformed lines are skipped
/// and listed in the report.
pub fn load_corpus(tweet_path: &Path, profile_path: &Path) -> Result<(Corpus, LoadReport), CorpusError> {
    let (tweets, tweet_report) = read_jsonl(tweet_path, parse_tweet_record)?;
    let (profiles, profile_report) = read_jsonl(profile_path, parse_profile_record)?;
    let corpus = Corpus::new(tweets, profiles)?;
    let report = LoadReport {
        tweets: tweet_report,
        profiles: profile_report,
        synthesized_profiles: corpus.synthesized_profiles(),
    };
    Ok((corpus, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn tweet(id: &str, author: &str, ts: i64, text: &str) -> TweetRecord {
        TweetRecord {
            tweet_id: id.into(),
            author_id: author.into(),
            timestamp: ts,
            text: text.into(),
            retweeted_tweet_id: None,
            quoted_tweet_id: None,
            replied_to_tweet_id: None,
            mentioned_user_ids: vec![],
            favorites: 0,
            retweets: 0,
            replies: 0,
            quotes: 0,
        }
    }

    #[test]
    fn parse_minimal_zero_counts() {
        let t = parse_tweet_record(
            r#"{"tweet_id":"t1","author_id":"u1","timestamp":5,"text":"hi","favorites":0,"retweets":0,"replies":0,"quotes":0}"#,
        )
        .unwrap();
        assert_eq!(t.favorites + t.retweets + t.replies + t.quotes, 0);
        assert!(t.mentioned_user_ids.is_empty());
        assert_eq!(t.retweeted_tweet_id, None);
    }

    #[test]
    fn parse_negative_count() {
        let e = parse_tweet_record(
            r#"{"tweet_id":"t1","author_id":"u1","timestamp":5,"text":"hi","favorites":-1}"#,
        )
        .unwrap_err();
        assert_eq!(e, ParseError::NegativeCount("favorites"));
    }

    #[test]
    fn parse_passthrough_and_unknown_fields() {
        let t = parse_tweet_record(
            r#"{"tweet_id":"t1","author_id":"u1","timestamp":5,"text":"RT","retweeted_tweet_id":"t9","lang":"en"}"#,
        )
        .unwrap();
        assert_eq!(t.retweeted_tweet_id.as_deref(), Some("t9"));
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            parse_tweet_record(r#"{"author_id":"u","timestamp":1,"text":""}"#).unwrap_err(),
            ParseError::MissingField("tweet_id")
        );
        assert!(matches!(
            parse_tweet_record(r#"{"tweet_id":"t","author_id":"u","timestamp":"x","text":""}"#),
            Err(ParseError::MalformedValue { field: "timestamp", .. })
        ));
        assert!(matches!(parse_tweet_record("[1]"), Err(ParseError::NotAnObject)));
        assert!(matches!(parse_tweet_record("{"), Err(ParseError::InvalidJson(_))));
        assert!(matches!(
            parse_profile_record(r#"{"user_id":"u","bot_score":1.5}"#),
            Err(ParseError::BotScoreOutOfRange(_))
        ));
    }

    #[test]
    fn classify_boundaries() {
        assert_eq!(classify_account(0.70, 0.7).unwrap(), AccountClass::Bot);
        assert_eq!(classify_account(0.69, 0.7).unwrap(), AccountClass::Human);
        assert_eq!(classify_account(0.0, 0.7).unwrap(), AccountClass::Human);
        assert!(classify_account(1.01, 0.7).is_err());
        assert!(classify_account(-0.1, 0.7).is_err());
    }

    #[test]
    fn log_engagement_values() {
        assert_eq!(log_engagement(0), 0.0);
        assert!((log_engagement(2) - 1.0986122886681098).abs() < 1e-12);
        assert!((log_engagement(10) - 2.3978952727983707).abs() < 1e-12);
    }

    #[test]
    fn timeline_sorted_and_profiles_synthesized() {
        let corpus = Corpus::new(
            vec![tweet("c", "u", 30, ""), tweet("a", "u", 10, ""), tweet("b", "u", 20, "")],
            vec![],
        )
        .unwrap();
        let ids: Vec<_> = corpus.timeline("u").iter().map(|t| t.tweet_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(corpus.synthesized_profiles(), 1);
        let p = corpus.profile("u").unwrap();
        assert_eq!(p.bio, "");
        assert_eq!(p.bot_score, None);
        assert_eq!(corpus.account_classes(0.7).of_user(0), None);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Corpus::new(vec![tweet("a", "u", 1, ""), tweet("a", "v", 2, "")], vec![]).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateTweetId(_)));
        let err = Corpus::new(
            vec![],
            vec![UserProfile::new("u", "", None), UserProfile::new("u", "", None)],
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateUserId(_)));
    }

    #[test]
    fn timestamp_ties_break_on_id() {
        let corpus = Corpus::new(vec![tweet("b", "u", 1, ""), tweet("a", "u", 1, "")], vec![]).unwrap();
        let ids: Vec<_> = corpus.timeline("u").iter().map(|t| t.tweet_id.clone()).collect();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn share_keys() {
        let mut t = tweet("a", "u", 1, "RT @x: hello ");
        assert_eq!(t.share_key(), Some(ShareKey::Text("RT @x: hello".into())));
        t.quoted_tweet_id = Some("q".into());
        assert_eq!(t.share_key(), Some(ShareKey::Source("q".into())));
        assert!(!t.is_retweet());
        t.retweeted_tweet_id = Some("r".into());
        assert_eq!(t.share_key(), Some(ShareKey::Source("r".into())));
        assert_eq!(tweet("b", "u", 1, "hello").share_key(), None);
    }

    #[test]
    fn load_report_counts_skips() {
        let dir = tempfile::tempdir().unwrap();
        let tp = dir.path().join("t.jsonl");
        let pp = dir.path().join("p.jsonl");
        std::fs::write(
            &tp,
            "{\"tweet_id\":\"a\",\"author_id\":\"u\",\"timestamp\":1,\"text\":\"x\"}\n\n{\"tweet_id\":\"b\"}\n{\"tweet_id\":\"c\",\"author_id\":\"u\",\"timestamp\":1,\"text\":\"x\",\"quotes\":-3}\n",
        )
        .unwrap();
        std::fs::write(&pp, "{\"user_id\":\"u\",\"bio\":\"dad\",\"bot_score\":0.9}\n").unwrap();
        let (corpus, report) = load_corpus(&tp, &pp).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(report.tweets.records_read, 3);
        assert_eq!(report.tweets.skipped, 2);
        assert_eq!(report.tweets.reasons["missing field author_id"], 1);
        assert_eq!(report.tweets.reasons["negative count quotes"], 1);
        assert_eq!(report.synthesized_profiles, 0);
        assert!(matches!(
            load_corpus(&dir.path().join("missing"), &pp),
            Err(CorpusError::Io { .. })
        ));
    }

    fn arb_tweet() -> impl Strategy<Value = TweetRecord> {
        (
            "[a-z0-9]{1,8}",
            "[a-z]{1,4}",
            any::<i64>(),
            "\\PC{0,40}",
            proptest::option::of("[a-z0-9]{1,5}"),
            proptest::option::of("[a-z0-9]{1,5}"),
            proptest::collection::vec("[a-z]{1,4}", 0..3),
            (any::<u32>(), any::<u32>(), any::<u32>(), any::<u32>()),
        )
            .prop_map(|(id, author, ts, text, rt, reply, mentions, (f, r, p, q))| TweetRecord {
                tweet_id: id,
                author_id: author,
                timestamp: ts,
                text,
                retweeted_tweet_id: rt,
                quoted_tweet_id: None,
                replied_to_tweet_id: reply,
                mentioned_user_ids: mentions,
                favorites: f as u64,
                retweets: r as u64,
                replies: p as u64,
                quotes: q as u64,
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(t in arb_tweet()) {
            prop_assert_eq!(parse_tweet_record(&t.to_json_line()).unwrap(), t);
        }

        #[test]
        fn timeline_invariant_under_permutation(ts in proptest::collection::vec(0i64..5, 1..20), rot in 0usize..20) {
            let tweets: Vec<_> = ts.iter().enumerate()
                .map(|(i, &t)| tweet(&format!("t{i:02}"), if i % 2 == 0 { "u" } else { "v" }, t, ""))
                .collect();
            let mut shuffled = tweets.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let a = Corpus::new(tweets, vec![]).unwrap();
            let b = Corpus::new(shuffled, vec![]).unwrap();
            for u in ["u", "v"] {
                let x: Vec<_> = a.timeline(u).iter().map(|t| t.tweet_id.clone()).collect();
                let y: Vec<_> = b.timeline(u).iter().map(|t| t.tweet_id.clone()).collect();
                prop_assert_eq!(x, y);
            }
        }

        #[test]
        fn classify_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let rank = |c| if c == AccountClass::Bot { 1 } else { 0 };
            prop_assert!(rank(classify_account(lo, 0.7).unwrap()) <= rank(classify_account(hi, 0.7).unwrap()));
        }

        #[test]
        fn log_engagement_strictly_increasing(c in 0u64..1_000_000_000) {
            prop_assert!(log_engagement(c + 1) > log_engagement(c));
        }
    }
}

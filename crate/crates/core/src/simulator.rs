//! Synthetic corpora with planted triggers and known engagement models.
//!
//! Every planted trigger is built to satisfy its detection rule under the
//! default fixed thresholds and non-strict confirmation, and every other
//! tweet is built to satisfy none, so detector output must equal the ground
//! truth exactly.
//!
//! Besides the bot and human accounts, a corpus contains auxiliary accounts
//! without a bot score (cohort Unknown): publishers whose neutral posts are
//! the share sources, authority accounts that are only ever mentioned, and
//! consensus accounts whose single stance post gives dissonance egos a
//! network majority.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AccountClass, Corpus, Metric, TweetRecord, UserProfile, DEFAULT_BOT_CUTOFF};
use crate::lexicon::{extract_profile_terms, tokenize, Category, Lexicon, Stance};
use crate::triggers::{detect, Construct, DetectOptions, Detection, ThresholdConfig, TriggerRecord, TriggerVector};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("planted truth disagrees with detection for {construct} on tweet {tweet_id}: planted {planted}, detected {detected}")]
    PlantingMismatch {
        construct: String,
        tweet_id: String,
        planted: bool,
        detected: bool,
    },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn config_err(msg: impl Into<String>) -> SimulationError {
    SimulationError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TweetsPerUser {
    pub min: usize,
    pub max: usize,
}

/// Planted rates for one cohort.
///
/// `availability`, `illusory_truth`, `confirmation` and
/// `cognitive_dissonance` are expected fractions of a user's tweet slots
/// given to the corresponding structure. `homophily` is the probability that
/// a share (or a group of repeated shares) comes from a publisher with a
/// common affiliation. `affect_negativity` applies to every post that has
/// its own text (originals and quotes) and `authority` to every post.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Prevalence {
    pub homophily: f64,
    pub authority: f64,
    pub availability: f64,
    pub illusory_truth: f64,
    pub affect_negativity: f64,
    pub cognitive_dissonance: f64,
    pub confirmation: f64,
}

impl Prevalence {
    fn get(&self, c: Construct) -> f64 {
        match c {
            Construct::Homophily => self.homophily,
            Construct::Authority => self.authority,
            Construct::Availability => self.availability,
            Construct::IllusoryTruth => self.illusory_truth,
            Construct::AffectNegativity => self.affect_negativity,
            Construct::CognitiveDissonance => self.cognitive_dissonance,
            Construct::Confirmation => self.confirmation,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortPrevalence {
    pub bot: Prevalence,
    pub human: Prevalence,
}

/// Adds `add` to the probability of `then` on posts that carry `given`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Boost {
    pub given: Construct,
    pub then: Construct,
    pub add: f64,
}

/// `ln(1 + y) ≈ alpha · [1, constructs] + N(0, noise_sd²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngagementModel {
    pub alpha: [f64; 8],
    pub noise_sd: f64,
}

impl Default for EngagementModel {
    fn default() -> Self {
        EngagementModel {
            alpha: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            noise_sd: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricModels {
    pub favorites: EngagementModel,
    pub retweets: EngagementModel,
    pub replies: EngagementModel,
    pub quotes: EngagementModel,
}

impl MetricModels {
    pub fn get(&self, m: Metric) -> &EngagementModel {
        match m {
            Metric::Favorites => &self.favorites,
            Metric::Retweets => &self.retweets,
            Metric::Replies => &self.replies,
            Metric::Quotes => &self.quotes,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortModels {
    pub bot: MetricModels,
    pub human: MetricModels,
}

fn default_cutoff() -> f64 {
    DEFAULT_BOT_CUTOFF
}
fn default_start() -> i64 {
    1_609_459_200
}
fn default_publishers() -> usize {
    400
}
fn default_publisher_tweets() -> usize {
    5
}
fn default_authorities() -> usize {
    20
}
fn default_consensus() -> usize {
    10
}
fn default_half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub seed: u64,
    pub n_bots: usize,
    pub n_humans: usize,
    pub tweets_per_user: TweetsPerUser,
    #[serde(default = "default_start")]
    pub start_timestamp: i64,
    #[serde(default = "default_cutoff")]
    pub bot_cutoff: f64,
    #[serde(default = "default_publishers")]
    pub n_publishers: usize,
    #[serde(default = "default_publisher_tweets")]
    pub tweets_per_publisher: usize,
    #[serde(default = "default_authorities")]
    pub n_authorities: usize,
    /// Consensus accounts per stance.
    #[serde(default = "default_consensus")]
    pub n_consensus: usize,
    /// Probability that an unstructured slot is a share.
    #[serde(default)]
    pub share_rate: f64,
    /// Fraction of unstructured shares that are quotes rather than retweets.
    #[serde(default = "default_half")]
    pub quote_fraction: f64,
    /// Probability that an unstructured original is a lone stance post.
    #[serde(default)]
    pub stance_noise: f64,
    /// Probability that a clean post carries sub-threshold emotion or negative words.
    #[serde(default)]
    pub cue_noise: f64,
    /// Fraction of planted confirmation posts built as two-sentence posts
    /// instead of runs.
    #[serde(default)]
    pub two_sentence_fraction: f64,
    /// Longest conforming episode after a divergent post; unbounded when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_conforming: Option<usize>,
    #[serde(default)]
    pub prevalence: CohortPrevalence,
    #[serde(default)]
    pub boosts: Vec<Boost>,
    #[serde(default)]
    pub engagement: CohortModels,
    /// Lexicon directory; the built-in lists when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon_dir: Option<String>,
}

const BOOST_ORDER: [Construct; 7] = [
    Construct::Availability,
    Construct::CognitiveDissonance,
    Construct::Confirmation,
    Construct::IllusoryTruth,
    Construct::Homophily,
    Construct::AffectNegativity,
    Construct::Authority,
];

fn boost_rank(c: Construct) -> usize {
    BOOST_ORDER.iter().position(|&x| x == c).expect("construct in order")
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<SimulationConfig, SimulationError> {
        serde_json::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(config_err(format!("{name} = {v} is not a probability")))
            }
        };
        if self.tweets_per_user.min == 0 || self.tweets_per_user.min > self.tweets_per_user.max {
            return Err(config_err("tweets_per_user needs 1 <= min <= max"));
        }
        unit("bot_cutoff", self.bot_cutoff)?;
        unit("share_rate", self.share_rate)?;
        unit("quote_fraction", self.quote_fraction)?;
        unit("stance_noise", self.stance_noise)?;
        unit("cue_noise", self.cue_noise)?;
        unit("two_sentence_fraction", self.two_sentence_fraction)?;
        for (name, p) in [("bot", &self.prevalence.bot), ("human", &self.prevalence.human)] {
            for c in Construct::ALL {
                unit(&format!("prevalence.{name}.{c}"), p.get(c))?;
            }
            let structural = p.availability + p.illusory_truth + p.confirmation + p.cognitive_dissonance;
            if structural > 1.0 {
                return Err(config_err(format!(
                    "prevalence.{name}: structural rates sum to {structural} > 1"
                )));
            }
        }
        for b in &self.boosts {
            if !matches!(b.then, Construct::Homophily | Construct::AffectNegativity | Construct::Authority) {
                return Err(config_err(format!("boost target {} is not a per-post construct", b.then)));
            }
            if boost_rank(b.given) >= boost_rank(b.then) {
                return Err(config_err(format!(
                    "boost {} -> {} goes against the planting order",
                    b.given, b.then
                )));
            }
            if !b.add.is_finite() {
                return Err(config_err("boost increment must be finite"));
            }
        }
        for models in [&self.engagement.bot, &self.engagement.human] {
            for m in Metric::ALL {
                let e = models.get(m);
                if !(e.noise_sd >= 0.0 && e.noise_sd.is_finite()) || e.alpha.iter().any(|a| !a.is_finite()) {
                    return Err(config_err(format!("engagement model for {} is not finite", m.name())));
                }
            }
        }
        if self.n_publishers == 0 || self.tweets_per_publisher == 0 {
            return Err(config_err("at least one publisher tweet is required"));
        }
        if self.n_bots + self.n_humans > 0 && self.prevalence_any(Construct::CognitiveDissonance) && self.n_consensus == 0 {
            return Err(config_err("dissonance planting needs consensus accounts"));
        }
        if self.prevalence_any(Construct::Authority) && self.n_authorities == 0 {
            return Err(config_err("authority planting needs authority accounts"));
        }
        Ok(())
    }

    fn prevalence_any(&self, c: Construct) -> bool {
        self.prevalence.bot.get(c) > 0.0
            || self.prevalence.human.get(c) > 0.0
            || (c == Construct::Authority && self.boosts.iter().any(|b| b.then == c && b.add > 0.0))
    }

    pub fn total_users(&self) -> usize {
        self.n_bots + self.n_humans
    }
}

/// Planted flags per tweet and the true engagement models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub tweets: Vec<TriggerRecord>,
    pub models: Vec<TrueModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub cohort: AccountClass,
    pub metric: Metric,
    pub alpha: [f64; 8],
    pub noise_sd: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TruthLine {
    Tweet(TriggerRecord),
    Model(TrueModel),
}

impl GroundTruth {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.tweets {
            out.push_str(&serde_json::to_string(&TruthLine::Tweet(t.clone())).expect("serializes"));
            out.push('\n');
        }
        for m in &self.models {
            out.push_str(&serde_json::to_string(&TruthLine::Model(m.clone())).expect("serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<GroundTruth, serde_json::Error> {
        let mut truth = GroundTruth { tweets: Vec::new(), models: Vec::new() };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str(line)? {
                TruthLine::Tweet(t) => truth.tweets.push(t),
                TruthLine::Model(m) => truth.models.push(m),
            }
        }
        Ok(truth)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub tweets: Vec<TweetRecord>,
    pub profiles: Vec<UserProfile>,
    pub truth: GroundTruth,
}

impl SimulationOutput {
    pub fn corpus(&self, lexicon: &Lexicon) -> Result<Corpus, SimulationError> {
        let mut corpus = Corpus::new(self.tweets.clone(), self.profiles.clone())?;
        corpus.derive_profile_terms(lexicon);
        Ok(corpus)
    }

    /// Writes `tweets.jsonl`, `profiles.jsonl` and `ground_truth.jsonl`.
    pub fn write(&self, dir: &Path) -> Result<(), SimulationError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| SimulationError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut tweets = String::new();
        for t in &self.tweets {
            tweets.push_str(&t.to_json_line());
            tweets.push('\n');
        }
        let mut profiles = String::new();
        for p in &self.profiles {
            profiles.push_str(&p.to_json_line());
            profiles.push('\n');
        }
        for (name, body) in [
            ("tweets.jsonl", tweets),
            ("profiles.jsonl", profiles),
            ("ground_truth.jsonl", self.truth.to_jsonl()),
        ] {
            let path = dir.join(name);
            crate::report::write_atomic(&path, body.as_bytes()).map_err(io(&path))?;
        }
        Ok(())
    }
}

/// Words guaranteed to match exactly one lexicon category.
#[derive(Debug, Clone)]
struct Vocabulary {
    neutral: Vec<String>,
    emotion: Vec<String>,
    negative: Vec<String>,
    authority: Vec<String>,
    affiliation: Vec<String>,
    pro: Vec<String>,
    anti: Vec<String>,
}

impl Vocabulary {
    fn new(lexicon: &Lexicon) -> Result<Vocabulary, SimulationError> {
        let mut lexicon_tokens: HashSet<String> = HashSet::new();
        let mut phrase_tokens: HashSet<String> = HashSet::new();
        for c in Category::ALL {
            for term in lexicon.terms(c) {
                let parts: Vec<&str> = term.split(' ').collect();
                if parts.len() > 1 {
                    phrase_tokens.extend(parts.iter().map(|s| s.to_string()));
                }
                lexicon_tokens.extend(parts.iter().map(|s| s.to_string()));
            }
        }
        let pure = |c: Category, min: usize| -> Result<Vec<String>, SimulationError> {
            let words: Vec<String> = lexicon
                .terms(c)
                .iter()
                .filter(|t| !t.contains(' ') && !phrase_tokens.contains(*t))
                .filter(|t| Category::ALL.iter().all(|&o| o == c || !lexicon.contains(o, t)))
                .filter(|t| tokenize(t) == [t.to_string()])
                .cloned()
                .collect();
            if words.len() < min {
                return Err(config_err(format!(
                    "lexicon category {c} has {} single-category words, need {min}",
                    words.len()
                )));
            }
            Ok(words)
        };
        let consonants = "bdfgklmnprstvz".as_bytes();
        let vowels = "aeiou".as_bytes();
        let mut neutral = Vec::new();
        for &a in consonants {
            for &b in vowels {
                for &c in consonants {
                    for &d in vowels {
                        for tail in std::iter::once(None).chain(consonants.iter().map(Some)) {
                            let mut w = String::from_utf8(vec![a, b, c, d]).expect("ascii");
                            if let Some(&t) = tail {
                                w.push(t as char);
                            }
                            if !lexicon_tokens.contains(&w) {
                                neutral.push(w);
                            }
                        }
                    }
                }
            }
        }
        Ok(Vocabulary {
            neutral,
            emotion: pure(Category::Emotion, 4)?,
            negative: pure(Category::Negative, 3)?,
            authority: pure(Category::Authority, 1)?,
            affiliation: pure(Category::Affiliation, 4)?,
            pro: pure(Category::StancePro, 1)?,
            anti: pure(Category::StanceAnti, 1)?,
        })
    }

    fn stance_words(&self, s: Stance) -> &[String] {
        match s {
            Stance::Pro => &self.pro,
            _ => &self.anti,
        }
    }
}

struct Publisher {
    id: String,
    affiliation: Option<usize>,
}

struct World<'a> {
    config: &'a SimulationConfig,
    vocab: Vocabulary,
    publishers: Vec<Publisher>,
    /// (tweet id, publisher index, text)
    sources: Vec<(String, usize, String)>,
    authorities: Vec<String>,
    consensus: [Vec<String>; 2],
}

fn stance_slot(s: Stance) -> usize {
    if s == Stance::Pro {
        0
    } else {
        1
    }
}

fn user_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn words(rng: &mut ChaCha8Rng, vocab: &[String], n: usize) -> Vec<String> {
    (0..n).map(|_| vocab.choose(rng).expect("non-empty vocabulary").clone()).collect()
}

fn binomial(rng: &mut ChaCha8Rng, n: usize, p: f64) -> usize {
    if p <= 0.0 || n == 0 {
        return 0;
    }
    Binomial::new(n as u64, p.min(1.0)).expect("valid binomial").sample(rng) as usize
}

/// Splits `m >= 3` into groups of 3 to 5.
fn partition(rng: &mut ChaCha8Rng, mut m: usize) -> Vec<usize> {
    let mut out = Vec::new();
    while m >= 6 {
        let s = rng.random_range(3..=5.min(m - 3));
        out.push(s);
        m -= s;
    }
    if m > 0 {
        out.push(m);
    }
    out
}

/// Rounds a slot count to one that can be split into groups of at least
/// three while keeping its expectation.
fn round_to_groups(rng: &mut ChaCha8Rng, m: usize, capacity: usize) -> usize {
    let m = if m > 0 && m < 3 {
        if rng.random_bool(m as f64 / 3.0) {
            3
        } else {
            0
        }
    } else {
        m
    };
    let m = m.min(capacity);
    if m < 3 {
        0
    } else {
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Repeat(usize),
    Share { quote: bool },
    Stance,
    Cluster(usize),
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StanceRole {
    Noise,
    Divergent,
    Conforming { in_run: bool },
    Run,
    TwoSentence,
}

#[derive(Debug, Clone, Copy, Default)]
struct Planted {
    availability: bool,
    dissonance: bool,
    confirmation: bool,
    illusory: bool,
    homophily: bool,
    affect_negativity: bool,
    authority: bool,
}

impl Planted {
    fn has(&self, c: Construct) -> bool {
        match c {
            Construct::Homophily => self.homophily,
            Construct::Authority => self.authority,
            Construct::Availability => self.availability,
            Construct::IllusoryTruth => self.illusory,
            Construct::AffectNegativity => self.affect_negativity,
            Construct::CognitiveDissonance => self.dissonance,
            Construct::Confirmation => self.confirmation,
        }
    }
}

/// Affect/negativity word counts for a post.
#[derive(Debug, Clone, Copy)]
struct Cues {
    emotion: usize,
    negative: usize,
}

impl Cues {
    fn affect(&self) -> bool {
        self.emotion >= 3
    }
    fn negativity(&self) -> bool {
        self.negative >= 2
    }
}

struct UserOutput {
    profile: UserProfile,
    tweets: Vec<TweetRecord>,
    truth: Vec<TriggerRecord>,
}

impl<'a> World<'a> {
    fn build(config: &'a SimulationConfig, lexicon: &Lexicon) -> Result<World<'a>, SimulationError> {
        let vocab = Vocabulary::new(lexicon)?;
        let mut rng = user_rng(config.seed, u64::MAX);
        let n_aff = vocab.affiliation.len();
        let publishers: Vec<Publisher> = (0..config.n_publishers)
            .map(|i| Publisher {
                id: format!("pub{i:05}"),
                affiliation: if i % (n_aff + 1) == n_aff { None } else { Some(i % (n_aff + 1)) },
            })
            .collect();
        let mut sources = Vec::new();
        for (p, publisher) in publishers.iter().enumerate() {
            for j in 0..config.tweets_per_publisher {
                let n = rng.random_range(6..=10);
                let text = words(&mut rng, &vocab.neutral, n).join(" ");
                sources.push((format!("{}-{j:03}", publisher.id), p, text));
            }
        }
        Ok(World {
            config,
            vocab,
            publishers,
            sources,
            authorities: (0..config.n_authorities).map(|i| format!("auth{i:04}")).collect(),
            consensus: [
                (0..config.n_consensus).map(|i| format!("conpro{i:04}")).collect(),
                (0..config.n_consensus).map(|i| format!("conanti{i:04}")).collect(),
            ],
        })
    }

    fn auxiliary(&self) -> (Vec<UserProfile>, Vec<TweetRecord>, Vec<TriggerRecord>) {
        let mut rng = user_rng(self.config.seed, u64::MAX - 1);
        let mut profiles = Vec::new();
        let mut tweets = Vec::new();
        let start = self.config.start_timestamp;
        for p in &self.publishers {
            let bio = match p.affiliation {
                Some(a) => format!("{} {}", self.vocab.neutral.choose(&mut rng).expect("vocab"), self.vocab.affiliation[a]),
                None => String::new(),
            };
            profiles.push(UserProfile::new(p.id.clone(), bio, None));
        }
        for (k, (id, p, text)) in self.sources.iter().enumerate() {
            tweets.push(plain_record(id, &self.publishers[*p].id, start - 864_000 + k as i64, text.clone()));
        }
        for (i, a) in self.authorities.iter().enumerate() {
            let word = &self.vocab.authority[i % self.vocab.authority.len()];
            profiles.push(UserProfile::new(a.clone(), format!("{word} {}", self.vocab.neutral.choose(&mut rng).expect("vocab")), None));
        }
        for (s, stance) in [Stance::Pro, Stance::Anti].into_iter().enumerate() {
            for (i, c) in self.consensus[s].iter().enumerate() {
                profiles.push(UserProfile::new(c.clone(), "", None));
                let mut w = words(&mut rng, &self.vocab.neutral, 6);
                let pos = rng.random_range(0..=w.len());
                w.insert(pos, self.vocab.stance_words(stance).choose(&mut rng).expect("stance words").clone());
                tweets.push(plain_record(&format!("{c}-000"), c, start - 432_000 + i as i64, w.join(" ")));
            }
        }
        let truth = tweets
            .iter()
            .map(|t| truth_record(&t.tweet_id, &Planted::default(), Cues { emotion: 0, negative: 0 }))
            .collect();
        (profiles, tweets, truth)
    }

    fn prob(&self, base: f64, target: Construct, planted: &Planted) -> f64 {
        let boost: f64 = self
            .config
            .boosts
            .iter()
            .filter(|b| b.then == target && planted.has(b.given))
            .map(|b| b.add)
            .sum();
        (base + boost).clamp(0.0, 1.0)
    }

    fn user(&self, index: usize, cohort: AccountClass) -> Result<UserOutput, SimulationError> {
        let config = self.config;
        let mut rng = user_rng(config.seed, index as u64);
        let prevalence = match cohort {
            AccountClass::Bot => &config.prevalence.bot,
            AccountClass::Human => &config.prevalence.human,
        };
        let user_id = match cohort {
            AccountClass::Bot => format!("bot{index:06}"),
            AccountClass::Human => format!("hum{index:06}"),
        };
        let bot_score = match cohort {
            AccountClass::Bot => rng.random_range(config.bot_cutoff..=1.0),
            AccountClass::Human => rng.random_range(0.0..config.bot_cutoff),
        };
        let n_aff = rng.random_range(1..=2);
        let affiliations: BTreeSet<usize> = rand::seq::index::sample(&mut rng, self.vocab.affiliation.len(), n_aff)
            .into_iter()
            .collect();
        let mut bio_words = words(&mut rng, &self.vocab.neutral, 3);
        for &a in &affiliations {
            let pos = rng.random_range(0..=bio_words.len());
            bio_words.insert(pos, self.vocab.affiliation[a].clone());
        }
        let profile = UserProfile::new(user_id.clone(), bio_words.join(" "), Some(bot_score));

        // Slot allocation.
        let t = rng.random_range(config.tweets_per_user.min..=config.tweets_per_user.max);
        let mut remaining = t;
        let drawn = binomial(&mut rng, t, prevalence.availability);
        let repeats = round_to_groups(&mut rng, drawn, remaining);
        let repeat_groups = if repeats > 0 { partition(&mut rng, repeats) } else { Vec::new() };
        remaining -= repeats;

        let d = binomial(&mut rng, t, prevalence.cognitive_dissonance)
            .min(remaining.saturating_sub(1))
            .min(config.max_conforming.unwrap_or(usize::MAX));
        let ego_majority = (d > 0).then(|| if rng.random_bool(0.5) { Stance::Pro } else { Stance::Anti });
        if d > 0 {
            remaining -= d + 1;
        }

        let c = binomial(&mut rng, t, prevalence.confirmation).min(remaining);
        let mut two_sentence = binomial(&mut rng, c, config.two_sentence_fraction);
        let mut run_total = c - two_sentence;
        if run_total < 3 {
            two_sentence += run_total;
            run_total = 0;
        }
        let runs = if run_total > 0 { partition(&mut rng, run_total) } else { Vec::new() };
        remaining -= c;

        let drawn = binomial(&mut rng, t, prevalence.illusory_truth);
        let clustered = round_to_groups(&mut rng, drawn, remaining);
        let clusters = if clustered > 0 { partition(&mut rng, clustered) } else { Vec::new() };
        remaining -= clustered;

        let mut slots: Vec<Slot> = Vec::with_capacity(t);
        for (g, &size) in repeat_groups.iter().enumerate() {
            slots.extend(std::iter::repeat_n(Slot::Repeat(g), size));
        }
        for (g, &size) in clusters.iter().enumerate() {
            slots.extend(std::iter::repeat_n(Slot::Cluster(g), size));
        }
        let structured_stance = if d > 0 { d + 1 } else { 0 } + c;
        slots.extend(std::iter::repeat_n(Slot::Stance, structured_stance));
        let mut noise = 0;
        for _ in 0..remaining {
            if rng.random_bool(config.share_rate) {
                slots.push(Slot::Share { quote: rng.random_bool(config.quote_fraction) });
            } else if rng.random_bool(config.stance_noise) {
                slots.push(Slot::Stance);
                noise += 1;
            } else {
                slots.push(Slot::Plain);
            }
        }
        slots.shuffle(&mut rng);

        // Stance sequence: blocks with alternating stances so that only the
        // planted runs reach three.
        let mut blocks: Vec<(StanceRole, usize)> = Vec::new();
        blocks.extend(runs.iter().map(|&s| (StanceRole::Run, s)));
        blocks.extend(std::iter::repeat_n((StanceRole::TwoSentence, 1), two_sentence));
        blocks.extend(std::iter::repeat_n((StanceRole::Noise, 1), noise));
        blocks.shuffle(&mut rng);
        let mut stance_plan: Vec<(Stance, StanceRole)> = Vec::new();
        let mut next = if rng.random_bool(0.5) { Stance::Pro } else { Stance::Anti };
        if let Some(m) = ego_majority {
            stance_plan.push((m.opposite(), StanceRole::Divergent));
            for _ in 0..d {
                stance_plan.push((m, StanceRole::Conforming { in_run: d >= 3 }));
            }
            next = m.opposite();
        }
        for (role, size) in blocks {
            for _ in 0..size {
                stance_plan.push((next, role));
            }
            next = next.opposite();
        }
        debug_assert_eq!(stance_plan.len(), slots.iter().filter(|s| **s == Slot::Stance).count());

        // Structural flags per slot.
        let mut planted: Vec<Planted> = vec![Planted::default(); t];
        let mut stance_of: Vec<Option<(Stance, StanceRole)>> = vec![None; t];
        let mut stance_iter = stance_plan.into_iter();
        for (i, slot) in slots.iter().enumerate() {
            match slot {
                Slot::Repeat(_) => planted[i].availability = true,
                Slot::Cluster(_) => planted[i].illusory = true,
                Slot::Stance => {
                    let (s, role) = stance_iter.next().expect("stance plan covers stance slots");
                    stance_of[i] = Some((s, role));
                    match role {
                        StanceRole::Conforming { in_run } => {
                            planted[i].dissonance = true;
                            planted[i].confirmation = in_run;
                        }
                        StanceRole::Run | StanceRole::TwoSentence => planted[i].confirmation = true,
                        StanceRole::Noise | StanceRole::Divergent => {}
                    }
                }
                Slot::Share { .. } | Slot::Plain => {}
            }
        }

        // Share sources: repeated groups first, then single shares, all distinct.
        let homophily_base = prevalence.homophily;
        let mut used_sources: HashSet<usize> = HashSet::new();
        let mut pick_source = |rng: &mut ChaCha8Rng, homophilous: bool| -> Result<usize, SimulationError> {
            for _ in 0..10_000 {
                let s = rng.random_range(0..self.sources.len());
                let aff = self.publishers[self.sources[s].1].affiliation;
                let matches = aff.is_some_and(|a| affiliations.contains(&a));
                if matches == homophilous && used_sources.insert(s) {
                    return Ok(s);
                }
            }
            Err(config_err("not enough publisher tweets to draw distinct share sources"))
        };
        let mut group_source = Vec::new();
        for _ in 0..repeat_groups.len() {
            let probe = Planted { availability: true, ..Default::default() };
            let h = rng.random_bool(self.prob(homophily_base, Construct::Homophily, &probe));
            group_source.push((pick_source(&mut rng, h)?, h));
        }
        let mut source_of: Vec<Option<usize>> = vec![None; t];
        for (i, slot) in slots.iter().enumerate() {
            match slot {
                Slot::Repeat(g) => {
                    source_of[i] = Some(group_source[*g].0);
                    planted[i].homophily = group_source[*g].1;
                }
                Slot::Share { .. } => {
                    let h = rng.random_bool(self.prob(homophily_base, Construct::Homophily, &planted[i]));
                    source_of[i] = Some(pick_source(&mut rng, h)?);
                    planted[i].homophily = h;
                }
                _ => {}
            }
        }

        // Affect/negativity: per post, per cluster for clusters.
        let own_text = |slot: &Slot| !matches!(slot, Slot::Repeat(_) | Slot::Share { quote: false });
        let mut cues: Vec<Cues> = vec![Cues { emotion: 0, negative: 0 }; t];
        let mut cluster_cues: Vec<Option<Cues>> = vec![None; clusters.len()];
        for i in 0..t {
            if !own_text(&slots[i]) {
                continue;
            }
            if let Slot::Cluster(g) = slots[i] {
                if let Some(c) = cluster_cues[g] {
                    cues[i] = c;
                    planted[i].affect_negativity = c.affect() || c.negativity();
                    continue;
                }
            }
            let p = self.prob(prevalence.affect_negativity, Construct::AffectNegativity, &planted[i]);
            let hit = rng.random_bool(p);
            let c = if hit {
                match rng.random_range(0..3) {
                    0 => Cues { emotion: rng.random_range(3..=4), negative: rng.random_range(0..=1) },
                    1 => Cues { emotion: rng.random_range(0..=2), negative: rng.random_range(2..=3) },
                    _ => Cues { emotion: rng.random_range(3..=4), negative: rng.random_range(2..=3) },
                }
            } else if rng.random_bool(config.cue_noise) {
                Cues { emotion: rng.random_range(0..=2), negative: rng.random_range(0..=1) }
            } else {
                Cues { emotion: 0, negative: 0 }
            };
            cues[i] = c;
            planted[i].affect_negativity = hit;
            if let Slot::Cluster(g) = slots[i] {
                cluster_cues[g] = Some(c);
            }
        }

        // Authority: by text word where the post has its own free text,
        // otherwise by mentioning an authority account.
        let mut authority_by_text = vec![false; t];
        for i in 0..t {
            let p = self.prob(prevalence.authority, Construct::Authority, &planted[i]);
            if rng.random_bool(p) {
                planted[i].authority = true;
                let free_text = matches!(slots[i], Slot::Plain | Slot::Stance | Slot::Share { quote: true });
                authority_by_text[i] = free_text && rng.random_bool(0.5);
            }
        }

        // Texts and records.
        let mut cluster_core: Vec<Option<Vec<String>>> = vec![None; clusters.len()];
        let mut timestamp = config.start_timestamp + rng.random_range(0..86_400);
        let mut tweets = Vec::with_capacity(t);
        let mut truth = Vec::with_capacity(t);
        let consensus_mentions: Vec<String> = match ego_majority {
            Some(m) => self.consensus[stance_slot(m)]
                .choose_multiple(&mut rng, 2)
                .cloned()
                .collect(),
            None => Vec::new(),
        };
        for i in 0..t {
            let tweet_id = format!("{user_id}-{i:04}");
            let mut mentions: Vec<String> = Vec::new();
            if i == 0 {
                mentions.extend(consensus_mentions.iter().cloned());
            }
            if planted[i].authority && !authority_by_text[i] {
                mentions.push(self.authorities.choose(&mut rng).expect("authority accounts").clone());
            }
            let mut record = plain_record(&tweet_id, &user_id, timestamp, String::new());
            match slots[i] {
                Slot::Repeat(_) | Slot::Share { quote: false } => {
                    let (src_id, p, src_text) = &self.sources[source_of[i].expect("share source")];
                    let publisher = &self.publishers[*p].id;
                    record.text = format!("RT @{publisher}: {src_text}");
                    record.retweeted_tweet_id = Some(src_id.clone());
                    mentions.insert(0, publisher.clone());
                }
                Slot::Share { quote: true } => {
                    let (src_id, _, _) = &self.sources[source_of[i].expect("share source")];
                    record.quoted_tweet_id = Some(src_id.clone());
                    record.text = self.free_text(&mut rng, cues[i], authority_by_text[i], None, &mentions);
                }
                Slot::Plain => {
                    record.text = self.free_text(&mut rng, cues[i], authority_by_text[i], None, &mentions);
                }
                Slot::Stance => {
                    let (s, role) = stance_of[i].expect("stance assigned");
                    record.text = if role == StanceRole::TwoSentence {
                        let first = self.free_text(&mut rng, cues[i], authority_by_text[i], Some(s), &[]);
                        let second = self.free_text(&mut rng, Cues { emotion: 0, negative: 0 }, false, Some(s), &mentions);
                        format!("{first}. {second}.")
                    } else {
                        self.free_text(&mut rng, cues[i], authority_by_text[i], Some(s), &mentions)
                    };
                }
                Slot::Cluster(g) => {
                    let core = cluster_core[g]
                        .get_or_insert_with(|| {
                            let n = rng.random_range(7..=11);
                            let mut w = words(&mut rng, &self.vocab.neutral, n);
                            self.insert_cues(&mut rng, &mut w, cues[i]);
                            w
                        })
                        .join(" ");
                    let url: String = words(&mut rng, &self.vocab.neutral, 2).concat();
                    let tags: String = mentions.iter().map(|m| format!(" @{m}")).collect();
                    record.text = format!("{core} https://t.co/{url}{i}{tags}");
                }
            }
            record.mentioned_user_ids = mentions;
            timestamp += rng.random_range(60..=7200);
            truth.push(truth_record(&tweet_id, &planted[i], cues[i]));
            tweets.push(record);
        }

        // Engagement from the planted constructs.
        let models = match cohort {
            AccountClass::Bot => &config.engagement.bot,
            AccountClass::Human => &config.engagement.human,
        };
        for (record, truth) in tweets.iter_mut().zip(&truth) {
            let x = truth.constructs();
            for m in Metric::ALL {
                let model = models.get(m);
                let mut eta = model.alpha[0];
                for (a, &f) in model.alpha[1..].iter().zip(&x) {
                    if f {
                        eta += a;
                    }
                }
                let noise = if model.noise_sd > 0.0 {
                    Normal::new(0.0, model.noise_sd).expect("valid sd").sample(&mut rng)
                } else {
                    0.0
                };
                let count = (eta + noise).exp_m1().round().max(0.0);
                let count = if count.is_finite() { count.min(u64::MAX as f64) as u64 } else { u64::MAX };
                match m {
                    Metric::Favorites => record.favorites = count,
                    Metric::Retweets => record.retweets = count,
                    Metric::Replies => record.replies = count,
                    Metric::Quotes => record.quotes = count,
                }
            }
        }

        Ok(UserOutput { profile, tweets, truth })
    }

    fn insert_cues(&self, rng: &mut ChaCha8Rng, w: &mut Vec<String>, cues: Cues) {
        let extra: Vec<String> = words(rng, &self.vocab.emotion, cues.emotion)
            .into_iter()
            .chain(words(rng, &self.vocab.negative, cues.negative))
            .collect();
        for word in extra {
            let pos = rng.random_range(0..=w.len());
            w.insert(pos, word);
        }
    }

    /// One sentence of neutral words plus the requested cue, authority and
    /// stance words, followed by mention handles.
    fn free_text(
        &self,
        rng: &mut ChaCha8Rng,
        cues: Cues,
        authority_word: bool,
        stance: Option<Stance>,
        mentions: &[String],
    ) -> String {
        let n = rng.random_range(6..=10);
        let mut w = words(rng, &self.vocab.neutral, n);
        self.insert_cues(rng, &mut w, cues);
        if authority_word {
            let pos = rng.random_range(0..=w.len());
            w.insert(pos, self.vocab.authority.choose(rng).expect("authority words").clone());
        }
        if let Some(s) = stance {
            let pos = rng.random_range(0..=w.len());
            w.insert(pos, self.vocab.stance_words(s).choose(rng).expect("stance words").clone());
        }
        let mut text = w.join(" ");
        for m in mentions {
            text.push_str(" @");
            text.push_str(m);
        }
        text
    }
}

fn plain_record(id: &str, author: &str, timestamp: i64, text: String) -> TweetRecord {
    TweetRecord {
        tweet_id: id.to_string(),
        author_id: author.to_string(),
        timestamp,
        text,
        retweeted_tweet_id: None,
        quoted_tweet_id: None,
        replied_to_tweet_id: None,
        mentioned_user_ids: Vec::new(),
        favorites: 0,
        retweets: 0,
        replies: 0,
        quotes: 0,
    }
}

fn truth_record(id: &str, p: &Planted, cues: Cues) -> TriggerRecord {
    let (affect, negativity) = if p.affect_negativity {
        (cues.affect(), cues.negativity())
    } else {
        (false, false)
    };
    let mut record = TriggerRecord {
        tweet_id: id.to_string(),
        homophily: p.homophily,
        authority: p.authority,
        availability: p.availability,
        illusory_truth: p.illusory,
        affect_negativity: p.affect_negativity,
        cognitive_dissonance: p.dissonance,
        confirmation: p.confirmation,
        trigger_count: 0,
        affect,
        negativity,
    };
    record.trigger_count = record.constructs().iter().filter(|&&b| b).count() as u8;
    record
}

/// Builds the synthetic corpus and its ground truth. Pure function of the
/// config: users are generated in parallel from independent ChaCha8 streams
/// keyed by user index and emitted in user order.
pub fn generate_corpus(config: &SimulationConfig, lexicon: &Lexicon) -> Result<SimulationOutput, SimulationError> {
    config.validate()?;
    let world = World::build(config, lexicon)?;
    let (mut profiles, mut tweets, mut truth) = world.auxiliary();
    let users: Vec<UserOutput> = (0..config.total_users())
        .into_par_iter()
        .map(|i| {
            let cohort = if i < config.n_bots { AccountClass::Bot } else { AccountClass::Human };
            world.user(i, cohort)
        })
        .collect::<Result<_, _>>()?;
    for u in users {
        let (aff, auth) = extract_profile_terms(&u.profile.bio, lexicon);
        if aff.is_empty() || !auth.is_empty() {
            return Err(config_err(format!("bio of {} does not parse to its planted terms", u.profile.user_id)));
        }
        profiles.push(u.profile);
        tweets.extend(u.tweets);
        truth.extend(u.truth);
    }
    let models = AccountClass::ALL
        .iter()
        .flat_map(|&cohort| {
            let models = match cohort {
                AccountClass::Bot => config.engagement.bot,
                AccountClass::Human => config.engagement.human,
            };
            Metric::ALL.iter().map(move |&metric| {
                let m = models.get(metric);
                TrueModel { cohort, metric, alpha: m.alpha, noise_sd: m.noise_sd }
            })
        })
        .collect();
    Ok(SimulationOutput {
        tweets,
        profiles,
        truth: GroundTruth { tweets: truth, models },
    })
}

/// Lexicon named by the config, or the built-in one.
pub fn config_lexicon(config: &SimulationConfig) -> Result<Lexicon, SimulationError> {
    match &config.lexicon_dir {
        Some(dir) => Lexicon::load_dir(Path::new(dir)).map_err(|e| config_err(e.to_string())),
        None => Ok(Lexicon::builtin()),
    }
}

/// Thresholds the simulator plants against.
pub fn planting_thresholds(config: &SimulationConfig) -> ThresholdConfig {
    ThresholdConfig {
        bot_cutoff: config.bot_cutoff,
        ..ThresholdConfig::default()
    }
}

/// Generates a corpus, runs detection on it and fails unless detection
/// reproduces the planted flags exactly.
pub fn generate_verified(
    config: &SimulationConfig,
    lexicon: &Lexicon,
) -> Result<(SimulationOutput, Corpus, Detection), SimulationError> {
    let output = generate_corpus(config, lexicon)?;
    let corpus = output.corpus(lexicon)?;
    let detection = detect(&corpus, lexicon, lexicon, &planting_thresholds(config), &DetectOptions::default());
    let detected: BTreeMap<&str, &TriggerVector> =
        detection.vectors.iter().map(|v| (v.tweet_id.as_str(), v)).collect();
    for planted in &output.truth.tweets {
        let found = detected[planted.tweet_id.as_str()].record();
        let pairs = Construct::ALL
            .iter()
            .map(|c| (c.name(), planted.constructs()[c.index()], found.constructs()[c.index()]))
            .chain([("affect", planted.affect, found.affect), ("negativity", planted.negativity, found.negativity)]);
        for (name, p, d) in pairs {
            if p != d {
                return Err(SimulationError::PlantingMismatch {
                    construct: name.to_string(),
                    tweet_id: planted.tweet_id.clone(),
                    planted: p,
                    detected: d,
                });
            }
        }
    }
    Ok((output, corpus, detection))
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("detected and planted tweet ids differ: {missing} planted ids not detected, {unexpected} detected ids not planted")]
pub struct CoverageError {
    pub missing: usize,
    pub unexpected: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConstructConfusion {
    pub construct: Construct,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionReport {
    pub tweets: usize,
    pub constructs: Vec<ConstructConfusion>,
    pub exact: bool,
}

impl ConfusionReport {
    pub fn errors(&self) -> u64 {
        self.constructs.iter().map(|c| c.false_positives + c.false_negatives).sum()
    }
}

pub fn verify_against_truth(detected: &[TriggerRecord], truth: &GroundTruth) -> Result<ConfusionReport, CoverageError> {
    let found: BTreeMap<&str, &TriggerRecord> = detected.iter().map(|r| (r.tweet_id.as_str(), r)).collect();
    let planted: BTreeMap<&str, &TriggerRecord> = truth.tweets.iter().map(|r| (r.tweet_id.as_str(), r)).collect();
    let missing = planted.keys().filter(|k| !found.contains_key(*k)).count();
    let unexpected = found.keys().filter(|k| !planted.contains_key(*k)).count();
    if missing > 0 || unexpected > 0 || found.len() != detected.len() || planted.len() != truth.tweets.len() {
        return Err(CoverageError { missing, unexpected });
    }
    let mut constructs: Vec<ConstructConfusion> = Construct::ALL
        .iter()
        .map(|&c| ConstructConfusion {
            construct: c,
            true_positives: 0,
            false_positives: 0,
            false_negatives: 0,
            true_negatives: 0,
        })
        .collect();
    for (id, p) in &planted {
        let d = found[id].constructs();
        for (slot, (&pf, &df)) in constructs.iter_mut().zip(p.constructs().iter().zip(&d)) {
            match (pf, df) {
                (true, true) => slot.true_positives += 1,
                (false, true) => slot.false_positives += 1,
                (true, false) => slot.false_negatives += 1,
                (false, false) => slot.true_negatives += 1,
            }
        }
    }
    let exact = constructs.iter().all(|c| c.false_positives == 0 && c.false_negatives == 0);
    Ok(ConfusionReport { tweets: planted.len(), constructs, exact })
}

/// Writes a JSON-lines file of trigger records.
pub fn write_records(path: &Path, records: &[TriggerRecord]) -> std::io::Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(std::io::Error::other)?;
        buf.write_all(b"\n")?;
    }
    crate::report::write_atomic(path, &buf)
}

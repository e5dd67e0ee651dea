//! Trigger detectors, threshold derivation and the corpus-wide detection
//! engine.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_text, Corpus, ShareKey, TweetRecord, UserProfile, DEFAULT_BOT_CUTOFF};
use crate::lexicon::{split_sentences, tokenize, Category, Lexicon, Stance, StanceClassifier};
use crate::network::{dissonance_flags, InteractionGraph};
use crate::similarity::{leader_clusters, ClusterItem, Embedding, EmbeddingProvider, DEFAULT_SIMILARITY};

/// The eight base triggers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerType {
    Homophily,
    Authority,
    Availability,
    IllusoryTruth,
    Affect,
    Negativity,
    CognitiveDissonance,
    Confirmation,
}

impl TriggerType {
    pub const ALL: [TriggerType; 8] = [
        TriggerType::Homophily,
        TriggerType::Authority,
        TriggerType::Availability,
        TriggerType::IllusoryTruth,
        TriggerType::Affect,
        TriggerType::Negativity,
        TriggerType::CognitiveDissonance,
        TriggerType::Confirmation,
    ];
}

/// Analytic constructs, with Affect and Negativity merged. The order is the
/// regressor order of the engagement models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construct {
    Homophily,
    Authority,
    Availability,
    IllusoryTruth,
    AffectNegativity,
    CognitiveDissonance,
    Confirmation,
}

impl Construct {
    pub const ALL: [Construct; 7] = [
        Construct::Homophily,
        Construct::Authority,
        Construct::Availability,
        Construct::IllusoryTruth,
        Construct::AffectNegativity,
        Construct::CognitiveDissonance,
        Construct::Confirmation,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Construct::Homophily => "homophily",
            Construct::Authority => "authority",
            Construct::Availability => "availability",
            Construct::IllusoryTruth => "illusory_truth",
            Construct::AffectNegativity => "affect_negativity",
            Construct::CognitiveDissonance => "cognitive_dissonance",
            Construct::Confirmation => "confirmation",
        }
    }
}

impl fmt::Display for Construct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw per-trigger flags of one tweet.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TriggerFlags {
    pub homophily: bool,
    pub authority: bool,
    pub availability: bool,
    pub illusory_truth: bool,
    pub affect: bool,
    pub negativity: bool,
    pub cognitive_dissonance: bool,
    pub confirmation: bool,
}

impl TriggerFlags {
    pub fn get(&self, t: TriggerType) -> bool {
        match t {
            TriggerType::Homophily => self.homophily,
            TriggerType::Authority => self.authority,
            TriggerType::Availability => self.availability,
            TriggerType::IllusoryTruth => self.illusory_truth,
            TriggerType::Affect => self.affect,
            TriggerType::Negativity => self.negativity,
            TriggerType::CognitiveDissonance => self.cognitive_dissonance,
            TriggerType::Confirmation => self.confirmation,
        }
    }

    pub fn set(&mut self, t: TriggerType, value: bool) {
        let slot = match t {
            TriggerType::Homophily => &mut self.homophily,
            TriggerType::Authority => &mut self.authority,
            TriggerType::Availability => &mut self.availability,
            TriggerType::IllusoryTruth => &mut self.illusory_truth,
            TriggerType::Affect => &mut self.affect,
            TriggerType::Negativity => &mut self.negativity,
            TriggerType::CognitiveDissonance => &mut self.cognitive_dissonance,
            TriggerType::Confirmation => &mut self.confirmation,
        };
        *slot = value;
    }

    pub fn construct(&self, c: Construct) -> bool {
        match c {
            Construct::Homophily => self.homophily,
            Construct::Authority => self.authority,
            Construct::Availability => self.availability,
            Construct::IllusoryTruth => self.illusory_truth,
            Construct::AffectNegativity => self.affect || self.negativity,
            Construct::CognitiveDissonance => self.cognitive_dissonance,
            Construct::Confirmation => self.confirmation,
        }
    }

    pub fn constructs(&self) -> [bool; 7] {
        Construct::ALL.map(|c| self.construct(c))
    }

    /// Number of constructs set (0..=7).
    pub fn trigger_count(&self) -> u8 {
        self.constructs().iter().filter(|&&b| b).count() as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerVector {
    pub tweet_id: String,
    pub flags: TriggerFlags,
}

impl TriggerVector {
    pub fn trigger_count(&self) -> u8 {
        self.flags.trigger_count()
    }

    pub fn record(&self) -> TriggerRecord {
        let f = &self.flags;
        TriggerRecord {
            tweet_id: self.tweet_id.clone(),
            homophily: f.homophily,
            authority: f.authority,
            availability: f.availability,
            illusory_truth: f.illusory_truth,
            affect_negativity: f.construct(Construct::AffectNegativity),
            cognitive_dissonance: f.cognitive_dissonance,
            confirmation: f.confirmation,
            trigger_count: f.trigger_count(),
            affect: f.affect,
            negativity: f.negativity,
        }
    }
}

/// One line of the flags file: construct flags, the count, and the raw
/// affect/negativity flags kept for audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerRecord {
    pub tweet_id: String,
    pub homophily: bool,
    pub authority: bool,
    pub availability: bool,
    pub illusory_truth: bool,
    pub affect_negativity: bool,
    pub cognitive_dissonance: bool,
    pub confirmation: bool,
    pub trigger_count: u8,
    pub affect: bool,
    pub negativity: bool,
}

impl TriggerRecord {
    pub fn constructs(&self) -> [bool; 7] {
        [
            self.homophily,
            self.authority,
            self.availability,
            self.illusory_truth,
            self.affect_negativity,
            self.cognitive_dissonance,
            self.confirmation,
        ]
    }

    pub fn vector(&self) -> TriggerVector {
        TriggerVector {
            tweet_id: self.tweet_id.clone(),
            flags: TriggerFlags {
                homophily: self.homophily,
                authority: self.authority,
                availability: self.availability,
                illusory_truth: self.illusory_truth,
                affect: self.affect,
                negativity: self.negativity,
                cognitive_dissonance: self.cognitive_dissonance,
                confirmation: self.confirmation,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    Fixed,
    Auto,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot derive a threshold from an empty cue distribution")]
pub struct EmptyInputError;

/// Summary of one cue distribution and the threshold it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CueStats {
    pub n: usize,
    pub mu: f64,
    pub sigma: f64,
    pub k: u32,
}

/// Mean, population standard deviation and `k = max(1, ceil(mu + sigma))`.
pub fn derive_threshold(values: &[f64]) -> Result<CueStats, EmptyInputError> {
    let first = *values.first().ok_or(EmptyInputError)?;
    let n = values.len() as f64;
    let shift = values.iter().map(|v| v - first).sum::<f64>() / n;
    let mu = first + shift;
    let var = values.iter().map(|v| (v - first - shift).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt();
    let k = (mu + sigma).ceil().max(1.0);
    Ok(CueStats {
        n: values.len(),
        mu,
        sigma,
        k: k.min(u32::MAX as f64) as u32,
    })
}

/// Resolved thresholds plus the cue statistics they were (or would have
/// been) derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub mode: ThresholdMode,
    pub k_availability: u32,
    pub k_illusory: u32,
    pub k_confirmation: u32,
    pub k_affect: u32,
    pub k_negativity: u32,
    pub r_similarity: f64,
    pub bot_cutoff: f64,
    #[serde(default)]
    pub cues: BTreeMap<String, Option<CueStats>>,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            mode: ThresholdMode::Fixed,
            k_availability: 3,
            k_illusory: 3,
            k_confirmation: 3,
            k_affect: 3,
            k_negativity: 2,
            r_similarity: DEFAULT_SIMILARITY,
            bot_cutoff: DEFAULT_BOT_CUTOFF,
            cues: BTreeMap::new(),
        }
    }
}

pub fn detect_affect(tweet: &TweetRecord, lexicon: &Lexicon, k_affect: u32) -> bool {
    lexicon.count(&tokenize(&tweet.text), Category::Emotion) >= k_affect as usize
}

pub fn detect_negativity(tweet: &TweetRecord, lexicon: &Lexicon, k_negativity: u32) -> bool {
    lexicon.count(&tokenize(&tweet.text), Category::Negative) >= k_negativity as usize
}

/// A share whose author and source author have a common affiliation.
pub fn detect_homophily(
    tweet: &TweetRecord,
    author: &UserProfile,
    source_author: Option<&UserProfile>,
) -> bool {
    tweet.is_share()
        && source_author.is_some_and(|s| !author.affiliations.is_disjoint(&s.affiliations))
}

pub fn detect_authority(
    tweet: &TweetRecord,
    author: &UserProfile,
    mentioned: &[&UserProfile],
    lexicon: &Lexicon,
) -> bool {
    authority_from_parts(
        lexicon.count(&tokenize(&tweet.text), Category::Authority) > 0,
        author,
        mentioned.iter().copied(),
    )
}

fn authority_from_parts<'a>(
    text_hit: bool,
    author: &UserProfile,
    mut mentioned: impl Iterator<Item = &'a UserProfile>,
) -> bool {
    text_hit || !author.authority_terms.is_empty() || mentioned.any(|p| !p.authority_terms.is_empty())
}

/// Positions of the shares in `timeline`, grouped by share key. Groups are
/// ordered by first occurrence.
pub fn share_groups(timeline: &[&TweetRecord]) -> Vec<Vec<usize>> {
    let mut index: HashMap<ShareKey, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (pos, tweet) in timeline.iter().enumerate() {
        if let Some(key) = tweet.share_key() {
            let g = *index.entry(key).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(pos);
        }
    }
    groups
}

fn flag_groups(groups: &[Vec<usize>], k: u32) -> Vec<usize> {
    let mut out: Vec<usize> = groups
        .iter()
        .filter(|g| g.len() >= k as usize)
        .flatten()
        .copied()
        .collect();
    out.sort_unstable();
    out
}

pub fn detect_availability(timeline: &[&TweetRecord], k_availability: u32) -> Vec<String> {
    ids_at(timeline, flag_groups(&share_groups(timeline), k_availability))
}

fn ids_at(timeline: &[&TweetRecord], positions: Vec<usize>) -> Vec<String> {
    positions.into_iter().map(|p| timeline[p].tweet_id.clone()).collect()
}

/// Leader clusters over the original (non-share) posts of `timeline`, as
/// positions into `timeline`.
pub fn original_clusters(
    timeline: &[&TweetRecord],
    r: f64,
    provider: &EmbeddingProvider,
) -> Vec<Vec<usize>> {
    let originals: Vec<usize> = (0..timeline.len()).filter(|&p| !timeline[p].is_share()).collect();
    let embeddings: Vec<Embedding> = originals.iter().map(|&p| provider.embed_tweet(timeline[p])).collect();
    let texts: Vec<String> = originals.iter().map(|&p| normalize_text(&timeline[p].text)).collect();
    let ids: Vec<String> = originals.iter().map(|p| p.to_string()).collect();
    let items: Vec<ClusterItem<'_>> = (0..originals.len())
        .map(|i| ClusterItem {
            id: &ids[i],
            normalized_text: &texts[i],
            embedding: &embeddings[i],
        })
        .collect();
    leader_clusters(&items, r)
        .into_iter()
        .map(|c| {
            c.member_tweet_ids
                .iter()
                .map(|id| id.parse().expect("position id"))
                .collect()
        })
        .collect()
}

pub fn detect_illusory_truth(
    timeline: &[&TweetRecord],
    k_illusory: u32,
    r_similarity: f64,
    provider: &EmbeddingProvider,
) -> Vec<String> {
    let clusters = original_clusters(timeline, r_similarity, provider);
    ids_at(timeline, flag_groups(&clusters, k_illusory))
}

/// Maximal same-stance runs over stance-bearing posts, as positions. Within a
/// run only the first occurrence of each normalized text is kept. Neutral
/// posts are skipped unless `strict`, where they end the current run.
pub fn confirmation_runs(stances: &[Stance], texts: &[String], strict: bool) -> Vec<Vec<usize>> {
    let mut runs = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut seen: HashSet<&str> = HashSet::new();
    let mut run_stance = Stance::Neutral;
    let mut close = |current: &mut Vec<usize>, seen: &mut HashSet<&str>| {
        if !current.is_empty() {
            runs.push(std::mem::take(current));
        }
        seen.clear();
    };
    for (pos, &s) in stances.iter().enumerate() {
        if s.is_neutral() {
            if strict {
                close(&mut current, &mut seen);
                run_stance = Stance::Neutral;
            }
            continue;
        }
        if s != run_stance {
            close(&mut current, &mut seen);
            run_stance = s;
        }
        if seen.insert(texts[pos].as_str()) {
            current.push(pos);
        }
    }
    close(&mut current, &mut seen);
    runs
}

/// A post with at least two distinct sentences carrying the same
/// non-neutral stance.
pub fn two_sentence_confirmation(text: &str, stance_fn: &dyn StanceClassifier) -> bool {
    let mut pro = HashSet::new();
    let mut anti = HashSet::new();
    for sentence in split_sentences(text) {
        let tokens = tokenize(&sentence);
        match stance_fn.stance_of_tokens(&sentence, &tokens) {
            Stance::Pro => pro.insert(tokens),
            Stance::Anti => anti.insert(tokens),
            Stance::Neutral => false,
        };
    }
    pro.len() >= 2 || anti.len() >= 2
}

/// Positions flagged for confirmation by either the run rule or the
/// two-sentence rule.
pub fn detect_confirmation(
    timeline: &[&TweetRecord],
    k_confirmation: u32,
    stance_fn: &dyn StanceClassifier,
    strict: bool,
) -> Vec<String> {
    let stances: Vec<Stance> = timeline.iter().map(|t| stance_fn.stance(&t.text)).collect();
    let texts: Vec<String> = timeline.iter().map(|t| normalize_text(&t.text)).collect();
    let mut flagged: HashSet<usize> = flag_groups(&confirmation_runs(&stances, &texts, strict), k_confirmation)
        .into_iter()
        .collect();
    for (pos, t) in timeline.iter().enumerate() {
        if two_sentence_confirmation(&t.text, stance_fn) {
            flagged.insert(pos);
        }
    }
    let mut positions: Vec<usize> = flagged.into_iter().collect();
    positions.sort_unstable();
    ids_at(timeline, positions)
}

/// Detection options other than thresholds.
#[derive(Debug, Clone, Default)]
pub struct DetectOptions {
    pub provider: EmbeddingProvider,
    /// Neutral posts end confirmation runs.
    pub strict_confirmation: bool,
}

/// Counts gathered during detection for the run report.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DetectionReport {
    pub tweets: usize,
    pub users: usize,
    pub shares: usize,
    /// Shares whose source tweet is not in the corpus; homophily is false for them.
    pub shares_without_source: usize,
    pub interactions: usize,
}

#[derive(Debug, Clone)]
pub struct Detection {
    /// One vector per tweet, in corpus order.
    pub vectors: Vec<TriggerVector>,
    pub thresholds: ThresholdConfig,
    pub report: DetectionReport,
    pub stances: Vec<Stance>,
}

impl Detection {
    /// Vectors ordered by tweet id.
    pub fn sorted_records(&self) -> Vec<TriggerRecord> {
        let mut records: Vec<TriggerRecord> = self.vectors.iter().map(TriggerVector::record).collect();
        records.sort_by(|a, b| a.tweet_id.cmp(&b.tweet_id));
        records
    }
}

struct TweetFeatures {
    emotion: usize,
    negative: usize,
    authority_text: bool,
    stance: Stance,
    two_sentence: bool,
}

#[derive(Default)]
struct UserStructures {
    share_groups: Vec<Vec<usize>>,
    clusters: Vec<Vec<usize>>,
    runs: Vec<Vec<usize>>,
}

fn cue(values: Vec<f64>) -> Option<CueStats> {
    derive_threshold(&values).ok()
}

fn sizes(groups: &[Vec<usize>]) -> impl Iterator<Item = f64> + '_ {
    groups.iter().map(|g| g.len() as f64)
}

/// Runs every detector over the corpus. Profiles must already carry their
/// derived terms (see [`Corpus::derive_profile_terms`]). In auto mode the
/// `k` values of `thresholds` are replaced by the derived ones; a cue with
/// no observations keeps its configured value.
pub fn detect(
    corpus: &Corpus,
    lexicon: &Lexicon,
    stance_fn: &dyn StanceClassifier,
    thresholds: &ThresholdConfig,
    options: &DetectOptions,
) -> Detection {
    let tweets = corpus.tweets();
    let profiles = corpus.profiles();

    let features: Vec<TweetFeatures> = tweets
        .par_iter()
        .map(|t| {
            let tokens = tokenize(&t.text);
            TweetFeatures {
                emotion: lexicon.count(&tokens, Category::Emotion),
                negative: lexicon.count(&tokens, Category::Negative),
                authority_text: lexicon.count(&tokens, Category::Authority) > 0,
                stance: stance_fn.stance_of_tokens(&t.text, &tokens),
                two_sentence: two_sentence_confirmation(&t.text, stance_fn),
            }
        })
        .collect();
    let stances: Vec<Stance> = features.iter().map(|f| f.stance).collect();

    let users: Vec<UserStructures> = (0..profiles.len())
        .into_par_iter()
        .map(|u| {
            let idx = corpus.timeline_indices(u);
            if idx.is_empty() {
                return UserStructures::default();
            }
            let timeline: Vec<&TweetRecord> = idx.iter().map(|&i| &tweets[i]).collect();
            let texts: Vec<String> = timeline.iter().map(|t| normalize_text(&t.text)).collect();
            let user_stances: Vec<Stance> = idx.iter().map(|&i| stances[i]).collect();
            let to_global = |groups: Vec<Vec<usize>>| -> Vec<Vec<usize>> {
                groups
                    .into_iter()
                    .map(|g| g.into_iter().map(|p| idx[p]).collect())
                    .collect()
            };
            UserStructures {
                share_groups: to_global(share_groups(&timeline)),
                clusters: to_global(original_clusters(&timeline, thresholds.r_similarity, &options.provider)),
                runs: to_global(confirmation_runs(&user_stances, &texts, options.strict_confirmation)),
            }
        })
        .collect();

    let mut resolved = thresholds.clone();
    let mut cues = BTreeMap::new();
    cues.insert("affect".to_string(), cue(features.iter().map(|f| f.emotion as f64).collect()));
    cues.insert("negativity".to_string(), cue(features.iter().map(|f| f.negative as f64).collect()));
    cues.insert(
        "availability".to_string(),
        cue(users.iter().flat_map(|u| sizes(&u.share_groups)).collect()),
    );
    cues.insert(
        "illusory_truth".to_string(),
        cue(users.iter().flat_map(|u| sizes(&u.clusters)).collect()),
    );
    cues.insert(
        "confirmation".to_string(),
        cue(users.iter().flat_map(|u| sizes(&u.runs)).collect()),
    );
    if thresholds.mode == ThresholdMode::Auto {
        let pick = |name: &str, fallback: u32| cues[name].map_or(fallback, |c| c.k);
        resolved.k_affect = pick("affect", thresholds.k_affect);
        resolved.k_negativity = pick("negativity", thresholds.k_negativity);
        resolved.k_availability = pick("availability", thresholds.k_availability);
        resolved.k_illusory = pick("illusory_truth", thresholds.k_illusory);
        resolved.k_confirmation = pick("confirmation", thresholds.k_confirmation);
    }
    resolved.cues = cues;

    let mut availability = vec![false; tweets.len()];
    let mut illusory = vec![false; tweets.len()];
    let mut confirmation: Vec<bool> = features.iter().map(|f| f.two_sentence).collect();
    for u in &users {
        for i in flag_groups(&u.share_groups, resolved.k_availability) {
            availability[i] = true;
        }
        for i in flag_groups(&u.clusters, resolved.k_illusory) {
            illusory[i] = true;
        }
        for i in flag_groups(&u.runs, resolved.k_confirmation) {
            confirmation[i] = true;
        }
    }

    let graph = InteractionGraph::build(corpus);
    let dissonance = dissonance_flags(corpus, &graph, &stances);

    let vectors: Vec<TriggerVector> = (0..tweets.len())
        .into_par_iter()
        .map(|i| {
            let t = &tweets[i];
            let f = &features[i];
            let author = &profiles[corpus.author_index(i)];
            let source_author = t
                .source_tweet_id()
                .and_then(|s| corpus.tweet_index(s))
                .map(|s| &profiles[corpus.author_index(s)]);
            let mentioned = t
                .mentioned_user_ids
                .iter()
                .filter_map(|m| corpus.profile(m));
            TriggerVector {
                tweet_id: t.tweet_id.clone(),
                flags: TriggerFlags {
                    homophily: detect_homophily(t, author, source_author),
                    authority: authority_from_parts(f.authority_text, author, mentioned),
                    availability: availability[i],
                    illusory_truth: illusory[i],
                    affect: f.emotion >= resolved.k_affect as usize,
                    negativity: f.negative >= resolved.k_negativity as usize,
                    cognitive_dissonance: dissonance[i],
                    confirmation: confirmation[i],
                },
            }
        })
        .collect();

    let shares = tweets.iter().filter(|t| t.is_share()).count();
    let shares_without_source = tweets
        .iter()
        .filter(|t| t.is_share() && t.source_tweet_id().and_then(|s| corpus.tweet_index(s)).is_none())
        .count();
    Detection {
        vectors,
        thresholds: resolved,
        report: DetectionReport {
            tweets: tweets.len(),
            users: profiles.len(),
            shares,
            shares_without_source,
            interactions: graph.edges().len(),
        },
        stances,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tw(id: &str, author: &str, ts: i64, text: &str) -> TweetRecord {
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

    fn rt(id: &str, author: &str, ts: i64, source: &str) -> TweetRecord {
        let mut t = tw(id, author, ts, "RT");
        t.retweeted_tweet_id = Some(source.into());
        t
    }

    fn profile(id: &str, bio: &str, lex: &Lexicon) -> UserProfile {
        let mut p = UserProfile::new(id, bio, None);
        let (a, b) = crate::lexicon::extract_profile_terms(bio, lex);
        p.affiliations = a;
        p.authority_terms = b;
        p
    }

    /// Two values at mu ± sigma have exactly that mean and population sd.
    fn two_point(mu: f64, sigma: f64) -> Vec<f64> {
        vec![mu - sigma, mu + sigma]
    }

    #[test]
    fn derive_threshold_cases() {
        assert_eq!(derive_threshold(&two_point(2.01, 0.82)).unwrap().k, 3);
        assert_eq!(derive_threshold(&two_point(1.20, 0.53)).unwrap().k, 2);
        assert_eq!(derive_threshold(&[0.0, 0.0, 0.0]).unwrap().k, 1);
        assert_eq!(derive_threshold(&[]), Err(EmptyInputError));
        let s = derive_threshold(&[1.0, 1.0, 3.0, 3.0]).unwrap();
        assert_eq!((s.mu, s.sigma, s.k), (2.0, 1.0, 3));
    }

    #[test]
    fn affect_and_negativity_independent() {
        let lex = Lexicon::builtin();
        let t = tw("a", "u", 1, "this is a disaster and it's getting worse");
        assert!(detect_negativity(&t, &lex, 2));
        assert!(!detect_affect(&t, &lex, 3));
        assert!(!detect_affect(&tw("b", "u", 1, ""), &lex, 3));
        assert!(detect_affect(&tw("c", "u", 1, "happy love fear"), &lex, 3));
        assert!(!detect_affect(&tw("c", "u", 1, "happy love"), &lex, 3));
        assert!(!detect_negativity(&tw("d", "u", 1, "a disaster"), &lex, 2));
    }

    #[test]
    fn homophily_cases() {
        let lex = Lexicon::builtin();
        let author = profile("u", "teacher", &lex);
        let source = profile("v", "math teacher", &lex);
        let other = profile("w", "nurse", &lex);
        assert!(detect_homophily(&rt("a", "u", 1, "s"), &author, Some(&source)));
        assert!(!detect_homophily(&tw("a", "u", 1, "x"), &author, Some(&source)));
        assert!(!detect_homophily(&rt("a", "u", 1, "s"), &author, Some(&other)));
        assert!(!detect_homophily(&rt("a", "u", 1, "s"), &author, None));
    }

    #[test]
    fn authority_cases() {
        let lex = Lexicon::builtin();
        let plain = profile("u", "", &lex);
        let president = profile("p", "former president", &lex);
        let ceo = profile("c", "CEO of things", &lex);
        let t = tw("a", "u", 1, "hello @p");
        assert!(detect_authority(&t, &plain, &[&president], &lex));
        assert!(detect_authority(&t, &ceo, &[], &lex));
        assert!(!detect_authority(&t, &plain, &[], &lex));
        assert!(detect_authority(&tw("b", "u", 1, "the ceo said so"), &plain, &[], &lex));
    }

    #[test]
    fn availability_cases() {
        let three = [rt("a", "u", 1, "t9"), rt("b", "u", 2, "t9"), rt("c", "u", 3, "t9")];
        let refs: Vec<&TweetRecord> = three.iter().collect();
        assert_eq!(detect_availability(&refs, 3), ["a", "b", "c"]);
        assert!(detect_availability(&refs[..2], 3).is_empty());
        let distinct = [rt("a", "u", 1, "x"), rt("b", "u", 2, "y"), rt("c", "u", 3, "z")];
        let refs: Vec<&TweetRecord> = distinct.iter().collect();
        assert!(detect_availability(&refs, 3).is_empty());
    }

    #[test]
    fn illusory_cases() {
        let ts = [
            tw("a", "u", 1, "masks do not stop the virus @a"),
            tw("b", "u", 2, "masks do not stop the virus @b"),
            tw("c", "u", 3, "masks do not stop the virus @c"),
            rt("d", "u", 4, "zz"),
        ];
        let refs: Vec<&TweetRecord> = ts.iter().collect();
        let provider = EmbeddingProvider::default();
        assert_eq!(detect_illusory_truth(&refs, 3, 0.8, &provider), ["a", "b", "c"]);
        assert!(detect_illusory_truth(&refs[..2], 3, 0.8, &provider).is_empty());
    }

    #[test]
    fn confirmation_cases() {
        let lex = Lexicon::builtin();
        let anti = [
            tw("a", "u", 1, "#novaccine for me"),
            tw("b", "u", 2, "never trust it #novax"),
            tw("c", "u", 3, "the jab is a #killshot"),
        ];
        let refs: Vec<&TweetRecord> = anti.iter().collect();
        assert_eq!(detect_confirmation(&refs, 3, &lex, false), ["a", "b", "c"]);
        let mixed = [
            tw("a", "u", 1, "#getthevaccine"),
            tw("b", "u", 2, "#novaccine"),
            tw("c", "u", 3, "#getthevaccine today"),
        ];
        let refs: Vec<&TweetRecord> = mixed.iter().collect();
        assert!(detect_confirmation(&refs, 3, &lex, false).is_empty());
        let two = [tw("a", "u", 1, "Vaccines work. #GetTheVaccine now!")];
        let refs: Vec<&TweetRecord> = two.iter().collect();
        assert_eq!(detect_confirmation(&refs, 3, &lex, false), ["a"]);
    }

    #[test]
    fn confirmation_run_edge_cases() {
        use Stance::{Anti, Neutral, Pro};
        let texts = |n: usize| (0..n).map(|i| format!("t{i}")).collect::<Vec<_>>();
        assert_eq!(confirmation_runs(&[Pro, Neutral, Pro, Pro], &texts(4), false), [vec![0, 2, 3]]);
        assert_eq!(
            confirmation_runs(&[Pro, Neutral, Pro, Pro], &texts(4), true),
            [vec![0], vec![2, 3]]
        );
        let same = vec!["x".to_string(), "x".into(), "y".into()];
        assert_eq!(confirmation_runs(&[Anti, Anti, Anti], &same, false), [vec![0, 2]]);
    }

    #[test]
    fn merged_count() {
        let mut f = TriggerFlags { affect: true, negativity: true, ..Default::default() };
        assert_eq!(f.trigger_count(), 1);
        f = TriggerFlags { availability: true, cognitive_dissonance: true, ..Default::default() };
        assert_eq!(f.trigger_count(), 2);
        assert_eq!(TriggerFlags::default().trigger_count(), 0);
    }

    #[test]
    fn auto_mode_resolves_thresholds() {
        let lex = Lexicon::builtin();
        let corpus = Corpus::new(
            vec![tw("a", "u", 1, "happy"), tw("b", "u", 2, "hello"), tw("c", "u", 3, "")],
            vec![],
        )
        .unwrap();
        let config = ThresholdConfig { mode: ThresholdMode::Auto, ..Default::default() };
        let d = detect(&corpus, &lex, &lex, &config, &DetectOptions::default());
        assert_eq!(d.thresholds.k_affect, 1);
        assert!(d.thresholds.cues["availability"].is_none());
        assert_eq!(d.thresholds.k_availability, 3);
        assert!(d.vectors[0].flags.affect);
    }

    fn arb_corpus() -> impl Strategy<Value = Vec<TweetRecord>> {
        let texts = prop::sample::select(vec![
            "#novaccine again",
            "#getthevaccine",
            "happy love fear",
            "disaster worse",
            "the ceo agrees",
            "hello world",
            "Vaccines work. Get vaccinated!",
        ]);
        prop::collection::vec((0usize..4, texts, prop::option::of(0usize..30), 0usize..4), 1..40).prop_map(|rows| {
            rows.iter()
                .enumerate()
                .map(|(i, (author, text, src, mention))| {
                    let mut t = tw(&format!("t{i:02}"), &format!("u{author}"), i as i64, text);
                    if let Some(s) = src.filter(|s| *s < i) {
                        t.retweeted_tweet_id = Some(format!("t{s:02}"));
                    }
                    if *mention > 0 {
                        t.mentioned_user_ids = vec![format!("u{mention}")];
                    }
                    t
                })
                .collect()
        })
    }

    fn run(tweets: Vec<TweetRecord>, config: &ThresholdConfig) -> BTreeMap<String, TriggerFlags> {
        let lex = Lexicon::builtin();
        let profiles = vec![
            UserProfile::new("u0", "teacher", None),
            UserProfile::new("u1", "teacher and dad", None),
            UserProfile::new("u2", "president", None),
            UserProfile::new("u3", "", None),
        ];
        let mut corpus = Corpus::new(tweets, profiles).unwrap();
        corpus.derive_profile_terms(&lex);
        detect(&corpus, &lex, &lex, config, &DetectOptions::default())
            .vectors
            .into_iter()
            .map(|v| (v.tweet_id, v.flags))
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn lowering_k_never_unsets(tweets in arb_corpus(), drop in 1u32..3) {
            let high = ThresholdConfig::default();
            let low = ThresholdConfig {
                k_availability: high.k_availability.saturating_sub(drop).max(1),
                k_illusory: high.k_illusory.saturating_sub(drop).max(1),
                k_confirmation: high.k_confirmation.saturating_sub(drop).max(1),
                k_affect: high.k_affect.saturating_sub(drop).max(1),
                k_negativity: high.k_negativity.saturating_sub(drop).max(1),
                ..high.clone()
            };
            let a = run(tweets.clone(), &high);
            let b = run(tweets, &low);
            for (id, fa) in &a {
                let fb = b[id];
                for t in TriggerType::ALL {
                    prop_assert!(!fa.get(t) || fb.get(t), "{id} {t:?}");
                }
            }
        }

        #[test]
        fn per_tweet_detectors_ignore_rest_of_corpus(tweets in arb_corpus(), keep in 1usize..40) {
            let config = ThresholdConfig::default();
            let full = run(tweets.clone(), &config);
            let keep = keep.min(tweets.len());
            let subset: Vec<TweetRecord> = tweets[..keep].to_vec();
            let part = run(subset, &config);
            for (id, f) in &part {
                let g = full[id];
                prop_assert_eq!(f.affect, g.affect);
                prop_assert_eq!(f.negativity, g.negativity);
                prop_assert_eq!(f.authority, g.authority);
                prop_assert_eq!(f.homophily, g.homophily);
            }
        }

        #[test]
        fn constant_cue_threshold(c in 0.0f64..20.0, n in 1usize..50) {
            let s = derive_threshold(&vec![c; n]).unwrap();
            prop_assert_eq!(s.k as f64, c.ceil().max(1.0));
        }
    }
}

use std::collections::BTreeMap;

use serde::Serialize;

use super::{mean, population_sd, quantile_sorted};
use crate::corpus::{log_engagement, AccountClass, AccountClasses, Corpus, Metric};
use crate::lexicon::{tokenize, Category, Lexicon};
use crate::triggers::TriggerVector;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Log-engagement summary of the tweets carrying `trigger_count` constructs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub trigger_count: u8,
    pub n: usize,
    pub metrics: BTreeMap<Metric, MetricSummary>,
}

fn summarize(mut values: Vec<f64>) -> MetricSummary {
    let m = mean(&values);
    values.sort_by(f64::total_cmp);
    MetricSummary {
        mean: m,
        q1: quantile_sorted(&values, 0.25),
        median: quantile_sorted(&values, 0.5),
        q3: quantile_sorted(&values, 0.75),
    }
}

/// One row per trigger count present in the cohort, ascending. Quartiles use
/// linear interpolation between order statistics.
pub fn engagement_by_trigger_count(
    vectors: &[TriggerVector],
    corpus: &Corpus,
    cohorts: &[Option<AccountClass>],
    cohort: AccountClass,
) -> Vec<CurveRow> {
    let mut groups: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, (v, c)) in vectors.iter().zip(cohorts).enumerate() {
        if *c == Some(cohort) {
            groups.entry(v.trigger_count()).or_default().push(i);
        }
    }
    groups
        .into_iter()
        .map(|(count, idx)| CurveRow {
            trigger_count: count,
            n: idx.len(),
            metrics: Metric::ALL
                .iter()
                .map(|&m| {
                    let values = idx
                        .iter()
                        .map(|&i| log_engagement(corpus.tweets()[i].engagement(m)))
                        .collect();
                    (m, summarize(values))
                })
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatRow {
    pub variable: &'static str,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortStats {
    pub cohort: AccountClass,
    /// Empty when the cohort has no tweets.
    pub rows: Vec<StatRow>,
}

fn row(variable: &'static str, mut values: Vec<f64>) -> StatRow {
    let m = mean(&values);
    let sd = population_sd(&values);
    values.sort_by(f64::total_cmp);
    StatRow {
        variable,
        n: values.len(),
        mean: m,
        median: quantile_sorted(&values, 0.5),
        sd,
    }
}

/// Per-cohort mean, median and population standard deviation of engagement
/// counts, lexicon cue counts, and per-user activity. Users are counted when
/// they authored at least one tweet.
pub fn descriptive_stats(corpus: &Corpus, classes: &AccountClasses, lexicon: &Lexicon) -> Vec<CohortStats> {
    AccountClass::ALL
        .iter()
        .map(|&cohort| {
            let tweets: Vec<usize> = (0..corpus.len())
                .filter(|&i| classes.of_tweet(corpus, i) == Some(cohort))
                .collect();
            if tweets.is_empty() {
                return CohortStats { cohort, rows: Vec::new() };
            }
            let per_tweet = |f: &dyn Fn(usize) -> f64| tweets.iter().map(|&i| f(i)).collect::<Vec<f64>>();
            let t = corpus.tweets();
            let cues: Vec<(f64, f64)> = tweets
                .iter()
                .map(|&i| {
                    let tokens = tokenize(&t[i].text);
                    (
                        lexicon.count(&tokens, Category::Emotion) as f64,
                        lexicon.count(&tokens, Category::Negative) as f64,
                    )
                })
                .collect();
            let users: Vec<usize> = (0..corpus.profiles().len())
                .filter(|&u| classes.of_user(u) == Some(cohort) && !corpus.timeline_indices(u).is_empty())
                .collect();
            let per_user = |f: &dyn Fn(&[usize]) -> f64| {
                users.iter().map(|&u| f(corpus.timeline_indices(u))).collect::<Vec<f64>>()
            };
            CohortStats {
                cohort,
                rows: vec![
                    row("favorites_per_tweet", per_tweet(&|i| t[i].favorites as f64)),
                    row("quotes_per_tweet", per_tweet(&|i| t[i].quotes as f64)),
                    row("retweets_per_tweet", per_tweet(&|i| t[i].retweets as f64)),
                    row("replies_per_tweet", per_tweet(&|i| t[i].replies as f64)),
                    row("emotion_words_per_tweet", cues.iter().map(|c| c.0).collect()),
                    row("negative_words_per_tweet", cues.iter().map(|c| c.1).collect()),
                    row("tweets_per_user", per_user(&|tl| tl.len() as f64)),
                    row(
                        "retweets_per_user",
                        per_user(&|tl| tl.iter().filter(|&&i| t[i].is_retweet()).count() as f64),
                    ),
                    row(
                        "engagement_per_tweet",
                        per_tweet(&|i| (t[i].favorites + t[i].retweets + t[i].replies + t[i].quotes) as f64),
                    ),
                ],
            }
        })
        .collect()
}

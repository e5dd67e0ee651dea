//! Cohort prevalence, co-occurrence, engagement regressions and descriptive
//! statistics.

mod ols;
mod prevalence;
mod regression;
mod summary;

pub use ols::{ols_fit, ColumnStatus, Design, OlsFit, RankDeficientError};
pub use prevalence::{
    cooccurrence, prevalence_by_cohort, two_proportion_ztest, CohortPrevalence, ConstructPrevalence,
    CooccurrenceMatrix, DomainError, EmptyCohortError, PrevalenceReport, ProportionTest,
};
pub use regression::{
    percent_change, regress_all, regress_cohort, Coefficient, RegressionResult, RegressionSet,
    AbsentModel, PRACTICAL_SIGNIFICANCE,
};
pub use summary::{
    descriptive_stats, engagement_by_trigger_count, CohortStats, CurveRow, MetricSummary, StatRow,
};

use crate::corpus::{AccountClass, AccountClasses, Corpus};

/// Cohort of each tweet's author, in corpus order.
pub fn tweet_cohorts(corpus: &Corpus, classes: &AccountClasses) -> Vec<Option<AccountClass>> {
    (0..corpus.len()).map(|i| classes.of_tweet(corpus, i)).collect()
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn population_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

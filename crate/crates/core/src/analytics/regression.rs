use serde::Serialize;

use super::ols::{ols_fit, ColumnStatus, Design, RankDeficientError};
use crate::corpus::{log_engagement, AccountClass, Corpus, Metric};
use crate::triggers::{Construct, TriggerVector};

/// Effects at or above this magnitude are flagged as practically significant.
pub const PRACTICAL_SIGNIFICANCE: f64 = 0.01;

/// Percentage change in the engagement count implied by a log-scale coefficient.
pub fn percent_change(coef: f64) -> f64 {
    100.0 * coef.exp_m1()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub status: ColumnStatus,
    pub estimate: Option<f64>,
    pub std_error: Option<f64>,
    pub t_value: Option<f64>,
    pub p_value: Option<f64>,
    pub percent_change: Option<f64>,
    pub practically_significant: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    pub cohort: AccountClass,
    pub metric: Metric,
    pub n: usize,
    pub rank: usize,
    pub df_resid: usize,
    /// Intercept first, then the seven constructs in regressor order.
    pub coefficients: Vec<Coefficient>,
    pub residual_variance: Option<f64>,
    pub r_squared: Option<f64>,
}

impl RegressionResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AbsentModel {
    pub cohort: AccountClass,
    pub metric: Metric,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionSet {
    /// Response transform applied to every engagement count.
    pub response: &'static str,
    pub models: Vec<RegressionResult>,
    pub absent: Vec<AbsentModel>,
}

pub(crate) fn design_names() -> Vec<String> {
    std::iter::once("intercept".to_string())
        .chain(Construct::ALL.iter().map(|c| c.name().to_string()))
        .collect()
}

/// Fits `ln(1 + metric)` on the seven construct dummies for one cohort.
pub fn regress_cohort(
    corpus: &Corpus,
    vectors: &[TriggerVector],
    cohorts: &[Option<AccountClass>],
    cohort: AccountClass,
    metric: Metric,
) -> Result<RegressionResult, RankDeficientError> {
    let mut design = Design::new(design_names());
    let mut y = Vec::new();
    let mut row = [0.0; 8];
    for (i, (v, c)) in vectors.iter().zip(cohorts).enumerate() {
        if *c != Some(cohort) {
            continue;
        }
        row[0] = 1.0;
        for (slot, f) in row[1..].iter_mut().zip(v.flags.constructs()) {
            *slot = if f { 1.0 } else { 0.0 };
        }
        design.push_row(&row);
        y.push(log_engagement(corpus.tweets()[i].engagement(metric)));
    }
    let fit = ols_fit(&design, &y)?;
    let coefficients = design
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| Coefficient {
            name: name.clone(),
            status: fit.status[j],
            estimate: fit.coefficients[j],
            std_error: fit.std_errors[j],
            t_value: fit.t_values[j],
            p_value: fit.p_values[j],
            percent_change: fit.coefficients[j].map(percent_change),
            practically_significant: fit.coefficients[j].map(|b| b.abs() >= PRACTICAL_SIGNIFICANCE),
        })
        .collect();
    Ok(RegressionResult {
        cohort,
        metric,
        n: fit.n,
        rank: fit.rank,
        df_resid: fit.df_resid,
        coefficients,
        residual_variance: fit.residual_variance,
        r_squared: fit.r_squared,
    })
}

/// The eight cohort-by-metric models. Cohorts without tweets are listed as
/// absent instead of failing. `vectors` and `cohorts` are in corpus order.
pub fn regress_all(
    corpus: &Corpus,
    vectors: &[TriggerVector],
    cohorts: &[Option<AccountClass>],
) -> RegressionSet {
    let jobs: Vec<(AccountClass, Metric)> = AccountClass::ALL
        .iter()
        .flat_map(|&c| Metric::ALL.iter().map(move |&m| (c, m)))
        .collect();
    let results: Vec<_> = {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(c, m)| (c, m, regress_cohort(corpus, vectors, cohorts, c, m)))
            .collect()
    };
    let mut models = Vec::new();
    let mut absent = Vec::new();
    for (cohort, metric, r) in results {
        match r {
            Ok(model) => models.push(model),
            Err(e) => absent.push(AbsentModel {
                cohort,
                metric,
                reason: format!("cohort has no tweets ({e})"),
            }),
        }
    }
    RegressionSet {
        response: "ln(1 + count)",
        models,
        absent,
    }
}

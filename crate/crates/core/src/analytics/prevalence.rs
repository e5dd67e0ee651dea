use serde::Serialize;
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::corpus::AccountClass;
use crate::triggers::{Construct, TriggerVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("cohort `{}` has no tweets", .0.name())]
pub struct EmptyCohortError(pub AccountClass);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("invalid proportion input: x1={x1}, n1={n1}, x2={x2}, n2={n2}")]
pub struct DomainError {
    pub x1: u64,
    pub n1: u64,
    pub x2: u64,
    pub n2: u64,
}

/// Pooled two-proportion z-test. Returns `(z, p)` with a two-sided normal
/// p-value; `z = 0, p = 1` when the pooled variance is zero.
pub fn two_proportion_ztest(x1: u64, n1: u64, x2: u64, n2: u64) -> Result<(f64, f64), DomainError> {
    if n1 == 0 || n2 == 0 || x1 > n1 || x2 > n2 {
        return Err(DomainError { x1, n1, x2, n2 });
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (x1 + x2) as f64 / (n1f + n2f);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    if se == 0.0 {
        return Ok((0.0, 1.0));
    }
    let z = (x1 as f64 / n1f - x2 as f64 / n2f) / se;
    let p = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    Ok((z, p))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructPrevalence {
    pub construct: Construct,
    pub flagged: u64,
    pub total: u64,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortPrevalence {
    pub cohort: AccountClass,
    pub total: u64,
    pub constructs: Vec<ConstructPrevalence>,
    pub with_any_trigger: u64,
    pub share_with_any_trigger: f64,
    pub share_with_no_trigger: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProportionTest {
    /// Construct name, or `any_trigger`.
    pub subject: String,
    pub bot_proportion: f64,
    pub human_proportion: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrevalenceReport {
    pub bot: CohortPrevalence,
    pub human: CohortPrevalence,
    /// Bot minus human, per construct then for "any trigger".
    pub tests: Vec<ProportionTest>,
}

fn tally(vectors: &[TriggerVector], cohorts: &[Option<AccountClass>], cohort: AccountClass) -> CohortPrevalence {
    let mut flagged = [0u64; 7];
    let (mut total, mut any) = (0u64, 0u64);
    for (v, c) in vectors.iter().zip(cohorts) {
        if *c != Some(cohort) {
            continue;
        }
        total += 1;
        let flags = v.flags.constructs();
        for (slot, f) in flagged.iter_mut().zip(flags) {
            *slot += f as u64;
        }
        any += flags.iter().any(|&f| f) as u64;
    }
    let ratio = |x: u64| if total == 0 { 0.0 } else { x as f64 / total as f64 };
    CohortPrevalence {
        cohort,
        total,
        constructs: Construct::ALL
            .iter()
            .map(|&c| ConstructPrevalence {
                construct: c,
                flagged: flagged[c.index()],
                total,
                proportion: ratio(flagged[c.index()]),
            })
            .collect(),
        with_any_trigger: any,
        share_with_any_trigger: ratio(any),
        share_with_no_trigger: ratio(total - any),
    }
}

/// Exact per-cohort prevalence of each construct and of "any trigger", with
/// bot-versus-human z-tests. `cohorts[i]` is the cohort of `vectors[i]`;
/// tweets of unknown cohort are ignored.
pub fn prevalence_by_cohort(
    vectors: &[TriggerVector],
    cohorts: &[Option<AccountClass>],
) -> Result<PrevalenceReport, EmptyCohortError> {
    let bot = tally(vectors, cohorts, AccountClass::Bot);
    let human = tally(vectors, cohorts, AccountClass::Human);
    for c in [&bot, &human] {
        if c.total == 0 {
            return Err(EmptyCohortError(c.cohort));
        }
    }
    let test = |subject: String, xb: u64, xh: u64| {
        let (z, p) = two_proportion_ztest(xb, bot.total, xh, human.total).expect("counts within totals");
        ProportionTest {
            subject,
            bot_proportion: xb as f64 / bot.total as f64,
            human_proportion: xh as f64 / human.total as f64,
            z,
            p_value: p,
        }
    };
    let mut tests: Vec<ProportionTest> = bot
        .constructs
        .iter()
        .zip(&human.constructs)
        .map(|(b, h)| test(b.construct.name().to_string(), b.flagged, h.flagged))
        .collect();
    tests.push(test("any_trigger".into(), bot.with_any_trigger, human.with_any_trigger));
    Ok(PrevalenceReport { bot, human, tests })
}

/// Pair counts over the seven constructs; the diagonal holds prevalence counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CooccurrenceMatrix {
    pub cohort: AccountClass,
    pub total: u64,
    pub constructs: Vec<Construct>,
    pub counts: [[u64; 7]; 7],
}

impl CooccurrenceMatrix {
    pub fn get(&self, a: Construct, b: Construct) -> u64 {
        self.counts[a.index()][b.index()]
    }

    pub fn is_consistent(&self) -> bool {
        (0..7).all(|i| {
            (0..7).all(|j| {
                self.counts[i][j] == self.counts[j][i]
                    && self.counts[i][j] <= self.counts[i][i].min(self.counts[j][j])
            })
        })
    }
}

pub fn cooccurrence(
    vectors: &[TriggerVector],
    cohorts: &[Option<AccountClass>],
    cohort: AccountClass,
) -> CooccurrenceMatrix {
    let mut counts = [[0u64; 7]; 7];
    let mut total = 0;
    for (v, c) in vectors.iter().zip(cohorts) {
        if *c != Some(cohort) {
            continue;
        }
        total += 1;
        let flags = v.flags.constructs();
        for i in 0..7 {
            if flags[i] {
                for j in 0..7 {
                    counts[i][j] += flags[j] as u64;
                }
            }
        }
    }
    CooccurrenceMatrix {
        cohort,
        total,
        constructs: Construct::ALL.to_vec(),
        counts,
    }
}

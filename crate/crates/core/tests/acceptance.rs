//! One test per acceptance criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line; tolerances are pinned below.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use bias_triggers::analytics::{
    engagement_by_trigger_count, ols_fit, regress_all, tweet_cohorts, two_proportion_ztest, Design,
};
use bias_triggers::corpus::{load_corpus, normalize_text, AccountClass, Metric, TweetRecord};
use bias_triggers::lexicon::Lexicon;
use bias_triggers::similarity::{embed, near_duplicate_clusters, EmbeddingProvider};
use bias_triggers::simulator::{generate_corpus, generate_verified, planting_thresholds, verify_against_truth, SimulationConfig};
use bias_triggers::triggers::{derive_threshold, detect, DetectOptions, TriggerType};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const Z_EXPECTED: f64 = 3.6037;
const Z_TOL: f64 = 1e-6;
const P_TOL: f64 = 1e-6;
const OLS_REL_TOL: f64 = 1e-8;
const ORTHO_TOL: f64 = 1e-8;
const RECOVERY_SE: f64 = 3.0;
const RECOVERY_COVERAGE: f64 = 0.99;
const RECOVERY_SEEDS: u64 = 100;
const CLUSTER_TIMELINES: usize = 100;
const CLUSTER_MAX_POSTS: usize = 200;
const OLS_INSTANCES: usize = 50;
const THROUGHPUT_TWEETS: usize = 1_000_000;
const THROUGHPUT_MIN: f64 = 50_000.0;
const SCALING_MIN: f64 = 3.0;

/// Criteria run one at a time so that timings are not disturbed.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u32, pass: bool, detail: &str) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn load_config(path: &Path) -> SimulationConfig {
    SimulationConfig::from_json(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn criterion_1_threshold_fidelity() {
    let _g = serial();
    let two_point = |mu: f64, sigma: f64| -> Vec<f64> {
        (0..200).map(|i| if i % 2 == 0 { mu - sigma } else { mu + sigma }).collect()
    };
    let emotion = derive_threshold(&two_point(2.01, 0.82)).unwrap();
    let negative = derive_threshold(&two_point(1.20, 0.53)).unwrap();
    let pass = emotion.k == 3 && negative.k == 2;
    verdict(
        1,
        pass,
        &format!(
            "k(mu={:.4}, sigma={:.4}) = {} (want 3); k(mu={:.4}, sigma={:.4}) = {} (want 2)",
            emotion.mu, emotion.sigma, emotion.k, negative.mu, negative.sigma, negative.k
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_detector_exactness() {
    let _g = serial();
    let lex = Lexicon::builtin();
    let mut dir: Vec<PathBuf> = fs::read_dir(manifest_dir().join("configs/suite"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    dir.sort();
    let mut seeds = std::collections::BTreeSet::new();
    let mut pass = dir.len() >= 10;
    let mut worst = Duration::ZERO;
    let mut min_tweets = usize::MAX;
    let mut errors = 0;
    for path in &dir {
        let config = load_config(path);
        seeds.insert(config.seed);
        let start = Instant::now();
        let output = generate_corpus(&config, &lex).unwrap();
        let corpus = output.corpus(&lex).unwrap();
        let detection = detect(&corpus, &lex, &lex, &planting_thresholds(&config), &DetectOptions::default());
        let report = verify_against_truth(&detection.sorted_records(), &output.truth).unwrap();
        let elapsed = start.elapsed();
        worst = worst.max(elapsed);
        min_tweets = min_tweets.min(output.tweets.len());
        errors += report.errors();
        if !report.exact {
            println!("  {}: {} errors", path.display(), report.errors());
        }
        pass &= report.exact && output.tweets.len() >= 100_000 && elapsed < Duration::from_secs(120);
    }
    pass &= seeds.len() >= 10;
    verdict(
        2,
        pass,
        &format!(
            "{} configs, {} distinct seeds, smallest corpus {min_tweets} tweets, {errors} flag errors, slowest {:.1}s",
            dir.len(),
            seeds.len(),
            worst.as_secs_f64()
        ),
    );
    assert!(pass);
}

/// Exhaustive reference: all pairwise similarities from dense vectors, then
/// leader assignment in timeline order with exact-text duplicates skipped.
fn reference_clusters(texts: &[String], r: f64) -> Vec<Vec<usize>> {
    let dense: Vec<Vec<f64>> = texts.iter().map(|t| embed(t).to_dense()).collect();
    let n = texts.len();
    let mut sim = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            sim[i][j] = dense[i].iter().zip(&dense[j]).map(|(a, b)| a * b).sum();
        }
    }
    let norm: Vec<String> = texts.iter().map(|t| normalize_text(t)).collect();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if (0..i).any(|p| norm[p] == norm[i]) {
            continue;
        }
        match clusters.iter_mut().find(|c| sim[c[0]][i] >= r) {
            Some(c) => c.push(i),
            None => clusters.push(vec![i]),
        }
    }
    clusters
}

fn random_timeline(rng: &mut ChaCha8Rng, len: usize) -> Vec<String> {
    const WORDS: [&str; 24] = [
        "vaccine", "covid", "dose", "clinic", "garlic", "mask", "booster", "trial", "school", "mandate", "data",
        "risk", "safe", "news", "today", "again", "city", "nurses", "shots", "wave", "report", "study", "jab", "team",
    ];
    let bases: Vec<Vec<&str>> = (0..rng.random_range(1..8))
        .map(|_| (0..rng.random_range(4..14)).map(|_| *WORDS.choose(rng).unwrap()).collect())
        .collect();
    (0..len)
        .map(|_| {
            let mut words = bases.choose(rng).unwrap().clone();
            for _ in 0..rng.random_range(0..4) {
                match rng.random_range(0..3) {
                    0 if !words.is_empty() => {
                        let i = rng.random_range(0..words.len());
                        words.remove(i);
                    }
                    1 => {
                        let i = rng.random_range(0..=words.len());
                        words.insert(i, WORDS.choose(rng).unwrap());
                    }
                    _ if !words.is_empty() => {
                        let i = rng.random_range(0..words.len());
                        words[i] = WORDS.choose(rng).unwrap();
                    }
                    _ => {}
                }
            }
            let mut text = words.join(" ");
            if rng.random_bool(0.2) {
                text.push_str(" @someone");
            }
            text
        })
        .collect()
}

#[test]
fn criterion_3_clustering_oracle() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    let mut multi = 0;
    for t in 0..CLUSTER_TIMELINES {
        let len = rng.random_range(0..=CLUSTER_MAX_POSTS);
        let texts = random_timeline(&mut rng, len);
        let tweets: Vec<TweetRecord> = texts
            .iter()
            .enumerate()
            .map(|(i, text)| TweetRecord {
                tweet_id: format!("{t}-{i}"),
                author_id: "u".into(),
                timestamp: i as i64,
                text: text.clone(),
                retweeted_tweet_id: None,
                quoted_tweet_id: None,
                replied_to_tweet_id: None,
                mentioned_user_ids: vec![],
                favorites: 0,
                retweets: 0,
                replies: 0,
                quotes: 0,
            })
            .collect();
        let refs: Vec<&TweetRecord> = tweets.iter().collect();
        let got: Vec<Vec<String>> = near_duplicate_clusters(&refs, 0.8, &EmbeddingProvider::default())
            .into_iter()
            .map(|c| c.member_tweet_ids)
            .collect();
        let want: Vec<Vec<String>> = reference_clusters(&texts, 0.8)
            .into_iter()
            .map(|c| c.into_iter().map(|i| format!("{t}-{i}")).collect())
            .collect();
        multi += want.iter().filter(|c| c.len() > 1).count();
        if got != want {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && multi > 0 && elapsed < Duration::from_secs(30);
    verdict(
        3,
        pass,
        &format!(
            "{CLUSTER_TIMELINES} timelines, {mismatches} mismatches, {multi} multi-member clusters, {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

/// Solves the normal equations XᵀX b = Xᵀy by Gaussian elimination with
/// partial pivoting.
fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, &yi) in x.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
            a[i][p] += row[i] * yi;
        }
    }
    for col in 0..p {
        let pivot = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        let pivot_row = a[col].clone();
        for row in &mut a[col + 1..] {
            let f = row[col] / pivot_row[col];
            for (v, pv) in row.iter_mut().zip(&pivot_row).skip(col) {
                *v -= f * pv;
            }
        }
    }
    let mut b = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| a[i][j] * b[j]).sum();
        b[i] = (a[i][p] - s) / a[i][i];
    }
    b
}

#[test]
fn criterion_4_ols_oracle() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let (mut worst_rel, mut worst_ortho) = (0.0f64, 0.0f64);
    for _ in 0..OLS_INSTANCES {
        let n = rng.random_range(30..400);
        let p = rng.random_range(2..10);
        let beta: Vec<f64> = (0..p).map(|_| rng.random_range(0.5..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| std::iter::once(1.0).chain((1..p).map(|_| normal.sample(&mut rng))).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + 0.3 * normal.sample(&mut rng))
            .collect();
        let mut design = Design::new((0..p).map(|i| format!("x{i}")).collect());
        for r in &rows {
            design.push_row(r);
        }
        let fit = ols_fit(&design, &y).unwrap();
        let oracle = normal_equations(&rows, &y);
        for (got, want) in fit.coefficients.iter().zip(&oracle) {
            let got = got.expect("well-conditioned design keeps every column");
            worst_rel = worst_rel.max((got - want).abs() / want.abs());
        }
        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for j in 0..p {
            let dot: f64 = rows.iter().zip(&fit.residuals).map(|(r, e)| r[j] * e).sum();
            worst_ortho = worst_ortho.max(dot.abs() / y_norm);
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_rel <= OLS_REL_TOL && worst_ortho <= ORTHO_TOL && elapsed < Duration::from_secs(10);
    verdict(
        4,
        pass,
        &format!(
            "{OLS_INSTANCES} instances, max relative error {worst_rel:.2e} (tol {OLS_REL_TOL:e}), max |X'r|/|y| {worst_ortho:.2e} (tol {ORTHO_TOL:e}), {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_statistical_recovery() {
    let _g = serial();
    let start = Instant::now();
    let lex = Lexicon::builtin();
    let base = load_config(&manifest_dir().join("configs/recovery.json"));
    let mut covered: BTreeMap<(AccountClass, Metric, usize), u32> = BTreeMap::new();
    let (mut inside, mut total) = (0u64, 0u64);
    let (mut curves, mut peaked_at_two) = (0u32, 0u32);
    for seed in 0..RECOVERY_SEEDS {
        let mut config = base.clone();
        config.seed = seed;
        let (output, corpus, detection) = generate_verified(&config, &lex).unwrap();
        let cohorts = tweet_cohorts(&corpus, &corpus.account_classes(config.bot_cutoff));
        let set = regress_all(&corpus, &detection.vectors, &cohorts);
        assert_eq!(set.models.len(), 8);
        for model in &set.models {
            let truth = output
                .truth
                .models
                .iter()
                .find(|t| t.cohort == model.cohort && t.metric == model.metric)
                .unwrap();
            for (j, (c, alpha)) in model.coefficients.iter().zip(truth.alpha).enumerate() {
                total += 1;
                let ok = match (c.estimate, c.std_error) {
                    (Some(b), Some(se)) => (b - alpha).abs() <= RECOVERY_SE * se,
                    _ => false,
                };
                if ok {
                    inside += 1;
                    *covered.entry((model.cohort, model.metric, j)).or_default() += 1;
                } else {
                    covered.entry((model.cohort, model.metric, j)).or_default();
                }
            }
        }
        for cohort in AccountClass::ALL {
            let rows = engagement_by_trigger_count(&detection.vectors, &corpus, &cohorts, cohort);
            for metric in Metric::ALL {
                curves += 1;
                let peak = rows
                    .iter()
                    .max_by(|a, b| a.metrics[&metric].mean.total_cmp(&b.metrics[&metric].mean))
                    .map(|r| r.trigger_count);
                if peak == Some(2) {
                    peaked_at_two += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pooled = inside as f64 / total as f64;
    let worst = covered.values().copied().min().unwrap_or(0);
    let per_alpha = covered.values().all(|&c| c as f64 >= RECOVERY_COVERAGE * RECOVERY_SEEDS as f64);
    let pass = pooled >= RECOVERY_COVERAGE && peaked_at_two == curves && elapsed < Duration::from_secs(300);
    verdict(
        5,
        pass,
        &format!(
            "pooled coverage {inside}/{total} = {:.4} within {RECOVERY_SE} SE (need {RECOVERY_COVERAGE}); \
             per-coefficient reading: worst {worst}/{RECOVERY_SEEDS} seeds, all >= 99: {per_alpha}; \
             curve peaks at 2 in {peaked_at_two}/{curves} cohort-metric curves; {:.1}s",
            pooled,
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_ztest_closed_form() {
    let _g = serial();
    let (z, p) = two_proportion_ztest(50, 100, 25, 100).unwrap();
    // Pooled proportion 0.375, standard error sqrt(0.375 * 0.625 * 0.02).
    let z_hand = 0.25 / (0.375f64 * 0.625 * 0.02).sqrt();
    let p_hand = 2.0 * (1.0 - statrs::distribution::ContinuousCDF::cdf(&statrs::distribution::Normal::standard(), z_hand));
    let (zs, ps) = two_proportion_ztest(25, 100, 50, 100).unwrap();
    let antisymmetric = zs == -z && ps == p;
    let equal_zero = two_proportion_ztest(30, 60, 15, 30).unwrap() == (0.0, 1.0)
        && two_proportion_ztest(0, 10, 0, 20).unwrap() == (0.0, 1.0);
    let z_ok = (z - Z_EXPECTED).abs() <= Z_TOL;
    let p_ok = (p - p_hand).abs() <= P_TOL;
    let pass = z_ok && p_ok && antisymmetric && equal_zero;
    verdict(
        6,
        pass,
        &format!(
            "z = {z:.10} vs expected {Z_EXPECTED} (|diff| {:.2e}, tol {Z_TOL:e}); hand z = {z_hand:.10}; \
             p = {p:.6e} vs hand {p_hand:.6e}; antisymmetric {antisymmetric}; equal proportions give (0, 1) {equal_zero}",
            (z - Z_EXPECTED).abs()
        ),
    );
    assert!(pass);
}

fn run_pipeline(bin: &str, tweets: &Path, profiles: &Path, out: &Path, jobs: u32) {
    let status = Command::new(bin)
        .args(["--jobs", &jobs.to_string(), "pipeline", "--in"])
        .arg(tweets)
        .arg("--profiles")
        .arg(profiles)
        .arg("--out-dir")
        .arg(out)
        .arg("--report")
        .arg(out.join("load_report.json"))
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

fn without_timing(manifest: &str) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(manifest).unwrap();
    let obj = v.as_object_mut().unwrap();
    obj.remove("stages");
    obj.remove("outputs");
    v
}

#[test]
fn criterion_7_determinism_under_parallelism() {
    let _g = serial();
    let start = Instant::now();
    let bin = env!("CARGO_BIN_EXE_bias-triggers");
    let tmp = tempfile::tempdir().unwrap();
    let lex = Lexicon::builtin();
    let config = load_config(&manifest_dir().join("configs/suite/mixed-1.json"));
    let output = generate_corpus(&config, &lex).unwrap();
    output.write(&tmp.path().join("corpus")).unwrap();
    let tweets = tmp.path().join("corpus/tweets.jsonl");
    let profiles = tmp.path().join("corpus/profiles.jsonl");
    let mut listings: Vec<BTreeMap<String, Vec<u8>>> = Vec::new();
    for jobs in [1, 4, 16] {
        let out = tmp.path().join(format!("jobs{jobs}"));
        run_pipeline(bin, &tweets, &profiles, &out, jobs);
        let mut files = BTreeMap::new();
        for e in fs::read_dir(&out).unwrap() {
            let path = e.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().to_string();
            let bytes = fs::read(&path).unwrap();
            let bytes = if name == "manifest.json" {
                serde_json::to_vec(&without_timing(std::str::from_utf8(&bytes).unwrap())).unwrap()
            } else {
                bytes
            };
            files.insert(name, bytes);
        }
        listings.push(files);
    }
    let identical = listings.windows(2).all(|w| w[0] == w[1]);
    let elapsed = start.elapsed();
    let pass = identical && listings[0].len() >= 15 && elapsed < Duration::from_secs(300);
    verdict(
        7,
        pass,
        &format!(
            "{} output files over {} tweets, byte-identical for --jobs 1/4/16: {identical} (manifest compared without timings); {:.1}s",
            listings[0].len(),
            output.tweets.len(),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_fixture_corpus() {
    let _g = serial();
    let start = Instant::now();
    let fixtures = manifest_dir().join("tests/fixtures");
    let lex = Lexicon::builtin();
    let (mut corpus, _) = load_corpus(&fixtures.join("fixture_tweets.jsonl"), &fixtures.join("fixture_profiles.jsonl")).unwrap();
    corpus.derive_profile_terms(&lex);
    let detection = detect(&corpus, &lex, &lex, &Default::default(), &DetectOptions::default());
    let labels: BTreeMap<String, Vec<TriggerType>> = fs::read_to_string(fixtures.join("fixture_labels.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            let flags = serde_json::from_value(v["flags"].clone()).unwrap();
            (v["tweet_id"].as_str().unwrap().to_string(), flags)
        })
        .collect();
    let mut mismatches = Vec::new();
    for v in &detection.vectors {
        let want = &labels[&v.tweet_id];
        for t in TriggerType::ALL {
            if v.flags.get(t) != want.contains(&t) {
                mismatches.push(format!("{}:{t:?}", v.tweet_id));
            }
        }
    }
    let covered: Vec<TriggerType> = TriggerType::ALL
        .into_iter()
        .filter(|t| labels.values().any(|f| f.contains(t)))
        .collect();
    let pass = mismatches.is_empty()
        && labels.len() == corpus.len()
        && covered.len() == 8
        && start.elapsed() < Duration::from_secs(1);
    verdict(
        8,
        pass,
        &format!(
            "{} tweets, {} hand-labeled triggers present, mismatches {:?}",
            corpus.len(),
            covered.len(),
            mismatches
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_9_throughput() {
    let _g = serial();
    let lex = Lexicon::builtin();
    let mut config = load_config(&manifest_dir().join("configs/suite/bot-heavy-1.json"));
    let per_user = (config.tweets_per_user.min + config.tweets_per_user.max) as f64 / 2.0;
    let users = (THROUGHPUT_TWEETS as f64 / per_user).ceil() as usize;
    config.n_bots = users * 2 / 5;
    config.n_humans = users - config.n_bots;
    config.n_publishers = 4000;
    let output = generate_corpus(&config, &lex).unwrap();
    let corpus = output.corpus(&lex).unwrap();
    let thresholds = planting_thresholds(&config);
    let time_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let start = Instant::now();
        let d = pool.install(|| detect(&corpus, &lex, &lex, &thresholds, &DetectOptions::default()));
        assert_eq!(d.vectors.len(), corpus.len());
        start.elapsed().as_secs_f64()
    };
    let single = time_with(1);
    let eight = time_with(8);
    let rate = corpus.len() as f64 / single;
    let scaling = single / eight;
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let pass = rate >= THROUGHPUT_MIN && scaling >= SCALING_MIN;
    verdict(
        9,
        pass,
        &format!(
            "{} tweets, single-thread {rate:.0} tweets/s (target {THROUGHPUT_MIN}), 1->8 workers speedup {scaling:.2}x \
             (target {SCALING_MIN}x) on {cores} available cores; soft target, reported only",
            corpus.len()
        ),
    );
}

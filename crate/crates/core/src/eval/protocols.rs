//! Fold construction and the experiment drivers.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, random_baseline, MetricSet};
use super::{Learner, MeanSd, Summary};
use crate::dataset::{Dataset, UserProfile};
use crate::error::{Error, Result};
use crate::features::{build_matrix, FeatureMatrix, Labeler, SchemeName};
use crate::rng::{derive_seed, derive_seed_str};
use crate::trees::argmax;

/// Users with fewer records are left out of the personal-data protocols.
pub const MIN_PERSONAL_RECORDS: usize = 10;
pub const PERSONAL_TRAIN_SHARE: f64 = 0.7;
pub const INCREMENTAL_POOL_SHARE: f64 = 0.8;
pub const DEFAULT_FRACTIONS: [f64; 6] = [0.0, 0.125, 0.25, 0.5, 0.75, 1.0];

/// Encoding, labelling and the run seed shared by every protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub scheme: SchemeName,
    pub labeler: Labeler,
    pub seed: u64,
}

/// Seed of the fold that holds out `user`.
fn fold_seed(seed: u64, user: &str) -> u64 {
    derive_seed_str(seed, user)
}

fn n_distinct(labels: impl Iterator<Item = usize>) -> usize {
    labels.collect::<BTreeSet<_>>().len()
}

fn fit_and_score(
    learner: &dyn Learner,
    fm: &FeatureMatrix,
    train: &[usize],
    test: &[usize],
    seed: u64,
) -> Result<MetricSet> {
    let k = fm.labeler.n_classes();
    let x = fm.rows.select_rows(train);
    let y: Vec<usize> = train.iter().map(|&i| fm.labels[i]).collect();
    let model = learner.fit(&x, &y, k, seed)?;
    let scores: Vec<Vec<f64>> = test
        .iter()
        .map(|&i| model.predict_proba(fm.rows.row(i)))
        .collect::<Result<_>>()?;
    let pred: Vec<usize> = scores.iter().map(|s| argmax(s)).collect();
    let truth: Vec<usize> = test.iter().map(|&i| fm.labels[i]).collect();
    compute_metrics(&truth, &pred, &scores)
}

fn rows_of(fm: &FeatureMatrix, keep: impl Fn(&str) -> bool) -> Vec<usize> {
    (0..fm.len()).filter(|&i| keep(&fm.user_ids[i])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub user: String,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: MetricSet,
    /// Random predictions on the same held-out rows.
    pub baseline: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LouoReport {
    pub model: String,
    pub scheme: SchemeName,
    pub labeler: Labeler,
    pub seed: u64,
    pub folds: Vec<Fold>,
    pub summary: Summary,
    pub baseline: Summary,
}

/// Leave-one-user-out: each user in turn is the test set for a model trained
/// on everyone else.
pub fn run_louo(d: &Dataset, learner: &dyn Learner, exp: &Experiment) -> Result<LouoReport> {
    let fm = build_matrix(d, exp.scheme, exp.labeler)?;
    louo_on_matrix(&fm, learner, exp.seed)
}

pub fn louo_on_matrix(fm: &FeatureMatrix, learner: &dyn Learner, seed: u64) -> Result<LouoReport> {
    let users = distinct_users(fm);
    if users.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "leave-one-user-out needs at least 2 users, found {}",
            users.len()
        )));
    }
    let k = fm.labeler.n_classes();
    let folds = users
        .par_iter()
        .map(|user| {
            let train = rows_of(fm, |u| u != user);
            let test = rows_of(fm, |u| u == user);
            let s = fold_seed(seed, user);
            let metrics = fit_and_score(learner, fm, &train, &test, s)?;
            let truth: Vec<usize> = test.iter().map(|&i| fm.labels[i]).collect();
            let (pred, scores) = random_baseline(test.len(), k, derive_seed(s, 1));
            let baseline = compute_metrics(&truth, &pred, &scores)?;
            Ok(Fold {
                user: user.clone(),
                n_train: train.len(),
                n_test: test.len(),
                metrics,
                baseline,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = Summary::of(&folds.iter().map(|f| &f.metrics).collect::<Vec<_>>()).expect("at least two folds");
    let baseline = Summary::of(&folds.iter().map(|f| &f.baseline).collect::<Vec<_>>()).expect("at least two folds");
    Ok(LouoReport {
        model: learner.name(),
        scheme: fm.scheme,
        labeler: fm.labeler,
        seed,
        folds,
        summary,
        baseline,
    })
}

fn distinct_users(fm: &FeatureMatrix) -> Vec<String> {
    let mut users: Vec<String> = fm.user_ids.clone();
    users.sort();
    users.dedup();
    users
}

/// A user's record indices split in time: the first `share` (by count) and
/// the rest.
pub fn chronological_split(d: &Dataset, user: &str, share: f64) -> (Vec<usize>, Vec<usize>) {
    let mut idx = d.user_indices_chronological(user);
    let n_first = ((idx.len() as f64 * share) + 1e-9).floor() as usize;
    let rest = idx.split_off(n_first.min(idx.len()));
    (idx, rest)
}

/// A user left out of a protocol, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skip {
    pub user: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedFold {
    pub user: String,
    pub n_train_a: usize,
    pub n_train_b: usize,
    pub n_test: usize,
    pub a: MetricSet,
    pub b: MetricSet,
}

/// Paired comparison of two training regimes on the same test rows;
/// deltas are `a - b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model: String,
    pub scheme: SchemeName,
    pub labeler: Labeler,
    pub seed: u64,
    pub label_a: String,
    pub label_b: String,
    pub folds: Vec<PairedFold>,
    pub skipped: Vec<Skip>,
    pub summary_a: Option<Summary>,
    pub summary_b: Option<Summary>,
    pub delta_accuracy: Option<MeanSd>,
    pub delta_macro_f1: Option<MeanSd>,
    pub delta_auc: Option<MeanSd>,
}

impl Comparison {
    fn assemble(
        learner: &dyn Learner,
        exp: &Experiment,
        labels: (&str, &str),
        folds: Vec<PairedFold>,
        skipped: Vec<Skip>,
    ) -> Self {
        let diffs = |get: fn(&MetricSet) -> Option<f64>| -> Option<MeanSd> {
            let d: Vec<f64> = folds.iter().filter_map(|f| Some(get(&f.a)? - get(&f.b)?)).collect();
            MeanSd::of(&d)
        };
        Self {
            model: learner.name(),
            scheme: exp.scheme,
            labeler: exp.labeler,
            seed: exp.seed,
            label_a: labels.0.to_string(),
            label_b: labels.1.to_string(),
            summary_a: Summary::of(&folds.iter().map(|f| &f.a).collect::<Vec<_>>()),
            summary_b: Summary::of(&folds.iter().map(|f| &f.b).collect::<Vec<_>>()),
            delta_accuracy: diffs(|m| Some(m.accuracy)),
            delta_macro_f1: diffs(|m| Some(m.macro_avg.f1)),
            delta_auc: diffs(|m| m.auc),
            folds,
            skipped,
        }
    }
}

enum Outcome<T> {
    Done(T),
    Skipped(Skip),
}

fn partition<T>(outcomes: Vec<Outcome<T>>) -> (Vec<T>, Vec<Skip>) {
    let mut done = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Done(t) => done.push(t),
            Outcome::Skipped(s) => skipped.push(s),
        }
    }
    (done, skipped)
}

fn too_few(user: &str, n: usize) -> Outcome<PairedFold> {
    Outcome::Skipped(Skip {
        user: user.to_string(),
        reason: format!("{n} records, fewer than {MIN_PERSONAL_RECORDS}"),
    })
}

/// Personal model on the first 70% of a user's records against the general
/// (all other users) model, both tested on the user's last 30%.
pub fn run_personalization(d: &Dataset, learner: &dyn Learner, exp: &Experiment) -> Result<Comparison> {
    let fm = build_matrix(d, exp.scheme, exp.labeler)?;
    let users = d.users();
    let outcomes = users
        .par_iter()
        .map(|user| {
            let (train, test) = chronological_split(d, user, PERSONAL_TRAIN_SHARE);
            let n = train.len() + test.len();
            if n < MIN_PERSONAL_RECORDS {
                return Ok(too_few(user, n));
            }
            if n_distinct(train.iter().map(|&i| fm.labels[i])) < 2 {
                return Ok(Outcome::Skipped(Skip {
                    user: user.clone(),
                    reason: "personal training data holds a single class".into(),
                }));
            }
            let s = fold_seed(exp.seed, user);
            let general_train = rows_of(&fm, |u| u != user);
            let a = fit_and_score(learner, &fm, &train, &test, derive_seed(s, 2))?;
            let b = fit_and_score(learner, &fm, &general_train, &test, s)?;
            Ok(Outcome::Done(PairedFold {
                user: user.clone(),
                n_train_a: train.len(),
                n_train_b: general_train.len(),
                n_test: test.len(),
                a,
                b,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let (folds, skipped) = partition(outcomes);
    Ok(Comparison::assemble(learner, exp, ("personal", "general"), folds, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementalPoint {
    pub user: String,
    pub fraction: f64,
    /// Personal records added to the training set.
    pub n_personal: usize,
    pub n_test: usize,
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementalReport {
    pub model: String,
    pub scheme: SchemeName,
    pub labeler: Labeler,
    pub seed: u64,
    pub fractions: Vec<f64>,
    pub points: Vec<IncrementalPoint>,
    /// Mean AUC across users per fraction.
    pub curve: Vec<(f64, Option<MeanSd>)>,
    pub skipped: Vec<Skip>,
}

/// Each user's last 20% is held out; the model trains on all other users
/// plus the first `f` of the user's remaining 80%, for each `f`.
pub fn run_incremental(
    d: &Dataset,
    learner: &dyn Learner,
    exp: &Experiment,
    fractions: &[f64],
) -> Result<IncrementalReport> {
    if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::InvalidInput(format!("fraction {f} is outside [0, 1]")));
    }
    let fm = build_matrix(d, exp.scheme, exp.labeler)?;
    let mut skipped = Vec::new();
    let mut jobs = Vec::new();
    for user in d.users() {
        let (pool, test) = chronological_split(d, &user, INCREMENTAL_POOL_SHARE);
        let n = pool.len() + test.len();
        if n < MIN_PERSONAL_RECORDS {
            skipped.push(Skip {
                user,
                reason: format!("{n} records, fewer than {MIN_PERSONAL_RECORDS}"),
            });
            continue;
        }
        for &f in fractions {
            jobs.push((user.clone(), f, pool.clone(), test.clone()));
        }
    }
    let points = jobs
        .par_iter()
        .map(|(user, f, pool, test)| {
            let k = (f * pool.len() as f64).round() as usize;
            let mut train = rows_of(&fm, |u| u != user);
            train.extend_from_slice(&pool[..k]);
            let metrics = fit_and_score(learner, &fm, &train, test, fold_seed(exp.seed, user))?;
            Ok(IncrementalPoint {
                user: user.clone(),
                fraction: *f,
                n_personal: k,
                n_test: test.len(),
                metrics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let curve = fractions
        .iter()
        .map(|&f| {
            let aucs: Vec<f64> = points
                .iter()
                .filter(|p| p.fraction == f)
                .filter_map(|p| p.metrics.auc)
                .collect();
            (f, MeanSd::of(&aucs))
        })
        .collect();
    Ok(IncrementalReport {
        model: learner.name(),
        scheme: exp.scheme,
        labeler: exp.labeler,
        seed: exp.seed,
        fractions: fractions.to_vec(),
        points,
        curve,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub entries: Vec<LouoReport>,
}

impl AblationReport {
    pub fn mean_auc(&self, scheme: SchemeName) -> Option<f64> {
        self.entries.iter().find(|r| r.scheme == scheme)?.summary.mean_auc()
    }
}

/// Leave-one-user-out under context-only, distraction-only and full
/// encodings.
pub fn run_ablation(d: &Dataset, learner: &dyn Learner, exp: &Experiment) -> Result<AblationReport> {
    let entries = [SchemeName::ContextOnly, SchemeName::DistractionOnly, SchemeName::Full]
        .into_iter()
        .map(|scheme| run_louo(d, learner, &Experiment { scheme, ..*exp }))
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationReport { entries })
}

/// A `field=value` filter on user profiles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfilePredicate {
    pub field: String,
    pub value: String,
}

impl ProfilePredicate {
    pub const FIELDS: [&'static str; 7] = ["gender", "age", "occupation", "education", "phone_brand", "round", "timezone"];

    pub fn matches(&self, p: &UserProfile) -> bool {
        let v = self.value.as_str();
        match self.field.as_str() {
            "gender" => p.gender.is_some_and(|g| g.as_str() == v),
            "age" => p.age.is_some_and(|a| a.to_string() == v),
            "occupation" => p.occupation.is_some_and(|o| o.as_str() == v),
            "education" => p.education == v,
            "phone_brand" => p.phone_brand == v,
            "round" => p.rounds.iter().any(|r| r.to_string() == v),
            "timezone" => p.timezone == v,
            _ => false,
        }
    }
}

impl FromStr for ProfilePredicate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let Some((field, value)) = s.split_once('=') else {
            return Err(Error::InvalidInput(format!("group predicate `{s}` is not of the form field=value")));
        };
        let field = field.trim();
        if !Self::FIELDS.contains(&field) {
            return Err(Error::UnknownToken {
                kind: "profile field",
                token: field.to_string(),
                allowed: Self::FIELDS.to_vec(),
            });
        }
        Ok(Self {
            field: field.to_string(),
            value: value.trim().to_string(),
        })
    }
}

impl fmt::Display for ProfilePredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.field, self.value)
    }
}

/// For each user in the group: a model trained on the rest of the group
/// against the general model trained on all other users, tested on that user.
pub fn run_group_model(
    d: &Dataset,
    predicate: &ProfilePredicate,
    learner: &dyn Learner,
    exp: &Experiment,
) -> Result<Comparison> {
    let fm = build_matrix(d, exp.scheme, exp.labeler)?;
    let group: Vec<String> = d
        .users()
        .into_iter()
        .filter(|u| d.profile(u).is_some_and(|p| predicate.matches(p)))
        .collect();
    if group.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "group `{predicate}` has {} users with records; at least 2 are needed",
            group.len()
        )));
    }
    let outcomes = group
        .par_iter()
        .map(|user| {
            let group_train = rows_of(&fm, |u| u != user && group.iter().any(|g| g == u));
            if n_distinct(group_train.iter().map(|&i| fm.labels[i])) < 2 {
                return Ok(Outcome::Skipped(Skip {
                    user: user.clone(),
                    reason: "group training data holds a single class".into(),
                }));
            }
            let general_train = rows_of(&fm, |u| u != user);
            let test = rows_of(&fm, |u| u == user);
            let s = fold_seed(exp.seed, user);
            let a = fit_and_score(learner, &fm, &group_train, &test, s)?;
            let b = fit_and_score(learner, &fm, &general_train, &test, s)?;
            Ok(Outcome::Done(PairedFold {
                user: user.clone(),
                n_train_a: group_train.len(),
                n_train_b: general_train.len(),
                n_test: test.len(),
                a,
                b,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let (folds, skipped) = partition(outcomes);
    Ok(Comparison::assemble(learner, exp, ("group", "general"), folds, skipped))
}

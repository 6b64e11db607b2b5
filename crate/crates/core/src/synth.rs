//! Seeded generator of ESM-like datasets with planted structure.
//!
//! Per user a random intercept `u ~ N(0, group_var)` is drawn. Per record:
//! activity, then attention given activity, then coarse behavior given
//! attention, and a response time
//! `max(floor, round(b0 + b1*A + b2*A^2 + u + e))` with `e ~ N(0, resid_var)`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    derive_time_fields, Activity, AppCategory, CoarseBehavior, CodeTaxonomy, Dataset, EsmRecord,
    ForegroundCategory, Gender, Occupation, ResponseBehavior, UserProfile, DEFAULT_TIMEZONE, HOME_SCREEN,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed_str, rng_from, Rng};

const SUM_TOL: f64 = 1e-9;
/// Share of `no_response` events recorded as `ignore` (the rest: `didnt_notice`).
pub const IGNORE_SHARE: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseTimeLaw {
    /// Intercept, attention and attention-squared coefficients (seconds).
    pub beta: [f64; 3],
    pub group_var: f64,
    pub resid_var: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_users: usize,
    /// Inclusive range of records per user.
    pub records_per_user: [usize; 2],
    /// First possible survey time (epoch seconds).
    pub start: i64,
    pub span_days: u32,
    /// Activity marginal, keyed by activity token.
    pub activity: BTreeMap<String, f64>,
    /// Distribution over attention 1..=5 for each activity.
    pub attention_given_activity: BTreeMap<String, [f64; 5]>,
    /// Row `a - 1`: distribution over coarse behaviors (in declaration order)
    /// at attention `a`.
    pub behavior_given_attention: [[f64; 5]; 5],
    pub notif_category: BTreeMap<String, f64>,
    pub foreground_category: BTreeMap<String, f64>,
    pub response_time: ResponseTimeLaw,
}

fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

impl Default for SynthConfig {
    /// Attention shifts with activity and drives behavior and response time.
    fn default() -> Self {
        let attention_given_activity = [
            ("sitting", [0.15, 0.15, 0.20, 0.25, 0.25]),
            ("lying", [0.45, 0.20, 0.15, 0.10, 0.10]),
            ("standing_still", [0.25, 0.20, 0.20, 0.20, 0.15]),
            ("walking", [0.40, 0.20, 0.20, 0.10, 0.10]),
            ("taking_elevator", [0.30, 0.20, 0.20, 0.15, 0.15]),
            ("cycling_driving", [0.20, 0.15, 0.20, 0.20, 0.25]),
            ("taking_transportation", [0.40, 0.20, 0.20, 0.10, 0.10]),
            ("up_down_stairs", [0.35, 0.20, 0.20, 0.15, 0.10]),
            ("running", [0.30, 0.20, 0.20, 0.15, 0.15]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            seed: 42,
            n_users: 20,
            records_per_user: [300, 300],
            start: 1_714_521_600,
            span_days: 14,
            activity: map(&[
                ("sitting", 0.45),
                ("lying", 0.15),
                ("standing_still", 0.08),
                ("walking", 0.12),
                ("taking_elevator", 0.02),
                ("cycling_driving", 0.04),
                ("taking_transportation", 0.08),
                ("up_down_stairs", 0.03),
                ("running", 0.03),
            ]),
            attention_given_activity,
            behavior_given_attention: [
                [0.15, 0.25, 0.10, 0.45, 0.05],
                [0.25, 0.25, 0.10, 0.35, 0.05],
                [0.40, 0.20, 0.10, 0.25, 0.05],
                [0.55, 0.15, 0.08, 0.17, 0.05],
                [0.65, 0.12, 0.06, 0.12, 0.05],
            ],
            notif_category: map(&[
                ("communication", 0.35),
                ("social", 0.20),
                ("entertainment", 0.10),
                ("utilities", 0.08),
                ("shopping", 0.07),
                ("lifestyle", 0.05),
                ("news", 0.05),
                ("music", 0.03),
                ("education", 0.03),
                ("productivity", 0.04),
            ]),
            foreground_category: map(&[
                ("home_screen", 0.30),
                ("communication", 0.20),
                ("social", 0.15),
                ("entertainment", 0.10),
                ("utilities", 0.05),
                ("productivity", 0.05),
                ("education", 0.05),
                ("games", 0.05),
                ("music", 0.05),
            ]),
            response_time: ResponseTimeLaw {
                beta: [26.49, 18.82, -1.32],
                group_var: 648.27,
                resid_var: 900.0,
                floor: 1.0,
            },
        }
    }
}

fn check_distribution(name: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Config(format!("{name}: probabilities must be finite and non-negative")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(Error::Config(format!("{name}: probabilities sum to {s}, not 1")));
    }
    Ok(())
}

/// Weights over an enum's declaration order from a token-keyed map.
fn keyed<T: std::str::FromStr<Err = Error> + Copy>(
    name: &str,
    m: &BTreeMap<String, f64>,
    all: &[T],
    index: fn(T) -> usize,
) -> Result<Vec<f64>> {
    let mut w = vec![0.0; all.len()];
    for (k, &v) in m {
        let t: T = k.parse().map_err(|e: Error| Error::Config(format!("{name}: {e}")))?;
        w[index(t)] = v;
    }
    check_distribution(name, &w)?;
    Ok(w)
}

/// Validated config with distributions laid out by enum index.
struct Laws {
    activity: WeightedIndex<f64>,
    attention: Vec<Option<WeightedIndex<f64>>>,
    behavior: Vec<WeightedIndex<f64>>,
    notif: WeightedIndex<f64>,
    foreground: WeightedIndex<f64>,
    intercept: Normal<f64>,
    noise: Normal<f64>,
}

fn weighted(name: &str, w: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(w).map_err(|e| Error::Config(format!("{name}: {e}")))
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.laws().map(|_| ())
    }

    fn laws(&self) -> Result<Laws> {
        if self.n_users == 0 {
            return Err(Error::Config("n_users must be at least 1".into()));
        }
        let [lo, hi] = self.records_per_user;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("records_per_user [{lo}, {hi}] is not a valid range")));
        }
        if hi as u64 > u64::from(self.span_days) * 86_400 {
            return Err(Error::Config("span_days is too short for records_per_user".into()));
        }
        let rt = &self.response_time;
        if !(rt.group_var >= 0.0 && rt.resid_var >= 0.0 && rt.floor >= 0.0) {
            return Err(Error::Config("response_time variances and floor must be non-negative".into()));
        }
        if rt.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Config("response_time beta must be finite".into()));
        }
        let activity = keyed("activity", &self.activity, Activity::ALL, Activity::index)?;
        let mut attention = vec![None; Activity::ALL.len()];
        for (k, p) in &self.attention_given_activity {
            let a: Activity = k
                .parse()
                .map_err(|e: Error| Error::Config(format!("attention_given_activity: {e}")))?;
            check_distribution(&format!("attention_given_activity.{k}"), p)?;
            attention[a.index()] = Some(weighted(k, p)?);
        }
        for (i, w) in activity.iter().enumerate() {
            if *w > 0.0 && attention[i].is_none() {
                return Err(Error::Config(format!(
                    "activity `{}` has weight but no attention distribution",
                    Activity::ALL[i]
                )));
            }
        }
        let behavior = self
            .behavior_given_attention
            .iter()
            .enumerate()
            .map(|(a, row)| {
                let name = format!("behavior_given_attention[{a}]");
                check_distribution(&name, row)?;
                weighted(&name, row)
            })
            .collect::<Result<_>>()?;
        let notif = keyed("notif_category", &self.notif_category, AppCategory::ALL, AppCategory::index)?;
        let foreground = keyed(
            "foreground_category",
            &self.foreground_category,
            ForegroundCategory::ALL,
            ForegroundCategory::index,
        )?;
        Ok(Laws {
            activity: weighted("activity", &activity)?,
            attention,
            behavior,
            notif: weighted("notif_category", &notif)?,
            foreground: weighted("foreground_category", &foreground)?,
            intercept: Normal::new(0.0, rt.group_var.sqrt()).map_err(|e| Error::Config(e.to_string()))?,
            noise: Normal::new(0.0, rt.resid_var.sqrt()).map_err(|e| Error::Config(e.to_string()))?,
        })
    }
}

/// Code pools per coarse behavior: a behavior-specific factor plus the union
/// of all coded factors.
struct CodePools {
    primary: Vec<Vec<String>>,
    all: Vec<String>,
}

const PRIMARY_FACTOR: [&str; 5] = [
    "socializing",
    "level_of_busyness",
    "task_switching",
    "cognitive_engagement",
    "timing_and_load",
];

impl CodePools {
    fn new(t: &CodeTaxonomy) -> Self {
        let codes_of = |factor: &str| -> Vec<String> {
            t.categories()
                .iter()
                .flat_map(|c| &c.factors)
                .filter(|f| f.id == factor)
                .flat_map(|f| f.codes.iter().map(|c| c.id.clone()))
                .collect()
        };
        Self {
            primary: PRIMARY_FACTOR.iter().map(|f| codes_of(f)).collect(),
            all: t.codes().map(str::to_string).collect(),
        }
    }

    /// Zero to two codes: one from the behavior's factor (or, less often,
    /// any factor) and occasionally a second from any factor.
    fn draw(&self, b: CoarseBehavior, rng: &mut Rng) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if self.all.is_empty() || rng.random_bool(0.2) {
            return out;
        }
        let primary = &self.primary[b.index()];
        let pool = if !primary.is_empty() && rng.random_bool(0.7) { primary } else { &self.all };
        out.insert(pool[rng.random_range(0..pool.len())].clone());
        if rng.random_bool(0.3) {
            out.insert(self.all[rng.random_range(0..self.all.len())].clone());
        }
        out
    }
}

fn sensor(activity: Activity, rng: &mut Rng) -> ([f64; 3], [f64; 3]) {
    let motion = match activity {
        Activity::Sitting | Activity::Lying | Activity::StandingStill => 0.2,
        Activity::TakingElevator | Activity::TakingTransportation => 0.8,
        Activity::CyclingDriving => 1.5,
        Activity::Walking | Activity::UpDownStairs => 2.5,
        Activity::Running => 6.0,
    };
    let mut axis = || rng.random_range(-motion..motion);
    let accel = [axis(), axis(), 9.81 + axis()];
    let gyro = [axis() / 4.0, axis() / 4.0, axis() / 4.0];
    (accel, gyro)
}

fn profile(i: usize, id: &str) -> UserProfile {
    const BRANDS: [&str; 4] = ["huawei", "xiaomi", "oppo", "vivo"];
    UserProfile {
        user_id: id.to_string(),
        gender: Some(Gender::ALL[i % 2]),
        age: Some(19 + (i * 7 % 15) as u32),
        occupation: Some(if i % 3 == 0 { Occupation::Working } else { Occupation::Studying }),
        education: if i % 3 == 0 { "master".into() } else { "bachelor".into() },
        phone_brand: BRANDS[i % BRANDS.len()].to_string(),
        rounds: vec![1],
        timezone: DEFAULT_TIMEZONE.to_string(),
    }
}

pub fn user_id(i: usize) -> String {
    format!("S{i:03}")
}

fn generate_user(c: &SynthConfig, laws: &Laws, pools: &CodePools, id: &str) -> Vec<EsmRecord> {
    let mut rng = rng_from(derive_seed_str(c.seed, id));
    let tz = chrono_tz::Asia::Shanghai;
    let u = laws.intercept.sample(&mut rng);
    let n = rng.random_range(c.records_per_user[0]..=c.records_per_user[1]);
    let span = i64::from(c.span_days) * 86_400;
    let mut times: Vec<i64> = (0..n).map(|_| c.start + rng.random_range(0..span)).collect();
    times.sort_unstable();
    for i in 1..n {
        if times[i] <= times[i - 1] {
            times[i] = times[i - 1] + 1;
        }
    }
    let rt = &c.response_time;
    times
        .into_iter()
        .map(|clicked_at| {
            let activity = Activity::ALL[laws.activity.sample(&mut rng)];
            let dist = laws.attention[activity.index()].as_ref().expect("validated");
            let attention = dist.sample(&mut rng) as u8 + 1;
            let coarse = CoarseBehavior::ALL[laws.behavior[attention as usize - 1].sample(&mut rng)];
            let response_behavior = match coarse {
                CoarseBehavior::ClickToView => ResponseBehavior::ClickToView,
                CoarseBehavior::SwipeClear => ResponseBehavior::SwipeClear,
                CoarseBehavior::SwipeCancelPopup => ResponseBehavior::SwipeCancelPopup,
                CoarseBehavior::AdjustSettings => ResponseBehavior::AdjustSettings,
                CoarseBehavior::NoResponse if rng.random_bool(IGNORE_SHARE) => ResponseBehavior::Ignore,
                CoarseBehavior::NoResponse => ResponseBehavior::DidntNotice,
            };
            let a = f64::from(attention);
            let mean = rt.beta[0] + rt.beta[1] * a + rt.beta[2] * a * a + u;
            let secs = (mean + laws.noise.sample(&mut rng)).round().max(rt.floor.ceil());
            let response_time_s = secs as u64;
            let notif_category = AppCategory::ALL[laws.notif.sample(&mut rng)];
            let foreground_category = ForegroundCategory::ALL[laws.foreground.sample(&mut rng)];
            let (accel, gyro) = sensor(activity, &mut rng);
            let tf = derive_time_fields(clicked_at, tz);
            EsmRecord {
                user_id: id.to_string(),
                round: 1,
                received_at: clicked_at - response_time_s as i64,
                clicked_at,
                response_time_s,
                weekday: tf.weekday,
                day_of_week: tf.day_of_week,
                time_of_day: tf.time_of_day,
                activity,
                accel: Some(accel),
                gyro: Some(gyro),
                foreground_app: if foreground_category == ForegroundCategory::HomeScreen {
                    HOME_SCREEN.to_string()
                } else {
                    format!("{foreground_category}_app")
                },
                foreground_category,
                notif_app: format!("{notif_category}_app"),
                notif_category,
                response_behavior,
                motivation_text: None,
                codes: pools.draw(coarse, &mut rng),
                attention,
            }
        })
        .collect()
}

/// Generates a dataset; users are drawn in parallel from per-user seeds.
pub fn generate(c: &SynthConfig) -> Result<Dataset> {
    let laws = c.laws()?;
    let taxonomy = CodeTaxonomy::default();
    let pools = CodePools::new(&taxonomy);
    let ids: Vec<String> = (0..c.n_users).map(user_id).collect();
    let records: Vec<EsmRecord> = ids
        .par_iter()
        .map(|id| generate_user(c, &laws, &pools, id))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let profiles = ids.iter().enumerate().map(|(i, id)| profile(i, id)).collect();
    Dataset::new(records, profiles, taxonomy)
}

/// Permutes the attention column uniformly; every other field is untouched.
pub fn shuffle_labels(d: &Dataset, seed: u64) -> Dataset {
    let mut labels: Vec<u8> = d.records().iter().map(|r| r.attention).collect();
    labels.shuffle(&mut rng_from(seed));
    let records = d
        .records()
        .iter()
        .zip(labels)
        .map(|(r, attention)| EsmRecord { attention, ..r.clone() })
        .collect();
    d.with_records(records)
}

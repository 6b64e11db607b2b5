//! The ESM data model: records, participant profiles, the motivation-code
//! taxonomy, file IO and user-level exclusion rules.

mod filter;
mod io;
mod taxonomy;
mod time;
mod types;

use std::collections::{BTreeMap, BTreeSet};

use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use filter::{filter_users, FilterReport, CONSTANT_ATTENTION_SHARE};
pub use io::{
    load_dataset, parse_dataset, parse_profiles, parse_records, write_profiles_csv, write_records,
    Format, CSV_HEADER, PROFILE_HEADER,
};
pub use taxonomy::{Category, Code, CodeTaxonomy, Factor, NOTIFICATION_CONTENT};
pub use time::{derive_time_fields, parse_timestamp, time_of_day_for_hour, TimeFields, DEFAULT_TIMEZONE};
pub use types::{
    coarsen_behavior, Activity, AppCategory, CoarseBehavior, ForegroundCategory, Gender, Occupation,
    ResponseBehavior, TimeOfDay,
};

/// Foreground-app value recorded when the launcher is showing.
pub const HOME_SCREEN: &str = "HOME_SCREEN";

/// One survey event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsmRecord {
    pub user_id: String,
    pub round: u8,
    /// Epoch seconds when the survey notification was posted.
    pub received_at: i64,
    /// Epoch seconds when the participant opened the survey.
    pub clicked_at: i64,
    pub response_time_s: u64,
    pub weekday: bool,
    pub day_of_week: u8,
    pub time_of_day: TimeOfDay,
    pub activity: Activity,
    pub accel: Option<[f64; 3]>,
    pub gyro: Option<[f64; 3]>,
    pub foreground_app: String,
    pub foreground_category: ForegroundCategory,
    pub notif_app: String,
    pub notif_category: AppCategory,
    pub response_behavior: ResponseBehavior,
    pub motivation_text: Option<String>,
    pub codes: BTreeSet<String>,
    pub attention: u8,
}

impl EsmRecord {
    pub fn coarse_behavior(&self) -> CoarseBehavior {
        self.response_behavior.coarsen()
    }

    /// Checks the per-record invariants that do not need the user's zone.
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(1..=5).contains(&self.attention) {
            return Err(("attention", format!("{} is outside 1..=5", self.attention)));
        }
        if !(1..=2).contains(&self.round) {
            return Err(("round", format!("{} is not 1 or 2", self.round)));
        }
        if self.clicked_at < self.received_at {
            return Err(("clicked_at", "earlier than received_at".into()));
        }
        if self.response_time_s != (self.clicked_at - self.received_at) as u64 {
            return Err(("response_time_s", "differs from clicked_at - received_at".into()));
        }
        if self.day_of_week > 6 {
            return Err(("day_of_week", format!("{} is outside 0..=6", self.day_of_week)));
        }
        if self.weekday != (self.day_of_week < 5) {
            return Err(("weekday", "inconsistent with day_of_week".into()));
        }
        for v in self.accel.iter().chain(self.gyro.iter()).flatten() {
            if !v.is_finite() {
                return Err(("accel/gyro", "non-finite sensor value".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub gender: Option<Gender>,
    pub age: Option<u32>,
    pub occupation: Option<Occupation>,
    pub education: String,
    pub phone_brand: String,
    pub rounds: Vec<u8>,
    /// IANA zone used to derive local-time fields.
    pub timezone: String,
}

impl UserProfile {
    /// A profile carrying only the id, for record files loaded on their own.
    pub fn placeholder(user_id: &str) -> Self {
        Self {
            user_id: user_id.to_string(),
            gender: None,
            age: None,
            occupation: None,
            education: String::new(),
            phone_brand: String::new(),
            rounds: Vec::new(),
            timezone: DEFAULT_TIMEZONE.to_string(),
        }
    }

    pub fn tz(&self) -> Tz {
        time::parse_tz(&self.timezone).unwrap_or(chrono_tz::Asia::Shanghai)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<EsmRecord>,
    profiles: Vec<UserProfile>,
    taxonomy: CodeTaxonomy,
}

impl Dataset {
    pub fn new(records: Vec<EsmRecord>, profiles: Vec<UserProfile>, taxonomy: CodeTaxonomy) -> Result<Self> {
        let mut ids = BTreeMap::new();
        for p in &profiles {
            if ids.insert(p.user_id.as_str(), p).is_some() {
                return Err(Error::Schema(format!("duplicate profile for user `{}`", p.user_id)));
            }
        }
        for (i, r) in records.iter().enumerate() {
            let Some(profile) = ids.get(r.user_id.as_str()) else {
                return Err(Error::Schema(format!(
                    "record {i}: user `{}` has no profile",
                    r.user_id
                )));
            };
            if let Err((field, msg)) = r.check() {
                return Err(Error::Schema(format!("record {i}: {field}: {msg}")));
            }
            let derived = derive_time_fields(r.clicked_at, profile.tz());
            if derived.time_of_day != r.time_of_day || derived.day_of_week != r.day_of_week {
                return Err(Error::Schema(format!(
                    "record {i}: time fields disagree with clicked_at in {}",
                    profile.timezone
                )));
            }
            if let Some(c) = r.codes.iter().find(|c| !taxonomy.contains_code(c)) {
                return Err(Error::Schema(format!("record {i}: code `{c}` not in taxonomy")));
            }
        }
        Ok(Self {
            records,
            profiles,
            taxonomy,
        })
    }

    pub fn records(&self) -> &[EsmRecord] {
        &self.records
    }

    pub fn profiles(&self) -> &[UserProfile] {
        &self.profiles
    }

    pub fn taxonomy(&self) -> &CodeTaxonomy {
        &self.taxonomy
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn profile(&self, user_id: &str) -> Option<&UserProfile> {
        self.profiles.iter().find(|p| p.user_id == user_id)
    }

    /// Distinct user ids that own at least one record, sorted.
    pub fn users(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.user_id.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// Indices of a user's records ordered by `clicked_at` (stable on ties).
    pub fn user_indices_chronological(&self, user_id: &str) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.records.len())
            .filter(|&i| self.records[i].user_id == user_id)
            .collect();
        idx.sort_by_key(|&i| self.records[i].clicked_at);
        idx
    }

    /// Records sorted by (user_id, clicked_at).
    pub fn sorted(&self) -> Self {
        let mut records = self.records.clone();
        records.sort_by(|a, b| (&a.user_id, a.clicked_at).cmp(&(&b.user_id, b.clicked_at)));
        Self {
            records,
            profiles: self.profiles.clone(),
            taxonomy: self.taxonomy.clone(),
        }
    }

    /// Subset by record indices (in the given order); profiles of users left
    /// without records are kept.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            profiles: self.profiles.clone(),
            taxonomy: self.taxonomy.clone(),
        }
    }

    /// Replaces records without re-validating; callers keep invariants.
    pub(crate) fn with_records(&self, records: Vec<EsmRecord>) -> Self {
        Self {
            records,
            profiles: self.profiles.clone(),
            taxonomy: self.taxonomy.clone(),
        }
    }

    pub(crate) fn from_parts_unchecked(
        records: Vec<EsmRecord>,
        profiles: Vec<UserProfile>,
        taxonomy: CodeTaxonomy,
    ) -> Self {
        Self {
            records,
            profiles,
            taxonomy,
        }
    }

    /// Record counts per attention level 1..=5.
    pub fn attention_counts(&self) -> [usize; 5] {
        let mut c = [0; 5];
        for r in &self.records {
            c[(r.attention - 1) as usize] += 1;
        }
        c
    }
}

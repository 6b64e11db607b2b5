//! Per-group attention summaries and response-time quartiles.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, EsmRecord};
use crate::error::{Error, Result};

/// Categorical record fields that tables can be grouped by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupField {
    Activity,
    TimeOfDay,
    Weekday,
    DayOfWeek,
    ForegroundCategory,
    NotifCategory,
    ResponseBehavior,
    CoarseBehavior,
    User,
}

impl GroupField {
    pub const ALL: [GroupField; 9] = [
        GroupField::Activity,
        GroupField::TimeOfDay,
        GroupField::Weekday,
        GroupField::DayOfWeek,
        GroupField::ForegroundCategory,
        GroupField::NotifCategory,
        GroupField::ResponseBehavior,
        GroupField::CoarseBehavior,
        GroupField::User,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GroupField::Activity => "activity",
            GroupField::TimeOfDay => "time_of_day",
            GroupField::Weekday => "weekday",
            GroupField::DayOfWeek => "day_of_week",
            GroupField::ForegroundCategory => "foreground_category",
            GroupField::NotifCategory => "notif_category",
            GroupField::ResponseBehavior => "response_behavior",
            GroupField::CoarseBehavior => "coarse_behavior",
            GroupField::User => "user",
        }
    }

    /// Sort position and display label of a record's group.
    fn key(self, r: &EsmRecord) -> (usize, String) {
        match self {
            GroupField::Activity => (r.activity.index(), r.activity.to_string()),
            GroupField::TimeOfDay => (r.time_of_day.index(), r.time_of_day.to_string()),
            GroupField::Weekday => (usize::from(!r.weekday), r.weekday.to_string()),
            GroupField::DayOfWeek => (r.day_of_week as usize, r.day_of_week.to_string()),
            GroupField::ForegroundCategory => (r.foreground_category.index(), r.foreground_category.to_string()),
            GroupField::NotifCategory => (r.notif_category.index(), r.notif_category.to_string()),
            GroupField::ResponseBehavior => (r.response_behavior.index(), r.response_behavior.to_string()),
            GroupField::CoarseBehavior => (r.coarse_behavior().index(), r.coarse_behavior().to_string()),
            GroupField::User => (0, r.user_id.clone()),
        }
    }

    /// Groups that occur in `d`, in category order, with their record indices.
    pub fn groups(self, d: &Dataset) -> Vec<(String, Vec<usize>)> {
        let mut map: BTreeMap<(usize, String), Vec<usize>> = BTreeMap::new();
        for (i, r) in d.records().iter().enumerate() {
            map.entry(self.key(r)).or_default().push(i);
        }
        map.into_iter().map(|((_, label), idx)| (label, idx)).collect()
    }
}

impl fmt::Display for GroupField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GroupField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::UnknownToken {
                kind: "group field",
                token: s.to_string(),
                allowed: Self::ALL.iter().map(|g| g.as_str()).collect(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub total: usize,
    /// Share of all records.
    pub proportion: f64,
    /// Share of the group's records at attention 1..=5.
    pub level_share: [f64; 5],
    pub mean: f64,
    /// Population SD.
    pub sd: f64,
    pub median: f64,
}

fn median_sorted(x: &[f64]) -> f64 {
    let n = x.len();
    if n % 2 == 1 {
        x[n / 2]
    } else {
        (x[n / 2 - 1] + x[n / 2]) / 2.0
    }
}

pub fn describe_by_group(d: &Dataset, field: GroupField) -> Vec<GroupRow> {
    let n_all = d.len() as f64;
    field
        .groups(d)
        .into_iter()
        .map(|(group, idx)| {
            let mut a: Vec<f64> = idx.iter().map(|&i| f64::from(d.records()[i].attention)).collect();
            a.sort_by(f64::total_cmp);
            let n = a.len() as f64;
            let mean = a.iter().sum::<f64>() / n;
            let var = a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let mut level_share = [0.0; 5];
            for v in &a {
                level_share[*v as usize - 1] += 1.0 / n;
            }
            GroupRow {
                group,
                total: a.len(),
                proportion: a.len() as f64 / n_all,
                level_share,
                mean,
                sd: var.sqrt(),
                median: median_sorted(&a),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Tukey's hinges: medians of the lower and upper halves, each half
/// including the overall median when the count is odd.
pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    if values.is_empty() {
        return None;
    }
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    Some(Quartiles {
        q1: median_sorted(&x[..n.div_ceil(2)]),
        median: median_sorted(&x),
        q3: median_sorted(&x[n / 2..]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtRow {
    pub attention: u8,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Response-time summary per attention level present in `d`.
pub fn response_time_table(d: &Dataset) -> Vec<RtRow> {
    (1..=5u8)
        .filter_map(|a| {
            let t: Vec<f64> = d
                .records()
                .iter()
                .filter(|r| r.attention == a)
                .map(|r| r.response_time_s as f64)
                .collect();
            let q = quartiles(&t)?;
            Some(RtRow {
                attention: a,
                n: t.len(),
                mean: t.iter().sum::<f64>() / t.len() as f64,
                median: q.median,
                q1: q.q1,
                q3: q.q3,
            })
        })
        .collect()
}

pub fn describe_markdown(field: GroupField, rows: &[GroupRow]) -> String {
    let mut out = format!(
        "| {field} | Total | Prop. | L1 | L2 | L3 | L4 | L5 | Mean | SD | Median |\n|---|---|---|---|---|---|---|---|---|---|---|\n"
    );
    for r in rows {
        let levels: Vec<String> = r.level_share.iter().map(|s| format!("{:.2}%", 100.0 * s)).collect();
        let _ = writeln!(
            out,
            "| {} | {} | {:.2}% | {} | {:.2} | {:.2} | {:.2} |",
            r.group,
            r.total,
            100.0 * r.proportion,
            levels.join(" | "),
            r.mean,
            r.sd,
            r.median
        );
    }
    out
}

pub fn response_time_markdown(rows: &[RtRow]) -> String {
    let mut out = String::from("| Attention | N | Mean | Med. | Q1 | Q3 |\n|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {:.2} | {} | {} | {} |",
            r.attention, r.n, r.mean, r.median, r.q1, r.q3
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::dataset;

    #[test]
    fn quartile_fixtures() {
        let q = quartiles(&[40.0, 10.0, 30.0, 20.0]).unwrap();
        assert_eq!((q.q1, q.median, q.q3), (15.0, 25.0, 35.0));
        let q = quartiles(&[7.0]).unwrap();
        assert_eq!((q.q1, q.median, q.q3), (7.0, 7.0, 7.0));
        let q = quartiles(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((q.q1, q.median, q.q3), (2.0, 3.0, 4.0));
        assert!(quartiles(&[]).is_none());
    }

    #[test]
    fn group_mean_and_median() {
        let d = dataset(&[vec![1, 1, 5], vec![4]]);
        let rows = describe_by_group(&d, GroupField::User);
        assert_eq!(rows[0].group, "U00");
        assert!((rows[0].mean - 7.0 / 3.0).abs() < 1e-12);
        assert_eq!(rows[0].median, 1.0);
        assert_eq!(rows[0].total, 3);
        assert_eq!(rows[0].proportion, 0.75);
        assert!((rows[0].level_share[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rows[1].sd, 0.0);
    }

    #[test]
    fn response_times_per_level() {
        let d = dataset(&[vec![2, 2, 3]]);
        let rows = response_time_table(&d);
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].attention, rows[0].n, rows[0].mean), (2, 2, 30.0));
        assert!(response_time_markdown(&rows).contains("| 2 | 2 | 30.00 |"));
    }

    #[test]
    fn field_tokens() {
        assert_eq!("activity".parse::<GroupField>().unwrap(), GroupField::Activity);
        assert!("mood".parse::<GroupField>().is_err());
    }
}

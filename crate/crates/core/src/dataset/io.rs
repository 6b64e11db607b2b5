//! Record, profile and taxonomy files.
//!
//! Records: CSV with the fixed header in [`CSV_HEADER`], or JSONL objects with
//! the same keys and the same textual value conventions (empty string or
//! `null` for an absent optional, `|`-joined code ids).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use chrono_tz::Tz;
use serde_json::{Map, Value};

use super::time::{derive_time_fields, parse_timestamp, parse_tz, DEFAULT_TIMEZONE};
use super::{
    Activity, AppCategory, CodeTaxonomy, Dataset, EsmRecord, ForegroundCategory, Gender, Occupation,
    ResponseBehavior, TimeOfDay, UserProfile,
};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 22] = [
    "user_id",
    "round",
    "received_at",
    "clicked_at",
    "weekday",
    "day_of_week",
    "time_of_day",
    "activity",
    "accel_x",
    "accel_y",
    "accel_z",
    "gyro_x",
    "gyro_y",
    "gyro_z",
    "foreground_app",
    "foreground_category",
    "notif_app",
    "notif_category",
    "response_behavior",
    "attention",
    "codes",
    "motivation_text",
];

pub const PROFILE_HEADER: [&str; 7] = [
    "user_id",
    "gender",
    "age",
    "occupation",
    "education",
    "phone_brand",
    "rounds",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") | Some("ndjson") => Format::Jsonl,
            _ => Format::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            _ => Err(Error::UnknownToken {
                kind: "format",
                token: s.to_string(),
                allowed: vec!["csv", "jsonl"],
            }),
        }
    }
}

/// A raw row: field name → text, plus the 1-based source line.
struct RawRow<'a> {
    line: usize,
    get: Box<dyn Fn(&str) -> Option<String> + 'a>,
}

impl RawRow<'_> {
    fn text(&self, field: &str) -> String {
        (self.get)(field).unwrap_or_default()
    }

    fn required(&self, field: &str) -> Result<String> {
        let v = self.text(field);
        if v.trim().is_empty() {
            Err(Error::field(self.line, field, "missing value"))
        } else {
            Ok(v)
        }
    }

    fn optional(&self, field: &str) -> Option<String> {
        let v = self.text(field);
        if v.trim().is_empty() {
            None
        } else {
            Some(v)
        }
    }

    fn token<T: FromStr<Err = Error>>(&self, field: &str) -> Result<T> {
        let raw = self.required(field)?;
        raw.trim()
            .parse()
            .map_err(|e: Error| Error::field(self.line, field, e.to_string()))
    }

    fn number<T: FromStr>(&self, field: &str) -> Result<T> {
        let raw = self.required(field)?;
        raw.trim()
            .parse()
            .map_err(|_| Error::field(self.line, field, format!("`{raw}` is not a valid number")))
    }

    fn vector(&self, fields: [&str; 3]) -> Result<Option<[f64; 3]>> {
        let parts: Vec<Option<String>> = fields.iter().map(|f| self.optional(f)).collect();
        if parts.iter().all(Option::is_none) {
            return Ok(None);
        }
        let mut out = [0.0; 3];
        for (i, f) in fields.iter().enumerate() {
            let raw = parts[i]
                .as_ref()
                .ok_or_else(|| Error::field(self.line, f, "partial sensor vector"))?;
            let v: f64 = raw
                .trim()
                .parse()
                .map_err(|_| Error::field(self.line, f, format!("`{raw}` is not a number")))?;
            if !v.is_finite() {
                return Err(Error::field(self.line, f, "non-finite value"));
            }
            out[i] = v;
        }
        Ok(Some(out))
    }
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

fn record_from_row(row: &RawRow<'_>, tz_of: &dyn Fn(&str) -> Tz) -> Result<EsmRecord> {
    let line = row.line;
    let user_id = row.required("user_id")?.trim().to_string();
    let tz = tz_of(&user_id);
    let round: u8 = row.number("round")?;
    if !(1..=2).contains(&round) {
        return Err(Error::field(line, "round", format!("{round} is not 1 or 2")));
    }
    let received_at = parse_timestamp(&row.required("received_at")?, tz)
        .map_err(|m| Error::field(line, "received_at", m))?;
    let clicked_at = parse_timestamp(&row.required("clicked_at")?, tz)
        .map_err(|m| Error::field(line, "clicked_at", m))?;
    if clicked_at < received_at {
        return Err(Error::field(line, "clicked_at", "earlier than received_at"));
    }
    let derived = derive_time_fields(clicked_at, tz);
    let weekday = match row.optional("weekday") {
        None => derived.weekday,
        Some(raw) => {
            let v = parse_bool(&raw).ok_or_else(|| Error::field(line, "weekday", format!("`{raw}` is not a boolean")))?;
            if v != derived.weekday {
                return Err(Error::field(line, "weekday", "inconsistent with clicked_at"));
            }
            v
        }
    };
    let day_of_week = match row.optional("day_of_week") {
        None => derived.day_of_week,
        Some(_) => {
            let v: u8 = row.number("day_of_week")?;
            if v > 6 {
                return Err(Error::field(line, "day_of_week", format!("{v} is outside 0..=6")));
            }
            if v != derived.day_of_week {
                return Err(Error::field(line, "day_of_week", "inconsistent with clicked_at"));
            }
            v
        }
    };
    let time_of_day = match row.optional("time_of_day") {
        None => derived.time_of_day,
        Some(_) => {
            let v: TimeOfDay = row.token("time_of_day")?;
            if v != derived.time_of_day {
                return Err(Error::field(line, "time_of_day", "inconsistent with clicked_at local hour"));
            }
            v
        }
    };
    let attention: u8 = row.number("attention")?;
    if !(1..=5).contains(&attention) {
        return Err(Error::field(line, "attention", format!("{attention} is outside 1..=5")));
    }
    let codes: BTreeSet<String> = row
        .text("codes")
        .split('|')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(str::to_string)
        .collect();
    Ok(EsmRecord {
        user_id,
        round,
        received_at,
        clicked_at,
        response_time_s: (clicked_at - received_at) as u64,
        weekday,
        day_of_week,
        time_of_day,
        activity: row.token::<Activity>("activity")?,
        accel: row.vector(["accel_x", "accel_y", "accel_z"])?,
        gyro: row.vector(["gyro_x", "gyro_y", "gyro_z"])?,
        foreground_app: row.required("foreground_app")?,
        foreground_category: row.token::<ForegroundCategory>("foreground_category")?,
        notif_app: row.required("notif_app")?,
        notif_category: row.token::<AppCategory>("notif_category")?,
        response_behavior: row.token::<ResponseBehavior>("response_behavior")?,
        motivation_text: row.optional("motivation_text"),
        codes,
        attention,
    })
}

fn json_text(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(items) => Some(
            items
                .iter()
                .filter_map(json_text)
                .collect::<Vec<_>>()
                .join("|"),
        ),
        Value::Object(_) => Some(v.to_string()),
    }
}

/// Parses a record file. `tz_of` supplies each user's zone for deriving and
/// checking local-time fields. Row order is preserved.
pub fn parse_records(path: &Path, format: Format, tz_of: &dyn Fn(&str) -> Tz) -> Result<Vec<EsmRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut seen: HashSet<(String, i64, String)> = HashSet::new();
    let mut push = |rec: EsmRecord, line: usize| -> Result<()> {
        let key = (rec.user_id.clone(), rec.clicked_at, rec.notif_app.clone());
        if !seen.insert(key) {
            return Err(Error::Duplicate {
                line,
                user_id: rec.user_id,
                clicked_at: rec.clicked_at,
                notif_app: rec.notif_app,
            });
        }
        records.push(rec);
        Ok(())
    };
    match format {
        Format::Csv => {
            let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
            let headers = rdr.headers()?.clone();
            let found: Vec<&str> = headers.iter().map(str::trim).collect();
            if found != CSV_HEADER {
                return Err(Error::Schema(format!(
                    "{}: header must be exactly `{}`",
                    path.display(),
                    CSV_HEADER.join(",")
                )));
            }
            for result in rdr.records() {
                let rec = result?;
                let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
                let row = RawRow {
                    line,
                    get: Box::new(|f: &str| {
                        CSV_HEADER
                            .iter()
                            .position(|h| *h == f)
                            .and_then(|i| rec.get(i))
                            .map(str::to_string)
                    }),
                };
                let parsed = record_from_row(&row, tz_of)?;
                push(parsed, line)?;
            }
        }
        Format::Jsonl => {
            for (i, line_text) in BufReader::new(file).lines().enumerate() {
                let line = i + 1;
                let line_text = line_text.map_err(|e| Error::io(path, e))?;
                if line_text.trim().is_empty() {
                    continue;
                }
                let obj: Map<String, Value> = serde_json::from_str(&line_text)
                    .map_err(|e| Error::field(line, "<object>", e.to_string()))?;
                if let Some(k) = obj.keys().find(|k| !CSV_HEADER.contains(&k.as_str())) {
                    return Err(Error::field(line, k, "unknown key"));
                }
                let row = RawRow {
                    line,
                    get: Box::new(|f: &str| obj.get(f).and_then(json_text)),
                };
                let parsed = record_from_row(&row, tz_of)?;
                push(parsed, line)?;
            }
        }
    }
    Ok(records)
}

fn fmt_opt_vec(v: &Option<[f64; 3]>, i: usize) -> String {
    v.map(|a| a[i].to_string()).unwrap_or_default()
}

fn record_fields(r: &EsmRecord) -> [String; 22] {
    [
        r.user_id.clone(),
        r.round.to_string(),
        r.received_at.to_string(),
        r.clicked_at.to_string(),
        r.weekday.to_string(),
        r.day_of_week.to_string(),
        r.time_of_day.to_string(),
        r.activity.to_string(),
        fmt_opt_vec(&r.accel, 0),
        fmt_opt_vec(&r.accel, 1),
        fmt_opt_vec(&r.accel, 2),
        fmt_opt_vec(&r.gyro, 0),
        fmt_opt_vec(&r.gyro, 1),
        fmt_opt_vec(&r.gyro, 2),
        r.foreground_app.clone(),
        r.foreground_category.to_string(),
        r.notif_app.clone(),
        r.notif_category.to_string(),
        r.response_behavior.to_string(),
        r.attention.to_string(),
        r.codes.iter().cloned().collect::<Vec<_>>().join("|"),
        r.motivation_text.clone().unwrap_or_default(),
    ]
}

pub fn write_records<W: Write>(records: &[EsmRecord], format: Format, mut out: W) -> Result<()> {
    match format {
        Format::Csv => {
            let mut wtr = csv::Writer::from_writer(out);
            wtr.write_record(CSV_HEADER)?;
            for r in records {
                wtr.write_record(record_fields(r))?;
            }
            wtr.flush().map_err(|e| Error::io("<records>", e))?;
        }
        Format::Jsonl => {
            for r in records {
                let mut obj = Map::new();
                for (k, v) in CSV_HEADER.iter().zip(record_fields(r)) {
                    obj.insert(k.to_string(), Value::String(v));
                }
                serde_json::to_writer(&mut out, &obj)?;
                out.write_all(b"\n").map_err(|e| Error::io("<records>", e))?;
            }
        }
    }
    Ok(())
}

/// Profiles CSV: [`PROFILE_HEADER`], optionally followed by a `timezone`
/// column. Demographic fields may be left empty.
pub fn parse_profiles(path: &Path) -> Result<Vec<UserProfile>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let has_tz = headers.len() == PROFILE_HEADER.len() + 1 && headers.last().map(String::as_str) == Some("timezone");
    if headers[..PROFILE_HEADER.len().min(headers.len())] != PROFILE_HEADER[..]
        || !(headers.len() == PROFILE_HEADER.len() || has_tz)
    {
        return Err(Error::Schema(format!(
            "{}: header must be `{}` (optionally followed by `timezone`)",
            path.display(),
            PROFILE_HEADER.join(",")
        )));
    }
    let mut profiles = Vec::new();
    let mut ids = HashSet::new();
    for result in rdr.records() {
        let rec = result?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let row = RawRow {
            line,
            get: Box::new(|f: &str| headers.iter().position(|h| h == f).and_then(|i| rec.get(i)).map(str::to_string)),
        };
        let user_id = row.required("user_id")?.trim().to_string();
        if !ids.insert(user_id.clone()) {
            return Err(Error::field(line, "user_id", format!("duplicate profile `{user_id}`")));
        }
        let timezone = row.optional("timezone").unwrap_or_else(|| DEFAULT_TIMEZONE.to_string());
        if parse_tz(&timezone).is_none() {
            return Err(Error::field(line, "timezone", format!("`{timezone}` is not an IANA zone")));
        }
        let rounds = row
            .text("rounds")
            .split('|')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<u8>()
                    .ok()
                    .filter(|r| (1..=2).contains(r))
                    .ok_or_else(|| Error::field(line, "rounds", format!("`{s}` is not 1 or 2")))
            })
            .collect::<Result<Vec<_>>>()?;
        profiles.push(UserProfile {
            user_id,
            gender: row.optional("gender").map(|_| row.token::<Gender>("gender")).transpose()?,
            age: row.optional("age").map(|_| row.number::<u32>("age")).transpose()?,
            occupation: row
                .optional("occupation")
                .map(|_| row.token::<Occupation>("occupation"))
                .transpose()?,
            education: row.text("education"),
            phone_brand: row.text("phone_brand"),
            rounds,
            timezone,
        });
    }
    Ok(profiles)
}

pub fn write_profiles_csv<W: Write>(profiles: &[UserProfile], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = PROFILE_HEADER.to_vec();
    header.push("timezone");
    wtr.write_record(&header)?;
    for p in profiles {
        wtr.write_record([
            p.user_id.clone(),
            p.gender.map(|g| g.to_string()).unwrap_or_default(),
            p.age.map(|a| a.to_string()).unwrap_or_default(),
            p.occupation.map(|o| o.to_string()).unwrap_or_default(),
            p.education.clone(),
            p.phone_brand.clone(),
            p.rounds.iter().map(u8::to_string).collect::<Vec<_>>().join("|"),
            p.timezone.clone(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<profiles>", e))?;
    Ok(())
}

/// Loads a record file on its own: default taxonomy, default zone, and a
/// placeholder profile per user.
pub fn parse_dataset(path: &Path, format: Format) -> Result<Dataset> {
    load_dataset(path, format, None, None)
}

pub fn load_dataset(
    records_path: &Path,
    format: Format,
    profiles_path: Option<&Path>,
    taxonomy_path: Option<&Path>,
) -> Result<Dataset> {
    let taxonomy = match taxonomy_path {
        Some(p) => CodeTaxonomy::load(p)?,
        None => CodeTaxonomy::default(),
    };
    let profiles = match profiles_path {
        Some(p) => Some(parse_profiles(p)?),
        None => None,
    };
    let zones: BTreeMap<String, Tz> = profiles
        .iter()
        .flatten()
        .map(|p| (p.user_id.clone(), p.tz()))
        .collect();
    let default_tz: Tz = DEFAULT_TIMEZONE.parse().expect("default zone");
    let tz_of = |u: &str| zones.get(u).copied().unwrap_or(default_tz);
    let records = parse_records(records_path, format, &tz_of)?;
    for (i, r) in records.iter().enumerate() {
        if let Some(c) = r.codes.iter().find(|c| !taxonomy.contains_code(c)) {
            return Err(Error::Schema(format!(
                "record {}: code `{c}` is not in the taxonomy",
                i + 1
            )));
        }
    }
    let profiles = match profiles {
        Some(p) => p,
        None => {
            let users: BTreeSet<&str> = records.iter().map(|r| r.user_id.as_str()).collect();
            users.into_iter().map(UserProfile::placeholder).collect()
        }
    };
    Dataset::new(records, profiles, taxonomy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(name: &str, body: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        std::fs::File::create(&path).unwrap().write_all(body.as_bytes()).unwrap();
        (dir, path)
    }

    // 2024-05-06 13:00:00 Asia/Shanghai, a Monday afternoon.
    const ROW: &str = "U1,1,1714971590,1714971600,true,0,afternoon,sitting,0.1,9.8,0.2,,,,WeChat,communication,WeChat,communication,click_to_view,3,needs_reply,reply to a friend";

    fn csv_with(rows: &[&str]) -> String {
        let mut s = CSV_HEADER.join(",");
        for r in rows {
            s.push('\n');
            s.push_str(r);
        }
        s.push('\n');
        s
    }

    #[test]
    fn minimal_file_parses() {
        let (_d, p) = write_tmp("r.csv", &csv_with(&[ROW]));
        let d = parse_dataset(&p, Format::Csv).unwrap();
        assert_eq!(d.len(), 1);
        let r = &d.records()[0];
        assert_eq!(r.attention, 3);
        assert_eq!(r.response_behavior, ResponseBehavior::ClickToView);
        assert_eq!(r.response_time_s, 10);
        assert_eq!(r.gyro, None);
        assert_eq!(r.accel, Some([0.1, 9.8, 0.2]));
    }

    #[test]
    fn attention_out_of_range_names_field() {
        let bad = ROW.replace("click_to_view,3,", "click_to_view,6,");
        let (_d, p) = write_tmp("r.csv", &csv_with(&[&bad]));
        let err = parse_dataset(&p, Format::Csv).unwrap_err().to_string();
        assert!(err.contains("attention"), "{err}");
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn unknown_token_lists_allowed_values() {
        let bad = ROW.replace(",sitting,", ",jogging,");
        let (_d, p) = write_tmp("r.csv", &csv_with(&[&bad]));
        let err = parse_dataset(&p, Format::Csv).unwrap_err().to_string();
        assert!(err.contains("activity") && err.contains("walking"), "{err}");
    }

    #[test]
    fn duplicate_triple_rejected() {
        let (_d, p) = write_tmp("r.csv", &csv_with(&[ROW, ROW]));
        let err = parse_dataset(&p, Format::Csv).unwrap_err();
        assert!(matches!(err, Error::Duplicate { line: 3, .. }), "{err}");
    }

    #[test]
    fn inconsistent_time_of_day_rejected() {
        let bad = ROW.replace(",afternoon,", ",morning,");
        let (_d, p) = write_tmp("r.csv", &csv_with(&[&bad]));
        let err = parse_dataset(&p, Format::Csv).unwrap_err().to_string();
        assert!(err.contains("time_of_day"), "{err}");
    }

    #[test]
    fn blank_time_fields_are_derived() {
        let row = ROW.replace("true,0,afternoon", ",,");
        let (_d, p) = write_tmp("r.csv", &csv_with(&[&row]));
        let d = parse_dataset(&p, Format::Csv).unwrap();
        assert_eq!(d.records()[0].time_of_day, TimeOfDay::Afternoon);
        assert!(d.records()[0].weekday);
    }

    #[test]
    fn wrong_header_rejected() {
        let body = csv_with(&[ROW]).replacen("user_id", "uid", 1);
        let (_d, p) = write_tmp("r.csv", &body);
        assert!(matches!(parse_dataset(&p, Format::Csv), Err(Error::Schema(_))));
    }

    #[test]
    fn unknown_code_rejected() {
        let bad = ROW.replace("needs_reply", "needs_coffee");
        let (_d, p) = write_tmp("r.csv", &csv_with(&[&bad]));
        assert!(parse_dataset(&p, Format::Csv).is_err());
    }

    #[test]
    fn jsonl_matches_csv() {
        let (_d, p) = write_tmp("r.csv", &csv_with(&[ROW]));
        let d = parse_dataset(&p, Format::Csv).unwrap();
        let mut buf = Vec::new();
        write_records(d.records(), Format::Jsonl, &mut buf).unwrap();
        let (_d2, p2) = write_tmp("r.jsonl", std::str::from_utf8(&buf).unwrap());
        let d2 = parse_dataset(&p2, Format::Jsonl).unwrap();
        assert_eq!(d.records(), d2.records());
    }

    #[test]
    fn jsonl_accepts_typed_values() {
        let line = r#"{"user_id":"U1","round":1,"received_at":1714971590,"clicked_at":1714971600,"weekday":true,"day_of_week":0,"time_of_day":"afternoon","activity":"walking","accel_x":null,"accel_y":null,"accel_z":null,"gyro_x":null,"gyro_y":null,"gyro_z":null,"foreground_app":"HOME_SCREEN","foreground_category":"home_screen","notif_app":"Taobao","notif_category":"shopping","response_behavior":"ignore","attention":2,"codes":["ads_marketing","busy"],"motivation_text":null}"#;
        let (_d, p) = write_tmp("r.jsonl", &format!("{line}\n"));
        let d = parse_dataset(&p, Format::Jsonl).unwrap();
        assert_eq!(d.records()[0].codes.len(), 2);
        assert_eq!(d.records()[0].accel, None);
    }

    #[test]
    fn profiles_with_and_without_timezone() {
        let (_d, p) = write_tmp(
            "p.csv",
            "user_id,gender,age,occupation,education,phone_brand,rounds\nP1_r1,male,23,studying,Master's,Honor,1\n",
        );
        let ps = parse_profiles(&p).unwrap();
        assert_eq!(ps[0].timezone, DEFAULT_TIMEZONE);
        assert_eq!(ps[0].occupation, Some(Occupation::Studying));
        let (_d2, p2) = write_tmp(
            "p.csv",
            "user_id,gender,age,occupation,education,phone_brand,rounds,timezone\nP1,female,30,working,PhD,OPPO,1|2,Europe/Berlin\n",
        );
        let ps2 = parse_profiles(&p2).unwrap();
        assert_eq!(ps2[0].rounds, vec![1, 2]);
        assert_eq!(ps2[0].timezone, "Europe/Berlin");
    }
}

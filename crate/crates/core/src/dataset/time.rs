use chrono::{DateTime, Datelike, LocalResult, NaiveDateTime, TimeZone, Timelike};
use chrono_tz::Tz;

use super::types::TimeOfDay;

/// Zone assumed for users whose profile names none.
pub const DEFAULT_TIMEZONE: &str = "Asia/Shanghai";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeFields {
    pub time_of_day: TimeOfDay,
    /// 0 = Monday .. 6 = Sunday.
    pub day_of_week: u8,
    pub weekday: bool,
}

pub fn time_of_day_for_hour(hour: u32) -> TimeOfDay {
    match hour {
        0..=5 => TimeOfDay::Night,
        6..=11 => TimeOfDay::Morning,
        12..=17 => TimeOfDay::Afternoon,
        _ => TimeOfDay::Evening,
    }
}

pub fn derive_time_fields(clicked_at: i64, tz: Tz) -> TimeFields {
    let local = local_time(clicked_at, tz);
    let day_of_week = local.weekday().num_days_from_monday() as u8;
    TimeFields {
        time_of_day: time_of_day_for_hour(local.hour()),
        day_of_week,
        weekday: day_of_week < 5,
    }
}

pub fn local_time(epoch_s: i64, tz: Tz) -> DateTime<Tz> {
    tz.timestamp_opt(epoch_s, 0)
        .single()
        .unwrap_or_else(|| tz.timestamp_opt(0, 0).unwrap())
}

pub fn parse_tz(name: &str) -> Option<Tz> {
    name.parse().ok()
}

/// Accepts epoch seconds, RFC 3339, or a naive `YYYY-MM-DD HH:MM:SS`
/// interpreted in `tz`.
pub fn parse_timestamp(raw: &str, tz: Tz) -> Result<i64, String> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<i64>() {
        return Ok(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Ok(dt.timestamp());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y/%m/%d %H:%M:%S"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(raw, fmt) {
            return match tz.from_local_datetime(&naive) {
                LocalResult::Single(dt) => Ok(dt.timestamp()),
                LocalResult::Ambiguous(first, _) => Ok(first.timestamp()),
                LocalResult::None => Err(format!("`{raw}` does not exist in {tz}")),
            };
        }
    }
    Err(format!("`{raw}` is not epoch seconds, RFC 3339, or YYYY-MM-DD HH:MM:SS"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shanghai(y: i32, m: u32, d: u32, h: u32) -> i64 {
        let tz: Tz = DEFAULT_TIMEZONE.parse().unwrap();
        tz.with_ymd_and_hms(y, m, d, h, 0, 0).unwrap().timestamp()
    }

    #[test]
    fn bucket_examples() {
        let tz: Tz = DEFAULT_TIMEZONE.parse().unwrap();
        assert_eq!(derive_time_fields(shanghai(2024, 5, 6, 13), tz).time_of_day, TimeOfDay::Afternoon);
        assert_eq!(derive_time_fields(shanghai(2024, 5, 6, 0), tz).time_of_day, TimeOfDay::Night);
        assert_eq!(derive_time_fields(shanghai(2024, 5, 6, 6), tz).time_of_day, TimeOfDay::Morning);
        assert_eq!(derive_time_fields(shanghai(2024, 5, 6, 12), tz).time_of_day, TimeOfDay::Afternoon);
        assert_eq!(derive_time_fields(shanghai(2024, 5, 6, 18), tz).time_of_day, TimeOfDay::Evening);
    }

    #[test]
    fn buckets_partition_the_clock() {
        let mut counts = [0usize; 4];
        for h in 0..24 {
            counts[time_of_day_for_hour(h).index()] += 1;
        }
        assert_eq!(counts, [6, 6, 6, 6]);
    }

    #[test]
    fn weekday_is_monday_to_friday() {
        let tz: Tz = DEFAULT_TIMEZONE.parse().unwrap();
        // 2024-05-06 is a Monday.
        let mon = derive_time_fields(shanghai(2024, 5, 6, 9), tz);
        assert_eq!((mon.day_of_week, mon.weekday), (0, true));
        let fri = derive_time_fields(shanghai(2024, 5, 10, 9), tz);
        assert_eq!((fri.day_of_week, fri.weekday), (4, true));
        let sun = derive_time_fields(shanghai(2024, 5, 12, 9), tz);
        assert_eq!((sun.day_of_week, sun.weekday), (6, false));
    }

    #[test]
    fn local_zone_decides_bucket() {
        // 2024-05-06T23:30Z is 07:30 on the 7th in Shanghai.
        let t = 1_715_038_200;
        let utc: Tz = "UTC".parse().unwrap();
        let sh: Tz = DEFAULT_TIMEZONE.parse().unwrap();
        assert_eq!(derive_time_fields(t, utc).time_of_day, TimeOfDay::Evening);
        assert_eq!(derive_time_fields(t, sh).time_of_day, TimeOfDay::Morning);
    }

    #[test]
    fn timestamp_formats() {
        let sh: Tz = DEFAULT_TIMEZONE.parse().unwrap();
        assert_eq!(parse_timestamp("1715038200", sh).unwrap(), 1_715_038_200);
        assert_eq!(parse_timestamp("2024-05-06T23:30:00Z", sh).unwrap(), 1_715_038_200);
        assert_eq!(parse_timestamp("2024-05-07 07:30:00", sh).unwrap(), 1_715_038_200);
        assert!(parse_timestamp("yesterday", sh).is_err());
    }
}

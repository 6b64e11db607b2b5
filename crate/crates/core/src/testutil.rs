//! Record fixtures for unit tests.

use std::collections::BTreeSet;

use crate::dataset::{
    derive_time_fields, Activity, AppCategory, CodeTaxonomy, Dataset, EsmRecord, ForegroundCategory,
    ResponseBehavior, UserProfile,
};

pub fn record(user: &str, clicked_at: i64, attention: u8) -> EsmRecord {
    let tf = derive_time_fields(clicked_at, chrono_tz::Asia::Shanghai);
    EsmRecord {
        user_id: user.to_string(),
        round: 1,
        received_at: clicked_at - 30,
        clicked_at,
        response_time_s: 30,
        weekday: tf.weekday,
        day_of_week: tf.day_of_week,
        time_of_day: tf.time_of_day,
        activity: Activity::Sitting,
        accel: None,
        gyro: None,
        foreground_app: "WeChat".into(),
        foreground_category: ForegroundCategory::Communication,
        notif_app: "WeChat".into(),
        notif_category: AppCategory::Communication,
        response_behavior: ResponseBehavior::ClickToView,
        motivation_text: None,
        codes: BTreeSet::new(),
        attention,
    }
}

/// `attention_by_user[u]` lists the labels of user `U{u}` in time order.
pub fn dataset(attention_by_user: &[Vec<u8>]) -> Dataset {
    let mut records = Vec::new();
    let mut profiles = Vec::new();
    for (u, labels) in attention_by_user.iter().enumerate() {
        let id = format!("U{u:02}");
        profiles.push(UserProfile::placeholder(&id));
        for (i, &a) in labels.iter().enumerate() {
            records.push(record(&id, 1_714_971_600 + 600 * i as i64, a));
        }
    }
    Dataset::new(records, profiles, CodeTaxonomy::default()).unwrap()
}

//! Closed vocabularies used by the ESM records, each with a fixed token
//! spelling used in files and on the command line.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

macro_rules! token_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal { $($variant:ident => $token:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const TOKENS: &'static [&'static str] = &[$($token),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $token),+
                }
            }

            /// Position in `ALL`; the slot used by one-hot encodings.
            pub fn index(self) -> usize {
                self as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Error> {
                match s {
                    $($token => Ok($name::$variant),)+
                    _ => Err(Error::UnknownToken {
                        kind: $kind,
                        token: s.to_string(),
                        allowed: Self::TOKENS.to_vec(),
                    }),
                }
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

token_enum!(TimeOfDay, "time_of_day" {
    Morning => "morning",
    Afternoon => "afternoon",
    Evening => "evening",
    Night => "night",
});

token_enum!(Activity, "activity" {
    Sitting => "sitting",
    Lying => "lying",
    StandingStill => "standing_still",
    Walking => "walking",
    TakingElevator => "taking_elevator",
    CyclingDriving => "cycling_driving",
    TakingTransportation => "taking_transportation",
    UpDownStairs => "up_down_stairs",
    Running => "running",
});

token_enum!(
    /// App store style categories shared by foreground and notification apps.
    AppCategory, "app_category" {
    Communication => "communication",
    Social => "social",
    Entertainment => "entertainment",
    Utilities => "utilities",
    Shopping => "shopping",
    Lifestyle => "lifestyle",
    Music => "music",
    Education => "education",
    Productivity => "productivity",
    PhotoVideo => "photo_video",
    System => "system",
    HealthFitness => "health_fitness",
    Games => "games",
    Finance => "finance",
    News => "news",
    Books => "books",
    Navigation => "navigation",
    Travel => "travel",
    FoodDrink => "food_drink",
    Weather => "weather",
    Business => "business",
    Sports => "sports",
});

token_enum!(
    /// Foreground context: one of the app categories, or the launcher.
    ForegroundCategory, "foreground_category" {
    Communication => "communication",
    Social => "social",
    Entertainment => "entertainment",
    Utilities => "utilities",
    Shopping => "shopping",
    Lifestyle => "lifestyle",
    Music => "music",
    Education => "education",
    Productivity => "productivity",
    PhotoVideo => "photo_video",
    System => "system",
    HealthFitness => "health_fitness",
    Games => "games",
    Finance => "finance",
    News => "news",
    Books => "books",
    Navigation => "navigation",
    Travel => "travel",
    FoodDrink => "food_drink",
    Weather => "weather",
    Business => "business",
    Sports => "sports",
    HomeScreen => "home_screen",
});

impl From<AppCategory> for ForegroundCategory {
    fn from(c: AppCategory) -> Self {
        ForegroundCategory::ALL[c.index()]
    }
}

token_enum!(ResponseBehavior, "response_behavior" {
    ClickToView => "click_to_view",
    SwipeClear => "swipe_clear",
    SwipeCancelPopup => "swipe_cancel_popup",
    Ignore => "ignore",
    DidntNotice => "didnt_notice",
    AdjustSettings => "adjust_settings",
});

token_enum!(
    /// Response behaviors as a system can observe them: ignoring and not
    /// noticing are indistinguishable.
    CoarseBehavior, "coarse_behavior" {
    ClickToView => "click_to_view",
    SwipeClear => "swipe_clear",
    SwipeCancelPopup => "swipe_cancel_popup",
    NoResponse => "no_response",
    AdjustSettings => "adjust_settings",
});

token_enum!(Gender, "gender" {
    Male => "male",
    Female => "female",
});

token_enum!(Occupation, "occupation" {
    Studying => "studying",
    Working => "working",
});

impl ResponseBehavior {
    pub fn coarsen(self) -> CoarseBehavior {
        match self {
            ResponseBehavior::ClickToView => CoarseBehavior::ClickToView,
            ResponseBehavior::SwipeClear => CoarseBehavior::SwipeClear,
            ResponseBehavior::SwipeCancelPopup => CoarseBehavior::SwipeCancelPopup,
            ResponseBehavior::Ignore | ResponseBehavior::DidntNotice => CoarseBehavior::NoResponse,
            ResponseBehavior::AdjustSettings => CoarseBehavior::AdjustSettings,
        }
    }
}

/// Merges `ignore` and `didnt_notice` into `no_response`.
pub fn coarsen_behavior(b: ResponseBehavior) -> CoarseBehavior {
    b.coarsen()
}

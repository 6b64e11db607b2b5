//! Motivation-code hierarchy: category → factor → code.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Code {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub codes: Vec<Code>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: String,
    pub label: String,
    pub factors: Vec<Factor>,
}

/// On-disk shape of a taxonomy file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TaxonomyFile {
    categories: Vec<Category>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeTaxonomy {
    categories: Vec<Category>,
    /// code id → (category index, factor index in flattened factor order)
    code_parent: BTreeMap<String, (usize, usize)>,
    factor_ids: Vec<String>,
    factor_category: Vec<usize>,
}

impl CodeTaxonomy {
    pub fn new(categories: Vec<Category>) -> Result<Self> {
        let mut code_parent = BTreeMap::new();
        let mut factor_ids = Vec::new();
        let mut factor_category = Vec::new();
        let mut seen_ids = BTreeSet::new();
        for (ci, cat) in categories.iter().enumerate() {
            if !seen_ids.insert(cat.id.clone()) {
                return Err(Error::Schema(format!("taxonomy: duplicate id `{}`", cat.id)));
            }
            for factor in &cat.factors {
                if !seen_ids.insert(factor.id.clone()) {
                    return Err(Error::Schema(format!("taxonomy: duplicate id `{}`", factor.id)));
                }
                let fi = factor_ids.len();
                factor_ids.push(factor.id.clone());
                factor_category.push(ci);
                for code in &factor.codes {
                    if !seen_ids.insert(code.id.clone()) {
                        return Err(Error::Schema(format!("taxonomy: duplicate id `{}`", code.id)));
                    }
                    code_parent.insert(code.id.clone(), (ci, fi));
                }
            }
        }
        Ok(Self {
            categories,
            code_parent,
            factor_ids,
            factor_category,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TaxonomyFile = serde_json::from_str(text)?;
        Self::new(file.categories)
    }

    pub fn to_json(&self) -> String {
        let file = TaxonomyFile {
            categories: self.categories.clone(),
        };
        serde_json::to_string_pretty(&file).expect("taxonomy serializes")
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn n_factors(&self) -> usize {
        self.factor_ids.len()
    }

    pub fn n_codes(&self) -> usize {
        self.code_parent.len()
    }

    pub fn factor_ids(&self) -> &[String] {
        &self.factor_ids
    }

    pub fn contains_code(&self, code: &str) -> bool {
        self.code_parent.contains_key(code)
    }

    /// Flattened factor index of a code's parent.
    pub fn factor_of(&self, code: &str) -> Option<usize> {
        self.code_parent.get(code).map(|&(_, f)| f)
    }

    pub fn category_of(&self, code: &str) -> Option<&Category> {
        self.code_parent.get(code).map(|&(c, _)| &self.categories[c])
    }

    pub fn factor_category(&self, factor: usize) -> &Category {
        &self.categories[self.factor_category[factor]]
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.code_parent.keys().map(String::as_str)
    }

    pub fn codes_in_category(&self, category_id: &str) -> Vec<&str> {
        self.categories
            .iter()
            .filter(|c| c.id == category_id)
            .flat_map(|c| c.factors.iter())
            .flat_map(|f| f.codes.iter().map(|c| c.id.as_str()))
            .collect()
    }
}

fn code(id: &str, label: &str) -> Code {
    Code {
        id: id.to_string(),
        label: label.to_string(),
    }
}

fn factor(id: &str, label: &str, codes: Vec<Code>) -> Factor {
    Factor {
        id: id.to_string(),
        label: label.to_string(),
        codes,
    }
}

pub const NOTIFICATION_CONTENT: &str = "notification_content";

impl Default for CodeTaxonomy {
    /// The shipped framework: 4 categories, 16 factors, 46 codes.
    fn default() -> Self {
        let categories = vec![
            Category {
                id: NOTIFICATION_CONTENT.into(),
                label: "Notification content".into(),
                factors: vec![
                    factor(
                        "not_important",
                        "Not important/not interested",
                        vec![
                            code("direct_expression_negative", "Direct expression"),
                            code("irrelevant_to_me", "Irrelevant to me"),
                            code("ads_marketing", "Ads/marketing"),
                        ],
                    ),
                    factor(
                        "important",
                        "Important/interested",
                        vec![
                            code("direct_expression_positive", "Direct expression"),
                            code("needs_reply", "Needs reply"),
                            code("people_mentioned", "People mentioned"),
                            code("relevant_to_me", "Relevant to me"),
                        ],
                    ),
                    factor(
                        "requires_action",
                        "Requires action",
                        vec![
                            code("answer_call", "Answer a call"),
                            code("dismiss_alarm", "Dismiss alarm"),
                            code("check_verification_code", "Check verification code"),
                        ],
                    ),
                    factor("check_elsewhere", "Check elsewhere/known content", vec![]),
                ],
            },
            Category {
                id: "behavioral_patterns".into(),
                label: "Behavioral patterns".into(),
                factors: vec![
                    factor(
                        "entertainment",
                        "Entertainment",
                        vec![
                            code("watching_media", "Watching media"),
                            code("leisure_phone_use", "Leisure phone use"),
                            code("browsing_apps", "Browsing apps"),
                            code("playing_games", "Playing games"),
                        ],
                    ),
                    factor(
                        "daily_life",
                        "Daily life",
                        vec![
                            code("eating", "Eating"),
                            code("driving_cycling", "Driving/cycling"),
                            code("on_the_way", "On the way to somewhere"),
                            code("walking", "Walking"),
                            code("washing_up", "Washing up"),
                            code("viewing_something", "Viewing something"),
                            code("shopping", "Shopping"),
                            code("exercising", "Exercising"),
                            code("waiting", "Waiting"),
                        ],
                    ),
                    factor(
                        "cognitive_engagement",
                        "Cognitive engagement",
                        vec![
                            code("working", "Working"),
                            code("reading", "Reading"),
                            code("doing_experiment", "Doing experiment"),
                            code("in_meeting", "In a meeting"),
                            code("in_class", "In class"),
                            code("coding", "Coding"),
                            code("studying", "Studying"),
                            code("reviewing", "Reviewing"),
                            code("writing", "Writing"),
                        ],
                    ),
                    factor(
                        "task_switching",
                        "Task-switching state",
                        vec![
                            code("just_done_something", "Just done something"),
                            code("about_to_do_something", "Just about to do something"),
                        ],
                    ),
                    factor(
                        "socializing",
                        "Socializing",
                        vec![
                            code("on_a_call", "On a call"),
                            code("replying_to_messages", "Replying to messages"),
                            code("chatting", "Chatting"),
                        ],
                    ),
                    factor(
                        "sleep_rest",
                        "Sleep or rest",
                        vec![code("sleeping", "Sleeping"), code("resting", "Resting")],
                    ),
                ],
            },
            Category {
                id: "individual_state".into(),
                label: "Individual state".into(),
                factors: vec![
                    factor(
                        "level_of_busyness",
                        "Level of busyness",
                        vec![code("busy", "Busy"), code("free", "Free")],
                    ),
                    factor(
                        "mental_emotional",
                        "Mental/emotional",
                        vec![
                            code("mental_state", "Mental state"),
                            code("emotional_state", "Emotional state"),
                        ],
                    ),
                ],
            },
            Category {
                id: "personal_others".into(),
                label: "Personal-others".into(),
                factors: vec![
                    factor("personal_negligence", "Personal negligence", vec![]),
                    factor("personal_habits", "Personal habits", vec![]),
                    factor("personal_feelings", "Personal feelings", vec![]),
                    factor(
                        "timing_and_load",
                        "Timing and notification load",
                        vec![
                            code("right_timing", "Right timing"),
                            code("poor_timing", "Poor timing"),
                            code("notification_overload", "Notification overload"),
                        ],
                    ),
                ],
            },
        ];
        Self::new(categories).expect("default taxonomy is well formed")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_counts() {
        let t = CodeTaxonomy::default();
        assert_eq!(t.n_categories(), 4);
        assert_eq!(t.n_factors(), 16);
        assert_eq!(t.n_codes(), 46);
    }

    #[test]
    fn every_code_has_one_factor_parent() {
        let t = CodeTaxonomy::default();
        for c in t.codes() {
            let f = t.factor_of(c).unwrap();
            let owners = t
                .categories()
                .iter()
                .flat_map(|cat| cat.factors.iter())
                .filter(|fac| fac.codes.iter().any(|x| x.id == c))
                .count();
            assert_eq!(owners, 1, "{c}");
            assert!(f < t.n_factors());
        }
        assert_eq!(t.factor_ids()[t.factor_of("busy").unwrap()], "level_of_busyness");
        assert_eq!(t.category_of("needs_reply").unwrap().id, NOTIFICATION_CONTENT);
    }

    #[test]
    fn json_round_trip() {
        let t = CodeTaxonomy::default();
        let back = CodeTaxonomy::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let cat = Category {
            id: "c".into(),
            label: "C".into(),
            factors: vec![factor("f", "F", vec![code("x", "X"), code("x", "X again")])],
        };
        assert!(CodeTaxonomy::new(vec![cat]).is_err());
    }
}

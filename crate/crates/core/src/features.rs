//! Record encoding and attention labelling.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    Activity, AppCategory, CoarseBehavior, CodeTaxonomy, Dataset, EsmRecord, ForegroundCategory,
    ResponseBehavior, TimeOfDay,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeName {
    #[serde(rename = "CONTEXT_ONLY")]
    ContextOnly,
    #[serde(rename = "DISTRACTION_ONLY")]
    DistractionOnly,
    #[serde(rename = "FULL")]
    Full,
    #[serde(rename = "FULL_FINE_RESPONSE")]
    FullFineResponse,
    #[serde(rename = "FULL_WITH_FACTORS")]
    FullWithFactors,
}

impl SchemeName {
    pub const ALL: [SchemeName; 5] = [
        SchemeName::ContextOnly,
        SchemeName::DistractionOnly,
        SchemeName::Full,
        SchemeName::FullFineResponse,
        SchemeName::FullWithFactors,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeName::ContextOnly => "CONTEXT_ONLY",
            SchemeName::DistractionOnly => "DISTRACTION_ONLY",
            SchemeName::Full => "FULL",
            SchemeName::FullFineResponse => "FULL_FINE_RESPONSE",
            SchemeName::FullWithFactors => "FULL_WITH_FACTORS",
        }
    }

    fn blocks(self) -> Vec<FeatureBlock> {
        use FeatureBlock::*;
        let context = [TimeOfDay, Weekday, DayOfWeek, Activity, ForegroundCategory, SensorMagnitudes];
        let distraction = [NotifCategory, CoarseBehavior, ResponseTime];
        match self {
            SchemeName::ContextOnly => context.to_vec(),
            SchemeName::DistractionOnly => distraction.to_vec(),
            SchemeName::Full => context.iter().chain(&distraction).copied().collect(),
            SchemeName::FullFineResponse => context
                .iter()
                .chain(&[NotifCategory, FineBehavior, ResponseTime])
                .copied()
                .collect(),
            SchemeName::FullWithFactors => context
                .iter()
                .chain(&distraction)
                .chain(&[Factors])
                .copied()
                .collect(),
        }
    }
}

impl fmt::Display for SchemeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::UnknownToken {
                kind: "scheme",
                token: s.to_string(),
                allowed: Self::ALL.iter().map(|n| n.as_str()).collect(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureBlock {
    TimeOfDay,
    Weekday,
    DayOfWeek,
    Activity,
    ForegroundCategory,
    SensorMagnitudes,
    NotifCategory,
    CoarseBehavior,
    FineBehavior,
    ResponseTime,
    Factors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    OneHot,
    MultiHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    pub block: FeatureBlock,
    pub kind: FeatureKind,
    pub cardinality: usize,
    /// Column names, one per slot.
    pub slots: Vec<String>,
}

fn tokens(prefix: &str, toks: &[&str]) -> Vec<String> {
    toks.iter().map(|t| format!("{prefix}={t}")).collect()
}

fn descriptor(block: FeatureBlock, taxonomy: &CodeTaxonomy) -> FeatureDescriptor {
    use FeatureKind::*;
    let (name, kind, slots) = match block {
        FeatureBlock::TimeOfDay => ("time_of_day", OneHot, tokens("time_of_day", TimeOfDay::TOKENS)),
        FeatureBlock::Weekday => ("weekday", Numeric, vec!["weekday".to_string()]),
        FeatureBlock::DayOfWeek => (
            "day_of_week",
            OneHot,
            (0..7).map(|d| format!("day_of_week={d}")).collect(),
        ),
        FeatureBlock::Activity => ("activity", OneHot, tokens("activity", Activity::TOKENS)),
        FeatureBlock::ForegroundCategory => (
            "foreground_category",
            OneHot,
            tokens("foreground_category", ForegroundCategory::TOKENS),
        ),
        FeatureBlock::SensorMagnitudes => (
            "sensor_magnitudes",
            Numeric,
            vec!["accel_magnitude".to_string(), "gyro_magnitude".to_string()],
        ),
        FeatureBlock::NotifCategory => (
            "notif_category",
            OneHot,
            tokens("notif_category", AppCategory::TOKENS),
        ),
        FeatureBlock::CoarseBehavior => (
            "response_behavior",
            OneHot,
            tokens("response_behavior", CoarseBehavior::TOKENS),
        ),
        FeatureBlock::FineBehavior => (
            "response_behavior_fine",
            OneHot,
            tokens("response_behavior", ResponseBehavior::TOKENS),
        ),
        FeatureBlock::ResponseTime => ("response_time", Numeric, vec!["log1p_response_time_s".to_string()]),
        FeatureBlock::Factors => (
            "motivation_factors",
            MultiHot,
            taxonomy.factor_ids().iter().map(|f| format!("factor={f}")).collect(),
        ),
    };
    FeatureDescriptor {
        name: name.to_string(),
        block,
        kind,
        cardinality: slots.len(),
        slots,
    }
}

fn magnitude(v: &Option<[f64; 3]>) -> f64 {
    v.map_or(0.0, |a| (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt())
}

fn one_hot(out: &mut Vec<f64>, n: usize, hot: usize) {
    let start = out.len();
    out.resize(start + n, 0.0);
    out[start + hot] = 1.0;
}

/// A scheme bound to a taxonomy, optionally with blocks removed for
/// ablations.
#[derive(Debug, Clone)]
pub struct Encoder {
    scheme: SchemeName,
    taxonomy: CodeTaxonomy,
    descriptors: Vec<FeatureDescriptor>,
    dropped: BTreeSet<FeatureBlock>,
}

impl Encoder {
    pub fn new(scheme: SchemeName, taxonomy: &CodeTaxonomy) -> Self {
        let descriptors = scheme.blocks().into_iter().map(|b| descriptor(b, taxonomy)).collect();
        Self {
            scheme,
            taxonomy: taxonomy.clone(),
            descriptors,
            dropped: BTreeSet::new(),
        }
    }

    /// Removes a block from the encoding (e.g. the response-time or sensor
    /// columns).
    pub fn without(mut self, block: FeatureBlock) -> Self {
        self.descriptors.retain(|d| d.block != block);
        self.dropped.insert(block);
        self
    }

    pub fn scheme(&self) -> SchemeName {
        self.scheme
    }

    pub fn descriptors(&self) -> &[FeatureDescriptor] {
        &self.descriptors
    }

    pub fn dim(&self) -> usize {
        self.descriptors.iter().map(|d| d.cardinality).sum()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.descriptors.iter().flat_map(|d| d.slots.iter().cloned()).collect()
    }

    pub fn encode(&self, r: &EsmRecord) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dim());
        for d in &self.descriptors {
            match d.block {
                FeatureBlock::TimeOfDay => one_hot(&mut out, d.cardinality, r.time_of_day.index()),
                FeatureBlock::Weekday => out.push(if r.weekday { 1.0 } else { 0.0 }),
                FeatureBlock::DayOfWeek => {
                    if r.day_of_week > 6 {
                        return Err(Error::InvalidInput(format!("day_of_week {}", r.day_of_week)));
                    }
                    one_hot(&mut out, d.cardinality, r.day_of_week as usize)
                }
                FeatureBlock::Activity => one_hot(&mut out, d.cardinality, r.activity.index()),
                FeatureBlock::ForegroundCategory => {
                    one_hot(&mut out, d.cardinality, r.foreground_category.index())
                }
                FeatureBlock::SensorMagnitudes => {
                    out.push(magnitude(&r.accel));
                    out.push(magnitude(&r.gyro));
                }
                FeatureBlock::NotifCategory => one_hot(&mut out, d.cardinality, r.notif_category.index()),
                FeatureBlock::CoarseBehavior => {
                    one_hot(&mut out, d.cardinality, r.response_behavior.coarsen().index())
                }
                FeatureBlock::FineBehavior => one_hot(&mut out, d.cardinality, r.response_behavior.index()),
                FeatureBlock::ResponseTime => out.push((r.response_time_s as f64).ln_1p()),
                FeatureBlock::Factors => {
                    let start = out.len();
                    out.resize(start + d.cardinality, 0.0);
                    for code in &r.codes {
                        let f = self.taxonomy.factor_of(code).ok_or_else(|| Error::UnknownToken {
                            kind: "code",
                            token: code.clone(),
                            allowed: Vec::new(),
                        })?;
                        out[start + f] = 1.0;
                    }
                }
            }
        }
        debug_assert_eq!(out.len(), self.dim());
        Ok(out)
    }
}

/// Encodes one record under a named scheme with the default taxonomy.
pub fn encode_record(r: &EsmRecord, scheme: SchemeName) -> Result<Vec<f64>> {
    Encoder::new(scheme, &CodeTaxonomy::default()).encode(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Labeler {
    #[serde(rename = "ATTENTRACK_I")]
    AttenTrackI,
    #[serde(rename = "ATTENTRACK_II")]
    AttenTrackII,
    #[serde(rename = "ATTENTRACK_III")]
    AttenTrackIII,
}

impl Labeler {
    pub const ALL: [Labeler; 3] = [Labeler::AttenTrackI, Labeler::AttenTrackII, Labeler::AttenTrackIII];

    pub fn as_str(self) -> &'static str {
        match self {
            Labeler::AttenTrackI => "ATTENTRACK_I",
            Labeler::AttenTrackII => "ATTENTRACK_II",
            Labeler::AttenTrackIII => "ATTENTRACK_III",
        }
    }

    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            Labeler::AttenTrackI => &["less_focused", "more_focused"],
            Labeler::AttenTrackII => &["completely_unfocused", "somewhat_focused"],
            Labeler::AttenTrackIII => &["low", "medium", "high"],
        }
    }

    pub fn n_classes(self) -> usize {
        self.class_names().len()
    }

    pub fn label(self, attention: u8) -> Result<usize> {
        if !(1..=5).contains(&attention) {
            return Err(Error::InvalidInput(format!("attention {attention} is outside 1..=5")));
        }
        Ok(match self {
            Labeler::AttenTrackI => usize::from(attention >= 3),
            Labeler::AttenTrackII => usize::from(attention > 1),
            Labeler::AttenTrackIII => match attention {
                1 => 0,
                2 | 3 => 1,
                _ => 2,
            },
        })
    }
}

impl fmt::Display for Labeler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Labeler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::UnknownToken {
                kind: "labeler",
                token: s.to_string(),
                allowed: Self::ALL.iter().map(|l| l.as_str()).collect(),
            })
    }
}

pub fn label(attention: u8, labeler: Labeler) -> Result<usize> {
    labeler.label(attention)
}

#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub rows: Matrix,
    pub labels: Vec<usize>,
    pub user_ids: Vec<String>,
    pub clicked_at: Vec<i64>,
    pub scheme: SchemeName,
    pub labeler: Labeler,
    pub feature_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn build_matrix(d: &Dataset, scheme: SchemeName, labeler: Labeler) -> Result<FeatureMatrix> {
    build_matrix_with(d, &Encoder::new(scheme, d.taxonomy()), labeler)
}

pub fn build_matrix_with(d: &Dataset, encoder: &Encoder, labeler: Labeler) -> Result<FeatureMatrix> {
    if d.is_empty() {
        return Err(Error::InvalidInput("cannot build a feature matrix from an empty dataset".into()));
    }
    let dim = encoder.dim();
    let mut data = Vec::with_capacity(d.len() * dim);
    let mut labels = Vec::with_capacity(d.len());
    for r in d.records() {
        data.extend(encoder.encode(r)?);
        labels.push(labeler.label(r.attention)?);
    }
    Ok(FeatureMatrix {
        rows: Matrix::new(d.len(), dim, data)?,
        labels,
        user_ids: d.records().iter().map(|r| r.user_id.clone()).collect(),
        clicked_at: d.records().iter().map(|r| r.clicked_at).collect(),
        scheme: encoder.scheme(),
        labeler,
        feature_names: encoder.feature_names(),
    })
}

//! CSV and Markdown renderings of evaluation reports.

use std::fmt::Write as _;

use super::metrics::MetricSet;
use super::protocols::{AblationReport, Comparison, IncrementalReport, LouoReport};
use super::{MeanSd, Summary};
use crate::error::Result;

const METRIC_COLUMNS: [&str; 11] = [
    "accuracy",
    "precision_pos",
    "recall_pos",
    "f1_pos",
    "precision_macro",
    "recall_macro",
    "f1_macro",
    "precision_weighted",
    "recall_weighted",
    "f1_weighted",
    "auc",
];

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn metric_cells(m: &MetricSet) -> Vec<String> {
    let pos = m.positive;
    vec![
        num(m.accuracy),
        opt(pos.map(|p| p.precision)),
        opt(pos.map(|p| p.recall)),
        opt(pos.map(|p| p.f1)),
        num(m.macro_avg.precision),
        num(m.macro_avg.recall),
        num(m.macro_avg.f1),
        num(m.weighted.precision),
        num(m.weighted.recall),
        num(m.weighted.f1),
        opt(m.auc),
    ]
}

fn prefixed(prefix: &str) -> impl Iterator<Item = String> + '_ {
    METRIC_COLUMNS.iter().map(move |c| format!("{prefix}{c}"))
}

fn to_csv(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::error::Error::io("<memory>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// One row per held-out user, with the random baseline alongside.
pub fn louo_csv(r: &LouoReport) -> Result<String> {
    let header = ["user", "n_train", "n_test"]
        .iter()
        .map(|s| s.to_string())
        .chain(prefixed(""))
        .chain(prefixed("baseline_"))
        .collect();
    let rows = r
        .folds
        .iter()
        .map(|f| {
            let mut row = vec![f.user.clone(), f.n_train.to_string(), f.n_test.to_string()];
            row.extend(metric_cells(&f.metrics));
            row.extend(metric_cells(&f.baseline));
            row
        })
        .collect();
    to_csv(header, rows)
}

pub fn comparison_csv(c: &Comparison) -> Result<String> {
    let pa = format!("{}_", c.label_a);
    let pb = format!("{}_", c.label_b);
    let header = [
        "user".to_string(),
        format!("n_train_{}", c.label_a),
        format!("n_train_{}", c.label_b),
        "n_test".to_string(),
    ]
    .into_iter()
    .chain(prefixed(&pa))
    .chain(prefixed(&pb))
    .collect();
    let rows = c
        .folds
        .iter()
        .map(|f| {
            let mut row = vec![f.user.clone(), f.n_train_a.to_string(), f.n_train_b.to_string(), f.n_test.to_string()];
            row.extend(metric_cells(&f.a));
            row.extend(metric_cells(&f.b));
            row
        })
        .collect();
    to_csv(header, rows)
}

pub fn incremental_csv(r: &IncrementalReport) -> Result<String> {
    let header = ["user", "fraction", "n_personal", "n_test"]
        .iter()
        .map(|s| s.to_string())
        .chain(prefixed(""))
        .collect();
    let rows = r
        .points
        .iter()
        .map(|p| {
            let mut row = vec![p.user.clone(), num(p.fraction), p.n_personal.to_string(), p.n_test.to_string()];
            row.extend(metric_cells(&p.metrics));
            row
        })
        .collect();
    to_csv(header, rows)
}

/// One row per scheme: fold count and mean/SD of the headline metrics.
pub fn ablation_csv(a: &AblationReport) -> Result<String> {
    let header = [
        "scheme",
        "n_folds",
        "accuracy_mean",
        "accuracy_sd",
        "f1_macro_mean",
        "f1_macro_sd",
        "auc_mean",
        "auc_sd",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows = a
        .entries
        .iter()
        .map(|r| {
            let s = &r.summary;
            vec![
                r.scheme.to_string(),
                s.n_folds.to_string(),
                num(s.accuracy.mean),
                num(s.accuracy.sd),
                num(s.macro_avg.f1.mean),
                num(s.macro_avg.f1.sd),
                opt(s.auc.map(|m| m.mean)),
                opt(s.auc.map(|m| m.sd)),
            ]
        })
        .collect();
    to_csv(header, rows)
}

/// `62.45% ± 0.11`: the mean as a percentage, the SD as a fraction.
fn pm(v: Option<MeanSd>) -> String {
    match v {
        Some(m) => format!("{:.2}% ± {:.2}", 100.0 * m.mean, m.sd),
        None => "n/a".to_string(),
    }
}

fn summary_rows(out: &mut String, name: &str, s: &Summary) {
    let mut conventions = Vec::new();
    if let Some(p) = &s.positive {
        conventions.push(("positive", p));
    }
    conventions.push(("macro", &s.macro_avg));
    conventions.push(("weighted", &s.weighted));
    for (conv, p) in conventions {
        let _ = writeln!(
            out,
            "| {name} | {conv} | {} | {} | {} | {} | {} |",
            pm(Some(s.accuracy)),
            pm(Some(p.precision)),
            pm(Some(p.recall)),
            pm(Some(p.f1)),
            pm(s.auc)
        );
    }
}

const TABLE_HEAD: &str = "| Model | Averaging | Acc. ± SD | Prec. ± SD | Rec. ± SD | F1 ± SD | AUC ± SD |\n|---|---|---|---|---|---|---|\n";

pub fn louo_markdown(r: &LouoReport) -> String {
    let mut out = format!(
        "# Leave-one-user-out\n\nModel {}, scheme {}, labeler {}, seed {}, {} users.\nHeadline convention: macro. SD is the population SD across users, as a fraction.\n\n",
        r.model,
        r.scheme,
        r.labeler,
        r.seed,
        r.folds.len()
    );
    out.push_str(TABLE_HEAD);
    summary_rows(&mut out, &r.model, &r.summary);
    summary_rows(&mut out, "Baseline", &r.baseline);
    out
}

fn delta_line(out: &mut String, name: &str, v: Option<MeanSd>) {
    let _ = match v {
        Some(m) => writeln!(out, "| {name} | {:+.6} | {:.6} | {} |", m.mean, m.sd, m.n),
        None => writeln!(out, "| {name} | n/a | n/a | 0 |"),
    };
}

pub fn comparison_markdown(title: &str, c: &Comparison) -> String {
    let mut out = format!(
        "# {title}\n\nModel {}, scheme {}, labeler {}, seed {}, {} users evaluated, {} skipped.\n\n",
        c.model,
        c.scheme,
        c.labeler,
        c.seed,
        c.folds.len(),
        c.skipped.len()
    );
    out.push_str(TABLE_HEAD);
    for (label, s) in [(&c.label_a, &c.summary_a), (&c.label_b, &c.summary_b)] {
        if let Some(s) = s {
            summary_rows(&mut out, label, s);
        }
    }
    let _ = writeln!(
        out,
        "\nPaired differences ({} minus {}):\n\n| Metric | Mean | SD | Users |\n|---|---|---|---|",
        c.label_a, c.label_b
    );
    delta_line(&mut out, "accuracy", c.delta_accuracy);
    delta_line(&mut out, "macro F1", c.delta_macro_f1);
    delta_line(&mut out, "AUC", c.delta_auc);
    if !c.skipped.is_empty() {
        out.push_str("\nSkipped users:\n\n");
        for s in &c.skipped {
            let _ = writeln!(out, "- {}: {}", s.user, s.reason);
        }
    }
    out
}

pub fn incremental_markdown(r: &IncrementalReport) -> String {
    let mut out = format!(
        "# Incremental personal data\n\nModel {}, scheme {}, labeler {}, seed {}.\n\n| Fraction of personal pool | Mean AUC ± SD | Users |\n|---|---|---|\n",
        r.model, r.scheme, r.labeler, r.seed
    );
    for (f, m) in &r.curve {
        let _ = writeln!(out, "| {f:.3} | {} | {} |", pm(*m), m.map_or(0, |m| m.n));
    }
    if !r.skipped.is_empty() {
        out.push_str("\nSkipped users:\n\n");
        for s in &r.skipped {
            let _ = writeln!(out, "- {}: {}", s.user, s.reason);
        }
    }
    out
}

pub fn ablation_markdown(a: &AblationReport) -> String {
    let mut out = String::from("# Feature ablation\n\n| Scheme | Acc. ± SD | Macro F1 ± SD | AUC ± SD |\n|---|---|---|---|\n");
    for r in &a.entries {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            r.scheme,
            pm(Some(r.summary.accuracy)),
            pm(Some(r.summary.macro_avg.f1)),
            pm(r.summary.auc)
        );
    }
    out
}

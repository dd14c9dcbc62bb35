//! Metrics over prediction sets, critical-set rules and calibration cost.
//!
//! Undefined quantities (a class absent from the test data, a rule that
//! fires nowhere) are `None` and serialize as `null`; they are never folded
//! into a 0.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::conformal::{nonconformity_scores, LabelSet};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::inducer::assign_class;
use crate::label::Label;
use crate::ruleset::{rule_stats, Ruleset};
use crate::scoring::Scorer;

/// Error and size rates of a batch of prediction sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    pub n: usize,
    pub avg_err: f64,
    pub avg_err0: Option<f64>,
    pub avg_err1: Option<f64>,
    pub avg_empty: f64,
    pub avg_single: f64,
    pub avg_double: f64,
    /// Rate of the singleton `{0}` (or `{-1}`).
    pub avg_single0: f64,
    /// Rate of the singleton `{+1}`.
    pub avg_single1: f64,
}

pub fn evaluate_sets(sets: &[LabelSet], truths: &[Label]) -> Result<SetMetrics> {
    if sets.len() != truths.len() {
        return Err(Error::invalid(format!(
            "{} prediction sets for {} labels",
            sets.len(),
            truths.len()
        )));
    }
    if sets.is_empty() {
        return Err(Error::invalid("no prediction sets to evaluate"));
    }
    let mut errors = [0usize; 2];
    let mut class_n = [0usize; 2];
    let mut sizes = [0usize; 3];
    let mut singles = [0usize; 2];
    for (set, &truth) in sets.iter().zip(truths) {
        class_n[truth.index()] += 1;
        if !set.contains(truth) {
            errors[truth.index()] += 1;
        }
        sizes[set.len()] += 1;
        if set.len() == 1 {
            let only = set.labels().next().expect("singleton has a label");
            singles[only.index()] += 1;
        }
    }
    let n = sets.len() as f64;
    let conditional = |c: usize| (class_n[c] > 0).then(|| errors[c] as f64 / class_n[c] as f64);
    Ok(SetMetrics {
        n: sets.len(),
        avg_err: (errors[0] + errors[1]) as f64 / n,
        avg_err0: conditional(0),
        avg_err1: conditional(1),
        avg_empty: sizes[0] as f64 / n,
        avg_single: sizes[1] as f64 / n,
        avg_double: sizes[2] as f64 / n,
        avg_single0: singles[0] as f64 / n,
        avg_single1: singles[1] as f64 / n,
    })
}

/// Detection quality of the critical class, `+1` against ground truth `1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcsMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub tpr: Option<f64>,
    pub ppv: Option<f64>,
    pub f1: Option<f64>,
}

impl CcsMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let rate = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let tpr = rate(tp, tp + fn_);
        let ppv = rate(tp, tp + fp);
        let f1 = match (tpr, ppv) {
            (Some(r), Some(p)) if r + p > 0.0 => Some(2.0 * r * p / (r + p)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        Self {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            tpr,
            ppv,
            f1,
        }
    }
}

/// Scores the `+1` predictions of a retrained ruleset on data carrying the
/// original labels. Points predicted `-1` are never scored against class 0.
pub fn evaluate_ccs_rules(retrained: &Ruleset, test: &Dataset) -> Result<CcsMetrics> {
    let degenerate = retrained.degenerate_classes();
    if !degenerate.is_empty() {
        return Err(Error::invalid(format!(
            "retrained ruleset has no usable rules for {degenerate:?}"
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (point, truth) in test.iter() {
        let predicted = assign_class(retrained, point)?.label;
        match (predicted, truth) {
            (Label::Positive, Label::Positive) => tp += 1,
            (Label::Positive, Label::Negative) => fp += 1,
            (Label::Negative, Label::Positive) => fn_ += 1,
            (Label::Negative, Label::Negative) => {}
        }
    }
    Ok(CcsMetrics::from_counts(tp, fp, fn_))
}

/// Precision of "any positive rule fires" as a detector of class `1`.
pub fn positive_rule_precision(ruleset: &Ruleset, data: &Dataset) -> Result<Option<f64>> {
    let (mut tp, mut fp) = (0usize, 0usize);
    for (point, truth) in data.iter() {
        let fires = ruleset
            .satisfied_by(point)?
            .iter()
            .any(|&k| ruleset.rules()[k].label == Label::Positive);
        if fires {
            match truth {
                Label::Positive => tp += 1,
                Label::Negative => fp += 1,
            }
        }
    }
    Ok((tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTiming {
    pub seconds: f64,
    pub measured: bool,
    pub repeats: usize,
}

impl CalibrationTiming {
    pub const UNMEASURED: Self = Self {
        seconds: 0.0,
        measured: false,
        repeats: 0,
    };
}

/// Wall-clock time to score the calibration split, median of `repeats`
/// single-threaded runs. `repeats == 0` or an empty split is not measured.
pub fn time_calibration(
    scorer: &Scorer,
    calibration: &Dataset,
    repeats: usize,
) -> Result<CalibrationTiming> {
    if repeats == 0 || calibration.is_empty() {
        return Ok(CalibrationTiming::UNMEASURED);
    }
    let mut runs = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let scores = nonconformity_scores(scorer, calibration)?;
        std::hint::black_box(scores);
        runs.push(start.elapsed().as_secs_f64());
    }
    runs.sort_by(f64::total_cmp);
    Ok(CalibrationTiming {
        seconds: runs[runs.len() / 2],
        measured: true,
        repeats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleReport {
    pub id: String,
    pub label: i8,
    pub covering: f64,
    pub error: f64,
    pub precision: Option<f64>,
}

/// Covering, error and precision of every rule, measured on `data`.
pub fn rule_reports(ruleset: &Ruleset, data: &Dataset) -> Result<Vec<RuleReport>> {
    ruleset
        .rules()
        .iter()
        .map(|rule| {
            let stats = rule_stats(rule, data)?;
            Ok(RuleReport {
                id: rule.id.clone(),
                label: ruleset.label_space().encode(rule.label),
                covering: stats.covering,
                error: stats.error,
                precision: stats.precision(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub epsilon: f64,
    pub sets: SetMetrics,
    pub calibration_timing: CalibrationTiming,
}

/// One row per ε, plus the critical-set block when a retrained ruleset was
/// evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<EvaluationReport>,
    pub ccs: Option<CcsReport>,
    pub per_rule: Vec<RuleReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcsReport {
    pub epsilon: f64,
    pub metrics: CcsMetrics,
    pub original_positive_precision: Option<f64>,
    pub retrained_positive_precision: Option<f64>,
    pub per_rule: Vec<RuleReport>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Aligned plain-text tables.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let header = [
            "eps",
            "avgErr",
            "avgErr0",
            "avgErr1",
            "avgEmpty",
            "avgSingle",
            "avgDouble",
        ];
        let mut line = |cells: &[String]| {
            let row: Vec<String> = cells.iter().map(|c| format!("{c:>10}")).collect();
            let _ = writeln!(out, "{}", row.join(" ").trim_end());
        };
        line(&header.map(String::from));
        for row in &self.rows {
            let m = &row.sets;
            line(&[
                fmt(Some(row.epsilon)),
                fmt(Some(m.avg_err)),
                fmt(m.avg_err0),
                fmt(m.avg_err1),
                fmt(Some(m.avg_empty)),
                fmt(Some(m.avg_single)),
                fmt(Some(m.avg_double)),
            ]);
        }
        if self.rows.iter().any(|r| r.calibration_timing.measured) {
            out.push('\n');
            for row in &self.rows {
                let _ = writeln!(
                    out,
                    "calibration time at eps {}: {:.6} s",
                    fmt(Some(row.epsilon)),
                    row.calibration_timing.seconds
                );
            }
        }
        out.push('\n');
        rule_table(&mut out, "rules", &self.per_rule);
        if let Some(ccs) = &self.ccs {
            out.push('\n');
            let m = &ccs.metrics;
            let _ = writeln!(out, "critical set at eps {}", fmt(Some(ccs.epsilon)));
            let _ = writeln!(out, "{:>10} {:>10} {:>10}", "TPR", "PPV", "F1");
            let _ = writeln!(
                out,
                "{:>10} {:>10} {:>10}",
                fmt(m.tpr),
                fmt(m.ppv),
                fmt(m.f1)
            );
            let _ = writeln!(
                out,
                "+1 precision: original {}, retrained {}",
                fmt(ccs.original_positive_precision),
                fmt(ccs.retrained_positive_precision)
            );
            out.push('\n');
            rule_table(&mut out, "retrained rules", &ccs.per_rule);
        }
        out
    }
}

fn rule_table(out: &mut String, title: &str, rules: &[RuleReport]) {
    let _ = writeln!(out, "{title}");
    let _ = writeln!(
        out,
        "{:>8} {:>6} {:>10} {:>10} {:>10}",
        "id", "label", "covering", "error", "precision"
    );
    for r in rules {
        let _ = writeln!(
            out,
            "{:>8} {:>6} {:>10} {:>10} {:>10}",
            r.id,
            r.label,
            fmt(Some(r.covering)),
            fmt(Some(r.error)),
            fmt(r.precision)
        );
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "undef".to_owned(), |x| format!("{x:.4}"))
}

/// Expected figures for external datasets, kept for side-by-side reading.
/// They are not reproduced here.
pub mod reference {
    /// Coronary heart disease data at ε = 0.05: avgErr, avgEmpty, avgSingle, avgDouble.
    pub const CHD_EPS_005: [f64; 4] = [0.049, 0.001, 0.239, 0.76];
    /// Peer-to-peer network data, critical-set rules: TPR, PPV, F1.
    pub const P2P_CCS: [f64; 3] = [1.00, 0.93, 0.96];
}

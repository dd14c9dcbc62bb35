//! Rules as axis-aligned hyperrectangles.
//!
//! A rule is a conjunction of one interval per feature; features a rule does
//! not mention are widened to the full feature bounds. Interval openness only
//! matters for point membership. Volumes, overlaps and distances use the raw
//! endpoints.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::label::{Label, LabelSpace};

const RELEVANCE_TOLERANCE: f64 = 1e-12;

/// Global feature ranges `lower[i] <= x_i <= upper[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl FeatureBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let bounds = Self { lower, upper };
        bounds.validate()?;
        Ok(bounds)
    }

    fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::DimensionMismatch {
                expected: self.lower.len(),
                got: self.upper.len(),
            });
        }
        if self.lower.is_empty() {
            return Err(Error::invalid("feature bounds need at least one feature"));
        }
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::invalid(format!(
                    "feature {i}: bounds [{l}, {u}] must be finite with lower < upper"
                )));
            }
        }
        Ok(())
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// The closed interval spanning feature `i` entirely.
    pub fn full_interval(&self, i: usize) -> Interval {
        Interval::closed(self.lower[i], self.upper[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
    pub low_open: bool,
    pub high_open: bool,
}

impl Interval {
    pub fn closed(low: f64, high: f64) -> Self {
        Self {
            low,
            high,
            low_open: false,
            high_open: false,
        }
    }

    /// `low < x <= high`, the default form of induced rules.
    pub fn left_open(low: f64, high: f64) -> Self {
        Self {
            low,
            high,
            low_open: true,
            high_open: false,
        }
    }

    pub fn open(low: f64, high: f64) -> Self {
        Self {
            low,
            high,
            low_open: true,
            high_open: true,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.low_open {
            x > self.low
        } else {
            x >= self.low
        };
        let below = if self.high_open {
            x < self.high
        } else {
            x <= self.high
        };
        above && below
    }

    pub fn width(&self) -> f64 {
        (self.high - self.low).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub id: String,
    pub intervals: Vec<Interval>,
    pub label: Label,
    pub covering: f64,
    pub error: f64,
    pub relevance: f64,
}

impl Rule {
    /// A rule with zeroed performance statistics.
    pub fn new(id: impl Into<String>, intervals: Vec<Interval>, label: Label) -> Self {
        Self {
            id: id.into(),
            intervals,
            label,
            covering: 0.0,
            error: 0.0,
            relevance: 0.0,
        }
    }

    pub fn with_stats(mut self, stats: &RuleStats) -> Self {
        self.covering = stats.covering;
        self.error = stats.error;
        self.relevance = stats.relevance;
        self
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    /// Membership without the dimension check; `point` must have `dim()` entries.
    #[inline]
    pub fn contains(&self, point: &[f64]) -> bool {
        self.intervals
            .iter()
            .zip(point)
            .all(|(iv, &x)| iv.contains(x))
    }

    pub fn volume(&self) -> f64 {
        volume(self)
    }
}

pub fn satisfies(rule: &Rule, point: &[f64]) -> Result<bool> {
    if point.len() != rule.dim() {
        return Err(Error::DimensionMismatch {
            expected: rule.dim(),
            got: point.len(),
        });
    }
    Ok(rule.contains(point))
}

pub fn volume(rule: &Rule) -> f64 {
    rule.intervals.iter().map(Interval::width).product()
}

/// Whether the boxes intersect or touch.
pub fn overlaps(a: &Rule, b: &Rule) -> bool {
    debug_assert_eq!(a.dim(), b.dim());
    a.intervals
        .iter()
        .zip(&b.intervals)
        .all(|(x, y)| x.low.max(y.low) <= x.high.min(y.high))
}

/// Volume of the intersection box; zero when the boxes do not overlap.
pub fn overlap_volume(a: &Rule, b: &Rule) -> f64 {
    if !overlaps(a, b) {
        return 0.0;
    }
    a.intervals
        .iter()
        .zip(&b.intervals)
        .map(|(x, y)| (x.high.min(y.high) - x.low.max(y.low)).abs())
        .product()
}

/// Intersection-over-union of the two boxes' volumes.
///
/// Touching boxes share no volume and therefore score 0. Two zero-volume
/// rules have no defined ratio; 0 is returned and a warning logged.
pub fn similarity(a: &Rule, b: &Rule) -> f64 {
    let inter = overlap_volume(a, b);
    let union = volume(a) + volume(b) - inter;
    if union <= 0.0 {
        log::warn!(
            "similarity of zero-volume rules '{}' and '{}' is undefined; using 0",
            a.id,
            b.id
        );
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Confusion counts of a rule on labeled data and the derived rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleStats {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub covering: f64,
    pub error: f64,
    pub relevance: f64,
}

impl RuleStats {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let covering = ratio_or_zero(tp, tp + fn_);
        let error = ratio_or_zero(fp, tn + fp);
        Self {
            true_positives: tp,
            false_positives: fp,
            true_negatives: tn,
            false_negatives: fn_,
            covering,
            error,
            relevance: covering * (1.0 - error),
        }
    }

    /// `TP / (TP + FP)`; `None` when the rule covers no sample.
    pub fn precision(&self) -> Option<f64> {
        let covered = self.true_positives + self.false_positives;
        (covered > 0).then(|| self.true_positives as f64 / covered as f64)
    }
}

fn ratio_or_zero(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Covering (true positive rate), error (false positive rate) and relevance
/// `covering * (1 - error)` of `rule` on `data`.
pub fn rule_stats(rule: &Rule, data: &Dataset) -> Result<RuleStats> {
    if data.is_empty() {
        return Err(Error::invalid("rule statistics need a non-empty dataset"));
    }
    if data.dim() != rule.dim() {
        return Err(Error::DimensionMismatch {
            expected: rule.dim(),
            got: data.dim(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (point, label) in data.iter() {
        match (rule.contains(point), label == rule.label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    if tp + fn_ == 0 {
        log::warn!(
            "rule '{}': no sample of its class, covering set to 0",
            rule.id
        );
    }
    if tn + fp == 0 {
        log::warn!(
            "rule '{}': no sample of the other class, error set to 0",
            rule.id
        );
    }
    Ok(RuleStats::from_counts(tp, fp, tn, fn_))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ruleset {
    feature_names: Vec<String>,
    bounds: FeatureBounds,
    rules: Vec<Rule>,
    label_space: LabelSpace,
}

impl Ruleset {
    pub fn new(
        feature_names: Vec<String>,
        bounds: FeatureBounds,
        rules: Vec<Rule>,
        label_space: LabelSpace,
    ) -> Result<Self> {
        let rs = Self {
            feature_names,
            bounds,
            rules,
            label_space,
        };
        rs.validate()?;
        for class in rs.degenerate_classes() {
            log::warn!(
                "ruleset has no rule predicting class {}",
                rs.label_space.encode(class)
            );
        }
        Ok(rs)
    }

    fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        let dim = self.bounds.dim();
        if self.feature_names.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.feature_names.len(),
            });
        }
        let mut ids = HashSet::new();
        for rule in &self.rules {
            if !ids.insert(rule.id.as_str()) {
                return Err(Error::invalid(format!("duplicate rule id '{}'", rule.id)));
            }
            if rule.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: rule.dim(),
                });
            }
            for (i, iv) in rule.intervals.iter().enumerate() {
                if !(iv.low.is_finite() && iv.high.is_finite() && iv.low <= iv.high) {
                    return Err(Error::invalid(format!(
                        "rule '{}', feature {i}: interval [{}, {}] is malformed",
                        rule.id, iv.low, iv.high
                    )));
                }
                if iv.low < self.bounds.lower[i] || iv.high > self.bounds.upper[i] {
                    return Err(Error::invalid(format!(
                        "rule '{}', feature {i}: interval [{}, {}] leaves bounds [{}, {}]",
                        rule.id, iv.low, iv.high, self.bounds.lower[i], self.bounds.upper[i]
                    )));
                }
            }
            for (name, v) in [
                ("covering", rule.covering),
                ("error", rule.error),
                ("relevance", rule.relevance),
            ] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid(format!(
                        "rule '{}': {name} {v} outside [0, 1]",
                        rule.id
                    )));
                }
            }
            let expected = rule.covering * (1.0 - rule.error);
            if (rule.relevance - expected).abs() > RELEVANCE_TOLERANCE {
                return Err(Error::invalid(format!(
                    "rule '{}': relevance {} != covering * (1 - error) = {expected}",
                    rule.id, rule.relevance
                )));
            }
        }
        Ok(())
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn bounds(&self) -> &FeatureBounds {
        &self.bounds
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn label_space(&self) -> LabelSpace {
        self.label_space
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules_for(&self, label: Label) -> impl Iterator<Item = &Rule> + '_ {
        self.rules.iter().filter(move |r| r.label == label)
    }

    /// Indices of the rules whose premise holds at `point`.
    pub fn satisfied_by(&self, point: &[f64]) -> Result<Vec<usize>> {
        self.check_point(point)?;
        Ok(self
            .rules
            .iter()
            .enumerate()
            .filter(|(_, r)| r.contains(point))
            .map(|(i, _)| i)
            .collect())
    }

    pub(crate) fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        Ok(())
    }

    /// Classes without a single rule. Such rulesets are legal but degenerate.
    pub fn degenerate_classes(&self) -> Vec<Label> {
        Label::BOTH
            .into_iter()
            .filter(|&c| self.rules_for(c).next().is_none())
            .collect()
    }

    /// Pairs of rules that touch without sharing volume; their similarity is 0.
    pub fn adjacent_pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (i, a) in self.rules.iter().enumerate() {
            for b in &self.rules[i + 1..] {
                if overlaps(a, b) && overlap_volume(a, b) == 0.0 {
                    out.push((a.id.clone(), b.id.clone()));
                }
            }
        }
        out
    }

    /// Copy with every rule's statistics recomputed on `data`.
    pub fn restat(&self, data: &Dataset) -> Result<Ruleset> {
        let rules = self
            .rules
            .iter()
            .map(|r| rule_stats(r, data).map(|s| r.clone().with_stats(&s)))
            .collect::<Result<Vec<_>>>()?;
        Ruleset::new(
            self.feature_names.clone(),
            self.bounds.clone(),
            rules,
            self.label_space,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = RulesetDoc::from(self);
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Ruleset> {
        let doc: RulesetDoc = serde_json::from_str(text)?;
        Ruleset::try_from(doc).map_err(|e| match e {
            Error::Schema(_) => e,
            other => Error::schema(other.to_string()),
        })
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesetDoc {
    feature_names: Vec<String>,
    bounds: FeatureBounds,
    #[serde(default)]
    label_space: LabelSpace,
    rules: Vec<RuleDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDoc {
    id: String,
    label: i64,
    intervals: Vec<Interval>,
    covering: f64,
    error: f64,
    relevance: f64,
}

impl From<&Ruleset> for RulesetDoc {
    fn from(rs: &Ruleset) -> Self {
        Self {
            feature_names: rs.feature_names.clone(),
            bounds: rs.bounds.clone(),
            label_space: rs.label_space,
            rules: rs
                .rules
                .iter()
                .map(|r| RuleDoc {
                    id: r.id.clone(),
                    label: rs.label_space.encode(r.label).into(),
                    intervals: r.intervals.clone(),
                    covering: r.covering,
                    error: r.error,
                    relevance: r.relevance,
                })
                .collect(),
        }
    }
}

impl TryFrom<RulesetDoc> for Ruleset {
    type Error = Error;

    fn try_from(doc: RulesetDoc) -> Result<Self> {
        let space = doc.label_space;
        let rules = doc
            .rules
            .into_iter()
            .map(|r| {
                Ok(Rule {
                    label: space.decode(r.label)?,
                    id: r.id,
                    intervals: r.intervals,
                    covering: r.covering,
                    error: r.error,
                    relevance: r.relevance,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ruleset::new(doc.feature_names, doc.bounds, rules, space)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(id: &str, x1: (f64, f64), x2: (f64, f64), label: Label) -> Rule {
        Rule::new(
            id,
            vec![
                Interval::left_open(x1.0, x1.1),
                Interval::left_open(x2.0, x2.1),
            ],
            label,
        )
    }

    fn r1_adj() -> Rule {
        rule("r1", (0.07, 0.27), (0.6, 1.0), Label::Negative)
    }
    fn r2_adj() -> Rule {
        rule("r2", (0.27, 0.8), (0.4, 0.75), Label::Positive)
    }
    fn r3_adj() -> Rule {
        rule("r3", (0.8, 1.1), (0.24, 0.55), Label::Positive)
    }
    fn r1_low() -> Rule {
        rule("r1", (0.1, 0.3), (0.6, 1.0), Label::Negative)
    }

    #[test]
    fn satisfies_honors_openness() {
        let r2 = r2_adj();
        assert!(satisfies(&r2, &[0.5, 0.5]).unwrap());
        assert!(!satisfies(&r2, &[0.27, 0.5]).unwrap());
        assert!(satisfies(&r2, &[0.8, 0.75]).unwrap());
        assert!(matches!(
            satisfies(&r2, &[0.5]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn volumes() {
        assert!((volume(&r2_adj()) - 0.53 * 0.35).abs() < 1e-12);
        assert!((volume(&r2_adj()) - 0.1855).abs() < 1e-12);
        assert!((volume(&r1_low()) - 0.08).abs() < 1e-12);
        let unit = rule("u", (0.0, 1.0), (0.0, 1.0), Label::Negative);
        assert_eq!(volume(&unit), 1.0);
        let slab = rule("s", (0.5, 0.5), (0.0, 1.0), Label::Negative);
        assert_eq!(volume(&slab), 0.0);
    }

    #[test]
    fn overlap_condition() {
        assert!(overlaps(&r1_adj(), &r2_adj()));
        assert!(!overlaps(&r1_adj(), &r3_adj()));
        assert!(overlaps(&r2_adj(), &r2_adj()));
    }

    #[test]
    fn overlap_volumes() {
        let r2_low = r2_adj();
        assert!((overlap_volume(&r1_low(), &r2_low) - 0.03 * 0.15).abs() < 1e-12);
        assert_eq!(overlap_volume(&r1_adj(), &r2_adj()), 0.0);
        assert_eq!(overlap_volume(&r1_adj(), &r3_adj()), 0.0);
        assert!((overlap_volume(&r2_low, &r2_low) - volume(&r2_low)).abs() < 1e-15);
    }

    #[test]
    fn similarity_values() {
        let q = similarity(&r1_low(), &r2_adj());
        assert!((q - 0.0045 / (0.08 + 0.1855 - 0.0045)).abs() < 1e-12);
        assert!((q - 0.017241).abs() < 1e-6);
        assert_eq!(similarity(&r2_adj(), &r2_adj()), 1.0);
        assert_eq!(similarity(&r1_adj(), &r2_adj()), 0.0);
    }

    #[test]
    fn zero_volume_similarity_is_zero() {
        let a = rule("a", (0.5, 0.5), (0.5, 0.5), Label::Negative);
        let b = rule("b", (0.5, 0.5), (0.5, 0.5), Label::Positive);
        assert_eq!(similarity(&a, &b), 0.0);
    }

    fn dataset(points: Vec<Vec<f64>>, labels: Vec<Label>) -> Dataset {
        Dataset::new(
            vec!["X1".into(), "X2".into()],
            points,
            labels,
            LabelSpace::ZeroOne,
        )
        .unwrap()
    }

    #[test]
    fn stats_from_counts() {
        // TP=5, FN=5, FP=2, TN=8
        let mut points = Vec::new();
        let mut labels = Vec::new();
        let inside = vec![0.5, 0.5];
        let outside = vec![0.0, 0.0];
        for (p, l, n) in [
            (&inside, Label::Positive, 5),
            (&outside, Label::Positive, 5),
            (&inside, Label::Negative, 2),
            (&outside, Label::Negative, 8),
        ] {
            for _ in 0..n {
                points.push(p.clone());
                labels.push(l);
            }
        }
        let data = dataset(points, labels);
        let s = rule_stats(&r2_adj(), &data).unwrap();
        assert_eq!((s.true_positives, s.false_negatives), (5, 5));
        assert_eq!((s.false_positives, s.true_negatives), (2, 8));
        assert!((s.covering - 0.5).abs() < 1e-15);
        assert!((s.error - 0.2).abs() < 1e-15);
        assert!((s.relevance - 0.4).abs() < 1e-15);
        assert_eq!(s.precision(), Some(5.0 / 7.0));
    }

    #[test]
    fn perfect_and_empty_rules() {
        let data = dataset(
            vec![vec![0.5, 0.5], vec![0.6, 0.6], vec![0.0, 0.0]],
            vec![Label::Positive, Label::Positive, Label::Negative],
        );
        let s = rule_stats(&r2_adj(), &data).unwrap();
        assert_eq!((s.covering, s.error, s.relevance), (1.0, 0.0, 1.0));

        let nowhere = rule("n", (0.9, 0.95), (0.9, 0.95), Label::Positive);
        let s = rule_stats(&nowhere, &data).unwrap();
        assert_eq!((s.covering, s.error, s.relevance), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let data = dataset(vec![], vec![]);
        assert!(rule_stats(&r2_adj(), &data).is_err());
    }

    fn toy_bounds() -> FeatureBounds {
        FeatureBounds::new(vec![0.0, 0.0], vec![1.1, 1.0]).unwrap()
    }

    #[test]
    fn bounds_must_be_strict() {
        assert!(FeatureBounds::new(vec![0.0], vec![0.0]).is_err());
        assert!(FeatureBounds::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn ruleset_rejects_out_of_bounds_and_bad_relevance() {
        let names = vec!["X1".to_string(), "X2".to_string()];
        let outside = rule("o", (0.0, 1.2), (0.0, 1.0), Label::Positive);
        assert!(Ruleset::new(
            names.clone(),
            toy_bounds(),
            vec![outside],
            LabelSpace::ZeroOne
        )
        .is_err());
        let mut bad = r2_adj();
        bad.covering = 0.5;
        bad.error = 0.5;
        bad.relevance = 0.5;
        assert!(Ruleset::new(names.clone(), toy_bounds(), vec![bad], LabelSpace::ZeroOne).is_err());
        let dup = vec![r2_adj(), r2_adj()];
        assert!(Ruleset::new(names, toy_bounds(), dup, LabelSpace::ZeroOne).is_err());
    }

    #[test]
    fn adjacency_diagnostic_lists_touching_pairs() {
        let rs = Ruleset::new(
            vec!["X1".into(), "X2".into()],
            toy_bounds(),
            vec![r1_adj(), r2_adj(), r3_adj()],
            LabelSpace::ZeroOne,
        )
        .unwrap();
        let pairs = rs.adjacent_pairs();
        assert!(pairs.contains(&("r1".into(), "r2".into())));
        assert!(pairs.contains(&("r2".into(), "r3".into())));
        assert!(rs.degenerate_classes().is_empty());
    }

    #[test]
    fn json_rejects_unknown_fields_and_bad_labels() {
        let rs = Ruleset::new(
            vec!["X1".into(), "X2".into()],
            toy_bounds(),
            vec![r2_adj()],
            LabelSpace::ZeroOne,
        )
        .unwrap();
        let json = rs.to_json().unwrap();
        assert_eq!(Ruleset::from_json(&json).unwrap(), rs);
        let bad_label = json.replace("\"label\": 1", "\"label\": 2");
        assert!(matches!(
            Ruleset::from_json(&bad_label),
            Err(Error::Schema(_))
        ));
        let extra = json.replacen("{", "{\"surprise\": 1,", 1);
        assert!(matches!(Ruleset::from_json(&extra), Err(Error::Schema(_))));
        assert!(matches!(Ruleset::from_json("{"), Err(Error::Schema(_))));
    }
}

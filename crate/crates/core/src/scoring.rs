//! The geometric conformity score of a point for a candidate label.
//!
//! For every rule that predicts the label and is satisfied by the point, the
//! score multiplies a factor `tau_hat * (1 - relevance)`:
//!
//! * `gamma` sums a decreasing kernel of the distances from the point to both
//!   faces of the rule along every feature, so it grows near the boundary;
//! * `gamma_hat` reweights `gamma` by the mean similarity to the other
//!   satisfied same-label rules over the mean similarity to the satisfied
//!   opposite-label rules;
//! * `tau_hat` squashes `gamma_hat` through the logistic function.
//!
//! A label with no satisfied rule scores exactly 1 (empty product).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::ruleset::{similarity, Rule, Ruleset};

/// `gamma_hat` at or above this value maps to `tau_hat == 1.0` exactly.
pub const TAU_SATURATION: f64 = 40.0;

/// Decreasing function of a boundary distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    /// `1 / d`
    Reciprocal,
    /// `exp(-alpha * d)`
    Exponential { alpha: f64 },
}

impl Kernel {
    #[inline]
    pub fn eval(&self, distance: f64) -> f64 {
        match *self {
            Kernel::Reciprocal => 1.0 / distance,
            Kernel::Exponential { alpha } => (-alpha * distance).exp(),
        }
    }
}

/// How `q_same / q_opposite` is resolved when the denominator vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RatioPolicy {
    /// `0/0 -> 1`, `a/0 -> +inf` (so `tau_hat` saturates to 1), otherwise the plain ratio.
    Strict,
    /// `(q_same + kappa) / (q_opposite + kappa)`.
    Smoothed { kappa: f64 },
}

impl RatioPolicy {
    pub fn ratio(&self, same: f64, opposite: f64) -> f64 {
        match *self {
            RatioPolicy::Strict => {
                if opposite > 0.0 {
                    same / opposite
                } else if same > 0.0 {
                    f64::INFINITY
                } else {
                    1.0
                }
            }
            RatioPolicy::Smoothed { kappa } => (same + kappa) / (opposite + kappa),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub kernel: Kernel,
    pub ratio_policy: RatioPolicy,
    pub distance_floor: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Reciprocal,
            ratio_policy: RatioPolicy::Strict,
            distance_floor: 1e-12,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if let Kernel::Exponential { alpha } = self.kernel {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::invalid(format!(
                    "kernel alpha must be > 0, got {alpha}"
                )));
            }
        }
        if let RatioPolicy::Smoothed { kappa } = self.ratio_policy {
            if !(kappa > 0.0 && kappa.is_finite()) {
                return Err(Error::invalid(format!(
                    "ratio kappa must be > 0, got {kappa}"
                )));
            }
        }
        if !(self.distance_floor > 0.0 && self.distance_floor.is_finite()) {
            return Err(Error::invalid(
                "distance_floor must be a positive finite number",
            ));
        }
        Ok(())
    }
}

/// Boundary-distance term of `point` inside `rule`.
pub fn gamma(point: &[f64], rule: &Rule, config: &ScoreConfig) -> Result<f64> {
    if point.len() != rule.dim() {
        return Err(Error::DimensionMismatch {
            expected: rule.dim(),
            got: point.len(),
        });
    }
    Ok(gamma_unchecked(point, rule, config))
}

fn gamma_unchecked(point: &[f64], rule: &Rule, config: &ScoreConfig) -> f64 {
    let floor = config.distance_floor;
    rule.intervals
        .iter()
        .zip(point)
        .map(|(iv, &x)| {
            let below = (x - iv.low).abs().max(floor);
            let above = (x - iv.high).abs().max(floor);
            config.kernel.eval(below) + config.kernel.eval(above)
        })
        .sum()
}

/// Logistic squashing, exactly 1 from [`TAU_SATURATION`] upward.
pub fn tau_hat(gamma_hat: f64) -> f64 {
    if gamma_hat >= TAU_SATURATION {
        1.0
    } else {
        1.0 / (1.0 + (-gamma_hat).exp())
    }
}

/// Per-rule terms of a score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleFactor {
    pub rule_id: String,
    pub gamma: f64,
    pub same_class_mean_similarity: f64,
    pub opposite_class_mean_similarity: f64,
    #[serde(with = "crate::float_serde")]
    pub gamma_hat: f64,
    pub tau_hat: f64,
    /// `1 - relevance`
    pub relevance_factor: f64,
}

impl RuleFactor {
    pub fn factor(&self) -> f64 {
        self.tau_hat * self.relevance_factor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    /// Candidate label in the ruleset's encoding.
    pub label: i8,
    pub ratio_policy: RatioPolicy,
    pub per_rule: Vec<RuleFactor>,
    pub score: f64,
}

/// Scores points against one ruleset, with pairwise rule similarities cached.
#[derive(Debug, Clone)]
pub struct Scorer {
    ruleset: Ruleset,
    config: ScoreConfig,
    similarities: Vec<f64>,
}

impl Scorer {
    pub fn new(ruleset: Ruleset, config: ScoreConfig) -> Result<Self> {
        config.validate()?;
        let rules = ruleset.rules();
        let m = rules.len();
        let mut similarities = vec![0.0; m * m];
        for i in 0..m {
            similarities[i * m + i] = similarity(&rules[i], &rules[i]);
            for j in i + 1..m {
                let q = similarity(&rules[i], &rules[j]);
                similarities[i * m + j] = q;
                similarities[j * m + i] = q;
            }
        }
        Ok(Self {
            ruleset,
            config,
            similarities,
        })
    }

    pub fn ruleset(&self) -> &Ruleset {
        &self.ruleset
    }

    pub fn config(&self) -> &ScoreConfig {
        &self.config
    }

    fn q(&self, i: usize, j: usize) -> f64 {
        self.similarities[i * self.ruleset.len() + j]
    }

    fn mean_similarity(&self, k: usize, others: impl Iterator<Item = usize>) -> f64 {
        let (sum, n) = others.fold((0.0, 0usize), |(s, n), j| (s + self.q(k, j), n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    fn factor_for(&self, point: &[f64], k: usize, satisfied: &[usize]) -> RuleFactor {
        let rules = self.ruleset.rules();
        let rule = &rules[k];
        let g = gamma_unchecked(point, rule, &self.config);
        let same = self.mean_similarity(
            k,
            satisfied
                .iter()
                .copied()
                .filter(|&j| j != k && rules[j].label == rule.label),
        );
        let opposite = self.mean_similarity(
            k,
            satisfied
                .iter()
                .copied()
                .filter(|&j| rules[j].label != rule.label),
        );
        let ratio = self.config.ratio_policy.ratio(same, opposite);
        let gh = if ratio == 0.0 { 0.0 } else { g * ratio };
        RuleFactor {
            rule_id: rule.id.clone(),
            gamma: g,
            same_class_mean_similarity: same,
            opposite_class_mean_similarity: opposite,
            gamma_hat: gh,
            tau_hat: tau_hat(gh),
            relevance_factor: 1.0 - rule.relevance,
        }
    }

    /// Overlap-weighted `gamma` of a satisfied rule of the ruleset.
    pub fn gamma_hat(&self, point: &[f64], rule: &Rule) -> Result<RuleFactor> {
        self.ruleset.check_point(point)?;
        let k = self
            .ruleset
            .rules()
            .iter()
            .position(|r| r.id == rule.id)
            .ok_or_else(|| {
                Error::ContractViolation(format!("rule '{}' is not part of the ruleset", rule.id))
            })?;
        let satisfied = self.ruleset.satisfied_by(point)?;
        if !satisfied.contains(&k) {
            return Err(Error::ContractViolation(format!(
                "rule '{}' is not satisfied by the point",
                rule.id
            )));
        }
        Ok(self.factor_for(point, k, &satisfied))
    }

    pub fn score(&self, point: &[f64], label: Label) -> Result<(f64, ScoreBreakdown)> {
        let satisfied = self.ruleset.satisfied_by(point)?;
        let per_rule: Vec<RuleFactor> = satisfied
            .iter()
            .copied()
            .filter(|&k| self.ruleset.rules()[k].label == label)
            .map(|k| self.factor_for(point, k, &satisfied))
            .collect();
        let score = per_rule.iter().map(RuleFactor::factor).product::<f64>();
        let breakdown = ScoreBreakdown {
            label: self.ruleset.label_space().encode(label),
            ratio_policy: self.config.ratio_policy,
            per_rule,
            score,
        };
        Ok((score, breakdown))
    }

    pub fn score_value(&self, point: &[f64], label: Label) -> Result<f64> {
        self.score(point, label).map(|(s, _)| s)
    }

    /// `[s(x, negative), s(x, positive)]`.
    pub fn score_both(&self, point: &[f64]) -> Result<[f64; 2]> {
        Ok([
            self.score_value(point, Label::Negative)?,
            self.score_value(point, Label::Positive)?,
        ])
    }
}

pub fn gamma_hat(
    point: &[f64],
    rule: &Rule,
    ruleset: &Ruleset,
    config: &ScoreConfig,
) -> Result<f64> {
    Scorer::new(ruleset.clone(), *config)?
        .gamma_hat(point, rule)
        .map(|f| f.gamma_hat)
}

pub fn score(
    point: &[f64],
    label: Label,
    ruleset: &Ruleset,
    config: &ScoreConfig,
) -> Result<(f64, ScoreBreakdown)> {
    Scorer::new(ruleset.clone(), *config)?.score(point, label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::LabelSpace;
    use crate::ruleset::{FeatureBounds, Interval};

    fn unit_rule(label: Label) -> Rule {
        Rule::new(
            "unit",
            vec![Interval::closed(0.0, 1.0), Interval::closed(0.0, 1.0)],
            label,
        )
    }

    fn ruleset(rules: Vec<Rule>) -> Ruleset {
        Ruleset::new(
            vec!["X1".into(), "X2".into()],
            FeatureBounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            rules,
            LabelSpace::ZeroOne,
        )
        .unwrap()
    }

    #[test]
    fn gamma_reciprocal() {
        let cfg = ScoreConfig::default();
        let r = unit_rule(Label::Positive);
        assert!((gamma(&[0.5, 0.5], &r, &cfg).unwrap() - 8.0).abs() < 1e-12);
        let expected = (4.0 + 4.0 / 3.0) + (2.0 + 2.0);
        assert!((gamma(&[0.25, 0.5], &r, &cfg).unwrap() - expected).abs() < 1e-12);
        let on_face = gamma(&[0.0, 0.5], &r, &cfg).unwrap();
        assert!(on_face.is_finite() && on_face >= 1e12);
        assert!(gamma(&[0.5], &r, &cfg).is_err());
    }

    #[test]
    fn exponential_kernel_decreases_with_alpha() {
        let r = unit_rule(Label::Positive);
        let cfg = |alpha| ScoreConfig {
            kernel: Kernel::Exponential { alpha },
            ..Default::default()
        };
        let slow = gamma(&[0.3, 0.6], &r, &cfg(0.5)).unwrap();
        let fast = gamma(&[0.3, 0.6], &r, &cfg(2.0)).unwrap();
        assert!(fast < slow);
    }

    #[test]
    fn tau_hat_values() {
        assert_eq!(tau_hat(0.0), 0.5);
        assert!((tau_hat(8.0) - 1.0 / (1.0 + (-8.0f64).exp())).abs() < 1e-15);
        assert!((tau_hat(8.0) - 0.999_664_649).abs() < 1e-9);
        assert_eq!(tau_hat(f64::INFINITY), 1.0);
        assert_eq!(tau_hat(40.0), 1.0);
    }

    #[test]
    fn strict_ratio_cases() {
        let p = RatioPolicy::Strict;
        assert_eq!(p.ratio(0.0, 0.0), 1.0);
        assert_eq!(p.ratio(0.02, 0.01), 2.0);
        assert_eq!(p.ratio(0.0, 0.05), 0.0);
        assert_eq!(p.ratio(0.3, 0.0), f64::INFINITY);
        let s = RatioPolicy::Smoothed { kappa: 0.1 };
        assert!((s.ratio(0.0, 0.0) - 1.0).abs() < 1e-15);
        assert!((s.ratio(0.1, 0.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn isolated_rule_gamma_hat_equals_gamma() {
        let rs = ruleset(vec![unit_rule(Label::Positive)]);
        let cfg = ScoreConfig::default();
        let gh = gamma_hat(&[0.5, 0.5], &rs.rules()[0], &rs, &cfg).unwrap();
        assert!((gh - 8.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_hat_requires_satisfaction() {
        let mut r = unit_rule(Label::Positive);
        r.intervals[0] = Interval::closed(0.0, 0.5);
        let rs = ruleset(vec![r]);
        let err = gamma_hat(&[0.75, 0.5], &rs.rules()[0], &rs, &ScoreConfig::default());
        assert!(matches!(err, Err(Error::ContractViolation(_))));
    }

    #[test]
    fn ratio_weighting_with_both_classes() {
        // A: the scored rule; B: same label; C: opposite label. All contain the point.
        let a = Rule::new(
            "a",
            vec![Interval::closed(0.0, 1.0), Interval::closed(0.0, 1.0)],
            Label::Positive,
        );
        let b = Rule::new(
            "b",
            vec![Interval::closed(0.0, 0.6), Interval::closed(0.0, 1.0)],
            Label::Positive,
        );
        let c = Rule::new(
            "c",
            vec![Interval::closed(0.4, 0.6), Interval::closed(0.4, 0.6)],
            Label::Negative,
        );
        let rs = ruleset(vec![a.clone(), b.clone(), c.clone()]);
        let x = [0.5, 0.5];
        let scorer = Scorer::new(rs, ScoreConfig::default()).unwrap();
        let f = scorer.gamma_hat(&x, &a).unwrap();
        let q_ab = similarity(&a, &b);
        let q_ac = similarity(&a, &c);
        assert!((q_ab - 0.6).abs() < 1e-12);
        assert!((q_ac - 0.04).abs() < 1e-12);
        assert!((f.gamma_hat - 8.0 * q_ab / q_ac).abs() < 1e-9);
    }

    #[test]
    fn zero_same_similarity_gives_half() {
        let a = Rule::new(
            "a",
            vec![Interval::closed(0.0, 1.0), Interval::closed(0.0, 1.0)],
            Label::Positive,
        );
        let c = Rule::new(
            "c",
            vec![Interval::closed(0.0, 1.0), Interval::closed(0.0, 1.0)],
            Label::Negative,
        );
        let rs = ruleset(vec![a, c]);
        let (s, bd) = score(&[0.5, 0.5], Label::Positive, &rs, &ScoreConfig::default()).unwrap();
        assert_eq!(bd.per_rule[0].gamma_hat, 0.0);
        assert_eq!(s, 0.5);
    }

    #[test]
    fn score_conventions() {
        let mut r = unit_rule(Label::Positive);
        r.intervals[0] = Interval::closed(0.0, 0.5);
        let rs = ruleset(vec![r]);
        let cfg = ScoreConfig::default();
        // no rule predicting 0 anywhere
        assert_eq!(
            score(&[0.25, 0.5], Label::Negative, &rs, &cfg).unwrap().0,
            1.0
        );
        // point outside every rule
        assert_eq!(
            score(&[0.75, 0.5], Label::Positive, &rs, &cfg).unwrap().0,
            1.0
        );
        // single rule, relevance 0: score is tau_hat
        let (s, bd) = score(&[0.25, 0.5], Label::Positive, &rs, &cfg).unwrap();
        assert_eq!(bd.per_rule.len(), 1);
        assert_eq!(s, tau_hat(bd.per_rule[0].gamma));
    }

    #[test]
    fn breakdown_serializes_saturated_gamma_hat() {
        let f = RuleFactor {
            rule_id: "r".into(),
            gamma: 1.0,
            same_class_mean_similarity: 0.5,
            opposite_class_mean_similarity: 0.0,
            gamma_hat: f64::INFINITY,
            tau_hat: 1.0,
            relevance_factor: 0.5,
        };
        let json = serde_json::to_string(&f).unwrap();
        assert!(json.contains("\"gamma_hat\":\"inf\""), "{json}");
        let back: RuleFactor = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn extra_same_class_rule_multiplies_in_but_reweights_neighbours() {
        let cfg = ScoreConfig {
            kernel: Kernel::Exponential { alpha: 1.0 },
            ..Default::default()
        };
        let mut a = unit_rule(Label::Positive);
        a.id = "a".into();
        let mut b = Rule::new(
            "b",
            vec![Interval::closed(0.2, 0.8), Interval::closed(0.2, 0.8)],
            Label::Positive,
        );
        b.covering = 0.5;
        b.relevance = 0.5;
        let x = [0.5, 0.5];

        let alone = Scorer::new(ruleset(vec![a.clone()]), cfg).unwrap();
        let (s_alone, _) = alone.score(&x, Label::Positive).unwrap();
        let both = Scorer::new(ruleset(vec![a, b]), cfg).unwrap();
        let (s_both, breakdown) = both.score(&x, Label::Positive).unwrap();

        // At the new factors the extra rule can only lower the product ...
        let factors: Vec<f64> = breakdown.per_rule.iter().map(RuleFactor::factor).collect();
        assert!(s_both <= factors[0] && s_both <= factors[1]);
        // ... but under the strict ratio a same-class-only overlap saturates
        // the existing rule's factor, so the score can rise overall.
        assert_eq!(factors[0], 1.0);
        assert!(s_alone < factors[0]);
    }
}

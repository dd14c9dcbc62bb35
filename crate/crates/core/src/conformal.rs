//! Split-conformal calibration, prediction sets and the conformal critical set.
//!
//! Calibration scores every calibration sample at its true label and keeps the
//! `ceil((n_c + 1)(1 - epsilon))`-th smallest score as the threshold `s_eps`.
//! Ties are kept (the rank is taken over the multiset). When the rank exceeds
//! `n_c` the threshold is `+inf` and every prediction set is full.
//!
//! A point is in the conformal critical set when its prediction set is exactly
//! `{+1}`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::ruleset::Ruleset;
use crate::scoring::{ScoreBreakdown, ScoreConfig, Scorer};

/// 1-indexed rank of the calibration quantile, `ceil((n + 1)(1 - epsilon))`.
///
/// Products that land within floating-point noise of an integer snap to it,
/// so `n = 99, epsilon = 0.05` gives 95 rather than 96.
pub fn quantile_rank(n: usize, epsilon: f64) -> usize {
    let x = (n as f64 + 1.0) * (1.0 - epsilon);
    let nearest = x.round();
    let rank = if (x - nearest).abs() <= 1e-9 * x.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (rank as usize).max(1)
}

/// Threshold from scores sorted ascending; `+inf` when the rank overflows.
pub fn conformal_quantile(sorted_scores: &[f64], epsilon: f64) -> f64 {
    let rank = quantile_rank(sorted_scores.len(), epsilon);
    if rank > sorted_scores.len() {
        f64::INFINITY
    } else {
        sorted_scores[rank - 1]
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )))
    }
}

/// Subset of the binary label set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSet {
    pub negative: bool,
    pub positive: bool,
}

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet {
        negative: false,
        positive: false,
    };
    pub const FULL: LabelSet = LabelSet {
        negative: true,
        positive: true,
    };

    pub fn contains(&self, label: Label) -> bool {
        match label {
            Label::Negative => self.negative,
            Label::Positive => self.positive,
        }
    }

    pub fn len(&self) -> usize {
        usize::from(self.negative) + usize::from(self.positive)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_subset_of(&self, other: &LabelSet) -> bool {
        (!self.negative || other.negative) && (!self.positive || other.positive)
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        Label::BOTH.into_iter().filter(|l| self.contains(*l))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub labels: LabelSet,
    pub in_ccs: bool,
    /// `[s(x, negative), s(x, positive)]`.
    pub scores: [f64; 2],
}

impl PredictionSet {
    pub fn from_scores(scores: [f64; 2], s_eps: f64) -> Self {
        let labels = LabelSet {
            negative: scores[0] <= s_eps,
            positive: scores[1] <= s_eps,
        };
        let in_ccs = scores[1] <= s_eps && scores[0] > s_eps;
        debug_assert_eq!(
            in_ccs,
            labels
                == LabelSet {
                    negative: false,
                    positive: true
                }
        );
        Self {
            labels,
            in_ccs,
            scores,
        }
    }
}

/// Calibrated score threshold bound to the ruleset and score configuration it
/// was computed with. Immutable; safe to share across threads.
#[derive(Debug, Clone)]
pub struct CalibratedPredictor {
    scorer: Scorer,
    epsilon: f64,
    s_eps: f64,
    n_c: usize,
    calib_scores: Vec<f64>,
}

/// Scores of every sample at its true label, in dataset order.
pub fn nonconformity_scores(scorer: &Scorer, data: &Dataset) -> Result<Vec<f64>> {
    data.iter()
        .map(|(point, label)| scorer.score_value(point, label))
        .collect()
}

impl CalibratedPredictor {
    pub fn calibrate(
        ruleset: Ruleset,
        config: ScoreConfig,
        calibration: &Dataset,
        epsilon: f64,
    ) -> Result<Self> {
        check_epsilon(epsilon)?;
        if calibration.is_empty() {
            return Err(Error::invalid("calibration set is empty"));
        }
        if calibration.dim() != ruleset.dim() {
            return Err(Error::DimensionMismatch {
                expected: ruleset.dim(),
                got: calibration.dim(),
            });
        }
        let scorer = Scorer::new(ruleset, config)?;
        let scores = nonconformity_scores(&scorer, calibration)?;
        Self::from_scores(scorer, scores, epsilon)
    }

    /// Calibrates from precomputed true-label scores (any order).
    pub fn from_scores(scorer: Scorer, mut scores: Vec<f64>, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if scores.is_empty() {
            return Err(Error::invalid("calibration set is empty"));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::invalid("calibration scores contain NaN"));
        }
        scores.sort_by(f64::total_cmp);
        let s_eps = conformal_quantile(&scores, epsilon);
        Ok(Self {
            scorer,
            epsilon,
            s_eps,
            n_c: scores.len(),
            calib_scores: scores,
        })
    }

    /// Same calibration scores, different miscoverage level.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if self.calib_scores.len() != self.n_c {
            return Err(Error::invalid(
                "predictor was loaded without its calibration scores",
            ));
        }
        Self::from_scores(self.scorer.clone(), self.calib_scores.clone(), epsilon)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn s_eps(&self) -> f64 {
        self.s_eps
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    /// Sorted ascending. Empty if the predictor was loaded without them.
    pub fn calib_scores(&self) -> &[f64] {
        &self.calib_scores
    }

    pub fn scorer(&self) -> &Scorer {
        &self.scorer
    }

    pub fn ruleset(&self) -> &Ruleset {
        self.scorer.ruleset()
    }

    pub fn config(&self) -> &ScoreConfig {
        self.scorer.config()
    }

    pub fn predict_set(&self, point: &[f64]) -> Result<PredictionSet> {
        let scores = self.scorer.score_both(point)?;
        Ok(PredictionSet::from_scores(scores, self.s_eps))
    }

    pub fn explain(&self, point: &[f64]) -> Result<(PredictionSet, [ScoreBreakdown; 2])> {
        let (s0, b0) = self.scorer.score(point, Label::Negative)?;
        let (s1, b1) = self.scorer.score(point, Label::Positive)?;
        Ok((PredictionSet::from_scores([s0, s1], self.s_eps), [b0, b1]))
    }

    /// `+1` for points in the conformal critical set, `-1` (as
    /// [`Label::Negative`]) for everything else, including empty and full sets.
    pub fn relabel_ccs<P: AsRef<[f64]>>(&self, points: &[P]) -> Result<Vec<Label>> {
        points
            .iter()
            .map(|p| {
                self.predict_set(p.as_ref()).map(|set| {
                    if set.in_ccs {
                        Label::Positive
                    } else {
                        Label::Negative
                    }
                })
            })
            .collect()
    }

    pub fn to_artifact(&self, ruleset_path: &str, embed_scores: bool) -> Result<PredictorArtifact> {
        Ok(PredictorArtifact {
            epsilon: self.epsilon,
            s_eps: self.s_eps,
            n_c: self.n_c,
            score_config: *self.config(),
            ruleset_ref: RulesetRef {
                path: ruleset_path.to_owned(),
                digest: self.ruleset().digest()?,
            },
            calib_scores_digest: scores_digest(&self.calib_scores),
            calib_scores: embed_scores.then(|| self.calib_scores.clone()),
        })
    }

    /// Rebuilds a predictor, checking the ruleset digest and, when the
    /// calibration scores are embedded, their count, digest and quantile.
    pub fn from_artifact(artifact: PredictorArtifact, ruleset: Ruleset) -> Result<Self> {
        check_epsilon(artifact.epsilon).map_err(|e| Error::schema(e.to_string()))?;
        let digest = ruleset.digest()?;
        if digest != artifact.ruleset_ref.digest {
            return Err(Error::schema(format!(
                "ruleset digest {digest} does not match predictor reference {}",
                artifact.ruleset_ref.digest
            )));
        }
        let scorer = Scorer::new(ruleset, artifact.score_config)
            .map_err(|e| Error::schema(e.to_string()))?;
        let calib_scores = match artifact.calib_scores {
            Some(scores) => {
                if scores.len() != artifact.n_c {
                    return Err(Error::schema("calib_scores length differs from n_c"));
                }
                if scores_digest(&scores) != artifact.calib_scores_digest {
                    return Err(Error::schema("calib_scores digest mismatch"));
                }
                if !scores.windows(2).all(|w| w[0] <= w[1]) {
                    return Err(Error::schema("calib_scores are not sorted"));
                }
                let s_eps = conformal_quantile(&scores, artifact.epsilon);
                if s_eps.to_bits() != artifact.s_eps.to_bits() {
                    return Err(Error::schema("s_eps does not match the calibration scores"));
                }
                scores
            }
            None => Vec::new(),
        };
        if artifact.n_c == 0 {
            return Err(Error::schema("n_c must be positive"));
        }
        Ok(Self {
            scorer,
            epsilon: artifact.epsilon,
            s_eps: artifact.s_eps,
            n_c: artifact.n_c,
            calib_scores,
        })
    }
}

/// Hex SHA-256 over the little-endian bytes of the scores.
pub fn scores_digest(scores: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for s in scores {
        hasher.update(s.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RulesetRef {
    pub path: String,
    pub digest: String,
}

/// On-disk form of a [`CalibratedPredictor`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorArtifact {
    pub epsilon: f64,
    #[serde(with = "crate::float_serde")]
    pub s_eps: f64,
    pub n_c: usize,
    pub score_config: ScoreConfig,
    pub ruleset_ref: RulesetRef,
    pub calib_scores_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calib_scores: Option<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::LabelSpace;
    use crate::ruleset::{FeatureBounds, Interval, Rule};

    /// Exact rank for `epsilon = percent / 100`, in integer arithmetic.
    fn oracle_rank(n: usize, percent: usize) -> usize {
        ((n + 1) * (100 - percent)).div_ceil(100)
    }

    fn oracle_quantile(scores: &[f64], percent: usize) -> f64 {
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        let k = oracle_rank(sorted.len(), percent);
        if k > sorted.len() {
            f64::INFINITY
        } else {
            sorted[k - 1]
        }
    }

    #[test]
    fn rank_examples() {
        assert_eq!(quantile_rank(99, 0.05), 95);
        assert_eq!(quantile_rank(4, 0.05), 5);
        assert_eq!(
            conformal_quantile(&[0.1, 0.2, 0.3, 0.4], 0.05),
            f64::INFINITY
        );
        assert_eq!(conformal_quantile(&[0.7; 30], 0.1), 0.7);
    }

    #[test]
    fn rank_matches_integer_oracle() {
        for n in 1..=1000 {
            for p in [1, 5, 10, 20] {
                assert_eq!(
                    quantile_rank(n, p as f64 / 100.0),
                    oracle_rank(n, p),
                    "n={n} p={p}"
                );
            }
        }
    }

    #[test]
    fn quantile_on_99_scores() {
        // Distinct scores in scrambled order.
        let scores: Vec<f64> = (0..99).map(|i| ((i * 37) % 99) as f64 / 100.0).collect();
        let expected = oracle_quantile(&scores, 5);
        let scorer = scorer();
        let p = CalibratedPredictor::from_scores(scorer, scores, 0.05).unwrap();
        assert_eq!(p.s_eps(), expected);
        assert_eq!(p.s_eps(), 0.94);
    }

    fn scorer() -> Scorer {
        let rs = Ruleset::new(
            vec!["X1".into()],
            FeatureBounds::new(vec![0.0], vec![1.0]).unwrap(),
            vec![Rule::new(
                "r",
                vec![Interval::closed(0.0, 0.5)],
                Label::Positive,
            )],
            LabelSpace::ZeroOne,
        )
        .unwrap();
        Scorer::new(rs, ScoreConfig::default()).unwrap()
    }

    #[test]
    fn calibrate_rejects_bad_inputs() {
        assert!(CalibratedPredictor::from_scores(scorer(), vec![], 0.1).is_err());
        for eps in [0.0, 1.0, -0.1, 1.5] {
            assert!(CalibratedPredictor::from_scores(scorer(), vec![0.5], eps).is_err());
        }
    }

    #[test]
    fn prediction_set_cases() {
        let s = PredictionSet::from_scores([0.3, 0.9], 0.5);
        assert_eq!(
            s.labels,
            LabelSet {
                negative: true,
                positive: false
            }
        );
        assert!(!s.in_ccs);
        let s = PredictionSet::from_scores([0.9, 0.3], 0.5);
        assert_eq!(
            s.labels,
            LabelSet {
                negative: false,
                positive: true
            }
        );
        assert!(s.in_ccs);
        let s = PredictionSet::from_scores([1.0, 1.0], f64::INFINITY);
        assert_eq!(s.labels, LabelSet::FULL);
        let s = PredictionSet::from_scores([0.9, 0.8], 0.5);
        assert!(s.labels.is_empty() && !s.in_ccs);
    }

    #[test]
    fn relabel_marks_only_singleton_positive() {
        // s(x,0) = 1 everywhere (no negative rule); s(x,1) < 1 inside [0, 0.5].
        let p = CalibratedPredictor::from_scores(scorer(), vec![0.9999; 10], 0.2).unwrap();
        let labels = p.relabel_ccs(&[vec![0.25], vec![0.75]]).unwrap();
        assert_eq!(labels, vec![Label::Positive, Label::Negative]);

        let full = CalibratedPredictor::from_scores(scorer(), vec![0.5; 4], 0.05).unwrap();
        assert_eq!(full.s_eps(), f64::INFINITY);
        assert_eq!(
            full.relabel_ccs(&[vec![0.25]]).unwrap(),
            vec![Label::Negative]
        );

        let empty = CalibratedPredictor::from_scores(scorer(), vec![0.0; 10], 0.2).unwrap();
        assert!(empty.predict_set(&[0.75]).unwrap().labels.is_empty());
        assert_eq!(
            empty.relabel_ccs(&[vec![0.75]]).unwrap(),
            vec![Label::Negative]
        );
    }

    #[test]
    fn artifact_round_trip_and_tamper_detection() {
        let scores: Vec<f64> = (1..=20).map(|i| i as f64 / 21.0).collect();
        let p = CalibratedPredictor::from_scores(scorer(), scores, 0.1).unwrap();
        let art = p.to_artifact("ruleset.json", true).unwrap();
        let json = serde_json::to_string(&art).unwrap();
        let back: PredictorArtifact = serde_json::from_str(&json).unwrap();
        let q = CalibratedPredictor::from_artifact(back.clone(), p.ruleset().clone()).unwrap();
        assert_eq!(q.s_eps(), p.s_eps());
        assert_eq!(q.calib_scores(), p.calib_scores());

        let mut tampered = back.clone();
        tampered.s_eps = 0.123;
        assert!(matches!(
            CalibratedPredictor::from_artifact(tampered, p.ruleset().clone()),
            Err(Error::Schema(_))
        ));
        let mut other = back;
        other.ruleset_ref.digest = "00".into();
        assert!(CalibratedPredictor::from_artifact(other, p.ruleset().clone()).is_err());
    }

    #[test]
    fn infinite_threshold_serializes() {
        let p = CalibratedPredictor::from_scores(scorer(), vec![0.5; 3], 0.05).unwrap();
        let art = p.to_artifact("r.json", false).unwrap();
        let json = serde_json::to_string(&art).unwrap();
        assert!(json.contains("\"s_eps\":\"inf\""));
        let back: PredictorArtifact = serde_json::from_str(&json).unwrap();
        let q = CalibratedPredictor::from_artifact(back, p.ruleset().clone()).unwrap();
        assert_eq!(q.s_eps(), f64::INFINITY);
    }
}

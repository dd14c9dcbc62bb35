//! Conformal prediction for rule-based binary classifiers.
//!
//! Rules are axis-aligned boxes. A point's conformity score for a label is a
//! product over the satisfied rules of that label, combining how close the
//! point sits to each rule's boundary, how much the rule overlaps rules of
//! either class, and the rule's relevance. Split-conformal calibration turns
//! the scores into prediction sets with marginal coverage `1 - epsilon`, and
//! the points whose set is exactly `{+1}` form the critical set used to
//! retrain a detector for the positive class.
//!
//! ```
//! use confiderai::{toy_ruleset, Label, ScoreConfig, Scorer, ToyVariant};
//!
//! let scorer = Scorer::new(toy_ruleset(ToyVariant::Adjacent), ScoreConfig::default()).unwrap();
//! // Outside every positive rule the score is the empty product.
//! assert_eq!(scorer.score_value(&[0.05, 0.1], Label::Positive).unwrap(), 1.0);
//! ```

pub mod conformal;
pub mod data;
pub mod error;
pub mod evaluation;
mod float_serde;
pub mod inducer;
pub mod label;
pub mod pipeline;
pub mod ruleset;
pub mod scoring;
pub mod toy;

pub use conformal::{CalibratedPredictor, LabelSet, PredictionSet, PredictorArtifact};
pub use data::{Dataset, Split, SplitFractions};
pub use error::{Error, Result};
pub use evaluation::{CcsMetrics, EvaluationReport, Report, SetMetrics};
pub use inducer::{assign_class, induce_rules, retrain_on_ccs, InducerConfig};
pub use label::{Label, LabelSpace};
pub use pipeline::{DataSource, Pipeline, PipelineConfig};
pub use ruleset::{FeatureBounds, Interval, Rule, RuleStats, Ruleset};
pub use scoring::{Kernel, RatioPolicy, ScoreBreakdown, ScoreConfig, Scorer};
pub use toy::{toy_ruleset, ToyVariant};

//! Two-feature fixture rulesets with graded overlap, and a grid dump of the
//! score surface for plotting.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Label, LabelSpace};
use crate::ruleset::{FeatureBounds, Interval, Rule, Ruleset};
use crate::scoring::Scorer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyVariant {
    /// Three rules that touch without overlapping.
    Adjacent,
    /// The middle positive rule overlaps both neighbours.
    Low,
    /// Alias of `Low` with identical thresholds.
    High,
}

impl FromStr for ToyVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjacent" => Ok(Self::Adjacent),
            "low" => Ok(Self::Low),
            "high" => Ok(Self::High),
            other => Err(Error::invalid(format!(
                "unknown toy variant '{other}' (expected adjacent, low or high)"
            ))),
        }
    }
}

/// Rules over `X1 in [0, 1.1]`, `X2 in [0, 1]` with all relevances 0.
pub fn toy_ruleset(variant: ToyVariant) -> Ruleset {
    let (r1_x1, r3_x1) = match variant {
        ToyVariant::Adjacent => ((0.07, 0.27), (0.8, 1.1)),
        ToyVariant::Low | ToyVariant::High => ((0.1, 0.3), (0.65, 0.95)),
    };
    let rules = vec![
        Rule::new(
            "r1",
            vec![
                Interval::left_open(r1_x1.0, r1_x1.1),
                Interval::left_open(0.6, 1.0),
            ],
            Label::Negative,
        ),
        // Open at both ends of X1.
        Rule::new(
            "r2",
            vec![Interval::open(0.27, 0.8), Interval::left_open(0.4, 0.75)],
            Label::Positive,
        ),
        Rule::new(
            "r3",
            vec![
                Interval::left_open(r3_x1.0, r3_x1.1),
                Interval::left_open(0.24, 0.55),
            ],
            Label::Positive,
        ),
    ];
    Ruleset::new(
        vec!["X1".into(), "X2".into()],
        FeatureBounds::new(vec![0.0, 0.0], vec![1.1, 1.0]).expect("fixed bounds are valid"),
        rules,
        LabelSpace::ZeroOne,
    )
    .expect("fixture rules are valid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub x1: f64,
    pub x2: f64,
    pub score: f64,
}

/// `s(x, label)` on a `resolution x resolution` grid spanning the feature
/// bounds, endpoints included, `x1` varying slowest.
pub fn grid_scores(scorer: &Scorer, label: Label, resolution: usize) -> Result<Vec<GridPoint>> {
    let ruleset = scorer.ruleset();
    if ruleset.dim() != 2 {
        return Err(Error::invalid(format!(
            "grid dumps need a two-feature ruleset, got {} features",
            ruleset.dim()
        )));
    }
    if resolution < 2 {
        return Err(Error::invalid("grid resolution must be at least 2"));
    }
    let bounds = ruleset.bounds();
    let axis = |i: usize| -> Vec<f64> {
        let (l, u) = (bounds.lower()[i], bounds.upper()[i]);
        let mut v: Vec<f64> = (0..resolution)
            .map(|j| l + (u - l) * j as f64 / (resolution - 1) as f64)
            .collect();
        v[resolution - 1] = u;
        v
    };
    let (xs, ys) = (axis(0), axis(1));
    let mut out = Vec::with_capacity(resolution * resolution);
    for &x1 in &xs {
        for &x2 in &ys {
            out.push(GridPoint {
                x1,
                x2,
                score: scorer.score_value(&[x1, x2], label)?,
            });
        }
    }
    Ok(out)
}

pub fn write_grid_csv(points: &[GridPoint], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["x1", "x2", "s"]).map_err(io)?;
    for p in points {
        w.write_record([p.x1.to_string(), p.x2.to_string(), p.score.to_string()])
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

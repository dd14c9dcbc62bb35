//! Relevance-weighted class assignment over any ruleset, and a baseline
//! inducer that produces overlapping hyperrectangle rules.
//!
//! The inducer is a greedy sequential cover on a per-feature grid. For each
//! class it picks a few seed samples not yet covered, grows a box from each
//! seed's grid cell one cell-step at a time while the weighted gain stays
//! non-negative and the false positive rate stays within `max_error`, and
//! keeps the best box. Samples inside a kept box are down-weighted, so later
//! boxes may overlap earlier ones without being rewarded for it.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::CalibratedPredictor;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::label::{Label, LabelSpace};
use crate::ruleset::{rule_stats, Interval, Rule, Ruleset};

/// Weight of a sample already covered by an earlier rule of its class.
const COVERED_WEIGHT: f64 = 0.1;
/// Seed samples tried per rule.
const SEED_CANDIDATES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InducerConfig {
    /// Upper bound on rules per class.
    pub max_rules: usize,
    /// Rules whose covering falls below this are discarded and end the class.
    pub min_covering: f64,
    /// Largest false positive rate a rule may reach.
    pub max_error: f64,
    /// Grid cells per feature.
    pub grid_resolution: usize,
    pub seed: u64,
}

impl Default for InducerConfig {
    fn default() -> Self {
        Self {
            max_rules: 8,
            min_covering: 0.02,
            max_error: 0.1,
            grid_resolution: 16,
            seed: 0,
        }
    }
}

impl InducerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rules < 1 {
            return Err(Error::invalid("max_rules must be at least 1"));
        }
        if self.grid_resolution < 2 {
            return Err(Error::invalid("grid_resolution must be at least 2"));
        }
        if !(self.min_covering > 0.0 && self.min_covering < 1.0) {
            return Err(Error::invalid("min_covering must lie in (0, 1)"));
        }
        if !(self.max_error > 0.0 && self.max_error < 1.0) {
            return Err(Error::invalid("max_error must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassAssignment {
    pub label: Label,
    /// The point satisfied no rule; `label` is the tie-break default.
    pub uncovered: bool,
}

/// `argmax_y sum(R, satisfied rules of y) / sum(R, all rules of y)`, ties to
/// the negative class. A class with zero total relevance has ratio 0.
pub fn assign_class(ruleset: &Ruleset, point: &[f64]) -> Result<ClassAssignment> {
    let satisfied = ruleset.satisfied_by(point)?;
    let mut ratio = [0.0; 2];
    for class in Label::BOTH {
        let total: f64 = ruleset.rules_for(class).map(|r| r.relevance).sum();
        if total > 0.0 {
            let hit: f64 = satisfied
                .iter()
                .map(|&k| &ruleset.rules()[k])
                .filter(|r| r.label == class)
                .map(|r| r.relevance)
                .sum();
            ratio[class.index()] = hit / total;
        }
    }
    let label = if ratio[1] > ratio[0] {
        Label::Positive
    } else {
        Label::Negative
    };
    Ok(ClassAssignment {
        label,
        uncovered: satisfied.is_empty(),
    })
}

/// Grid-aligned box, cells `[lo[i], hi[i])` along feature `i`.
#[derive(Debug, Clone, PartialEq)]
struct GridBox {
    lo: Vec<usize>,
    hi: Vec<usize>,
}

impl GridBox {
    fn contains(&self, cell: &[usize]) -> bool {
        cell.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&c, (&lo, &hi))| lo <= c && c < hi)
    }
}

struct Grid {
    cuts: Vec<Vec<f64>>,
    cells: Vec<Vec<usize>>,
    resolution: usize,
}

impl Grid {
    fn new(data: &Dataset, resolution: usize) -> Result<Self> {
        let bounds = data.feature_bounds()?;
        let cuts: Vec<Vec<f64>> = (0..data.dim())
            .map(|i| {
                let (l, u) = (bounds.lower()[i], bounds.upper()[i]);
                let mut c: Vec<f64> = (0..=resolution)
                    .map(|j| l + (u - l) * j as f64 / resolution as f64)
                    .collect();
                c[resolution] = u;
                c
            })
            .collect();
        // Cell j holds cuts[j] < x <= cuts[j+1]; cell 0 also holds x == cuts[0].
        let cells = data
            .points()
            .iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .map(|(i, &x)| cuts[i][1..resolution].iter().filter(|&&c| c < x).count())
                    .collect()
            })
            .collect();
        Ok(Self {
            cuts,
            cells,
            resolution,
        })
    }

    fn intervals(&self, b: &GridBox) -> Vec<Interval> {
        b.lo.iter()
            .zip(&b.hi)
            .enumerate()
            .map(|(i, (&lo, &hi))| {
                let (low, high) = (self.cuts[i][lo], self.cuts[i][hi]);
                if lo == 0 {
                    Interval::closed(low, high)
                } else {
                    Interval::left_open(low, high)
                }
            })
            .collect()
    }
}

struct ClassProblem<'a> {
    grid: &'a Grid,
    labels: &'a [Label],
    class: Label,
    weights: Vec<f64>,
    n_other: usize,
    max_fp: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BoxValue {
    weight: f64,
    fp: usize,
    new_hits: usize,
}

impl BoxValue {
    fn gain(&self) -> f64 {
        self.weight - self.fp as f64
    }
}

impl ClassProblem<'_> {
    fn evaluate(&self, b: &GridBox) -> BoxValue {
        let mut v = BoxValue {
            weight: 0.0,
            fp: 0,
            new_hits: 0,
        };
        for (idx, cell) in self.grid.cells.iter().enumerate() {
            if !b.contains(cell) {
                continue;
            }
            if self.labels[idx] == self.class {
                v.weight += self.weights[idx];
                if self.weights[idx] == 1.0 {
                    v.new_hits += 1;
                }
            } else {
                v.fp += 1;
            }
        }
        v
    }

    fn grow(&self, seed: usize) -> (GridBox, BoxValue) {
        let cell = &self.grid.cells[seed];
        let mut b = GridBox {
            lo: cell.clone(),
            hi: cell.iter().map(|c| c + 1).collect(),
        };
        let mut value = self.evaluate(&b);
        loop {
            let mut best: Option<(GridBox, BoxValue)> = None;
            for i in 0..b.lo.len() {
                for upper in [false, true] {
                    let mut cand = b.clone();
                    if upper {
                        if cand.hi[i] == self.grid.resolution {
                            continue;
                        }
                        cand.hi[i] += 1;
                    } else {
                        if cand.lo[i] == 0 {
                            continue;
                        }
                        cand.lo[i] -= 1;
                    }
                    let v = self.evaluate(&cand);
                    if v.fp > self.max_fp {
                        continue;
                    }
                    let delta = v.gain() - value.gain();
                    let acceptable = delta > 0.0 || (delta == 0.0 && v.fp == value.fp);
                    if !acceptable {
                        continue;
                    }
                    let better = match &best {
                        None => true,
                        Some((_, bv)) => {
                            v.gain() > bv.gain() || (v.gain() == bv.gain() && v.fp < bv.fp)
                        }
                    };
                    if better {
                        best = Some((cand, v));
                    }
                }
            }
            match best {
                Some((cand, v)) => {
                    b = cand;
                    value = v;
                }
                None => return (b, value),
            }
        }
    }
}

/// Induces a ruleset of possibly overlapping boxes for both classes.
/// Deterministic for a given dataset and `config.seed`.
pub fn induce_rules(training: &Dataset, config: &InducerConfig) -> Result<Ruleset> {
    config.validate()?;
    let counts = training.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::SingleClass(format!(
            "training data has {} negative and {} positive samples",
            counts[0], counts[1]
        )));
    }
    if counts[0] < 2 || counts[1] < 2 {
        return Err(Error::invalid(
            "induction needs at least two samples per class",
        ));
    }
    let grid = Grid::new(training, config.grid_resolution)?;
    let labels = training.labels();
    let mut rules = Vec::new();

    for class in Label::BOTH {
        let n_class = counts[class.index()];
        let n_other = counts[class.opposite().index()];
        let mut problem = ClassProblem {
            grid: &grid,
            labels,
            class,
            weights: labels
                .iter()
                .map(|&l| if l == class { 1.0 } else { 0.0 })
                .collect(),
            n_other,
            max_fp: (config.max_error * n_other as f64).floor() as usize,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(class.index() as u64));
        let mut class_rules = 0;
        while class_rules < config.max_rules {
            let mut uncovered: Vec<usize> = (0..labels.len())
                .filter(|&i| labels[i] == class && problem.weights[i] == 1.0)
                .collect();
            if uncovered.is_empty() {
                break;
            }
            uncovered.shuffle(&mut rng);
            let mut best: Option<(GridBox, BoxValue)> = None;
            for &seed in uncovered.iter().take(SEED_CANDIDATES) {
                let (b, v) = problem.grow(seed);
                if v.new_hits == 0 {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some((_, bv)) => {
                        v.gain() > bv.gain() || (v.gain() == bv.gain() && v.fp < bv.fp)
                    }
                };
                if better {
                    best = Some((b, v));
                }
            }
            let Some((b, _)) = best else { break };
            let covered: Vec<usize> = (0..labels.len())
                .filter(|&i| labels[i] == class && b.contains(&grid.cells[i]))
                .collect();
            if (covered.len() as f64) < config.min_covering * n_class as f64 {
                break;
            }
            for i in covered {
                problem.weights[i] = problem.weights[i].min(COVERED_WEIGHT);
            }
            class_rules += 1;
            rules.push(Rule::new(
                format!("r{}", rules.len() + 1),
                grid.intervals(&b),
                class,
            ));
        }
        log::debug!(
            "class {}: {class_rules} rules (false-positive budget {} of {})",
            training.label_space().encode(class),
            problem.max_fp,
            problem.n_other
        );
    }

    let rules = rules
        .into_iter()
        .map(|r| rule_stats(&r, training).map(|s| r.with_stats(&s)))
        .collect::<Result<Vec<_>>>()?;
    Ruleset::new(
        training.feature_names().to_vec(),
        training.feature_bounds()?,
        rules,
        training.label_space(),
    )
}

/// Relabels `data` by critical-set membership and induces rules on the
/// `{-1, +1}` problem. The `+1` rules describe the critical set.
pub fn retrain_on_ccs(
    data: &Dataset,
    predictor: &CalibratedPredictor,
    config: &InducerConfig,
) -> Result<Ruleset> {
    let relabeled = relabel_dataset(data, predictor)?;
    induce_rules(&relabeled, config)
}

/// `data` with `{-1, +1}` critical-set labels. Fails with [`Error::EmptyCcs`]
/// when no point lands in the critical set.
pub fn relabel_dataset(data: &Dataset, predictor: &CalibratedPredictor) -> Result<Dataset> {
    let labels = predictor.relabel_ccs(data.points())?;
    if !labels.contains(&Label::Positive) {
        return Err(Error::EmptyCcs);
    }
    data.relabeled(labels, LabelSpace::PlusMinusOne)
}

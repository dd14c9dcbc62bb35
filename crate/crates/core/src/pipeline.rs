use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::conformal::{CalibratedPredictor, PredictorArtifact};
use crate::data::{self, stratified_split, BlobsConfig, Dataset, SplitFractions};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_ccs_rules, evaluate_sets, positive_rule_precision, rule_reports, time_calibration,
    CalibrationTiming, CcsReport, EvaluationReport, Report,
};
use crate::inducer::{induce_rules, relabel_dataset, InducerConfig};
use crate::label::{Label, LabelSpace};
use crate::ruleset::Ruleset;
use crate::scoring::ScoreConfig;

pub const TRAIN_CSV: &str = "train.csv";
pub const CALIBRATION_CSV: &str = "calibration.csv";
pub const TEST_CSV: &str = "test.csv";
pub const RULESET_JSON: &str = "ruleset.json";
pub const INDUCE_LOG: &str = "induce.log";
pub const CCS_LABELS_CSV: &str = "ccs_labels.csv";
pub const CCS_RULESET_JSON: &str = "ccs_ruleset.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

pub fn predictor_file(epsilon: f64) -> String {
    format!("predictor_eps_{epsilon}.json")
}

pub fn predictions_file(epsilon: f64) -> String {
    format!("predictions_eps_{epsilon}.csv")
}

pub fn explain_file(epsilon: f64) -> String {
    format!("explain_eps_{epsilon}.jsonl")
}

/// Where the labeled data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Header row, features then a `{0,1}` label column.
    Csv { path: PathBuf },
    Blobs {
        #[serde(default = "default_samples")]
        n_samples: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default = "default_std_dev")]
        std_dev: f64,
    },
    Xor {
        #[serde(default = "default_samples")]
        n_samples: usize,
    },
}

fn default_samples() -> usize {
    3000
}
fn default_dim() -> usize {
    2
}
fn default_separation() -> f64 {
    3.0
}
fn default_std_dev() -> f64 {
    1.0
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Blobs {
            n_samples: default_samples(),
            dim: default_dim(),
            separation: default_separation(),
            std_dev: default_std_dev(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataSource,
    pub split: SplitFractions,
    pub epsilon_list: Vec<f64>,
    /// Significance level of the predictor that defines the critical set.
    pub ccs_epsilon: f64,
    pub score: ScoreConfig,
    pub inducer: InducerConfig,
    /// Seeds the generator, the split and the inducer.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Median of this many calibration timings; 0 disables timing.
    pub timing_repeats: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            split: SplitFractions::default(),
            epsilon_list: vec![0.01, 0.05, 0.1, 0.2],
            ccs_epsilon: 0.05,
            score: ScoreConfig::default(),
            inducer: InducerConfig::default(),
            seed: 0,
            output_dir: PathBuf::from("out"),
            timing_repeats: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::schema(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.score.validate()?;
        self.inducer.validate()?;
        if self.epsilon_list.is_empty() {
            return Err(Error::invalid("epsilon_list is empty"));
        }
        for &eps in self.epsilon_list.iter().chain([&self.ccs_epsilon]) {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::invalid(format!("epsilon {eps} is outside (0, 1)")));
            }
        }
        Ok(())
    }

    /// The sorted, deduplicated union of `epsilon_list` and `ccs_epsilon`.
    pub fn calibration_epsilons(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.epsilon_list.clone();
        all.push(self.ccs_epsilon);
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }
}

/// The staged workflow. Every stage reads its inputs from and writes its
/// artifacts to `output_dir`, so stages can run in separate processes.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.config.output_dir.join(file)
    }

    pub fn load_data(&self) -> Result<Dataset> {
        match &self.config.data {
            DataSource::Csv { path } => Dataset::read_csv(path, LabelSpace::ZeroOne),
            &DataSource::Blobs {
                n_samples,
                dim,
                separation,
                std_dev,
            } => data::two_blobs(&BlobsConfig {
                n_samples,
                dim,
                separation,
                std_dev,
                seed: self.config.seed,
            }),
            &DataSource::Xor { n_samples } => data::xor(n_samples, self.config.seed),
        }
    }

    /// Splits the data, induces rules on the training part and writes the
    /// splits, `ruleset.json` and `induce.log`.
    pub fn induce(&self) -> Result<Ruleset> {
        let data = self.load_data()?;
        fs::create_dir_all(&self.config.output_dir)?;
        let split = stratified_split(&data, self.config.split, self.config.seed)?;
        split.train.write_csv(self.path(TRAIN_CSV))?;
        split.calibration.write_csv(self.path(CALIBRATION_CSV))?;
        split.test.write_csv(self.path(TEST_CSV))?;
        let inducer = InducerConfig {
            seed: self.config.inducer.seed ^ self.config.seed,
            ..self.config.inducer
        };
        let ruleset = induce_rules(&split.train, &inducer)?;
        fs::write(self.path(RULESET_JSON), ruleset.to_json()?)?;
        fs::write(self.path(INDUCE_LOG), induce_log(&split.train, &ruleset))?;
        log::info!(
            "induced {} rules from {} samples",
            ruleset.len(),
            split.train.len()
        );
        Ok(ruleset)
    }

    fn read_split(&self, file: &str) -> Result<Dataset> {
        Dataset::read_csv(self.path(file), LabelSpace::ZeroOne)
    }

    pub fn read_ruleset(&self, file: &str) -> Result<Ruleset> {
        Ruleset::from_json(&fs::read_to_string(self.path(file))?)
    }

    /// Writes one predictor per ε in [`PipelineConfig::calibration_epsilons`].
    pub fn calibrate(&self) -> Result<Vec<CalibratedPredictor>> {
        let ruleset = self.read_ruleset(RULESET_JSON)?;
        let calibration = self.read_split(CALIBRATION_CSV)?;
        let epsilons = self.config.calibration_epsilons();
        let base =
            CalibratedPredictor::calibrate(ruleset, self.config.score, &calibration, epsilons[0])?;
        let mut out = Vec::with_capacity(epsilons.len());
        for eps in epsilons {
            let predictor = base.with_epsilon(eps)?;
            let artifact = predictor.to_artifact(RULESET_JSON, true)?;
            write_json(&self.path(&predictor_file(eps)), &artifact)?;
            out.push(predictor);
        }
        Ok(out)
    }

    pub fn load_predictor(&self, epsilon: f64) -> Result<CalibratedPredictor> {
        let text = fs::read_to_string(self.path(&predictor_file(epsilon)))?;
        let artifact: PredictorArtifact = serde_json::from_str(&text)?;
        let ruleset = self.read_ruleset(&artifact.ruleset_ref.path)?;
        CalibratedPredictor::from_artifact(artifact, ruleset)
    }

    /// Writes the prediction sets of the test split for every ε in
    /// `epsilon_list`, with per-rule breakdowns when `explain` is set.
    pub fn predict(&self, explain: bool) -> Result<()> {
        let test = self.read_split(TEST_CSV)?;
        for &eps in &self.config.epsilon_list {
            let predictor = self.load_predictor(eps)?;
            let space = predictor.ruleset().label_space();
            let mut csv =
                csv::Writer::from_path(self.path(&predictions_file(eps))).map_err(csv_io)?;
            csv.write_record(["index", "s0", "s1", "set", "in_ccs", "truth"])
                .map_err(csv_io)?;
            let mut explain_out = if explain {
                Some(BufWriter::new(fs::File::create(
                    self.path(&explain_file(eps)),
                )?))
            } else {
                None
            };
            for (i, (point, truth)) in test.iter().enumerate() {
                let (set, breakdowns) = predictor.explain(point)?;
                let members: Vec<String> = set
                    .labels
                    .labels()
                    .map(|l| space.encode(l).to_string())
                    .collect();
                csv.write_record([
                    i.to_string(),
                    set.scores[0].to_string(),
                    set.scores[1].to_string(),
                    format!("{{{}}}", members.join(",")),
                    set.in_ccs.to_string(),
                    test.label_space().encode(truth).to_string(),
                ])
                .map_err(csv_io)?;
                if let Some(out) = explain_out.as_mut() {
                    let line = serde_json::json!({
                        "index": i,
                        "set": members,
                        "in_ccs": set.in_ccs,
                        "breakdowns": breakdowns,
                    });
                    serde_json::to_writer(&mut *out, &line)?;
                    out.write_all(b"\n")?;
                }
            }
            csv.flush()?;
            if let Some(mut out) = explain_out {
                out.flush()?;
            }
        }
        Ok(())
    }

    /// Relabels the training split by critical-set membership at
    /// `ccs_epsilon` and induces `{-1, +1}` rules on it.
    pub fn ccs(&self) -> Result<Ruleset> {
        let predictor = self.load_predictor(self.config.ccs_epsilon)?;
        let train = self.read_split(TRAIN_CSV)?;
        let relabeled = relabel_dataset(&train, &predictor)?;
        relabeled.write_csv(self.path(CCS_LABELS_CSV))?;
        let inducer = InducerConfig {
            seed: self.config.inducer.seed ^ self.config.seed,
            ..self.config.inducer
        };
        let retrained = induce_rules(&relabeled, &inducer)?;
        fs::write(self.path(CCS_RULESET_JSON), retrained.to_json()?)?;
        Ok(retrained)
    }

    /// Builds the report from the artifacts on disk and writes it as JSON
    /// and as a text table. The critical-set block is included when
    /// `ccs_ruleset.json` exists.
    pub fn evaluate(&self) -> Result<Report> {
        let test = self.read_split(TEST_CSV)?;
        let ruleset = self.read_ruleset(RULESET_JSON)?;
        let truths = test.labels();
        let mut rows = Vec::new();
        for &eps in &self.config.epsilon_list {
            let predictor = self.load_predictor(eps)?;
            let sets = test
                .points()
                .iter()
                .map(|p| predictor.predict_set(p).map(|s| s.labels))
                .collect::<Result<Vec<_>>>()?;
            let timing = if self.config.timing_repeats > 0 {
                let calibration = self.read_split(CALIBRATION_CSV)?;
                time_calibration(predictor.scorer(), &calibration, self.config.timing_repeats)?
            } else {
                CalibrationTiming::UNMEASURED
            };
            rows.push(EvaluationReport {
                epsilon: eps,
                sets: evaluate_sets(&sets, truths)?,
                calibration_timing: timing,
            });
        }
        let ccs = if self.path(CCS_RULESET_JSON).exists() {
            let retrained = self.read_ruleset(CCS_RULESET_JSON)?;
            Some(CcsReport {
                epsilon: self.config.ccs_epsilon,
                metrics: evaluate_ccs_rules(&retrained, &test)?,
                original_positive_precision: positive_rule_precision(&ruleset, &test)?,
                retrained_positive_precision: positive_rule_precision(&retrained, &test)?,
                per_rule: rule_reports(&retrained, &test)?,
            })
        } else {
            None
        };
        let report = Report {
            rows,
            ccs,
            per_rule: rule_reports(&ruleset, &test)?,
        };
        fs::write(self.path(REPORT_JSON), report.to_json()?)?;
        fs::write(self.path(REPORT_TXT), report.to_table())?;
        Ok(report)
    }

    /// Every stage in order.
    pub fn run(&self, explain: bool) -> Result<Report> {
        self.induce()?;
        self.calibrate()?;
        self.predict(explain)?;
        self.ccs()?;
        self.evaluate()
    }
}

fn induce_log(train: &Dataset, ruleset: &Ruleset) -> String {
    let counts = train.class_counts();
    let mut log = format!(
        "training samples: {} ({} class 0, {} class 1)\nrules: {}\n",
        train.len(),
        counts[0],
        counts[1],
        ruleset.len()
    );
    for rule in ruleset.rules() {
        log.push_str(&format!(
            "{} -> {}: covering {:.4}, error {:.4}, relevance {:.4}\n",
            rule.id,
            ruleset.label_space().encode(rule.label),
            rule.covering,
            rule.error,
            rule.relevance
        ));
    }
    for class in ruleset.degenerate_classes() {
        let name = if class == Label::Positive { "1" } else { "0" };
        log.push_str(&format!(
            "warning: class {name} has no rule with positive relevance\n"
        ));
    }
    log
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

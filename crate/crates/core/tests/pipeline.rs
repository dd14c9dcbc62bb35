use std::fs;
use std::path::Path;

use confiderai::pipeline::{self, DataSource, Pipeline, PipelineConfig};
use confiderai::{Error, Label, PredictorArtifact, Ruleset};

fn config(dir: &Path) -> PipelineConfig {
    PipelineConfig {
        data: DataSource::Blobs {
            n_samples: 1500,
            dim: 2,
            separation: 3.0,
            std_dev: 1.0,
        },
        seed: 11,
        output_dir: dir.to_path_buf(),
        ..PipelineConfig::default()
    }
}

fn calibrated(dir: &Path) -> Pipeline {
    let p = Pipeline::new(config(dir)).unwrap();
    p.induce().unwrap();
    p.calibrate().unwrap();
    p
}

#[test]
fn blobs_pipeline_produces_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(config(dir.path())).unwrap();
    let report = p.run(true).unwrap();
    let ruleset = p.read_ruleset(pipeline::RULESET_JSON).unwrap();
    assert!(ruleset.len() >= 2);
    assert_eq!(report.rows.len(), 4);
    let row = report.rows.iter().find(|r| r.epsilon == 0.05).unwrap();
    // Finite-sample slack for 300 test points.
    assert!(row.sets.avg_err <= 0.05 + 3.0 * (0.05f64 * 0.95 / 300.0).sqrt());
    let ccs = report.ccs.as_ref().unwrap();
    assert!(ccs.metrics.tpr.is_some() && ccs.metrics.ppv.is_some() && ccs.metrics.f1.is_some());
    for name in [
        "report.json",
        "report.txt",
        "ccs_labels.csv",
        "induce.log",
        "predictions_eps_0.01.csv",
    ] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let table = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(table.contains("TPR"));
}

#[test]
fn explain_lists_factors_for_every_nontrivial_set() {
    let dir = tempfile::tempdir().unwrap();
    let p = calibrated(dir.path());
    p.predict(true).unwrap();
    let text = fs::read_to_string(dir.path().join(pipeline::explain_file(0.05))).unwrap();
    let mut lines = 0;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let breakdowns = v["breakdowns"].as_array().unwrap();
        assert_eq!(breakdowns.len(), 2);
        for b in breakdowns {
            let product: f64 = b["per_rule"]
                .as_array()
                .unwrap()
                .iter()
                .map(|f| f["tau_hat"].as_f64().unwrap() * f["relevance_factor"].as_f64().unwrap())
                .product();
            assert!((product - b["score"].as_f64().unwrap()).abs() <= 1e-12);
        }
        lines += 1;
    }
    assert_eq!(lines, 300);
}

#[test]
fn tampered_predictor_fails_closed() {
    let dir = tempfile::tempdir().unwrap();
    let p = calibrated(dir.path());
    let path = dir.path().join(pipeline::predictor_file(0.1));
    let mut artifact: PredictorArtifact =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    artifact.s_eps *= 0.5;
    fs::write(&path, serde_json::to_string(&artifact).unwrap()).unwrap();
    assert!(matches!(p.load_predictor(0.1), Err(Error::Schema(_))));

    let path = dir.path().join(pipeline::predictor_file(0.2));
    fs::write(&path, "{\"epsilon\": 0.2}").unwrap();
    assert!(matches!(p.load_predictor(0.2), Err(Error::Schema(_))));
}

#[test]
fn edited_ruleset_invalidates_predictors() {
    let dir = tempfile::tempdir().unwrap();
    let p = calibrated(dir.path());
    let mut ruleset = p.read_ruleset(pipeline::RULESET_JSON).unwrap();
    let mut rules = ruleset.rules().to_vec();
    rules[0].intervals[0].low += 1e-9;
    ruleset = Ruleset::new(
        ruleset.feature_names().to_vec(),
        ruleset.bounds().clone(),
        rules,
        ruleset.label_space(),
    )
    .unwrap();
    fs::write(
        dir.path().join(pipeline::RULESET_JSON),
        ruleset.to_json().unwrap(),
    )
    .unwrap();
    assert!(matches!(p.load_predictor(0.05), Err(Error::Schema(_))));
}

#[test]
fn retrained_rules_stay_in_bounds_and_use_signed_labels() {
    let dir = tempfile::tempdir().unwrap();
    let p = calibrated(dir.path());
    let retrained = p.ccs().unwrap();
    assert_eq!(
        retrained.label_space(),
        confiderai::LabelSpace::PlusMinusOne
    );
    let bounds = retrained.bounds();
    for r in retrained.rules() {
        for (i, iv) in r.intervals.iter().enumerate() {
            assert!(iv.low >= bounds.lower()[i] && iv.high <= bounds.upper()[i]);
        }
    }
    assert!(retrained.rules_for(Label::Positive).count() >= 1);
    let labels = fs::read_to_string(dir.path().join(pipeline::CCS_LABELS_CSV)).unwrap();
    assert!(labels.lines().skip(1).any(|l| l.ends_with(",-1")));
    assert!(!labels.lines().skip(1).any(|l| l.ends_with(",0")));
}

#[test]
fn full_sets_leave_the_critical_set_empty() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(PipelineConfig {
        ccs_epsilon: 0.001,
        ..config(dir.path())
    })
    .unwrap();
    p.induce().unwrap();
    p.calibrate().unwrap();
    assert!(matches!(p.ccs(), Err(Error::EmptyCcs)));
}

#[test]
fn csv_problems_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let one_class = dir.path().join("one.csv");
    fs::write(&one_class, "X1,X2,label\n0.1,0.2,1\n0.3,0.4,1\n0.5,0.6,1\n").unwrap();
    let p = Pipeline::new(PipelineConfig {
        data: DataSource::Csv { path: one_class },
        split: confiderai::SplitFractions {
            train: 1.0 / 3.0,
            calibration: 1.0 / 3.0,
            test: 1.0 / 3.0,
        },
        ..config(dir.path())
    })
    .unwrap();
    let err = p.induce().unwrap_err();
    assert!(matches!(err, Error::SingleClass(_)));
    assert!(err.to_string().contains("single-class data"));

    let nan = dir.path().join("nan.csv");
    fs::write(&nan, "X1,X2,label\n0.1,0.2,1\n0.3,NaN,0\n").unwrap();
    let p = Pipeline::new(PipelineConfig {
        data: DataSource::Csv { path: nan },
        ..config(dir.path())
    })
    .unwrap();
    let msg = p.induce().unwrap_err().to_string();
    assert!(msg.contains("line 3") && msg.contains("X2"), "{msg}");
}

#[test]
fn missing_upstream_artifact_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(config(dir.path())).unwrap();
    assert!(matches!(p.calibrate(), Err(Error::Io(_))));
}

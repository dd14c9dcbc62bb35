use confiderai::data::{two_blobs, BlobsConfig};
use confiderai::evaluation::time_calibration;
use confiderai::{induce_rules, InducerConfig, ScoreConfig, Scorer};

#[test]
fn calibration_time_is_positive_and_grows_with_rule_count() {
    let train = two_blobs(&BlobsConfig {
        n_samples: 4000,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    let calibration = two_blobs(&BlobsConfig {
        n_samples: 10_000,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let scorer = |max_rules| {
        let rs = induce_rules(
            &train,
            &InducerConfig {
                max_rules,
                ..Default::default()
            },
        )
        .unwrap();
        Scorer::new(rs, ScoreConfig::default()).unwrap()
    };
    let (small, large) = (scorer(1), scorer(2));
    assert_eq!((small.ruleset().len(), large.ruleset().len()), (2, 4));

    let t_small = time_calibration(&small, &calibration, 5).unwrap();
    let t_large = time_calibration(&large, &calibration, 5).unwrap();
    assert!(t_small.measured && t_small.seconds > 0.0 && t_small.seconds < 60.0);
    assert!(
        t_large.seconds > t_small.seconds,
        "{t_small:?} vs {t_large:?}"
    );
}

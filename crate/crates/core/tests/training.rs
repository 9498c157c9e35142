use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vservo::arm::Joints;
use vservo::cli::{cmd_collect, cmd_train, load_dataset, load_models, train_report_text};
use vservo::config::Config;
use vservo::estimator::predict_jacobian;
use vservo::experiments::dataset::{camera_jacobian, collect_offline_dataset, train_models};
use vservo::experiments::home;

/// Worst column error at `q`. Joint 6 spins about the tool axis, so its
/// column vanishes; that column is measured against the whole Jacobian.
fn worst_column_error(config: &Config, models: &[vservo::rbf::RbfNetwork], q: &Joints) -> f64 {
    let plant = &config.settings.plant;
    let truth = camera_jacobian(&plant.dh, &plant.camera, q);
    let est = predict_jacobian(models, q);
    (0..6)
        .map(|c| {
            let scale = if c == 5 { truth.norm() } else { truth.column(c).norm() };
            (est.column(c) - truth.column(c)).norm() / scale
        })
        .fold(0.0, f64::max)
}

#[test]
fn estimator_generalizes_near_home() {
    let config = Config::default();
    let s = &config.settings;
    let data = collect_offline_dataset(&s.plant.dh, &s.plant.camera, &s.controller, &config.dataset, config.seed).unwrap();
    let (models, report) = train_models(&data, &config.train, config.seed).unwrap();
    assert!(report.estimator_rms.iter().all(|r| r.is_finite()));

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut errors: Vec<f64> = (0..20)
        .map(|_| {
            let q = home() + Joints::from_fn(|_, _| rng.random_range(-0.2..0.2));
            worst_column_error(&config, &models.estimator, &q)
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    eprintln!("held-out worst-column errors: median {:.4}, max {:.4}", errors[10], errors[19]);
    assert!(worst_column_error(&config, &models.estimator, &home()) < 0.05);
    assert!(errors[19] < 0.05, "max {}", errors[19]);
}

#[test]
fn written_artifacts_match_the_library() {
    let text = "seed = 4\ndataset.n_samples = 300\nrbf.estimator_hidden = 40\nrbf.controller_hidden = 10\n";
    let config = Config::parse(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (data_dir, model_dir) = (dir.path().join("data"), dir.path().join("models"));
    fs::create_dir_all(&data_dir).unwrap();
    fs::create_dir_all(&model_dir).unwrap();
    cmd_collect(&config, &data_dir).unwrap();
    cmd_train(&config, &data_dir, &model_dir).unwrap();

    let s = &config.settings;
    let data = collect_offline_dataset(&s.plant.dh, &s.plant.camera, &s.controller, &config.dataset, config.seed).unwrap();
    let reread = load_dataset(&config, &data_dir).unwrap();
    for (a, b) in data
        .estimator
        .iter()
        .chain(&data.controller)
        .zip(reread.estimator.iter().chain(&reread.controller))
    {
        assert_eq!(a, b);
    }

    let (models, report) = train_models(&data, &config.train, config.seed).unwrap();
    assert_eq!(load_models(&config, &model_dir).unwrap(), models);
    let written = fs::read_to_string(model_dir.join("train_report.txt")).unwrap();
    assert_eq!(written, train_report_text(&config, &report));
    for line in written.lines().filter(|l| !l.starts_with('#')) {
        let value: f64 = line.split(" = ").nth(1).unwrap().parse().unwrap();
        assert!(value.is_finite() && value >= 0.0, "{line}");
    }
}

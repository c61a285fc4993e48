use std::fs;
use std::path::Path;

use vertiport::agents::train::{
    read_training_log, train, TrainOptions, BEST_CHECKPOINT, CONFIG_FILE, LAST_CHECKPOINT, LOG_COLUMNS, LOG_FILE,
    STATE_FILE,
};
use vertiport::{Error, ScenarioConfig};

fn small_config() -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        seed: 3,
        ..ScenarioConfig::default()
    };
    cfg.ppo.n_steps = 1200;
    cfg.ppo.batch_size = 300;
    cfg.ppo.epochs_per_update = 2;
    cfg.ppo.learning_rate = 3e-4;
    cfg.ppo.max_timesteps = 3600;
    cfg
}

fn quiet(dir: &Path) -> TrainOptions {
    TrainOptions::new(dir)
}

fn bytes(path: impl AsRef<Path>) -> Vec<u8> {
    fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let cfg = small_config();
    let straight = tempfile::tempdir().unwrap();
    train(&cfg, &quiet(straight.path())).unwrap();

    let split = tempfile::tempdir().unwrap();
    let first = train(
        &cfg,
        &TrainOptions {
            max_updates: Some(1),
            ..quiet(split.path())
        },
    )
    .unwrap();
    assert_eq!(first.updates, 1);
    let rest = train(
        &cfg,
        &TrainOptions {
            resume: true,
            ..quiet(split.path())
        },
    )
    .unwrap();
    assert_eq!(rest.updates, 3);
    assert_eq!(rest.timesteps, 3600);

    for file in [LOG_FILE, LAST_CHECKPOINT, BEST_CHECKPOINT, STATE_FILE] {
        assert!(
            bytes(straight.path().join(file)) == bytes(split.path().join(file)),
            "{file} differs after resume"
        );
    }
}

#[test]
fn log_has_expected_columns_and_losses_after_first_update() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let summary = train(&cfg, &quiet(dir.path())).unwrap();
    let text = fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
    assert_eq!(text.lines().next().unwrap(), LOG_COLUMNS.join(","));

    let rows = read_training_log(&summary.log_path).unwrap();
    assert_eq!(rows.len(), summary.episodes);
    assert!(!rows.is_empty());
    let mut last_steps = 0;
    for (k, r) in rows.iter().enumerate() {
        assert_eq!(r.episode, k + 1);
        assert!(r.steps > last_steps && r.steps <= summary.timesteps);
        last_steps = r.steps;
        assert!(r.total_reward.is_finite());
        // Rows logged in the first rollout precede any update.
        let first_rollout = r.steps <= cfg.ppo.n_steps as u64;
        assert_eq!(r.policy_loss.is_none(), first_rollout, "row {k}");
        assert_eq!(r.entropy.is_none(), first_rollout, "row {k}");
    }
}

#[test]
fn zero_budget_writes_config_and_no_checkpoint() {
    let mut cfg = small_config();
    cfg.ppo.max_timesteps = 0;
    let dir = tempfile::tempdir().unwrap();
    let summary = train(&cfg, &quiet(dir.path())).unwrap();
    assert_eq!(summary.updates, 0);
    assert_eq!(summary.timesteps, 0);
    let saved = ScenarioConfig::load(dir.path().join(CONFIG_FILE)).unwrap();
    assert_eq!(saved, cfg);
    assert!(!dir.path().join(LAST_CHECKPOINT).exists());
    assert!(read_training_log(dir.path().join(LOG_FILE)).unwrap().is_empty());
}

#[test]
fn resume_with_changed_scenario_is_rejected() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    train(
        &cfg,
        &TrainOptions {
            max_updates: Some(1),
            ..quiet(dir.path())
        },
    )
    .unwrap();
    let mut changed = cfg.clone();
    changed.battery_threshold = 40.0;
    let err = train(
        &changed,
        &TrainOptions {
            resume: true,
            ..quiet(dir.path())
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::HashMismatch { .. }), "{err}");
}

#[test]
fn resume_with_different_worker_count_is_rejected() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    train(
        &cfg,
        &TrainOptions {
            max_updates: Some(1),
            ..quiet(dir.path())
        },
    )
    .unwrap();
    let err = train(
        &cfg,
        &TrainOptions {
            resume: true,
            workers: 2,
            ..quiet(dir.path())
        },
    )
    .unwrap_err();
    assert!(err.to_string().contains("workers"), "{err}");
}

#[test]
fn multi_worker_training_is_reproducible() {
    let cfg = small_config();
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            train(
                &cfg,
                &TrainOptions {
                    workers: 3,
                    ..quiet(dir.path())
                },
            )
            .unwrap();
            (bytes(dir.path().join(LOG_FILE)), bytes(dir.path().join(LAST_CHECKPOINT)))
        })
        .collect();
    assert!(runs[0] == runs[1]);
}

#[test]
fn zero_workers_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = train(
        &small_config(),
        &TrainOptions {
            workers: 0,
            ..quiet(dir.path())
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::Config { .. }), "{err}");
}

use clpo::checkpoint::Checkpoint;
use clpo::metrics::{eval_checkpoint, read_eval_csv, write_eval_csv, EvalOptions, PassEstimator};
use clpo::rng;
use clpo::task::{generate_problem, read_fixtures, render, verify, write_fixtures, GenConfig};
use clpo::trainer::{test_set, train, DataSource, EvalConfig, TrainConfig};

fn small() -> TrainConfig {
    TrainConfig {
        steps: 20,
        batch_size: 32,
        val_size: 20,
        val_samples: 4,
        eval_every: 10,
        eval: EvalConfig {
            size: 50,
            samples: 16,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn fixtures_survive_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng::from_seed(9);
    let problems: Vec<_> = (0..50)
        .map(|i| generate_problem(format!("f{i}"), &mut r, &GenConfig::default()).unwrap())
        .collect();
    let path = dir.path().join("fixtures.jsonl");
    write_fixtures(&path, &problems).unwrap();
    let back = read_fixtures(&path).unwrap();
    assert_eq!(back, problems);
    for p in &back {
        assert!(verify(p.answer, p).unwrap());
        assert!(!render(p).is_empty());
    }
    // a tampered answer is rejected on load
    let text = std::fs::read_to_string(&path).unwrap();
    let first = &back[0];
    let bad = text.replacen(
        &format!("\"answer\":{}", first.answer),
        &format!("\"answer\":{}", (first.answer + 1) % 10),
        1,
    );
    std::fs::write(&path, bad).unwrap();
    assert!(read_fixtures(&path).is_err());
}

#[test]
fn reloaded_checkpoint_reproduces_the_final_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        select_best: false,
        ..small()
    };
    let run = train(&cfg).unwrap();
    run.write(dir.path()).unwrap();
    let ckpt = Checkpoint::load(&dir.path().join("checkpoint.json")).unwrap();
    assert_eq!(ckpt.policy, run.selected_policy);

    let report = eval_checkpoint(
        &ckpt.policy,
        &test_set(&cfg).unwrap(),
        &EvalOptions {
            samples: cfg.eval.samples,
            seed: clpo::trainer::test_eval_seed(&cfg),
            temperature: 1.0,
            estimator: PassEstimator::Unbiased,
            checkpoint_id: "reload".into(),
        },
    )
    .unwrap();
    let original = run.final_eval.as_ref().unwrap();
    assert_eq!(report.pass_at_k, original.pass_at_k);

    let path = dir.path().join("again.csv");
    write_eval_csv(&report, &path).unwrap();
    let rows = read_eval_csv(&path).unwrap();
    assert_eq!(rows.len(), 50);
    assert!(rows.iter().all(|r| r.n == 16 && r.pass.len() == 5));
}

#[test]
fn fixed_dataset_training_runs_and_logs_every_step() {
    let cfg = TrainConfig {
        data: DataSource::Fixed { size: 100 },
        ..small()
    };
    let run = train(&cfg).unwrap();
    assert_eq!(run.telemetry.len(), 20);
    assert!(run.telemetry.iter().all(|r| r.counts.n_batch == 32));
    let a = serde_json::to_string(&run.telemetry).unwrap();
    let b = serde_json::to_string(&train(&cfg).unwrap().telemetry).unwrap();
    assert_eq!(a, b);
}

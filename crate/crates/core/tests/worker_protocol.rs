use std::path::PathBuf;
use std::time::Instant;

use qdnas_core::domain::{GenomeId, NetworkGenome, Origin};
use qdnas_core::eval::{evaluate_batch, EvalBudget, EvalError, Evaluator, WorkerConfig, WorkerEvaluator};

fn fake_worker() -> WorkerConfig {
    let script: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", "fake_worker.py"]
        .iter()
        .collect();
    let mut cfg = WorkerConfig::new(format!("python3 -u {}", script.display()));
    cfg.startup_timeout_s = 30.0;
    cfg
}

fn genome(id: u64, source: &str) -> NetworkGenome {
    NetworkGenome::new(GenomeId(id), source.to_string(), vec![], Origin::Seed).unwrap()
}

fn budget(timeout_s: f64) -> EvalBudget {
    EvalBudget {
        epochs: 1,
        train_subset: Some(2000),
        test_subset: None,
        timeout_s,
    }
}

#[test]
fn trainable_and_untrainable_responses() {
    let w = WorkerEvaluator::spawn(fake_worker()).unwrap();
    let ok = w.evaluate(&genome(1, "class Net: pass"), &budget(10.0)).unwrap();
    assert!(ok.trainable);
    assert_eq!((ok.depth, ok.width, ok.flops), (2, 10, 26_624.0));
    assert_eq!(ok.loss, 1.0 / 16.0);

    let bad = w.evaluate(&genome(2, "BROKEN"), &budget(10.0)).unwrap();
    assert!(!bad.trainable);
    assert_eq!(bad.loss, f64::INFINITY);
    assert!(bad.error.unwrap().contains("NameError"));
}

#[test]
fn timeout_kills_and_restarts() {
    let w = WorkerEvaluator::spawn(fake_worker()).unwrap();
    let t = Instant::now();
    let m = w.evaluate(&genome(1, "SLEEP"), &budget(0.001)).unwrap();
    assert!(!m.trainable);
    assert!(m.error.unwrap().contains("timeout"));
    assert!(t.elapsed().as_secs() < 25);
    let after = w.evaluate(&genome(2, "fine"), &budget(10.0)).unwrap();
    assert!(after.trainable);
}

#[test]
fn crash_is_untrainable_and_worker_recovers() {
    let w = WorkerEvaluator::spawn(fake_worker()).unwrap();
    let m = w.evaluate(&genome(1, "CRASH"), &budget(10.0)).unwrap();
    assert!(!m.trainable);
    assert!(w.evaluate(&genome(2, "fine"), &budget(10.0)).unwrap().trainable);
}

#[test]
fn protocol_violations_are_fatal() {
    let w = WorkerEvaluator::spawn(fake_worker()).unwrap();
    assert!(matches!(
        w.evaluate(&genome(1, "GARBLE"), &budget(10.0)),
        Err(EvalError::Protocol(_))
    ));
    let w = WorkerEvaluator::spawn(fake_worker()).unwrap();
    assert!(matches!(
        w.evaluate(&genome(1, "WRONGID"), &budget(10.0)),
        Err(EvalError::Protocol(_))
    ));
}

#[test]
fn missing_ready_line_fails_to_spawn() {
    let mut cfg = WorkerConfig::new("echo hello");
    cfg.startup_timeout_s = 5.0;
    assert!(WorkerEvaluator::spawn(cfg).is_err());
    assert!(matches!(
        WorkerEvaluator::spawn(WorkerConfig::new("true")),
        Err(EvalError::Spawn(_))
    ));
}

#[test]
fn pooled_batch_is_order_aligned() {
    let mut cfg = fake_worker();
    cfg.processes = 3;
    let w = WorkerEvaluator::spawn(cfg).unwrap();
    let genomes: Vec<NetworkGenome> = (0..20)
        .map(|i| {
            let src = if i % 5 == 0 { "BROKEN".to_string() } else { "x".repeat(i as usize + 1) };
            genome(i, &src)
        })
        .collect();
    let refs: Vec<&NetworkGenome> = genomes.iter().collect();
    let out = evaluate_batch(&w, &refs, &budget(10.0)).unwrap();
    assert_eq!(out.len(), 20);
    for (i, m) in out.iter().enumerate() {
        if i % 5 == 0 {
            assert!(!m.trainable);
        } else {
            assert_eq!(m.loss, 1.0 / (i as f64 + 2.0));
        }
    }
}

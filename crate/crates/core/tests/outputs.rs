use std::fs;

use resam_core::audit::randomized_audit;
use resam_core::experiment::{execute, write_audit_report, ExperimentConfig, RunSummary, SweepIndex};
use resam_core::simulator::run;
use resam_core::{AuditReport, Generator, RngStream, RuleId, StepMetrics};

fn grid_config() -> ExperimentConfig {
    ExperimentConfig::from_json(
        r#"{
            "n": 9, "f": 2, "steps": 40, "gamma": 0.5, "beta": 0.9, "rule": "mda",
            "problem": "logistic", "dim": 4, "mu": 0.5, "n_samples": 60, "batch": 5,
            "replicas": 2,
            "sweep": {"beta": [0.0, 0.99], "attack": ["little", "label_flip"], "rule": ["cwtm", "cge"]}
        }"#,
    )
    .unwrap()
}

#[test]
fn sweep_outputs_are_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = execute(&grid_config(), dir.path()).unwrap();
    assert_eq!(outcome.index.runs.len(), 16);

    let index: SweepIndex = serde_json::from_str(&fs::read_to_string(&outcome.index_path).unwrap()).unwrap();
    assert_eq!(index, outcome.index);
    for entry in &index.runs {
        let csv = fs::read_to_string(dir.path().join(&entry.csv)).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(StepMetrics::CSV_HEADER));
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 40);
        assert!(rows.iter().all(|r| r.len() == 7));
        assert_eq!(rows.last().unwrap()[0], 40.0);

        let summary: RunSummary = serde_json::from_str(&fs::read_to_string(dir.path().join(&entry.summary)).unwrap()).unwrap();
        assert_eq!(summary.id, entry.id);
        assert_eq!(summary.rule, entry.rule);
        assert_eq!(summary.final_accuracy, entry.final_accuracy);
        let acc = entry.final_accuracy.unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
}

#[test]
fn summary_matches_direct_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = grid_config();
    let outcome = execute(&config, dir.path()).unwrap();
    let plan = config.plan().unwrap();
    let entry = &outcome.index.runs[5];
    let planned = plan.iter().find(|p| p.id == entry.id).unwrap();
    let direct = run::<f64>(&planned.config).unwrap();
    assert_eq!(entry.final_accuracy, direct.final_accuracy);
    assert_eq!(entry.avg_grad_sq, Some(direct.avg_grad_sq));
}

#[test]
fn audit_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let report =
        randomized_audit::<f64>(&RuleId::Meamed, 6, 2, 2, 50, &Generator::ALL, &RngStream::new(5, 0)).unwrap();
    let path = dir.path().join("audit.json");
    write_audit_report(&path, &report).unwrap();
    let back: AuditReport<f64> = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, report);
    assert!(!back.violated);
    assert!(back.lambda_empirical <= back.lambda_claimed.unwrap());
}

mod common;

use stegogeom::harness::artifacts::{parse_csv_stamp, ArtifactIndex, INDEX_FILE};
use stegogeom::harness::report::audit;
use stegogeom::harness::artifacts::Artifacts;
use stegogeom::harness::experiment;
use stegogeom::harness::{run_universe_experiment, ExperimentConfig, Scenario};
use stegogeom::stegodet::{RegretMatrix, RegretRecord};
use stegogeom::select::StrategyKind;
use stegogeom::Error;

#[test]
fn tiny_universe_runs_end_to_end_and_audits() {
    let config = common::with_anneal(common::tiny_config(3));
    let dir = tempfile::tempdir().unwrap();
    let out = run_universe_experiment(&config, dir.path()).unwrap();

    assert_eq!(out.regret.len(), 4);
    for i in 0..4 {
        assert_eq!(out.regret.at(i, i).regret, 0.0);
    }
    assert_eq!(out.metrics.len(), 3);
    for table in out.metrics.values() {
        assert!(table.nscd.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(table.energy_mmd.iter().all(|v| v.is_finite()));
        assert!(table.l2_cg.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
    // every target gets one record per strategy per scenario when a classifier exists
    let per = if out.representatives.len() >= 2 { 5 } else { 3 };
    assert_eq!(out.records.len(), 3 * 4 * per);
    assert!(out.records.iter().all(|r| r.regret.is_finite()));
    assert!(out
        .summary
        .iter()
        .any(|r| r.scenario == Scenario::Mixed5050 && r.strategy == StrategyKind::MinNscd));
    assert_eq!(out.sample_sweep.len(), 2 * 3);
    assert_eq!(out.anneal.as_ref().unwrap().len(), 2);

    let index: ArtifactIndex =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(INDEX_FILE)).unwrap()).unwrap();
    assert!(index.failed_stage.is_none());
    assert!(index.completed_stages.iter().any(|s| s == "anneal"));
    let summary = std::fs::read_to_string(dir.path().join("reports/summary.csv")).unwrap();
    assert_eq!(parse_csv_stamp(&summary).unwrap(), config.provenance());

    let report = audit(dir.path(), &config).unwrap();
    assert_eq!(report.summary, out.summary);

    let other = ExperimentConfig { seed: 4, ..config.clone() };
    assert!(matches!(audit(dir.path(), &other), Err(Error::HashMismatch { .. })));
}

#[test]
fn tampered_summary_fails_the_audit() {
    let config = common::tiny_config(5);
    let dir = tempfile::tempdir().unwrap();
    run_universe_experiment(&config, dir.path()).unwrap();
    let p = dir.path().join("reports/summary.csv");
    let text = std::fs::read_to_string(&p).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cells: Vec<String> = lines[2].split(',').map(str::to_string).collect();
    let last = cells.len() - 1;
    cells[last] = "99.5".into();
    lines[2] = cells.join(",");
    std::fs::write(&p, lines.join("\n") + "\n").unwrap();
    assert!(matches!(audit(dir.path(), &config), Err(Error::Audit(_))));
}

#[test]
fn invalid_config_is_rejected_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let bad = ExperimentConfig { variance_threshold: 0.0, ..common::tiny_config(1) };
    let err = run_universe_experiment(&bad, dir.path()).unwrap_err();
    assert!(err.is_config_error());
    assert!(!dir.path().join(INDEX_FILE).exists());
}

#[test]
fn classifier_strategies_run_with_several_representatives() {
    let config = common::tiny_config(6);
    let dir = tempfile::tempdir().unwrap();
    let mut a = Artifacts::create(dir.path(), config.provenance()).unwrap();
    let mut u = experiment::build(&config, &mut a, false).unwrap();
    // every source is needed to cover its own column
    let ids = u.ids();
    let recs = ids
        .iter()
        .flat_map(|&s| ids.iter().map(move |&t| RegretRecord::new(s, t, if s == t { 0.2 } else { 0.5 }, 0.2)))
        .collect();
    u.regret = RegretMatrix::from_records(ids.clone(), recs).unwrap();
    let out = experiment::analyze(&u, &mut a).unwrap();
    assert_eq!(out.representatives, ids);
    assert_eq!(out.classifier_train_accuracy.len(), 4);
    assert!(out.classifier_train_accuracy.iter().all(|(_, acc)| (0.0..=1.0).contains(acc)));
    for kind in [StrategyKind::MultiClassifier, StrategyKind::MajorityVote] {
        let n = out.records.iter().filter(|r| r.strategy == kind).count();
        assert_eq!(n, 3 * 4, "{kind:?}");
    }
    assert!(out.records.iter().filter(|r| r.strategy == StrategyKind::MultiClassifier).all(|r| r.chosen.is_none()));
}

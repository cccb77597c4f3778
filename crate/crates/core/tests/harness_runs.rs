use std::path::Path;

use bess_core::harness::{
    read_report_json, run_comparison, write_all_reports, ExperimentConfig, HarnessError, Report, Solver,
    SolverSelection,
};
use bess_core::uncertainty::{DistSpec, Family};

fn small_config(out: &Path, solver: SolverSelection) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        families: vec![DistSpec::default_for(Family::Uniform), DistSpec::default_for(Family::LogNormal)],
        solver,
        out_dir: out.to_path_buf(),
        repeats: 2,
        seed: 4,
        ..Default::default()
    };
    cfg.grad.n_epochs = 3000;
    cfg.sac.total_steps = 400;
    cfg.sac.learning_starts = 200;
    cfg.sac.batch_size = 32;
    cfg.sac.eval_every = 200;
    cfg.sac.eval_episodes = 2;
    cfg.sac.hidden = vec![16, 16];
    cfg
}

fn column_sum(csv: &str, col: &str) -> f64 {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == col).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse::<f64>().unwrap()).sum()
}

#[test]
fn grad_only_single_repeat_gives_one_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), SolverSelection::Grad);
    cfg.families.truncate(1);
    cfg.repeats = 1;
    let report = run_comparison(&cfg).unwrap();
    assert_eq!(report.records.len(), 1);
    assert_eq!(report.records[0].solver, Solver::Grad);
}

#[test]
fn paired_records_share_hashes_and_totals_match_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), SolverSelection::Both);
    let report = run_comparison(&cfg).unwrap();
    assert_eq!(report.records.len(), 2 * 2 * 2);
    for pair in report.records.chunks(2) {
        assert_eq!((pair[0].solver, pair[1].solver), (Solver::Grad, Solver::Sac));
        assert_eq!(pair[0].scenario_hash, pair[1].scenario_hash);
        assert_eq!(pair[0].draw_hash, pair[1].draw_hash);
    }
    // different repeats see different draws
    assert_ne!(report.records[0].draw_hash, report.records[2].draw_hash);

    for r in &report.records {
        assert!(r.succeeded(), "{:?}", r.error);
        let traj = std::fs::read_to_string(dir.path().join(r.trajectory_file.as_ref().unwrap())).unwrap();
        let total = column_sum(&traj, "stage_cost");
        let reported = r.total_cost.unwrap();
        assert!((total - reported).abs() <= 1e-9 * reported.abs().max(1.0), "{total} vs {reported}");
        if r.solver == Solver::Sac {
            let curve = std::fs::read_to_string(dir.path().join(r.learning_curve_file.as_ref().unwrap())).unwrap();
            assert_eq!(curve.lines().count(), 1 + 2);
        }
    }

    let paths = write_all_reports(&report, dir.path()).unwrap();
    let back: Report = read_report_json(&paths[0]).unwrap();
    assert_eq!(back, report);
    let md = std::fs::read_to_string(&paths[2]).unwrap();
    assert!(md.lines().any(|l| l.starts_with("| uniform |")));
    assert!(md.lines().any(|l| l.starts_with("| lognormal |")));
}

#[test]
fn solver_timeout_becomes_a_failed_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), SolverSelection::Grad);
    cfg.families.truncate(1);
    cfg.repeats = 1;
    cfg.grad.n_epochs = 200_000;
    cfg.grad.tol = 1e-300;
    cfg.grad.wall_budget_s = Some(1e-9);
    let report = run_comparison(&cfg).unwrap();
    let rec = &report.records[0];
    assert!(!rec.succeeded());
    assert!(rec.total_cost.is_none() && rec.wall_time_s.is_some());
    assert!(report.aggregates.is_empty());
    let csv = bess_core::harness::render_csv(&report);
    assert!(csv.lines().nth(1).unwrap().contains(",failed,"));
}

#[test]
fn invalid_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), SolverSelection::Grad);
    cfg.repeats = 0;
    let err = run_comparison(&cfg).unwrap_err();
    assert!(matches!(err, HarnessError::Config(_)));
    assert_eq!(err.exit_code(), 2);
}

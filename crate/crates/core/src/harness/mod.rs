//! Experiment orchestration: paired solver comparisons, the exhaustive
//! oracle for tiny horizons, and report output.

mod config;
mod oracle;
mod report;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use config::{parse_families, ExperimentConfig, ScenarioSource, SolverSelection};
pub use oracle::{brute_force_oracle, OracleResult, ORACLE_MAX_STEPS};
pub use report::{
    aggregate, emit_report, read_report_json, render_csv, render_markdown, render_report, Aggregate, Report,
    ReportFormat, RunRecord, Solver, REPORT_CSV_HEADER,
};

use crate::env::{rollout, BessEnv, EnvError};
use crate::grad_opt::{optimize_schedule, GradOptError, UncertaintyInput};
use crate::profiles::{ProfileError, ScenarioData};
use crate::sac::{curve_csv, deterministic_action, scale_action, train, SacConfig, SacError};
use crate::system::{Schedule, SystemError, Trajectory};
use crate::uncertainty::{draw_scenario_uncertainty, DistSpec, UncertaintyDraw, UncertaintyError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Invalid(String),
    #[error("no feasible schedule on the oracle grid")]
    NoFeasiblePoint,
    #[error("report has no records")]
    EmptyReport,
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error(transparent)]
    GradOpt(#[from] GradOptError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Sac(#[from] SacError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// True when the failure stems from bad input rather than a solver run.
    pub fn is_validation(&self) -> bool {
        match self {
            HarnessError::Config(_)
            | HarnessError::Invalid(_)
            | HarnessError::Profile(_)
            | HarnessError::System(_)
            | HarnessError::Uncertainty(_) => true,
            HarnessError::GradOpt(e) => !matches!(e, GradOptError::Timeout { .. }),
            HarnessError::Env(e) => matches!(e, EnvError::InvalidConfig(_) | EnvError::System(_) | EnvError::Uncertainty(_)),
            HarnessError::Sac(e) => matches!(e, SacError::InvalidConfig(_) | SacError::Checkpoint(_)),
            HarnessError::NoFeasiblePoint
            | HarnessError::EmptyReport
            | HarnessError::Io(_)
            | HarnessError::Json(_) => false,
        }
    }

    /// Process exit code: 2 for validation errors, 3 for solver failures.
    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            2
        } else {
            3
        }
    }
}

/// Per-step CSV of a simulated schedule. Floats use the shortest
/// round-trip representation so totals can be re-derived exactly.
pub fn trajectory_csv(schedule: &Schedule, traj: &Trajectory) -> String {
    let mut out = String::from("t,p_g_kw,p_b_kw,soc_after,residual_kw,stage_cost\n");
    for t in 0..schedule.n_steps() {
        let _ = writeln!(
            out,
            "{t},{},{},{},{},{}",
            schedule.p_g[t],
            schedule.p_b[t],
            traj.soc[t + 1],
            traj.residual_kw[t],
            traj.stage_cost[t]
        );
    }
    out
}

/// Seed of the shared draw for one (family, repeat) cell.
fn draw_seed(seed: u64, family_idx: usize, repeat: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add((family_idx as u64) << 32).wrapping_add(repeat as u64)
}

struct Cell<'a> {
    family_idx: usize,
    spec: DistSpec,
    repeat: usize,
    draw: &'a UncertaintyDraw,
    scenario_hash: String,
    draw_hash: String,
}

impl Cell<'_> {
    fn stem(&self, solver: Solver) -> String {
        format!("{}_{}_r{}", solver.name(), self.spec.family().name(), self.repeat)
    }

    fn record(&self, solver: Solver) -> RunRecord {
        RunRecord {
            solver,
            family: self.spec.family(),
            repeat: self.repeat,
            error: None,
            total_cost: None,
            end_soc: None,
            min_soc: None,
            soc_violations: None,
            wall_time_s: None,
            converged: None,
            iterations: None,
            scenario_hash: self.scenario_hash.clone(),
            draw_hash: self.draw_hash.clone(),
            trajectory_file: None,
            learning_curve_file: None,
        }
    }
}

fn fill_metrics(rec: &mut RunRecord, traj: &Trajectory, wall_time_s: f64) {
    rec.total_cost = Some(traj.total_cost);
    rec.end_soc = Some(traj.end_soc);
    rec.min_soc = Some(traj.min_soc);
    rec.soc_violations = Some(traj.soc_violations);
    rec.wall_time_s = Some(wall_time_s);
}

fn write_rel(out_dir: &Path, rel: &str, text: &str) -> Result<(), HarnessError> {
    std::fs::write(out_dir.join(rel), text)?;
    Ok(())
}

fn run_grad(cfg: &ExperimentConfig, scenario: &ScenarioData, cell: &Cell) -> Result<RunRecord, HarnessError> {
    let mut rec = cell.record(Solver::Grad);
    let mut rng = ChaCha8Rng::seed_from_u64(draw_seed(cfg.seed, cell.family_idx, cell.repeat) ^ 0x6772_6164);
    let input = UncertaintyInput::Draw(cell.draw.clone());
    let started = Instant::now();
    match optimize_schedule(scenario, &input, &cfg.battery, &cfg.grid, &cfg.grad, &mut rng) {
        Ok(res) => {
            fill_metrics(&mut rec, &res.trajectory, started.elapsed().as_secs_f64());
            rec.converged = Some(res.converged);
            rec.iterations = Some(res.iterations_run);
            let rel = format!("trajectories/{}.csv", cell.stem(Solver::Grad));
            write_rel(&cfg.out_dir, &rel, &trajectory_csv(&res.schedule.unit_weighted(), &res.trajectory))?;
            rec.trajectory_file = Some(rel);
        }
        Err(e @ GradOptError::Timeout { .. }) => {
            rec.error = Some(e.to_string());
            rec.wall_time_s = Some(started.elapsed().as_secs_f64());
        }
        Err(e) => return Err(e.into()),
    }
    Ok(rec)
}

fn run_sac(cfg: &ExperimentConfig, scenario: &ScenarioData, cell: &Cell) -> Result<RunRecord, HarnessError> {
    let mut rec = cell.record(Solver::Sac);
    let sac_cfg = SacConfig { seed: draw_seed(cfg.seed, cell.family_idx, cell.repeat), ..cfg.sac.clone() };
    let mut env = BessEnv::new(scenario.clone(), cfg.battery.clone(), cfg.grid.clone(), cfg.env.clone(), cell.spec)?;
    let started = Instant::now();
    let outcome = match train(&env, &sac_cfg) {
        Ok(o) => o,
        Err(SacError::InvalidConfig(m)) => return Err(SacError::InvalidConfig(m).into()),
        Err(e) => {
            rec.error = Some(e.to_string());
            rec.wall_time_s = Some(started.elapsed().as_secs_f64());
            return Ok(rec);
        }
    };
    // Deploy the trained policy on the shared draw.
    let actor = &outcome.agent.params.actor;
    let (grid, battery) = (cfg.grid.clone(), cfg.battery.clone());
    let mut failure = None;
    let ro = rollout(&mut env, cell.draw.clone(), |s| match deterministic_action(actor, &s.obs) {
        Ok(u) => scale_action(u, &grid, &battery),
        Err(e) => {
            failure.get_or_insert(e);
            (0.0, 0.0)
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    fill_metrics(&mut rec, &ro.trajectory, started.elapsed().as_secs_f64());
    rec.iterations = Some(outcome.audit.env_steps);
    let schedule = Schedule::with_unit_weights(
        ro.transitions.iter().map(|t| t.action_executed.0).collect(),
        ro.transitions.iter().map(|t| t.action_executed.1).collect(),
    );
    let stem = cell.stem(Solver::Sac);
    let rel = format!("trajectories/{stem}.csv");
    write_rel(&cfg.out_dir, &rel, &trajectory_csv(&schedule, &ro.trajectory))?;
    rec.trajectory_file = Some(rel);
    let rel = format!("curves/{stem}.csv");
    write_rel(&cfg.out_dir, &rel, &curve_csv(&outcome.curve))?;
    rec.learning_curve_file = Some(rel);
    Ok(rec)
}

/// Runs every requested (family, repeat) cell. Each cell fixes one draw
/// that both solvers are scored on; SAC trains on fresh draws from the same
/// family and is then deployed on the shared one. Solver failures become
/// failed records instead of aborting the run. Trajectories and learning
/// curves go under `out_dir`; the report itself is not written here.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.validate()?;
    let scenario = cfg.load_scenario()?;
    for sub in ["trajectories", "curves"] {
        std::fs::create_dir_all(cfg.out_dir.join(sub))?;
    }
    let scenario_hash = scenario.content_hash();
    let mut records = Vec::new();
    for (family_idx, spec) in cfg.families.iter().enumerate() {
        for repeat in 0..cfg.repeats {
            let mut rng = ChaCha8Rng::seed_from_u64(draw_seed(cfg.seed, family_idx, repeat));
            let draw = draw_scenario_uncertainty(&scenario, spec, &mut rng)?;
            let cell = Cell {
                family_idx,
                spec: *spec,
                repeat,
                draw_hash: draw.content_hash(),
                draw: &draw,
                scenario_hash: scenario_hash.clone(),
            };
            if cfg.solver.runs_grad() {
                records.push(run_grad(cfg, &scenario, &cell)?);
            }
            if cfg.solver.runs_sac() {
                records.push(run_sac(cfg, &scenario, &cell)?);
            }
        }
    }
    Ok(Report::new(scenario.label(), cfg.seed, records))
}

/// Writes `report.{json,csv,md}` into `out_dir` and returns their paths.
pub fn write_all_reports(report: &Report, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut paths = Vec::new();
    for format in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown] {
        let p = out_dir.join(format!("report.{}", format.extension()));
        emit_report(report, format, &p)?;
        paths.push(p);
    }
    Ok(paths)
}

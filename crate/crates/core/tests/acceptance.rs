//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any fails.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 1 6 8`.

use std::process::ExitCode;
use std::time::Instant;

use bess_core::env::{safety_project, BessEnv, EnvConfig};
use bess_core::grad_opt::{lr_at, optimize_schedule, AdamState, GradOptConfig, UncertaintyInput};
use bess_core::harness::{brute_force_oracle, render_csv, run_comparison, ExperimentConfig, Solver};
use bess_core::profiles::{synth_scenario, ScenarioData};
use bess_core::sac::{eval_rng, random_baseline, scale_action, train, SacConfig, TrainAudit};
use bess_core::system::{simulate_schedule, BatteryParams, GridParams, Schedule};
use bess_core::uncertainty::{entropy_bits, entropy_state_vector, DistSpec, Family};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

type Criterion = (usize, &'static str, fn() -> Outcome);

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_safety_layer() -> Outcome {
    let started = Instant::now();
    let fixture = safety_project(100.0, 100.0, 0.0, 300.0, &GridParams::default(), &BatteryParams::default());
    if (fixture.p_g, fixture.p_b, fixture.kappa) != (150.0, 150.0, 1.5) {
        return Err(format!("kappa fixture gave {fixture:?}"));
    }

    let s = synth_scenario(7, 48, 0.5).unwrap();
    let (g, b) = (GridParams::default(), BatteryParams::default());
    let mut env =
        BessEnv::new(s, b.clone(), g.clone(), EnvConfig::default(), DistSpec::default_for(Family::Uniform)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut pairs, mut worst) = (0, 0.0f64);
    let mut state = env.reset_sampled(&mut rng).unwrap();
    while pairs < 10_000 {
        let t = state.t;
        let sc = env.effective_scenario();
        let required = sc.p_d()[t] + env.draw().p_unc[t] - sc.p_pv()[t];
        let action = scale_action([rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)], &g, &b);
        let tr = env.step(action).unwrap();
        if (g.p_g_min + b.p_b_min..=g.p_g_max + b.p_b_max).contains(&required) {
            pairs += 1;
            worst = worst.max(tr.info.residual_kw.abs());
        }
        state = if tr.next_state.done { env.reset_sampled(&mut rng).unwrap() } else { tr.next_state };
    }
    let secs = started.elapsed().as_secs_f64();
    check(worst <= 1e-6 && secs < 5.0, format!("{pairs} pairs, max |residual| {worst:.2e} kW, {secs:.2} s"))
}

fn c2_soc_telescoping() -> Outcome {
    let s = synth_scenario(7, 48, 0.5).unwrap();
    let b = BatteryParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p_b: Vec<f64> = (0..48).map(|_| rng.random_range(-1000.0..1000.0)).collect();
        let p_g = (0..48).map(|_| rng.random_range(0.0..5000.0)).collect();
        let closed = b.soc_init - s.dt_hours() / b.capacity_kwh * p_b.iter().sum::<f64>();
        let tr = simulate_schedule(&s, &Schedule::with_unit_weights(p_g, p_b), &b, &[0.0; 48]).unwrap();
        worst = worst.max((tr.soc[48] - closed).abs());
    }
    check(worst < 1e-9, format!("100 schedules, max |soc_T - closed form| {worst:.2e}"))
}

fn c3_penalty_gradient() -> Outcome {
    let started = Instant::now();
    let worst = common::penalty_fd_worst(50, 3);
    let secs = started.elapsed().as_secs_f64();
    check(worst < 1e-4 && secs < 30.0, format!("50 points, max relative error {worst:.2e}, {secs:.2} s"))
}

fn c4_mlp_gradient() -> Outcome {
    let started = Instant::now();
    let worst = common::mlp_fd_worst(200, 4);
    let secs = started.elapsed().as_secs_f64();
    check(worst < 1e-4 && secs < 30.0, format!("6-64-64-2, 200 coordinates, max relative error {worst:.2e}, {secs:.2} s"))
}

fn c5_adam() -> Outcome {
    let mut x = [0.0];
    let mut opt = AdamState::new(1);
    for step in 1..=5000 {
        let grad = [2.0 * (x[0] - 3.0)];
        opt.step(&mut x, &grad, 0.05).unwrap();
        if (x[0] - 3.0).abs() < 1e-3 {
            return Ok(format!("|x - 3| < 1e-3 after {step} steps"));
        }
    }
    Err(format!("x = {} after 5000 steps", x[0]))
}

fn c6_oracle_equivalence() -> Outcome {
    let toy = |d: [f64; 4], pv: [f64; 4], cg: f64, cb: f64| {
        ScenarioData::new("toy", 6.0, pv.to_vec(), d.to_vec(), vec![cg; 4], vec![cb; 4]).unwrap()
    };
    let tight = BatteryParams { soc_min: 0.8, soc_max: 1.0, soc_init: 1.0, ..Default::default() };
    let cases = [
        ("grid-priced", toy([1500.0, 2600.0, 3200.0, 1800.0], [0.0, 900.0, 1400.0, 0.0], 0.20, 0.30), BatteryParams::default()),
        ("peak-shaving", toy([5600.0, 1200.0, 600.0, 2000.0], [0.0, 1000.0, 1200.0, 0.0], 0.25, 0.30), BatteryParams::default()),
        ("cheap-battery", toy([2000.0, 2500.0, 1500.0, 3000.0], [0.0, 800.0, 1000.0, 0.0], 0.30, 0.05), tight),
    ];
    let res = 100.0;
    let grid = GridParams::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, s, battery) in cases {
        let started = Instant::now();
        let oracle = brute_force_oracle(&s, &battery, &grid, res).map_err(|e| format!("{name}: {e}"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let grad = optimize_schedule(&s, &UncertaintyInput::Nominal, &battery, &grid, &GradOptConfig::default(), &mut rng)
            .map_err(|e| format!("{name}: {e}"))?;
        let secs = started.elapsed().as_secs_f64();
        let max_price = s.c_g().iter().chain(s.c_b()).cloned().fold(0.0, f64::max);
        let slack = res * max_price * s.dt_hours() * s.n_steps() as f64;
        let cost = grad.trajectory.total_cost;
        let bound = 1.05 * oracle.cost + slack;
        ok &= cost <= bound && secs < 120.0;
        lines.push(format!("{name} grad ${cost:.2} vs oracle ${:.2} (bound ${bound:.2}, {secs:.2} s)", oracle.cost));
    }
    check(ok, lines.join("; "))
}

fn c7_entropy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let xs: Vec<f64> = (0..1_000_000).map(|_| rng.random::<f64>()).collect();
    let h = entropy_bits(&xs, 10).unwrap();
    let target = 10f64.log2();
    let constant = entropy_bits(&[0.3; 1000], 10).unwrap();
    let mut bounded = true;
    for bins in [1, 2, 5, 10, 50] {
        let sample: Vec<f64> = (0..500).map(|_| rng.random_range(-1.0..1.0f64).powi(3)).collect();
        bounded &= entropy_bits(&sample, bins).unwrap() <= (bins as f64).log2() + 1e-12;
    }
    let s = synth_scenario(7, 48, 0.5).unwrap();
    let ent = |f: Family| entropy_state_vector(&s, &DistSpec::default_for(f), 200, 10, &mut ChaCha8Rng::seed_from_u64(70)).unwrap();
    let (hu, hn) = (ent(Family::Uniform), ent(Family::Normal));
    let ordered = hu.iter().zip(&hn).all(|(u, n)| u >= n);
    check(
        (h - target).abs() < 0.02 && constant == 0.0 && bounded && ordered,
        format!(
            "H(uniform 1e6, 10 bins) {h:.4} vs {target:.4}, constant {constant}, bound holds {bounded}, \
             Uniform {hu:.3?} >= Normal {hn:.3?}: {ordered}"
        ),
    )
}

fn c8_lr_schedule() -> Outcome {
    let cfg = GradOptConfig { init_lr: 0.1, d_rate: 0.95, d_steps: 1000, ..Default::default() };
    let (a, b) = (lr_at(&cfg, 1000), lr_at(&cfg, 2000));
    check(a == 0.095 && b == 0.09025, format!("lr_at(1000) = {a}, lr_at(2000) = {b}"))
}

fn c9_c10_sac() -> (Outcome, Outcome) {
    let s = synth_scenario(7, 48, 0.5).unwrap();
    let env = BessEnv::new(
        s,
        BatteryParams::default(),
        GridParams::default(),
        EnvConfig::default(),
        DistSpec::default_for(Family::Uniform),
    )
    .unwrap();
    // With the fixed temperature 0.2 the policy drains below the reserve on
    // 6 of the 20 evaluation days at this seed; the learned temperature
    // keeps it. See the README.
    let cfg = SacConfig { seed: 0, total_steps: 50_000, eval_episodes: 20, auto_temperature: true, ..Default::default() };
    let baseline = random_baseline(&mut env.clone(), cfg.eval_episodes, &mut eval_rng(cfg.seed)).unwrap();
    let started = Instant::now();
    let out = match train(&env, &cfg) {
        Ok(o) => o,
        Err(e) => return (Err(format!("training failed: {e}")), Err("no training run".into())),
    };
    let secs = started.elapsed().as_secs_f64();
    let fe = &out.final_eval;
    let above = fe.episodes.iter().filter(|e| e.end_soc >= 0.5).count();
    let c9 = check(
        fe.mean_reward > baseline.mean_reward && above * 5 >= fe.episodes.len() * 4 && secs < 900.0,
        format!(
            "auto temperature, final mean reward {:.3} vs random {:.3}, end SOC >= 0.5 in {above}/{}, {secs:.0} s",
            fe.mean_reward,
            baseline.mean_reward,
            fe.episodes.len()
        ),
    );
    let TrainAudit { env_steps, box_violations, unbalanced_steps, unbalanced_feasible, soc_soft_violations, .. } =
        out.audit;
    let c10 = check(
        env_steps == 50_000 && box_violations == 0 && unbalanced_feasible == 0,
        format!(
            "{env_steps} steps: {box_violations} box violations, {unbalanced_feasible} unbalanced feasible steps \
             ({unbalanced_steps} reported residuals in total), {soc_soft_violations} SOC soft-bound violations"
        ),
    );
    (c9, c10)
}

fn compare_config(out: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { out_dir: out.to_path_buf(), repeats: 1, seed: 11, ..Default::default() };
    cfg.sac.total_steps = 5000;
    cfg.sac.eval_every = 2500;
    cfg
}

fn without_column(csv: &str, col: &str) -> String {
    let idx = csv.lines().next().unwrap_or("").split(',').position(|h| h == col);
    csv.lines()
        .map(|l| l.split(',').enumerate().filter(|(i, _)| Some(*i) != idx).map(|(_, c)| c).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n")
}

fn c11_determinism() -> Outcome {
    let run = || -> Result<String, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut cfg = compare_config(dir.path());
        cfg.grad.n_epochs = 20_000;
        cfg.sac.total_steps = 1000;
        cfg.sac.learning_starts = 500;
        cfg.sac.eval_every = 500;
        cfg.sac.eval_episodes = 5;
        let report = run_comparison(&cfg).map_err(|e| e.to_string())?;
        Ok(without_column(&render_csv(&report), "wall_time_s"))
    };
    let (a, b) = (run()?, run()?);
    let rows = a.lines().count() - 1;
    check(a == b, format!("two runs, {rows} rows each, CSV identical without wall time: {}", a == b))
}

fn c12_comparison() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = compare_config(dir.path());
    let started = Instant::now();
    let report = run_comparison(&cfg).map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    let md = bess_core::harness::render_markdown(&report);
    let mut ok = report.records.iter().all(|r| r.succeeded());
    let mut cells = Vec::new();
    for fam in Family::ALL {
        for solver in [Solver::Grad, Solver::Sac] {
            match report.aggregate_for(solver, fam) {
                Some(a) if a.mean_cost.is_finite() && a.mean_end_soc.is_finite() && a.mean_wall_time_s.is_finite() => {
                    cells.push(format!("{} {} ${:.2} {:.0}% {:.1}s", fam.name(), solver.name(), a.mean_cost, 100.0 * a.mean_end_soc, a.mean_wall_time_s));
                }
                _ => ok = false,
            }
        }
        ok &= md.lines().any(|l| l.starts_with(&format!("| {} |", fam.name())));
    }
    println!("{md}");
    check(ok && cells.len() == 10, format!("{} runs in {secs:.0} s: {}", report.records.len(), cells.join(", ")))
}

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |n: usize| wanted.is_empty() || wanted.contains(&n);
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let simple: [Criterion; 8] = [
        (1, "safety-layer balance", c1_safety_layer),
        (2, "SOC telescoping", c2_soc_telescoping),
        (3, "penalty-loss gradient", c3_penalty_gradient),
        (4, "MLP reverse-mode gradient", c4_mlp_gradient),
        (5, "Adam sanity", c5_adam),
        (6, "oracle equivalence", c6_oracle_equivalence),
        (7, "entropy", c7_entropy),
        (8, "learning-rate schedule", c8_lr_schedule),
    ];
    for (n, name, f) in simple {
        if run(n) {
            results.push((n, name, f()));
        }
    }
    if run(9) || run(10) {
        let (c9, c10) = c9_c10_sac();
        if run(9) {
            results.push((9, "SAC desk-scale learning", c9));
        }
        if run(10) {
            results.push((10, "hard-constraint audit", c10));
        }
    }
    if run(11) {
        results.push((11, "compare determinism", c11_determinism()));
    }
    if run(12) {
        results.push((12, "five-family comparison report", c12_comparison()));
    }

    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(d) => println!("criterion {n:>2} PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {d}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bess_core::env::BessEnv;
use bess_core::grad_opt::{optimize_schedule, UncertaintyInput};
use bess_core::harness::{
    brute_force_oracle, parse_families, run_comparison, trajectory_csv, write_all_reports, ExperimentConfig,
    HarnessError,
};
use bess_core::profiles::{emit_scenario_csv, ScenarioData};
use bess_core::sac::{curve_csv, eval_rng, evaluate, random_baseline, train, Checkpoint, SacConfig};
use bess_core::uncertainty::{draw_scenario_uncertainty, DistSpec};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Parser)]
#[command(name = "bess", version, about = "Day-ahead battery dispatch: gradient solver, SAC agent and comparisons")]
struct Cli {
    /// Flat `key = value` config file; unset keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config's `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured scenario (synthetic by default) as CSV.
    Synth,
    /// Run the gradient solver on one uncertainty draw.
    Optimize {
        /// Family to draw from; defaults to the first configured one.
        #[arg(long)]
        family: Option<String>,
        /// Solve the nominal profile without perturbation.
        #[arg(long)]
        nominal: bool,
    },
    /// Train a SAC agent and save a checkpoint.
    Train {
        #[arg(long)]
        family: Option<String>,
    },
    /// Evaluate a saved checkpoint against the random baseline.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Paired grad-vs-SAC runs over the configured families and repeats.
    Compare,
    /// Exhaustive search on a horizon of at most six steps.
    Oracle {
        /// Grid import step in kW.
        #[arg(long, default_value_t = 100.0)]
        resolution: f64,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pick_family(cfg: &ExperimentConfig, family: Option<&str>) -> Result<DistSpec, HarnessError> {
    match family {
        Some(f) => {
            let specs = parse_families(f)?;
            if specs.len() != 1 {
                return Err(HarnessError::Config("--family takes a single family".into()));
            }
            Ok(specs[0])
        }
        None => Ok(cfg.families[0]),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), HarnessError> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn make_env(cfg: &ExperimentConfig, scenario: ScenarioData, spec: DistSpec) -> Result<BessEnv, HarnessError> {
    Ok(BessEnv::new(scenario, cfg.battery.clone(), cfg.grid.clone(), cfg.env.clone(), spec)?)
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let cfg = load_config(cli)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let out = &cfg.out_dir;
    match &cli.command {
        Command::Synth => {
            let s = cfg.load_scenario()?;
            let path = out.join("scenario.csv");
            emit_scenario_csv(&s, &path)?;
            println!("wrote {} ({} steps, hash {})", path.display(), s.n_steps(), s.content_hash());
        }
        Command::Optimize { family, nominal } => {
            let s = cfg.load_scenario()?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let input = if *nominal {
                UncertaintyInput::Nominal
            } else {
                let spec = pick_family(&cfg, family.as_deref())?;
                UncertaintyInput::Draw(draw_scenario_uncertainty(&s, &spec, &mut rng)?)
            };
            let res = optimize_schedule(&s, &input, &cfg.battery, &cfg.grid, &cfg.grad, &mut rng)?;
            std::fs::write(out.join("trajectory.csv"), trajectory_csv(&res.schedule.unit_weighted(), &res.trajectory))?;
            write_json(&out.join("optimize.json"), &res)?;
            println!(
                "cost ${:.2}, end SOC {:.3}, min SOC {:.3}, {} epochs, converged {}, {:.2} s",
                res.trajectory.total_cost,
                res.trajectory.end_soc,
                res.trajectory.min_soc,
                res.iterations_run,
                res.converged,
                res.wall_time_s
            );
        }
        Command::Train { family } => {
            let spec = pick_family(&cfg, family.as_deref())?;
            let env = make_env(&cfg, cfg.load_scenario()?, spec)?;
            let sac_cfg = SacConfig { seed: cfg.seed, ..cfg.sac.clone() };
            let outcome = train(&env, &sac_cfg)?;
            Checkpoint::new(&outcome.agent.params, &sac_cfg, &env).save(out.join("checkpoint.json"))?;
            std::fs::write(out.join("learning_curve.csv"), curve_csv(&outcome.curve))?;
            write_json(&out.join("train_audit.json"), &outcome.audit)?;
            println!(
                "final eval: mean reward {:.3}, mean cost ${:.2}, mean end SOC {:.3}",
                outcome.final_eval.mean_reward,
                outcome.final_eval.mean_cost(),
                outcome.final_eval.mean_end_soc()
            );
        }
        Command::Evaluate { checkpoint, episodes } => {
            if !checkpoint.is_file() {
                return Err(HarnessError::Config(format!("checkpoint {} not found", checkpoint.display())));
            }
            let ck = Checkpoint::load(checkpoint)?;
            let mut env = BessEnv::new(cfg.load_scenario()?, ck.battery.clone(), ck.grid.clone(), ck.env_config.clone(), ck.spec)?;
            let n = episodes.unwrap_or(ck.sac_config.eval_episodes);
            let policy = evaluate(&ck.params, &mut env, n, &mut eval_rng(cfg.seed))?;
            let baseline = random_baseline(&mut env, n, &mut eval_rng(cfg.seed))?;
            write_json(&out.join("evaluation.json"), &json!({ "policy": policy, "random_baseline": baseline }))?;
            let above = policy.episodes.iter().filter(|e| e.end_soc >= 0.5).count();
            println!(
                "policy: mean reward {:.3}, mean cost ${:.2}, end SOC >= 0.5 in {above}/{n}; random: mean reward {:.3}",
                policy.mean_reward,
                policy.mean_cost(),
                baseline.mean_reward
            );
        }
        Command::Compare => {
            let report = run_comparison(&cfg)?;
            for p in write_all_reports(&report, out)? {
                println!("wrote {}", p.display());
            }
            let failed = report.records.iter().filter(|r| !r.succeeded()).count();
            if failed > 0 {
                eprintln!("{failed} of {} runs failed", report.records.len());
            }
        }
        Command::Oracle { resolution } => {
            let s = cfg.load_scenario()?;
            let r = brute_force_oracle(&s, &cfg.battery, &cfg.grid, *resolution)?;
            write_json(
                &out.join("oracle.json"),
                &json!({ "cost": r.cost, "evaluated": r.evaluated, "p_g": r.schedule.p_g, "p_b": r.schedule.p_b }),
            )?;
            println!("optimum ${:.4} over {} complete schedules", r.cost, r.evaluated);
            println!("p_g {:?}", r.schedule.p_g);
            println!("p_b {:?}", r.schedule.p_b);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

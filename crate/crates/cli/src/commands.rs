use std::fmt::Write as _;
use std::path::Path;

use hevtl::cycles::{load_cycle, synthesize_cycle, write_cycle};
use hevtl::env::rollout;
use hevtl::net::{Checkpoint, CheckpointMeta, MeanPolicy};
use hevtl::oracle::{dp_refine_study, dp_solve, refine_csv, DpGrid};
use hevtl::ppo::{Hyperparams, TrainOptions};
use hevtl::transfer::{
    cold_start, evaluate, expert_seed, normalize_curve, run_ablation_source_count, run_ablation_target_inclusion,
    run_tl_vs_no_tl, spearman, train_expert, CycleScore, ExperimentReport, TransferExperiment, INITIAL_WINDOW,
};
use hevtl::{DrivingCycle, Error, Policy};

use crate::config::{resolve_output_dir, RunConfig};
use crate::output::Artifacts;
use crate::{Ablation, Cli, Command, CyclesCommand, OracleCommand};

pub const EVAL_HEADER: &str = "cycle_id,total_reward,fuel_g,terminal_soc";
pub const ORACLE_HEADER: &str = "cycle_id,soc0,soc_nodes,torque_nodes,j_star,dp_realized_cost,policy_cost,gap_pct";

type Result<T> = std::result::Result<T, Error>;

/// Runs one command and returns the lines to print.
pub fn run(cli: &Cli) -> Result<Vec<String>> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.validate()?;
    let out = resolve_output_dir(&cfg, cli.out.as_deref());
    match &cli.command {
        Command::Train => cmd_train(&cfg, &out),
        Command::Eval {
            checkpoint,
            cycle,
            soc0,
        } => cmd_eval(&cfg, &out, checkpoint, cycle, *soc0),
        Command::Transfer { checkpoint, mode } => cmd_transfer(&cfg, &out, checkpoint.as_deref(), *mode),
        Command::Ablate { which } => match which {
            Ablation::SourceCount => cmd_source_count(&cfg, &out),
            Ablation::TargetInclusion => cmd_target_inclusion(&cfg, &out),
            Ablation::Tl { checkpoint } => cmd_tl(&cfg, &out, checkpoint.as_deref()),
        },
        Command::Oracle { which } => match which {
            OracleCommand::Solve {
                cycle,
                soc0,
                grid,
                checkpoint,
            } => cmd_oracle_solve(&cfg, &out, cycle, *soc0, *grid, checkpoint.as_deref()),
            OracleCommand::Refine { cycle, soc0 } => cmd_oracle_refine(&cfg, &out, cycle, *soc0),
        },
        Command::Cycles { which } => match which {
            CyclesCommand::Validate { paths, dt } => cmd_cycles_validate(paths, *dt),
            CyclesCommand::Synth {
                profile,
                duration,
                seed,
                file,
            } => {
                let c = synthesize_cycle(*seed, *duration, *profile)?;
                let path = match file {
                    Some(f) => f.clone(),
                    None => {
                        std::fs::create_dir_all(&out)?;
                        out.join(format!("{}.csv", c.id))
                    }
                };
                write_cycle(&path, &c)?;
                Ok(vec![format!(
                    "wrote {} ({} samples) to {}",
                    c.id,
                    c.len(),
                    path.display()
                )])
            }
        },
    }
}

/// A cycle file path, or the id of a configured cycle.
fn resolve_cycle(cfg: &RunConfig, spec: &str) -> Result<DrivingCycle> {
    let path = Path::new(spec);
    if path.is_file() {
        return load_cycle(path, cfg.cycles.dt);
    }
    let all = cfg.load_cycles()?;
    all.into_iter()
        .find(|c| c.id == spec)
        .ok_or_else(|| Error::Config(format!("cycle `{spec}` is neither a file nor a configured cycle id")))
}

fn load_checkpoint(cfg: &RunConfig, path: &Path) -> Result<Checkpoint<f64>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(e).context(format!("checkpoint {}", path.display())))?;
    let ck = Checkpoint::<f64>::from_json(&text).map_err(|e| e.context(format!("checkpoint {}", path.display())))?;
    ck.require_layout(&cfg.protocol.layout)?;
    Ok(ck)
}

fn scores_csv(scores: &[CycleScore]) -> String {
    let mut s = format!("{EVAL_HEADER}\n");
    for c in scores {
        let _ = writeln!(s, "{},{},{},{}", c.cycle_id, c.total_reward, c.fuel_g, c.terminal_soc);
    }
    s
}

fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let all = cfg.load_cycles()?;
    let part = cfg.partition(&all)?;
    let source = part.source_cycles(&all)?;
    let opts = TrainOptions {
        soc0: cfg.protocol.soc0,
        max_episodes: None,
        record_wall_time: cfg.protocol.record_wall_time,
    };
    let outcome = cold_start(
        &source,
        &cfg.powertrain,
        &cfg.hyper,
        &cfg.protocol.layout,
        cfg.seed,
        &opts,
    )?;
    let mut art = Artifacts::create(out)?;
    let meta = CheckpointMeta {
        cycles: part.source.clone(),
        seed: Some(cfg.seed),
        iterations: outcome.iterations_run,
        episodes: outcome.log.episodes.len(),
        hyper_digest: Some(cfg.hyper.digest()),
        hyper: Some(serde_json::to_value(&cfg.hyper)?),
        note: outcome.aborted.clone(),
    };
    art.write(
        "checkpoint.json",
        &Checkpoint::new(outcome.params.clone(), meta).to_json()?,
    )?;
    art.write("training_log.csv", &outcome.log.episodes_csv())?;
    art.write("updates.csv", &outcome.log.updates_csv())?;
    let scores = evaluate(&outcome.params, &source, &cfg.powertrain, cfg.protocol.soc0)?;
    art.write("eval.csv", &scores_csv(&scores))?;
    art.finish("train", cfg.digest(), cfg.seed, vec![cfg.seed])?;
    if let Some(reason) = outcome.aborted {
        return Err(Error::Training {
            iteration: outcome.iterations_run,
            reason: format!("{reason} (last good checkpoint written to {})", out.display()),
        });
    }
    let mut lines = vec![format!(
        "trained {} iterations, {} episodes on {} source cycles",
        outcome.iterations_run,
        outcome.log.episodes.len(),
        source.len()
    )];
    lines.extend(scores.iter().map(|s| {
        format!(
            "{}: total_reward={:.4} fuel_g={:.3} terminal_soc={:.4}",
            s.cycle_id, s.total_reward, s.fuel_g, s.terminal_soc
        )
    }));
    lines.push(format!("artifacts in {}", out.display()));
    Ok(lines)
}

fn cmd_eval(cfg: &RunConfig, out: &Path, checkpoint: &Path, cycle: &str, soc0: Option<f64>) -> Result<Vec<String>> {
    let ck = load_checkpoint(cfg, checkpoint)?;
    let cycle = resolve_cycle(cfg, cycle)?;
    let soc0 = soc0.unwrap_or(cfg.protocol.soc0);
    let mut policy = MeanPolicy::new(&ck.params);
    let tr = rollout(&cfg.powertrain, &cycle, soc0, &mut policy, 0, cfg.hyper.gamma)?;
    let mut art = Artifacts::create(out)?;
    art.write("trajectory.csv", &tr.to_csv())?;
    let score = CycleScore {
        cycle_id: cycle.id.clone(),
        total_reward: tr.total_reward,
        fuel_g: tr.fuel_g,
        terminal_soc: tr.terminal_soc,
    };
    art.write("eval.csv", &scores_csv(std::slice::from_ref(&score)))?;
    art.finish("eval", cfg.digest(), cfg.seed, Vec::new())?;
    Ok(vec![format!(
        "{}: total_reward={:.4} fuel_g={:.3} terminal_soc={:.4} steps={}",
        cycle.id,
        tr.total_reward,
        tr.fuel_g,
        tr.terminal_soc,
        tr.rows.len()
    )])
}

fn write_report(art: &mut Artifacts, report: &ExperimentReport) -> Result<()> {
    art.write("curves.csv", &report.curves_csv())?;
    art.write("finals.csv", &report.finals_csv())?;
    art.write("summary.csv", &report.summary_csv())?;
    Ok(())
}

fn summary_lines(report: &ExperimentReport) -> Vec<String> {
    report
        .runs
        .iter()
        .map(|r| {
            format!(
                "{} seed {}: initial_mean={:.3} final_mean={:.3} episodes={}",
                r.label,
                r.seed,
                r.initial_mean(INITIAL_WINDOW).unwrap_or(f64::NAN),
                r.final_mean().unwrap_or(f64::NAN),
                r.curve.len()
            )
        })
        .collect()
}

fn cmd_transfer(
    cfg: &RunConfig,
    out: &Path,
    checkpoint: Option<&Path>,
    mode: Option<hevtl::transfer::Mode>,
) -> Result<Vec<String>> {
    let all = cfg.load_cycles()?;
    let exp = TransferExperiment {
        partition: cfg.partition(&all)?,
        hyper: cfg.hyper.clone(),
        seeds: cfg.experiment.seeds.clone(),
        mode: mode.unwrap_or(cfg.experiment.mode),
        expert_checkpoint: checkpoint
            .map(Path::to_path_buf)
            .or_else(|| cfg.experiment.expert_checkpoint.clone()),
    };
    let (report, params) = exp.run(&all, &cfg.powertrain, &cfg.protocol)?;
    let mut art = Artifacts::create(out)?;
    write_report(&mut art, &report)?;
    for (seed, p) in exp.seeds.iter().zip(&params) {
        let meta = CheckpointMeta {
            cycles: exp.partition.target.clone(),
            seed: Some(*seed),
            hyper_digest: Some(cfg.hyper.digest()),
            hyper: Some(serde_json::to_value(&cfg.hyper)?),
            note: Some(format!("student ({})", exp.mode)),
            ..Default::default()
        };
        art.write(
            &format!("student_seed{seed}.json"),
            &Checkpoint::new(p.clone(), meta).to_json()?,
        )?;
    }
    art.finish("transfer", cfg.digest(), cfg.seed, exp.seeds.clone())?;
    Ok(summary_lines(&report))
}

/// Per-count mean final reward and the rank correlation with the count.
pub fn source_count_trend(report: &ExperimentReport) -> (Vec<(usize, f64)>, f64) {
    let mut means = Vec::new();
    for label in report.labels() {
        let Some(n) = label.strip_prefix("sources=").and_then(|s| s.parse::<usize>().ok()) else {
            continue;
        };
        let vals: Vec<f64> = report
            .runs
            .iter()
            .filter(|r| r.label == label)
            .filter_map(|r| r.final_mean())
            .collect();
        means.push((n, vals.iter().sum::<f64>() / vals.len().max(1) as f64));
    }
    let xs: Vec<f64> = means.iter().map(|m| m.0 as f64).collect();
    let ys: Vec<f64> = means.iter().map(|m| m.1).collect();
    let rho = spearman(&xs, &ys);
    (means, rho)
}

fn cmd_source_count(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let all = cfg.load_cycles()?;
    let targets = cfg.target_ids(&all)?;
    let report = run_ablation_source_count(
        &all,
        &cfg.experiment.counts,
        &targets,
        &cfg.powertrain,
        &cfg.hyper,
        &cfg.experiment.seeds,
        &cfg.protocol,
    )?;
    let (means, rho) = source_count_trend(&report);
    let mut trend = String::from("source_count,mean_final_reward\n");
    for (n, m) in &means {
        let _ = writeln!(trend, "{n},{m}");
    }
    let mut art = Artifacts::create(out)?;
    write_report(&mut art, &report)?;
    art.write("trend.csv", &trend)?;
    art.finish(
        "ablate source-count",
        cfg.digest(),
        cfg.seed,
        cfg.experiment.seeds.clone(),
    )?;
    let mut lines: Vec<String> = means
        .iter()
        .map(|(n, m)| format!("sources={n}: mean final reward {m:.4}"))
        .collect();
    lines.push(format!("rank correlation {rho:.3}"));
    Ok(lines)
}

fn cmd_target_inclusion(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let all = cfg.load_cycles()?;
    let targets = cfg.target_ids(&all)?;
    let report = run_ablation_target_inclusion(
        &all,
        cfg.partition.n_source,
        &targets,
        &cfg.powertrain,
        &cfg.hyper,
        &cfg.experiment.seeds,
        &cfg.protocol,
    )?;
    let mut paired = String::from("seed,include,exclude,difference\n");
    let mut lines = Vec::new();
    for &s in &cfg.experiment.seeds {
        let get = |l: &str| report.run(l, s).and_then(|r| r.final_mean()).unwrap_or(f64::NAN);
        let (inc, exc) = (get("include"), get("exclude"));
        let _ = writeln!(paired, "{s},{inc},{exc},{}", inc - exc);
        lines.push(format!("seed {s}: include {inc:.4} exclude {exc:.4}"));
    }
    let mut art = Artifacts::create(out)?;
    write_report(&mut art, &report)?;
    art.write("paired.csv", &paired)?;
    art.finish(
        "ablate target-inclusion",
        cfg.digest(),
        cfg.seed,
        cfg.experiment.seeds.clone(),
    )?;
    Ok(lines)
}

fn curve_csv(curve: &[f64], value_loss: &[f64]) -> String {
    let mut s = String::from("episode,total_reward,normalized,value_loss\n");
    for (i, (r, n)) in curve.iter().zip(normalize_curve(curve)).enumerate() {
        let _ = writeln!(s, "{},{},{},{}", i + 1, r, n, value_loss[i]);
    }
    s
}

fn cmd_tl(cfg: &RunConfig, out: &Path, checkpoint: Option<&Path>) -> Result<Vec<String>> {
    let all = cfg.load_cycles()?;
    let part = cfg.partition(&all)?;
    let targets = part.target_cycles(&all)?;
    let mut art = Artifacts::create(out)?;
    let given = checkpoint
        .map(Path::to_path_buf)
        .or_else(|| cfg.experiment.expert_checkpoint.clone());
    let ck = match given {
        Some(p) => load_checkpoint(cfg, &p)?,
        None => {
            let source = part.source_cycles(&all)?;
            let hyper = Hyperparams {
                n_iterations: cfg.protocol.expert_iterations,
                ..cfg.hyper.clone()
            };
            let opts = TrainOptions {
                soc0: cfg.protocol.soc0,
                ..Default::default()
            };
            let (ck, _) = train_expert(
                &source,
                &cfg.powertrain,
                &hyper,
                &cfg.protocol.layout,
                expert_seed(cfg.seed),
                &opts,
            )
            .map_err(|e| e.context("expert"))?;
            art.write("expert.json", &ck.to_json()?)?;
            ck
        }
    };
    let report = run_tl_vs_no_tl(
        &targets,
        &ck,
        &cfg.powertrain,
        &cfg.hyper,
        &cfg.experiment.seeds,
        &cfg.protocol,
    )?;
    write_report(&mut art, &report)?;
    for r in &report.runs {
        art.write(
            &format!("curve_seed{}_{}.csv", r.seed, r.mode),
            &curve_csv(&r.curve, &r.value_loss),
        )?;
    }
    art.finish("ablate tl", cfg.digest(), cfg.seed, cfg.experiment.seeds.clone())?;
    Ok(summary_lines(&report))
}

fn policy_cost(params: &Policy, cfg: &RunConfig, cycle: &DrivingCycle, soc0: f64) -> Result<f64> {
    let mut policy = MeanPolicy::new(params);
    Ok(rollout(&cfg.powertrain, cycle, soc0, &mut policy, 0, 1.0)?.cost())
}

fn cmd_oracle_solve(
    cfg: &RunConfig,
    out: &Path,
    cycle: &str,
    soc0: Option<f64>,
    grid: Option<(usize, usize)>,
    checkpoint: Option<&Path>,
) -> Result<Vec<String>> {
    let cycle = resolve_cycle(cfg, cycle)?;
    let soc0 = soc0.unwrap_or(cfg.protocol.soc0);
    let ck = checkpoint.map(|p| load_checkpoint(cfg, p)).transpose()?;
    let (soc_nodes, torque_nodes) = grid.unwrap_or((cfg.oracle.soc_nodes, cfg.oracle.torque_nodes));
    let grid = DpGrid::uniform(&cfg.powertrain, soc_nodes, torque_nodes)?;
    let sol = dp_solve(&grid, &cfg.powertrain, &cycle, soc0)?;
    let mut lines = vec![format!(
        "{}: J*={:.4} realized={:.4} terminal_soc={:.4}",
        cycle.id,
        sol.j_star,
        sol.realized_cost(),
        sol.trajectory.terminal_soc
    )];
    let (pc, gap) = match &ck {
        Some(ck) => {
            let c = policy_cost(&ck.params, cfg, &cycle, soc0)?;
            let gap = 100.0 * (c - sol.j_star) / sol.j_star;
            lines.push(format!("policy cost={c:.4} gap={gap:.2}%"));
            (c.to_string(), gap.to_string())
        }
        None => (String::new(), String::new()),
    };
    let mut art = Artifacts::create(out)?;
    art.write("dp_trajectory.csv", &sol.trajectory.to_csv())?;
    let mut torques = String::from("t,t_ice\n");
    for (t, q) in sol.torques.iter().enumerate() {
        let _ = writeln!(torques, "{t},{q}");
    }
    art.write("dp_torques.csv", &torques)?;
    let row = format!(
        "{ORACLE_HEADER}\n{},{},{},{},{},{},{pc},{gap}\n",
        cycle.id,
        soc0,
        soc_nodes,
        torque_nodes,
        sol.j_star,
        sol.realized_cost()
    );
    art.write("oracle.csv", &row)?;
    art.finish("oracle solve", cfg.digest(), cfg.seed, Vec::new())?;
    Ok(lines)
}

fn cmd_oracle_refine(cfg: &RunConfig, out: &Path, cycle: &str, soc0: Option<f64>) -> Result<Vec<String>> {
    let cycle = resolve_cycle(cfg, cycle)?;
    let soc0 = soc0.unwrap_or(cfg.protocol.soc0);
    let rows = dp_refine_study(
        &cycle,
        &cfg.powertrain,
        soc0,
        &cfg.oracle.ladder,
        cfg.oracle.torque_nodes,
    )?;
    let mut art = Artifacts::create(out)?;
    art.write("refine.csv", &refine_csv(&rows))?;
    art.finish("oracle refine", cfg.digest(), cfg.seed, Vec::new())?;
    let mut lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{} x {}: J*={:.4} realized={:.4}",
                r.soc_nodes, r.torque_nodes, r.j_star, r.realized_cost
            )
        })
        .collect();
    if let [.., a, b] = rows.as_slice() {
        lines.push(format!(
            "finest-rung change {:.3}%",
            100.0 * (b.j_star - a.j_star).abs() / b.j_star.abs().max(f64::MIN_POSITIVE)
        ));
    }
    Ok(lines)
}

fn cmd_cycles_validate(paths: &[std::path::PathBuf], dt: f64) -> Result<Vec<String>> {
    paths
        .iter()
        .map(|p| {
            let c = load_cycle(p, dt)?;
            Ok(format!("{}: ok, {} samples, {} s", p.display(), c.len(), c.duration()))
        })
        .collect()
}

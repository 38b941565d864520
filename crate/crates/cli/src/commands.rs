use std::fs;
use std::path::{Path, PathBuf};

use teamnet::data::{load_dataset, save_dataset, synth_dataset, SignalConfig, SynthConfig, TeamDataset};
use teamnet::eval::{logo_run, reports_to_csv, FoldScheme, MetricReport};
use teamnet::explain::{
    counterfactual_dot, expected_teamwork, greedy_counterfactual, percentile, render_attribution, saliency, Direction,
    Objective, SearchConfig, Target,
};
use teamnet::train::train_model;
use teamnet::{DynamicTeam, Model, Paradigm};

use crate::config::RunConfig;
use crate::{CliError, DirectionArg, EvalArgs, ExplainArgs, Folds, Method, RunArgs, SynthArgs, TrainArgs};

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

fn out_dir(path: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = path.clone().ok_or_else(|| CliError::input("--out is required"))?;
    fs::create_dir_all(&dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let cfg = SynthConfig {
        seed: a.seed,
        n_teams: a.teams,
        roster_size: a.roster,
        steps: a.steps,
        feature_dim: a.features,
        signal: SignalConfig {
            strength: a.strength,
            ..SignalConfig::default()
        },
    };
    let ds = synth_dataset(&cfg)?;
    save_dataset(&ds, &a.out)?;
    println!("wrote {} teams to {}", ds.teams.len(), a.out.display());
    Ok(())
}

pub fn validate(path: &Path) -> Result<(), CliError> {
    let ds = load_dataset(path)?;
    let members: usize = ds.teams.iter().map(DynamicTeam::n_members).sum();
    let edges: usize = ds.teams.iter().map(DynamicTeam::n_edges).sum();
    println!(
        "ok: {} teams, {members} members, {edges} edges, {} features, tasks {}",
        ds.teams.len(),
        ds.feature_dim(),
        ds.tasks.join(",")
    );
    Ok(())
}

/// Configuration file plus flag overrides, validated; also returns the
/// configuration text as given.
fn resolve(run: &RunArgs) -> Result<(RunConfig, Option<String>), CliError> {
    let mut cfg = RunConfig::load(run.config.as_deref())?;
    let raw = match &run.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| CliError::input(e.to_string()))?),
        None => None,
    };
    if let Some(d) = &run.data {
        cfg.data = Some(d.clone());
    }
    if let Some(t) = &run.tasks {
        cfg.model.tasks = t.clone();
    }
    if let Some(h) = run.hidden {
        cfg.model.hidden = h;
    }
    if let Some(lr) = run.lr {
        cfg.eval.train.lr = lr;
    }
    if let Some(e) = run.max_epochs {
        cfg.eval.train.max_epochs = e;
    }
    if let Some(p) = run.patience {
        cfg.eval.train.patience = p;
    }
    if let Some(o) = &run.out {
        cfg.out = Some(o.clone());
    }
    cfg.validate()?;
    Ok((cfg, raw))
}

fn dataset(cfg: &RunConfig) -> Result<TeamDataset, CliError> {
    Ok(match &cfg.data {
        Some(p) => load_dataset(p)?,
        None => synth_dataset(&cfg.synth)?,
    })
}

fn echo_config(dir: &Path, cfg: &RunConfig, raw: &Option<String>) -> Result<(), CliError> {
    if let Some(text) = raw {
        write(&dir.join("config.json"), text)?;
    }
    write(&dir.join("config.resolved.json"), &cfg.to_json())
}

fn parse_paradigm(s: &str) -> Result<Paradigm, CliError> {
    s.parse().map_err(CliError::from)
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let (cfg, raw) = resolve(&a.run)?;
    let paradigm = parse_paradigm(&a.paradigm)?;
    let ds = dataset(&cfg)?;
    let dir = out_dir(&cfg.out)?;
    let val_idx = match &a.val_team {
        Some(id) => ds
            .teams
            .iter()
            .position(|t| &t.team_id == id)
            .ok_or_else(|| CliError::input(format!("no team `{id}`")))?,
        None => ds.teams.len() - 1,
    };
    if ds.teams.len() < 2 {
        return Err(CliError::input("training needs at least two teams"));
    }
    let train: Vec<&DynamicTeam> = ds
        .teams
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != val_idx)
        .map(|(_, t)| t)
        .collect();
    let model_cfg = cfg.model.with_paradigm(paradigm);
    for spec in model_cfg.specs(ds.feature_dim())? {
        let (model, report) = train_model(&spec, &train, &ds.teams[val_idx], &cfg.eval.train, a.seed)?;
        let name = if paradigm.is_multi_task() {
            format!("model-{paradigm}.json")
        } else {
            format!("model-{paradigm}-{}.json", spec.head.tasks[0])
        };
        model.save(&dir.join(&name))?;
        println!(
            "{name}: {} params, {} epochs (best {}), validation loss {:.4}",
            model.param_count(),
            report.epochs_run,
            report.best_epoch,
            report.best_val_loss
        );
    }
    echo_config(&dir, &cfg, &raw)
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let (mut cfg, raw) = resolve(&a.run)?;
    if let Some(n) = a.seeds {
        if n == 0 {
            return Err(CliError::input("--seeds must be at least 1"));
        }
        cfg.eval.seeds = (0..n).collect();
    }
    if let Some(f) = a.folds {
        cfg.eval.folds = match f {
            Folds::All => FoldScheme::All,
            Folds::Cyclic => FoldScheme::Cyclic,
        };
    }
    if let Some(j) = a.jobs {
        cfg.eval.jobs = j;
    }
    if a.no_timing {
        cfg.eval.record_timing = false;
    }
    let paradigms: Vec<Paradigm> = if a.paradigm == "all" {
        Paradigm::ALL.to_vec()
    } else {
        vec![parse_paradigm(&a.paradigm)?]
    };
    if cfg.model.tasks.len() < 2 && paradigms.contains(&Paradigm::MtTrenn) {
        return Err(CliError::input("mt-trenn needs at least two tasks"));
    }
    let ds = dataset(&cfg)?;
    let dir = out_dir(&cfg.out)?;
    echo_config(&dir, &cfg, &raw)?;
    let mut reports: Vec<MetricReport> = Vec::new();
    for p in paradigms {
        let report = logo_run(&ds, &cfg.model.with_paradigm(p), &cfg.eval)?;
        print_summary(&report);
        reports.push(report);
    }
    write(&dir.join("report.csv"), &reports_to_csv(&reports))?;
    let json = serde_json::to_string_pretty(&reports).map_err(|e| CliError::internal(e.to_string()))?;
    write(&dir.join("report.json"), &json)?;
    println!("reports written to {}", dir.display());
    Ok(())
}

fn print_summary(r: &MetricReport) {
    let n = r.tasks.len() as f64;
    let mean = |f: &dyn Fn(&teamnet::eval::TaskReport) -> f64| r.tasks.iter().map(f).sum::<f64>() / n;
    println!(
        "{:<9} params {:>6}  mse {:.4}  acc@1 {:.3}  acc@last {:.3}",
        r.model,
        r.param_count,
        mean(&|t| t.mse.mean),
        mean(&|t| t.acc_at_1.mean),
        mean(&|t| t.acc_at_last.mean)
    );
}

pub fn explain(a: &ExplainArgs) -> Result<(), CliError> {
    let model = Model::load(&a.checkpoint)?;
    let ds = load_dataset(&a.data)?;
    let team = ds
        .teams
        .iter()
        .find(|t| t.team_id == a.team)
        .ok_or_else(|| CliError::input(format!("no team `{}` in {}", a.team, a.data.display())))?;
    let target = if a.task == "expected_teamwork" {
        Target::ExpectedTeamwork
    } else {
        Target::Task {
            task: a.task.clone(),
            member: a.member,
        }
    };
    let dir = out_dir(&Some(a.out.clone()))?;
    let stem = format!("{}-{}", team.team_id, target.label().replace(['[', ']'], "_"));
    match a.method {
        Method::Saliency => {
            let map = saliency(&model, team, &target, a.signed)?;
            let binned = render_attribution(&map, a.bins)?;
            write(&dir.join(format!("saliency-{stem}.json")), &map.to_json())?;
            write(&dir.join(format!("saliency-{stem}-binned.json")), &binned.to_json())?;
            write(&dir.join(format!("saliency-{stem}.dot")), &binned.to_dot(team))?;
            for (id, s) in map.members.iter().zip(&map.per_member) {
                println!("member {id}: mean attribution {s:.6}");
            }
        }
        Method::Counterfactual => {
            let threshold = match (a.threshold, &target) {
                (Some(t), _) => Some(t),
                (None, Target::ExpectedTeamwork) => {
                    let others = ds
                        .teams
                        .iter()
                        .filter(|t| t.team_id != team.team_id)
                        .map(|t| expected_teamwork(&model, t))
                        .collect::<Result<Vec<_>, _>>()?;
                    percentile(&others, 0.75)
                }
                (None, _) => None,
            };
            let objective = Objective {
                target,
                direction: match a.direction {
                    DirectionArg::Increase => Direction::Increase,
                    DirectionArg::Decrease => Direction::Decrease,
                },
                threshold,
            };
            let cfg = SearchConfig {
                budget: a.budget,
                ..SearchConfig::default()
            };
            let result = greedy_counterfactual(&model, team, &objective, &cfg)?;
            let json = serde_json::to_string_pretty(&result).map_err(|e| CliError::internal(e.to_string()))?;
            write(&dir.join(format!("counterfactual-{stem}.json")), &json)?;
            write(
                &dir.join(format!("counterfactual-{stem}.dot")),
                &counterfactual_dot(team, &result),
            )?;
            println!(
                "score {:.4} -> {:.4} removing {} edge(s) ({} evaluations, target {})",
                result.original_score,
                result.counterfactual_score,
                result.removed.len(),
                result.evaluations,
                if result.achieved_target {
                    "reached"
                } else {
                    "not reached"
                }
            );
        }
    }
    Ok(())
}

//! Nested leave-one-group-out evaluation, ranking metrics, multi-seed
//! aggregation and the multi-task efficiency audit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use web_time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{all_tasks, DynamicTeam, TeamDataset};
use crate::encoders::EncoderSpec;
use crate::heads::HeadSpec;
use crate::losses::LossConfig;
use crate::model::{Model, ModelSpec, Paradigm};
use crate::train::{train_model, TrainConfig};
use crate::{Error, Result};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Index of the smallest value; ties go to the lowest index.
pub fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Model(format!(
            "{} predictions for {} ground-truth values",
            pred.len(),
            truth.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::Model("ranking accuracy needs at least two members".into()));
    }
    Ok(())
}

/// 1 when the top-predicted member is the top-rated one, else 0.
pub fn acc_at_1(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    Ok(f64::from(u8::from(argmax(pred) == argmax(truth))))
}

/// 1 when the bottom-predicted member is the bottom-rated one, else 0.
pub fn acc_at_last(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    Ok(f64::from(u8::from(argmin(pred) == argmin(truth))))
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Model("MSE needs equally long, non-empty inputs".into()));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldScheme {
    /// Every ordered `(validation, test)` pair of distinct teams.
    All,
    /// Team `i` validates while team `i + 1` (cyclically) tests.
    Cyclic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_teams: usize,
    pub folds: Vec<(usize, usize)>,
}

impl FoldPlan {
    pub fn new(n_teams: usize, scheme: FoldScheme) -> Result<Self> {
        if n_teams < 3 {
            return Err(Error::Config(format!(
                "leave-one-group-out needs at least 3 teams, got {n_teams}"
            )));
        }
        let folds = match scheme {
            FoldScheme::All => (0..n_teams)
                .flat_map(|v| (0..n_teams).filter(move |&t| t != v).map(move |t| (v, t)))
                .collect(),
            FoldScheme::Cyclic => (0..n_teams).map(|v| (v, (v + 1) % n_teams)).collect(),
        };
        Ok(Self { n_teams, folds })
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    /// Training teams of fold `i`: everything but its validation and test team.
    pub fn train_indices(&self, i: usize) -> Vec<usize> {
        let (v, t) = self.folds[i];
        (0..self.n_teams).filter(|&k| k != v && k != t).collect()
    }
}

/// Architecture shared by every model a paradigm trains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub paradigm: Paradigm,
    pub tasks: Vec<String>,
    pub hidden: usize,
    pub heads: usize,
    pub gcn_layers: usize,
    pub head_hidden: usize,
    pub positional_encoding: bool,
    pub gcn_bias: bool,
    pub loss: LossConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            paradigm: Paradigm::Trenn,
            tasks: all_tasks(),
            hidden: 8,
            heads: 2,
            gcn_layers: 2,
            head_hidden: 8,
            positional_encoding: true,
            gcn_bias: true,
            loss: LossConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn with_paradigm(&self, paradigm: Paradigm) -> Self {
        Self {
            paradigm,
            ..self.clone()
        }
    }

    pub fn spec(&self, d_in: usize, tasks: Vec<String>) -> ModelSpec {
        ModelSpec {
            paradigm: self.paradigm,
            encoder: EncoderSpec {
                kind: self.paradigm.encoder_kind(),
                d_in,
                hidden: self.hidden,
                gcn_layers: self.gcn_layers,
                heads: self.heads,
                positional_encoding: self.positional_encoding,
                gcn_bias: self.gcn_bias,
            },
            head: HeadSpec {
                tasks,
                hidden: self.head_hidden,
            },
            loss: self.loss.clone(),
        }
    }

    /// One multi-task spec, or one single-task spec per task.
    pub fn specs(&self, d_in: usize) -> Result<Vec<ModelSpec>> {
        let specs: Vec<ModelSpec> = if self.paradigm.is_multi_task() {
            vec![self.spec(d_in, self.tasks.clone())]
        } else {
            self.tasks.iter().map(|t| self.spec(d_in, vec![t.clone()])).collect()
        };
        for s in &specs {
            s.validate()?;
        }
        Ok(specs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub folds: FoldScheme,
    /// Timing numbers vary between runs; leave them out for reproducible reports.
    pub record_timing: bool,
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            seeds: (0..10).collect(),
            folds: FoldScheme::All,
            record_timing: true,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub per_seed: Vec<f64>,
}

impl Summary {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std,
            per_seed: values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: String,
    pub mse: Summary,
    pub acc_at_1: Summary,
    pub acc_at_last: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub n_teams: usize,
    pub n_folds: usize,
    pub seeds: Vec<u64>,
    pub tasks: Vec<TaskReport>,
    /// Summed over every model the paradigm trains.
    pub param_count: usize,
    pub train_ms_per_epoch: Option<f64>,
    pub infer_ms_per_team: Option<f64>,
}

impl MetricReport {
    pub fn task(&self, name: &str) -> Option<&TaskReport> {
        self.tasks.iter().find(|t| t.task == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub const CSV_HEADER: &str = "model,task,metric,mean,std,params,train_ms,infer_ms";

/// One row per model × task × metric.
pub fn reports_to_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for r in reports {
        for t in &r.tasks {
            for (metric, s) in [
                ("mse", &t.mse),
                ("acc_at_1", &t.acc_at_1),
                ("acc_at_last", &t.acc_at_last),
            ] {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    r.model,
                    t.task,
                    metric,
                    s.mean,
                    s.std,
                    r.param_count,
                    opt(r.train_ms_per_epoch),
                    opt(r.infer_ms_per_team)
                );
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
struct FoldOutcome {
    fold: usize,
    /// `(mse, acc@1, acc@last)` per task in config order.
    metrics: Vec<[f64; 3]>,
    params: usize,
    train_ms_per_epoch: f64,
    infer_ms: f64,
}

fn mix(seed: u64, fold: usize, model: usize) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((fold as u64) << 20)
        .wrapping_add(model as u64);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn run_fold(
    ds: &TeamDataset,
    plan: &FoldPlan,
    fold: usize,
    cfg: &ModelConfig,
    specs: &[ModelSpec],
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<FoldOutcome> {
    let (v, t) = plan.folds[fold];
    let train: Vec<&DynamicTeam> = plan.train_indices(fold).into_iter().map(|i| &ds.teams[i]).collect();
    let test = &ds.teams[t];
    let mut by_task: BTreeMap<&str, [f64; 3]> = BTreeMap::new();
    let mut out = FoldOutcome {
        fold,
        metrics: Vec::new(),
        params: 0,
        train_ms_per_epoch: 0.0,
        infer_ms: 0.0,
    };
    for (si, spec) in specs.iter().enumerate() {
        let (model, report) = train_model(spec, &train, &ds.teams[v], train_cfg, mix(seed, fold, si))?;
        out.params += model.param_count();
        out.train_ms_per_epoch += report.train_ms_per_epoch;
        let t0 = Instant::now();
        let pred = model.predict(test)?;
        out.infer_ms += t0.elapsed().as_secs_f64() * 1e3;
        for (k, task) in model.tasks().iter().enumerate() {
            let col = test
                .task_index(task)
                .ok_or_else(|| Error::Model(format!("team {} lacks `{task}`", test.team_id)))?;
            let p: Vec<f64> = (0..pred.rows()).map(|r| pred.get(r, k)).collect();
            let y = test.label_column(col);
            let entry = [mse(&p, &y)?, acc_at_1(&p, &y)?, acc_at_last(&p, &y)?];
            let name = cfg.tasks.iter().find(|n| *n == task).expect("configured task");
            by_task.insert(name.as_str(), entry);
        }
    }
    out.metrics = cfg.tasks.iter().map(|t| by_task[t.as_str()]).collect();
    Ok(out)
}

/// Runs every fold of the plan for every seed and reduces the member-level
/// test metrics: mean within a fold's test team, mean across folds, then
/// mean ± std across seeds.
pub fn logo_run(ds: &TeamDataset, cfg: &ModelConfig, eval: &EvalConfig) -> Result<MetricReport> {
    eval.train.validate()?;
    if eval.seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    for task in &cfg.tasks {
        if ds.task_index(task).is_none() {
            return Err(Error::Config(format!("dataset has no labels for `{task}`")));
        }
    }
    let plan = FoldPlan::new(ds.teams.len(), eval.folds)?;
    let specs = cfg.specs(ds.feature_dim())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(eval.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let mut per_seed: Vec<Vec<[f64; 3]>> = Vec::with_capacity(eval.seeds.len());
    let (mut params, mut train_ms, mut infer_ms, mut runs) = (0, 0.0, 0.0, 0usize);
    for &seed in &eval.seeds {
        let jobs: Vec<usize> = (0..plan.len()).collect();
        let mut outcomes = pool.install(|| {
            jobs.par_iter()
                .map(|&f| run_fold(ds, &plan, f, cfg, &specs, &eval.train, seed))
                .collect::<Result<Vec<_>>>()
        })?;
        outcomes.sort_by_key(|o| o.fold);
        let n = outcomes.len() as f64;
        let means = (0..cfg.tasks.len())
            .map(|k| {
                let mut acc = [0.0; 3];
                for o in &outcomes {
                    for (a, v) in acc.iter_mut().zip(o.metrics[k]) {
                        *a += v;
                    }
                }
                acc.map(|a| a / n)
            })
            .collect();
        per_seed.push(means);
        params = outcomes[0].params;
        for o in &outcomes {
            train_ms += o.train_ms_per_epoch;
            infer_ms += o.infer_ms;
            runs += 1;
        }
        log::info!("{} seed {seed}: {} folds done", cfg.paradigm, outcomes.len());
    }

    let tasks = cfg
        .tasks
        .iter()
        .enumerate()
        .map(|(k, task)| {
            let col = |m: usize| Summary::of(per_seed.iter().map(|s| s[k][m]).collect());
            TaskReport {
                task: task.clone(),
                mse: col(0),
                acc_at_1: col(1),
                acc_at_last: col(2),
            }
        })
        .collect();
    let timing = |total: f64| eval.record_timing.then(|| total / runs as f64);
    Ok(MetricReport {
        model: cfg.paradigm.to_string(),
        n_teams: ds.teams.len(),
        n_folds: plan.len(),
        seeds: eval.seeds.clone(),
        tasks,
        param_count: params,
        train_ms_per_epoch: timing(train_ms),
        infer_ms_per_team: timing(infer_ms),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub tasks: usize,
    pub mt_params: usize,
    pub single_params_total: usize,
    pub mt_forward_passes_per_team: f64,
    pub single_forward_passes_per_team: f64,
    pub mt_train_ms_per_epoch: f64,
    pub single_train_ms_per_epoch_total: f64,
    pub mt_infer_ms_per_team: f64,
    pub single_infer_ms_per_team_total: f64,
}

impl EfficiencyReport {
    pub fn param_reduction(&self) -> f64 {
        1.0 - self.mt_params as f64 / self.single_params_total as f64
    }

    pub fn train_time_reduction(&self) -> f64 {
        1.0 - self.mt_train_ms_per_epoch / self.single_train_ms_per_epoch_total
    }

    pub fn infer_time_reduction(&self) -> f64 {
        1.0 - self.mt_infer_ms_per_team / self.single_infer_ms_per_team_total
    }
}

/// Forward passes and wall-clock time of inference over `teams`, repeated.
fn time_inference(models: &[&Model], teams: &[DynamicTeam], repeats: usize) -> Result<(f64, f64)> {
    let inputs = models
        .iter()
        .map(|m| teams.iter().map(|t| m.prepare(t)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut passes = 0usize;
    let t0 = Instant::now();
    for _ in 0..repeats {
        for team in 0..teams.len() {
            for (m, ins) in models.iter().zip(&inputs) {
                m.predict_input(&ins[team])?;
                passes += 1;
            }
        }
    }
    let per_team = (repeats * teams.len()) as f64;
    Ok((passes as f64 / per_team, t0.elapsed().as_secs_f64() * 1e3 / per_team))
}

/// Compares one multi-task model with one single-task model per task of
/// the same architecture, all trained on identical data (every team but the
/// last, which validates) for `train.max_epochs` epochs.
pub fn efficiency_audit(
    ds: &TeamDataset,
    cfg: &ModelConfig,
    train: &TrainConfig,
    seed: u64,
    inference_repeats: usize,
) -> Result<EfficiencyReport> {
    let mt_cfg = cfg.with_paradigm(Paradigm::MtTrenn);
    let st_cfg = cfg.with_paradigm(Paradigm::Trenn);
    let d = ds.feature_dim();
    let (val, rest) = ds
        .teams
        .split_last()
        .ok_or_else(|| Error::Config("empty dataset".into()))?;
    let train_refs: Vec<&DynamicTeam> = rest.iter().collect();
    let fixed = TrainConfig {
        patience: usize::MAX,
        ..train.clone()
    };
    let (mt, mt_rep) = train_model(&mt_cfg.specs(d)?[0], &train_refs, val, &fixed, seed)?;
    let mut singles = Vec::new();
    let mut single_ms = 0.0;
    for (i, spec) in st_cfg.specs(d)?.iter().enumerate() {
        let (m, rep) = train_model(spec, &train_refs, val, &fixed, seed.wrapping_add(i as u64 + 1))?;
        single_ms += rep.train_ms_per_epoch;
        singles.push(m);
    }
    let (mt_passes, mt_infer) = time_inference(&[&mt], &ds.teams, inference_repeats)?;
    let single_refs: Vec<&Model> = singles.iter().collect();
    let (st_passes, st_infer) = time_inference(&single_refs, &ds.teams, inference_repeats)?;
    Ok(EfficiencyReport {
        tasks: cfg.tasks.len(),
        mt_params: mt.param_count(),
        single_params_total: singles.iter().map(Model::param_count).sum(),
        mt_forward_passes_per_team: mt_passes,
        single_forward_passes_per_team: st_passes,
        mt_train_ms_per_epoch: mt_rep.train_ms_per_epoch,
        single_train_ms_per_epoch_total: single_ms,
        mt_infer_ms_per_team: mt_infer,
        single_infer_ms_per_team_total: st_infer,
    })
}

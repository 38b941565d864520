use std::sync::OnceLock;
use std::time::Instant;

use teamnet::data::{synth_dataset, SynthConfig, EL, TW_TASKS};
use teamnet::eval::{efficiency_audit, logo_run, EvalConfig, FoldScheme, MetricReport, ModelConfig};
use teamnet::train::TrainConfig;
use teamnet::{Paradigm, TeamDataset};

use crate::support::verdict;
use crate::Outcome;

struct Benchmark {
    tnn: MetricReport,
    renn: MetricReport,
    trenn: MetricReport,
    mt_trenn: MetricReport,
    minutes: f64,
}

fn dataset() -> TeamDataset {
    // 12 teams, roster 4, 20 snapshots each.
    synth_dataset(&SynthConfig::default()).expect("default synthetic dataset")
}

fn eval_config() -> EvalConfig {
    EvalConfig {
        seeds: (0..10).collect(),
        folds: FoldScheme::Cyclic,
        record_timing: false,
        jobs: std::thread::available_parallelism().map_or(1, usize::from),
        ..EvalConfig::default()
    }
}

/// The four LOGO runs shared by the ordering and parity criteria.
fn benchmark() -> &'static Result<Benchmark, String> {
    static RUNS: OnceLock<Result<Benchmark, String>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let ds = dataset();
        let eval = eval_config();
        let ranked: Vec<String> = std::iter::once(EL).chain(TW_TASKS).map(String::from).collect();
        let run = |paradigm: Paradigm, tasks: Vec<String>| {
            let cfg = ModelConfig {
                tasks,
                ..ModelConfig::default()
            }
            .with_paradigm(paradigm);
            logo_run(&ds, &cfg, &eval).map_err(|e| format!("{paradigm}: {e}"))
        };
        Ok(Benchmark {
            tnn: run(Paradigm::Tnn, ranked.clone())?,
            renn: run(Paradigm::Renn, ranked)?,
            trenn: run(Paradigm::Trenn, ds.tasks.clone())?,
            mt_trenn: run(Paradigm::MtTrenn, ds.tasks.clone())?,
            minutes: start.elapsed().as_secs_f64() / 60.0,
        })
    })
}

fn acc_at_1(r: &MetricReport) -> f64 {
    r.task(EL).expect("EL evaluated").acc_at_1.mean
}

fn teamwork_mse(r: &MetricReport) -> f64 {
    TW_TASKS
        .iter()
        .map(|t| r.task(t).expect("TW evaluated").mse.mean)
        .sum::<f64>()
        / TW_TASKS.len() as f64
}

pub fn paradigm_ordering() -> Outcome {
    let b = benchmark().as_ref().map_err(Clone::clone)?;
    let (acc_tr, acc_r, acc_t) = (acc_at_1(&b.trenn), acc_at_1(&b.renn), acc_at_1(&b.tnn));
    let (mse_tr, mse_r, mse_t) = (teamwork_mse(&b.trenn), teamwork_mse(&b.renn), teamwork_mse(&b.tnn));
    verdict(
        acc_tr > acc_r && acc_tr > acc_t && mse_tr < mse_r && mse_tr < mse_t && b.minutes < 30.0,
        format!(
            "EL ACC@1 trenn {acc_tr:.3} / renn {acc_r:.3} / tnn {acc_t:.3}; \
             TW MSE trenn {mse_tr:.3} / renn {mse_r:.3} / tnn {mse_t:.3} ({} folds × {} seeds); \
             all benchmark runs {:.1} min (limit 30)",
            b.trenn.n_folds,
            b.trenn.seeds.len(),
            b.minutes
        ),
    )
}

pub fn multi_task_parity() -> Outcome {
    let b = benchmark().as_ref().map_err(Clone::clone)?;
    let mut worst = (String::new(), 0.0f64);
    let mut over = Vec::new();
    for st in &b.trenn.tasks {
        let mt = b.mt_trenn.task(&st.task).expect("same task list");
        let ratio = mt.mse.mean / st.mse.mean;
        if ratio > worst.1 {
            worst = (st.task.clone(), ratio);
        }
        if ratio > 1.1 {
            over.push(format!("{} {:.3} vs {:.3}", st.task, mt.mse.mean, st.mse.mean));
        }
    }
    verdict(
        over.is_empty(),
        format!(
            "MT/ST MSE ratio worst {:.4} on {} (limit 1.1) over {} tasks{}",
            worst.1,
            worst.0,
            b.trenn.tasks.len(),
            if over.is_empty() {
                String::new()
            } else {
                format!("; above limit: {}", over.join(", "))
            }
        ),
    )
}

pub fn multi_task_efficiency() -> Outcome {
    let ds = dataset();
    let train = TrainConfig {
        max_epochs: 20,
        ..TrainConfig::default()
    };
    let r = efficiency_audit(&ds, &ModelConfig::default(), &train, 0, 20).map_err(|e| e.to_string())?;
    let params_ok = (r.mt_params as f64) < 0.5 * r.single_params_total as f64;
    let passes_ok = r.mt_forward_passes_per_team == 1.0 && r.single_forward_passes_per_team == r.tasks as f64;
    let time_ok = r.mt_infer_ms_per_team < r.single_infer_ms_per_team_total;
    verdict(
        r.tasks == 12 && params_ok && passes_ok && time_ok,
        format!(
            "{} heads; params {} vs {} ({:.1}% fewer); forward passes {} vs {}; \
             inference {:.3} vs {:.3} ms/team ({:.1}% less); training {:.2} vs {:.2} ms/epoch ({:.1}% less)",
            r.tasks,
            r.mt_params,
            r.single_params_total,
            100.0 * r.param_reduction(),
            r.mt_forward_passes_per_team,
            r.single_forward_passes_per_team,
            r.mt_infer_ms_per_team,
            r.single_infer_ms_per_team_total,
            100.0 * r.infer_time_reduction(),
            r.mt_train_ms_per_epoch,
            r.single_train_ms_per_epoch_total,
            100.0 * r.train_time_reduction()
        ),
    )
}

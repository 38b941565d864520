use std::collections::BTreeMap;
use web_time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DynamicTeam;
use crate::encoders::TeamInput;
use crate::model::{Model, ModelSpec, Standardizer};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            max_epochs: 300,
            patience: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub train_ms_per_epoch: f64,
}

struct Prepared {
    input: TeamInput,
    targets: Tensor,
}

fn prepare(model: &Model, team: &DynamicTeam) -> Result<Prepared> {
    Ok(Prepared {
        input: model.prepare(team)?,
        targets: model.targets(team)?,
    })
}

/// One Adam step on a single team.
fn step(model: &mut Model, team: &Prepared, adam: &mut AdamState, cfg: &AdamConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let p = model.params.bind(&mut tape);
    let x = tape.constant(team.input.features.clone());
    let out = model.forward(&mut tape, &p, &team.input, x)?;
    let loss = model.objective(&mut tape, &p, out.predictions, &team.targets)?;
    let value = tape.scalar(loss);
    let mut grads = tape.backward(loss)?;
    let named: BTreeMap<String, Tensor> = p
        .iter()
        .filter_map(|(name, v)| grads.take(v).map(|g| (name.to_string(), g)))
        .collect();
    adam_step(&mut model.params, &named, adam, cfg)?;
    Ok(value)
}

/// Unweighted mean of the per-task losses on one team.
pub fn evaluation_loss(model: &Model, input: &TeamInput, targets: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let p = model.params.bind_frozen(&mut tape);
    let x = tape.constant(input.features.clone());
    let out = model.forward(&mut tape, &p, input, x)?;
    let losses = model.task_losses(&mut tape, out.predictions, targets)?;
    Ok(losses.iter().map(|&l| tape.scalar(l)).sum::<f64>() / losses.len() as f64)
}

/// Trains a fresh model on `train`, early-stopping on the loss of `val`,
/// and returns the parameters of the best validation epoch.
///
/// Features are z-scored with statistics of `train`; each output bias
/// starts at the training mean of its task.
pub fn train_model(
    spec: &ModelSpec,
    train: &[&DynamicTeam],
    val: &DynamicTeam,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Model, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("no training teams".into()));
    }
    let mut model = Model::new(spec.clone(), seed)?;
    model.standardizer = Standardizer::fit(train.iter().copied())?;
    let teams = train.iter().map(|t| prepare(&model, t)).collect::<Result<Vec<_>>>()?;
    let val = prepare(&model, val)?;

    for (k, task) in spec.head.tasks.iter().enumerate() {
        let (sum, n) = teams.iter().fold((0.0, 0usize), |(s, n), t| {
            let col: f64 = (0..t.targets.rows()).map(|r| t.targets.get(r, k)).sum();
            (s + col, n + t.targets.rows())
        });
        model.params.insert(
            format!("head.{task}.1.bias"),
            Tensor::new(vec![1, 1], vec![sum / n as f64])?,
        );
    }

    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_7ea5);
    let mut order: Vec<usize> = (0..teams.len()).collect();
    let mut best = (
        evaluation_loss(&model, &val.input, &val.targets)?,
        0usize,
        model.params.clone(),
    );
    let mut epochs_run = 0;
    let started = Instant::now();
    let mut train_time = 0.0;
    for epoch in 1..=cfg.max_epochs {
        let t0 = Instant::now();
        order.shuffle(&mut rng);
        for &i in &order {
            step(&mut model, &teams[i], &mut adam, &adam_cfg)?;
        }
        train_time += t0.elapsed().as_secs_f64() * 1e3;
        epochs_run = epoch;
        let v = evaluation_loss(&model, &val.input, &val.targets)?;
        if !v.is_finite() {
            return Err(Error::Model(format!("validation loss diverged at epoch {epoch}")));
        }
        if v < best.0 {
            best = (v, epoch, model.params.clone());
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }
    log::debug!(
        "trained {} for {epochs_run} epochs in {:.0} ms (best epoch {})",
        spec.paradigm,
        started.elapsed().as_secs_f64() * 1e3,
        best.1
    );
    model.params = best.2;
    Ok((
        model,
        TrainReport {
            epochs_run,
            best_epoch: best.1,
            best_val_loss: best.0,
            train_ms_per_epoch: train_time / epochs_run as f64,
        },
    ))
}

//! Factual (gradient saliency) and counterfactual (edge removal)
//! explanations of trained models.

mod counterfactual;
mod render;

pub use counterfactual::{
    brute_force_counterfactual, counterfactual_dot, greedy_counterfactual, CounterfactualResult, Direction, EdgeRef,
    Objective, SearchConfig, BRUTE_FORCE_EDGE_CAP,
};
pub use render::{render_attribution, BinnedCell, BinnedReport};

use serde::{Deserialize, Serialize};

use crate::data::{is_teamwork_task, DynamicTeam, MemberId, TW_TASKS};
use crate::model::Model;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Scalar model output being explained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    /// One member's prediction for one task.
    Task { task: String, member: usize },
    /// Mean teamwork prediction over all members and teamwork tasks.
    ExpectedTeamwork,
}

impl Target {
    fn validate(&self, model: &Model, n: usize) -> Result<()> {
        match self {
            Target::Task { task, member } => {
                if model.task_column(task).is_none() {
                    return Err(Error::Config(format!("model has no head for `{task}`")));
                }
                if *member >= n {
                    return Err(Error::Config(format!(
                        "member position {member} out of range for {n} members"
                    )));
                }
            }
            Target::ExpectedTeamwork => {
                teamwork_columns(model)?;
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            Target::Task { task, member } => format!("{task}[{member}]"),
            Target::ExpectedTeamwork => "expected_teamwork".into(),
        }
    }
}

fn teamwork_columns(model: &Model) -> Result<Vec<usize>> {
    TW_TASKS
        .iter()
        .map(|t| {
            model
                .task_column(t)
                .ok_or_else(|| Error::Config(format!("model has no teamwork head `{t}`")))
        })
        .collect()
}

/// Builds the scalar for `target` on top of an `n × m` prediction node.
fn target_var(tape: &mut Tape, model: &Model, preds: Var, target: &Target) -> Result<Var> {
    match target {
        Target::Task { task, member } => {
            let col = model.task_column(task).expect("validated");
            Ok(tape.element(preds, *member, col)?)
        }
        Target::ExpectedTeamwork => {
            let cols = teamwork_columns(model)?;
            let parts = cols
                .iter()
                .map(|&c| tape.slice_cols(preds, c, 1))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let tw = tape.concat_cols(&parts)?;
            let total = tape.sum(tw)?;
            let count = tape.value(tw).len() as f64;
            Ok(tape.scale(total, 1.0 / count)?)
        }
    }
}

/// Scalar value of `target` for `team`.
pub fn target_score(model: &Model, team: &DynamicTeam, target: &Target) -> Result<f64> {
    target.validate(model, team.n_members())?;
    let preds = model.predict(team)?;
    Ok(match target {
        Target::Task { task, member } => preds.get(*member, model.task_column(task).expect("validated")),
        Target::ExpectedTeamwork => {
            let cols = teamwork_columns(model)?;
            let sum: f64 = (0..preds.rows())
                .flat_map(|r| cols.iter().map(move |&c| (r, c)))
                .map(|(r, c)| preds.get(r, c))
                .sum();
            sum / (preds.rows() * cols.len()) as f64
        }
    })
}

/// Mean over members and the eight teamwork heads of the predictions.
pub fn expected_teamwork(model: &Model, team: &DynamicTeam) -> Result<f64> {
    target_score(model, team, &Target::ExpectedTeamwork)
}

/// Teamwork labels (rather than predictions) averaged the same way.
pub fn observed_teamwork(team: &DynamicTeam) -> Option<f64> {
    let cols: Vec<usize> = team
        .tasks
        .iter()
        .enumerate()
        .filter(|(_, t)| is_teamwork_task(t))
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        return None;
    }
    let sum: f64 = cols.iter().map(|&c| team.label_column(c).iter().sum::<f64>()).sum();
    Some(sum / (cols.len() * team.n_members()) as f64)
}

/// Per-entry attributions of one scalar prediction to the input features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    pub target: Target,
    pub members: Vec<MemberId>,
    /// `members × steps × features`.
    pub values: Tensor,
    /// Mean over features, `members × steps`.
    pub per_step: Tensor,
    /// Mean over steps and features, one per member.
    pub per_member: Vec<f64>,
    pub signed: bool,
}

impl AttributionMap {
    pub fn n_members(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_steps(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn feature_dim(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn get(&self, member: usize, step: usize, feature: usize) -> f64 {
        let (k, d) = (self.n_steps(), self.feature_dim());
        self.values.data()[(member * k + step) * d + feature]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("attribution serializes")
    }
}

/// Gradient of `target` with respect to every raw input feature entry.
///
/// The model standardizes features internally, so gradients taken on the
/// standardized input are divided by the per-feature scale.
pub fn raw_gradient(model: &Model, team: &DynamicTeam, target: &Target) -> Result<Tensor> {
    target.validate(model, team.n_members())?;
    let input = model.prepare(team)?;
    let mut tape = Tape::new();
    let p = model.params.bind_frozen(&mut tape);
    let x = tape.leaf(input.features.clone());
    let out = model.forward(&mut tape, &p, &input, x)?;
    let f = target_var(&mut tape, model, out.predictions, target)?;
    let grads = tape.backward(f)?;
    let g = grads.get(x).expect("input is a tracked leaf");
    let d = g.cols();
    let mut raw = g.clone();
    for (i, v) in raw.data_mut().iter_mut().enumerate() {
        *v /= model.standardizer.std[i % d];
    }
    Ok(raw)
}

/// `|∂f/∂x|` (or the signed gradient) for every member, step and feature.
pub fn saliency(model: &Model, team: &DynamicTeam, target: &Target, signed: bool) -> Result<AttributionMap> {
    let g = raw_gradient(model, team, target)?;
    let (n, k, d) = (team.n_members(), team.n_steps(), team.feature_dim());
    let mut values = Vec::with_capacity(n * k * d);
    for v in 0..n {
        for t in 0..k {
            values.extend(g.row(t * n + v).iter().map(|&x| if signed { x } else { x.abs() }));
        }
    }
    let values = Tensor::new(vec![n, k, d], values)?;
    let mut per_step = Tensor::zeros(&[n, k]);
    for (cell, chunk) in per_step.data_mut().iter_mut().zip(values.data().chunks(d)) {
        *cell = chunk.iter().sum::<f64>() / d as f64;
    }
    let per_member = values
        .data()
        .chunks(k * d)
        .map(|c| c.iter().sum::<f64>() / (k * d) as f64)
        .collect();
    Ok(AttributionMap {
        target: target.clone(),
        members: team.members().to_vec(),
        values,
        per_step,
        per_member,
        signed,
    })
}

/// Linear-interpolated percentile (`q` in `[0, 1]`) of `xs`.
pub fn percentile(xs: &[f64], q: f64) -> Option<f64> {
    if xs.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

use serde::{Deserialize, Serialize};

use crate::data::EL;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub ranking_margin: f64,
    /// Weight of the ranking term next to the regression loss.
    pub ranking_coeff: f64,
    pub ranking_tasks: Vec<String>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            ranking_margin: 1.0,
            ranking_coeff: 0.1,
            ranking_tasks: vec![EL.to_string()],
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ranking_coeff >= 0.0 && self.ranking_coeff.is_finite()) {
            return Err(Error::Config("ranking coefficient must be finite and ≥ 0".into()));
        }
        if !self.ranking_margin.is_finite() {
            return Err(Error::Config("ranking margin must be finite".into()));
        }
        Ok(())
    }
}

/// Index pairs `(i, j)` with `labels[i] > labels[j]`; ties are left out.
pub fn ordered_pairs(labels: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, a) in labels.iter().enumerate() {
        for (j, b) in labels.iter().enumerate() {
            if a > b {
                out.push((i, j));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingLoss {
    pub value: f64,
    /// Set when fewer than two members were given, so no pair exists.
    pub degenerate: bool,
}

/// `Σ_{labels_i > labels_j} max(0, margin − (s_i − s_j))`.
pub fn pairwise_ranking_loss(scores: &[f64], labels: &[f64], margin: f64) -> Result<RankingLoss> {
    if scores.len() != labels.len() {
        return Err(Error::Model(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.len() < 2 {
        log::warn!("ranking loss on fewer than two members is zero");
        return Ok(RankingLoss {
            value: 0.0,
            degenerate: true,
        });
    }
    let value = ordered_pairs(labels)
        .into_iter()
        .map(|(i, j)| (margin - (scores[i] - scores[j])).max(0.0))
        .sum();
    Ok(RankingLoss {
        value,
        degenerate: false,
    })
}

/// Regression loss of one task column (`n × 1`), plus the ranking term when
/// the task is listed in `cfg.ranking_tasks`.
pub fn task_loss(tape: &mut Tape, pred: Var, labels: &[f64], task: &str, cfg: &LossConfig) -> Result<Var> {
    let target = Tensor::new(vec![labels.len(), 1], labels.to_vec())?;
    let mse = tape.mse(pred, target)?;
    if cfg.ranking_coeff == 0.0 || labels.len() < 2 || !cfg.ranking_tasks.iter().any(|t| t == task) {
        return Ok(mse);
    }
    let pairs = ordered_pairs(labels);
    if pairs.is_empty() {
        return Ok(mse);
    }
    let rank = tape.pairwise_hinge(pred, pairs, cfg.ranking_margin)?;
    let rank = tape.scale(rank, cfg.ranking_coeff)?;
    Ok(tape.add(mse, rank)?)
}

/// `Σ exp(α_i)·L_i`; `alpha` is a `1 × m` logit row.
pub fn mtl_loss(tape: &mut Tape, losses: &[Var], names: &[String], alpha: Var) -> Result<Var> {
    if losses.is_empty() || losses.len() != names.len() {
        return Err(Error::Model("task loss list does not match task names".into()));
    }
    if tape.value(alpha).shape() != [1, losses.len()] {
        return Err(Error::Model(format!(
            "{} task logits for {} tasks",
            tape.value(alpha).len(),
            losses.len()
        )));
    }
    for (l, name) in losses.iter().zip(names) {
        let v = tape.scalar(*l);
        if !v.is_finite() {
            return Err(Error::Model(format!("loss of task `{name}` is not finite ({v})")));
        }
    }
    let row = tape.concat_cols(losses)?;
    let lambda = tape.exp(alpha)?;
    let weighted = tape.mul(row, lambda)?;
    Ok(tape.sum(weighted)?)
}

/// `λ_i = exp(α_i)`.
pub fn task_weights(alpha: &Tensor) -> Vec<f64> {
    alpha.data().iter().map(|a| a.exp()).collect()
}

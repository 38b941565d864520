//! Per-task decoder heads: a two-layer ReLU MLP per task, applied to every
//! member's embedding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::params::{BoundParams, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const TASK_LOGITS: &str = "task_logits";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadSpec {
    pub tasks: Vec<String>,
    pub hidden: usize,
}

impl HeadSpec {
    pub fn is_multi_task(&self) -> bool {
        self.tasks.len() > 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::Config("a model needs at least one task head".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("head hidden width must be positive".into()));
        }
        let mut sorted = self.tasks.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.tasks.len() {
            return Err(Error::Config("duplicate task head".into()));
        }
        Ok(())
    }

    /// Head weights under `head.{task}.*`, plus zeroed task logits for
    /// multi-task heads.
    pub fn init_params<R: Rng>(&self, rng: &mut R, d_emb: usize, store: &mut ParamStore) -> Result<()> {
        self.validate()?;
        for task in &self.tasks {
            store.insert(
                format!("head.{task}.0.weight"),
                ParamStore::glorot(rng, d_emb, self.hidden),
            );
            store.insert(format!("head.{task}.0.bias"), Tensor::zeros(&[1, self.hidden]));
            store.insert(format!("head.{task}.1.weight"), ParamStore::glorot(rng, self.hidden, 1));
            store.insert(format!("head.{task}.1.bias"), Tensor::zeros(&[1, 1]));
        }
        if self.is_multi_task() {
            store.insert(TASK_LOGITS, Tensor::zeros(&[1, self.tasks.len()]));
        }
        Ok(())
    }

    /// Parameters of one task head on `d_emb`-wide embeddings.
    pub fn head_param_count(&self, d_emb: usize) -> usize {
        d_emb * self.hidden + self.hidden + self.hidden + 1
    }
}

/// One task head on `n × d` embeddings, giving an `n × 1` column.
pub fn decode_task(tape: &mut Tape, p: &BoundParams, emb: Var, task: &str) -> Result<Var> {
    let w0 = p.var(&format!("head.{task}.0.weight"))?;
    let b0 = p.var(&format!("head.{task}.0.bias"))?;
    let w1 = p.var(&format!("head.{task}.1.weight"))?;
    let b1 = p.var(&format!("head.{task}.1.bias"))?;
    if tape.value(w0).rows() != tape.value(emb).cols() {
        return Err(Error::Model(format!(
            "head `{task}` expects width {}, embedding has {}",
            tape.value(w0).rows(),
            tape.value(emb).cols()
        )));
    }
    let h = tape.matmul(emb, w0)?;
    let h = tape.add_row(h, b0)?;
    let h = tape.relu(h)?;
    let o = tape.matmul(h, w1)?;
    Ok(tape.add_row(o, b1)?)
}

/// All heads, `n × m` in task order.
pub fn decode(tape: &mut Tape, spec: &HeadSpec, p: &BoundParams, emb: Var) -> Result<Var> {
    let cols = spec
        .tasks
        .iter()
        .map(|t| decode_task(tape, p, emb, t))
        .collect::<Result<Vec<_>>>()?;
    if cols.len() == 1 {
        return Ok(cols[0]);
    }
    Ok(tape.concat_cols(&cols)?)
}

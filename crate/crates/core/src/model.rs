use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DynamicTeam;
use crate::encoders::{encode_var, Encoded, EncoderKind, EncoderSpec, TeamInput};
use crate::heads::{decode, HeadSpec, TASK_LOGITS};
use crate::losses::{mtl_loss, task_loss, LossConfig};
use crate::params::{BoundParams, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Paradigm {
    #[serde(rename = "snn")]
    Snn,
    #[serde(rename = "tnn")]
    Tnn,
    #[serde(rename = "renn")]
    Renn,
    #[serde(rename = "trenn")]
    Trenn,
    #[serde(rename = "mt-trenn")]
    MtTrenn,
}

impl Paradigm {
    pub const ALL: [Paradigm; 5] = [Self::Snn, Self::Tnn, Self::Renn, Self::Trenn, Self::MtTrenn];

    pub fn encoder_kind(self) -> EncoderKind {
        match self {
            Self::Snn => EncoderKind::Snn,
            Self::Tnn => EncoderKind::Tnn,
            Self::Renn => EncoderKind::Renn,
            Self::Trenn | Self::MtTrenn => EncoderKind::Trenn,
        }
    }

    pub fn is_multi_task(self) -> bool {
        self == Self::MtTrenn
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Snn => "snn",
            Self::Tnn => "tnn",
            Self::Renn => "renn",
            Self::Trenn => "trenn",
            Self::MtTrenn => "mt-trenn",
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Paradigm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown paradigm `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub paradigm: Paradigm,
    pub encoder: EncoderSpec,
    pub head: HeadSpec,
    pub loss: LossConfig,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.head.validate()?;
        self.loss.validate()?;
        if self.encoder.kind != self.paradigm.encoder_kind() {
            return Err(Error::Config(format!(
                "paradigm {} cannot use a {:?} encoder",
                self.paradigm, self.encoder.kind
            )));
        }
        let m = self.head.tasks.len();
        if self.paradigm.is_multi_task() && m < 2 {
            return Err(Error::Config("multi-task model needs at least two tasks".into()));
        }
        if !self.paradigm.is_multi_task() && m != 1 {
            return Err(Error::Config(format!(
                "{} is single-task but {m} tasks were given",
                self.paradigm
            )));
        }
        Ok(())
    }
}

/// Per-feature z-scoring, fitted on training teams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    /// Zero-variance features keep unit scale.
    pub fn fit<'a>(teams: impl IntoIterator<Item = &'a DynamicTeam>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for team in teams {
            for snap in &team.snapshots {
                let f = &snap.features;
                if sum.is_empty() {
                    sum = vec![0.0; f.cols()];
                    sq = vec![0.0; f.cols()];
                }
                if f.cols() != sum.len() {
                    return Err(Error::Model("feature width differs between teams".into()));
                }
                for r in 0..f.rows() {
                    for (c, v) in f.row(r).iter().enumerate() {
                        sum[c] += v;
                        sq[c] += v * v;
                    }
                }
                count += f.rows();
            }
        }
        if count == 0 {
            return Err(Error::Model("cannot fit a standardizer on no rows".into()));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let s = (q / n - m * m).max(0.0).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, features: &Tensor) -> Result<Tensor> {
        if features.cols() != self.mean.len() {
            return Err(Error::Model(format!(
                "standardizer fitted on {} features, got {}",
                self.mean.len(),
                features.cols()
            )));
        }
        let d = self.mean.len();
        let mut out = features.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let c = i % d;
            *v = (*v - self.mean[c]) / self.std[c];
        }
        Ok(out)
    }
}

/// Symbolic outputs of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub encoded: Encoded,
    /// `n × m`, columns in head task order.
    pub predictions: Var,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub standardizer: Standardizer,
    pub params: ParamStore,
}

impl Model {
    /// Glorot-initialized model with an identity standardizer.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        spec.encoder.init_params(&mut rng, &mut params)?;
        spec.head.init_params(&mut rng, spec.encoder.hidden, &mut params)?;
        Ok(Self {
            standardizer: Standardizer::identity(spec.encoder.d_in),
            spec,
            params,
        })
    }

    pub fn tasks(&self) -> &[String] {
        &self.spec.head.tasks
    }

    pub fn task_column(&self, task: &str) -> Option<usize> {
        self.tasks().iter().position(|t| t == task)
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Standardized encoder input for `team`.
    pub fn prepare(&self, team: &DynamicTeam) -> Result<TeamInput> {
        let input = TeamInput::new(team)?;
        let features = self.standardizer.apply(&input.features)?;
        Ok(input.with_features(features))
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, input: &TeamInput, x: Var) -> Result<Forward> {
        let encoded = encode_var(tape, &self.spec.encoder, p, input, x)?;
        let predictions = decode(tape, &self.spec.head, p, encoded.embedding)?;
        Ok(Forward { encoded, predictions })
    }

    /// Predictions (`n × m`) on a prepared input.
    pub fn predict_input(&self, input: &TeamInput) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let x = tape.constant(input.features.clone());
        let out = self.forward(&mut tape, &p, input, x)?;
        Ok(tape.value(out.predictions).clone())
    }

    pub fn predict(&self, team: &DynamicTeam) -> Result<Tensor> {
        self.predict_input(&self.prepare(team)?)
    }

    /// Labels of `team` in this model's task order, `n × m`.
    pub fn targets(&self, team: &DynamicTeam) -> Result<Tensor> {
        let n = team.n_members();
        let mut out = Tensor::zeros(&[n, self.tasks().len()]);
        for (k, task) in self.tasks().iter().enumerate() {
            let col = team
                .task_index(task)
                .ok_or_else(|| Error::Model(format!("team {} has no labels for `{task}`", team.team_id)))?;
            for r in 0..n {
                out.set(r, k, team.labels.get(r, col));
            }
        }
        Ok(out)
    }

    /// Per-task losses (regression plus ranking where configured).
    pub fn task_losses(&self, tape: &mut Tape, predictions: Var, targets: &Tensor) -> Result<Vec<Var>> {
        self.tasks()
            .iter()
            .enumerate()
            .map(|(k, task)| {
                let col = tape.slice_cols(predictions, k, 1)?;
                let y: Vec<f64> = (0..targets.rows()).map(|r| targets.get(r, k)).collect();
                task_loss(tape, col, &y, task, &self.spec.loss)
            })
            .collect()
    }

    /// Training objective: the single task loss, or the exp-weighted sum.
    pub fn objective(&self, tape: &mut Tape, p: &BoundParams, predictions: Var, targets: &Tensor) -> Result<Var> {
        let losses = self.task_losses(tape, predictions, targets)?;
        if !self.spec.head.is_multi_task() {
            return Ok(losses[0]);
        }
        let alpha = p.var(TASK_LOGITS)?;
        mtl_loss(tape, &losses, self.tasks(), alpha)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let model: Model = serde_json::from_str(&s).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        model.spec.validate()?;
        let fresh = Model::new(model.spec.clone(), 0)?;
        for (name, t) in fresh.params.iter() {
            let got = model.params.require(name)?;
            if got.shape() != t.shape() {
                return Err(Error::Config(format!(
                    "{}: parameter {name} has shape {:?}, expected {:?}",
                    path.display(),
                    got.shape(),
                    t.shape()
                )));
            }
        }
        if model.params.len() != fresh.params.len() {
            return Err(Error::Config(format!("{}: unexpected parameters", path.display())));
        }
        Ok(model)
    }
}

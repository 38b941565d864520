//! Browser demo bindings: synthesize teams, train a small multi-task model
//! in the page, and explain its teamwork predictions.

use serde_json::json;
use teamnet::data::{synth_dataset, SignalConfig, SynthConfig, EL, TW_TASKS};
use teamnet::eval::ModelConfig;
use teamnet::explain::{
    expected_teamwork, greedy_counterfactual, percentile, render_attribution, saliency, Direction, Objective,
    SearchConfig, Target,
};
use teamnet::train::{train_model, TrainConfig};
use teamnet::{DynamicTeam, Model, Paradigm, TeamDataset};
use wasm_bindgen::prelude::*;

type Result<T> = std::result::Result<T, teamnet::Error>;

fn js(e: teamnet::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// A synthetic dataset and an MT-TReNN trained on it.
#[wasm_bindgen]
pub struct Demo {
    data: TeamDataset,
    model: Model,
}

impl Demo {
    pub fn build(seed: u32, strength: f64, epochs: usize) -> Result<Self> {
        let data = synth_dataset(&SynthConfig {
            seed: seed.into(),
            signal: SignalConfig {
                strength,
                ..SignalConfig::default()
            },
            ..SynthConfig::default()
        })?;
        let mut tasks = vec![EL.to_string()];
        tasks.extend(TW_TASKS.iter().map(|t| t.to_string()));
        let cfg = ModelConfig {
            tasks,
            ..ModelConfig::default()
        }
        .with_paradigm(Paradigm::MtTrenn);
        let spec = cfg.specs(data.feature_dim())?.remove(0);
        let (train, val) = data.teams.split_at(data.teams.len() - 1);
        let train: Vec<&DynamicTeam> = train.iter().collect();
        let tc = TrainConfig {
            max_epochs: epochs.max(1),
            ..TrainConfig::default()
        };
        let (model, _) = train_model(&spec, &train, &val[0], &tc, seed.into())?;
        Ok(Self { data, model })
    }

    fn team(&self, index: usize) -> Result<&DynamicTeam> {
        self.data
            .teams
            .get(index)
            .ok_or_else(|| teamnet::Error::Config(format!("no team at index {index}")))
    }

    pub fn graph_json(&self, index: usize) -> Result<String> {
        let team = self.team(index)?;
        let pred = self.model.predict(team)?;
        let el_col = self.model.task_column(EL).expect("demo model has an EL head");
        let truth = team.task_index(EL).map(|c| team.label_column(c));
        let steps: Vec<_> = team.snapshots.iter().map(|s| &s.edges).collect();
        Ok(json!({
            "team_id": team.team_id,
            "members": team.members(),
            "steps": steps,
            "el_true": truth,
            "el_pred": (0..team.n_members()).map(|r| pred.get(r, el_col)).collect::<Vec<_>>(),
            "expected_teamwork": expected_teamwork(&self.model, team)?,
        })
        .to_string())
    }

    pub fn saliency_json(&self, index: usize, bins: usize) -> Result<String> {
        let team = self.team(index)?;
        let map = saliency(&self.model, team, &Target::ExpectedTeamwork, false)?;
        Ok(render_attribution(&map, bins)?.to_json())
    }

    pub fn counterfactual_json(&self, index: usize, budget: usize, increase: bool) -> Result<String> {
        let team = self.team(index)?;
        let others = self
            .data
            .teams
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != index)
            .map(|(_, t)| expected_teamwork(&self.model, t))
            .collect::<Result<Vec<_>>>()?;
        let q = if increase { 0.75 } else { 0.25 };
        let objective = Objective {
            target: Target::ExpectedTeamwork,
            direction: if increase {
                Direction::Increase
            } else {
                Direction::Decrease
            },
            threshold: percentile(&others, q),
        };
        let cfg = SearchConfig {
            budget,
            ..SearchConfig::default()
        };
        let result = greedy_counterfactual(&self.model, team, &objective, &cfg)?;
        Ok(json!({ "threshold": objective.threshold, "result": result }).to_string())
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, strength: f64, epochs: usize) -> std::result::Result<Demo, JsError> {
        Self::build(seed, strength, epochs).map_err(js)
    }

    #[wasm_bindgen(js_name = teamCount)]
    pub fn team_count(&self) -> usize {
        self.data.teams.len()
    }

    /// Snapshot edges, EL labels and predictions for one team.
    pub fn graph(&self, index: usize) -> std::result::Result<String, JsError> {
        self.graph_json(index).map_err(js)
    }

    /// Binned member × step saliency of the expected teamwork score.
    #[wasm_bindgen(js_name = saliency)]
    pub fn saliency_map(&self, index: usize, bins: usize) -> std::result::Result<String, JsError> {
        self.saliency_json(index, bins).map_err(js)
    }

    /// Edge deletions that push expected teamwork past the other teams'
    /// upper (or lower) quartile.
    pub fn counterfactual(&self, index: usize, budget: usize, increase: bool) -> std::result::Result<String, JsError> {
        self.counterfactual_json(index, budget, increase).map_err(js)
    }
}

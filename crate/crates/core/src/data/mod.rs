//! Snapshot temporal graphs of teams: types, extraction from interaction
//! events, a planted-signal generator, and the JSON interchange format.

mod io;
mod segment;
mod synth;

pub use io::{load_dataset, parse_dataset, save_dataset, to_json};
pub use segment::{segment_events, InteractionEvent, SegmentationConfig};
pub use synth::{synth_dataset, SignalConfig, SynthConfig};

use std::collections::BTreeSet;

use thiserror::Error;

use crate::tensor::Tensor;

pub type MemberId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    /// A schema or consistency violation; `path` is a JSON path such as
    /// `$[0].snapshots[3].edges[1]`.
    #[error("{path}: {msg}")]
    Invalid { path: String, msg: String },
    #[error("{0}")]
    Config(String),
}

pub(crate) fn invalid(path: impl Into<String>, msg: impl Into<String>) -> DataError {
    DataError::Invalid {
        path: path.into(),
        msg: msg.into(),
    }
}

/// Emergent leadership.
pub const EL: &str = "EL";
pub const LS_TASKS: [&str; 3] = ["LS_dominance", "LS_friendliness", "LS_task"];
pub const TW_TASKS: [&str; 8] = ["TW_A", "TW_BB", "TW_MPM", "TW_TL", "TW_TO", "TW_CC", "TW_MT", "TW_SMM"];

/// All known construct names, in canonical order.
pub fn all_tasks() -> Vec<String> {
    std::iter::once(EL)
        .chain(LS_TASKS)
        .chain(TW_TASKS)
        .map(String::from)
        .collect()
}

pub fn is_known_task(name: &str) -> bool {
    name == EL || LS_TASKS.contains(&name) || TW_TASKS.contains(&name)
}

pub fn is_teamwork_task(name: &str) -> bool {
    TW_TASKS.contains(&name)
}

/// Likert range of a construct: GLIS and SYMLOG use 1–5, the teamwork
/// questionnaire 1–7.
pub fn default_scale(name: &str) -> Option<(f64, f64)> {
    if name == EL || LS_TASKS.contains(&name) {
        Some((1.0, 5.0))
    } else if TW_TASKS.contains(&name) {
        Some((1.0, 7.0))
    } else {
        None
    }
}

/// One time-indexed team graph. Edges are directed `(speaker, listener)`
/// pairs; self-loops are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub timestep: usize,
    pub members: Vec<MemberId>,
    pub edges: Vec<(MemberId, MemberId)>,
    /// `members.len() × d`, row `i` belongs to `members[i]`.
    pub features: Tensor,
}

impl Snapshot {
    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn position(&self, id: MemberId) -> Option<usize> {
        self.members.iter().position(|&m| m == id)
    }

    /// Edges as `(src_row, dst_row)` positions into `members`.
    pub fn edge_positions(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .filter_map(|&(s, d)| Some((self.position(s)?, self.position(d)?)))
            .collect()
    }
}

/// An ordered snapshot sequence over a fixed roster, plus per-member labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicTeam {
    pub team_id: String,
    pub snapshots: Vec<Snapshot>,
    /// `members × tasks.len()`.
    pub labels: Tensor,
    pub tasks: Vec<String>,
    pub task_scales: Vec<(f64, f64)>,
}

impl DynamicTeam {
    pub fn members(&self) -> &[MemberId] {
        &self.snapshots[0].members
    }

    pub fn n_members(&self) -> usize {
        self.snapshots[0].members.len()
    }

    pub fn n_steps(&self) -> usize {
        self.snapshots.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.snapshots[0].features.cols()
    }

    pub fn n_edges(&self) -> usize {
        self.snapshots.iter().map(|s| s.edges.len()).sum()
    }

    pub fn task_index(&self, task: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t == task)
    }

    pub fn label_column(&self, task: usize) -> Vec<f64> {
        (0..self.n_members()).map(|r| self.labels.get(r, task)).collect()
    }

    /// Checks the structural invariants; `path` prefixes every diagnostic.
    pub fn validate(&self, path: &str) -> Result<(), DataError> {
        if self.snapshots.is_empty() {
            return Err(invalid(format!("{path}.snapshots"), "team has no snapshots"));
        }
        let roster = &self.snapshots[0].members;
        if roster.is_empty() {
            return Err(invalid(format!("{path}.snapshots[0].members"), "empty roster"));
        }
        let unique: BTreeSet<_> = roster.iter().collect();
        if unique.len() != roster.len() {
            return Err(invalid(format!("{path}.snapshots[0].members"), "duplicate member id"));
        }
        let d = self.snapshots[0].features.cols();
        for (t, s) in self.snapshots.iter().enumerate() {
            let sp = format!("{path}.snapshots[{t}]");
            if &s.members != roster {
                return Err(invalid(
                    format!("{sp}.members"),
                    "roster differs from snapshot 0 (rosters are fixed within a team)",
                ));
            }
            if s.features.shape() != [roster.len(), d] {
                return Err(invalid(
                    format!("{sp}.features"),
                    format!("expected {}×{d} features, got {:?}", roster.len(), s.features.shape()),
                ));
            }
            if let Some(i) = s.features.data().iter().position(|v| !v.is_finite()) {
                return Err(invalid(
                    format!("{sp}.features[{}][{}]", i / d.max(1), i % d.max(1)),
                    "non-finite feature",
                ));
            }
            let mut seen = BTreeSet::new();
            for (e, &(src, dst)) in s.edges.iter().enumerate() {
                let ep = format!("{sp}.edges[{e}]");
                if s.position(src).is_none() || s.position(dst).is_none() {
                    return Err(invalid(
                        ep,
                        format!("edge ({src}, {dst}) in snapshot {t} references a member outside the roster"),
                    ));
                }
                if src == dst {
                    return Err(invalid(ep, format!("self-loop on member {src} in snapshot {t}")));
                }
                if !seen.insert((src, dst)) {
                    return Err(invalid(ep, format!("duplicate edge ({src}, {dst}) in snapshot {t}")));
                }
            }
        }
        if self.task_scales.len() != self.tasks.len() {
            return Err(invalid(format!("{path}.task_scales"), "one scale per task required"));
        }
        if self.labels.shape() != [roster.len(), self.tasks.len()] {
            return Err(invalid(
                format!("{path}.labels"),
                format!(
                    "expected {}×{} labels, got {:?}",
                    roster.len(),
                    self.tasks.len(),
                    self.labels.shape()
                ),
            ));
        }
        for (k, task) in self.tasks.iter().enumerate() {
            if !is_known_task(task) {
                return Err(invalid(format!("{path}.tasks[{k}]"), format!("unknown task `{task}`")));
            }
            let (lo, hi) = self.task_scales[k];
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid(
                    format!("{path}.task_scales.{task}"),
                    "scale must satisfy min < max",
                ));
            }
            for (r, id) in roster.iter().enumerate() {
                let y = self.labels.get(r, k);
                if !y.is_finite() || y < lo || y > hi {
                    return Err(invalid(
                        format!("{path}.labels.{id}.{task}"),
                        format!("label {y} outside scale [{lo}, {hi}]"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// A copy with the given `(snapshot, edge index)` entries deleted.
    pub fn without_edges(&self, removed: &[(usize, usize)]) -> Self {
        let mut out = self.clone();
        for (t, snap) in out.snapshots.iter_mut().enumerate() {
            let keep: Vec<_> = snap
                .edges
                .iter()
                .enumerate()
                .filter(|(e, _)| !removed.contains(&(t, *e)))
                .map(|(_, &edge)| edge)
                .collect();
            snap.edges = keep;
        }
        out
    }

    /// Reorders the roster: member at position `perm[i]` moves to position `i`.
    pub fn permute_members(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for snap in &mut out.snapshots {
            snap.members = perm.iter().map(|&p| snap.members[p]).collect();
            let rows: Vec<Vec<f64>> = perm.iter().map(|&p| snap.features.row(p).to_vec()).collect();
            snap.features = Tensor::from_rows(&rows).expect("same widths");
        }
        let rows: Vec<Vec<f64>> = perm.iter().map(|&p| self.labels.row(p).to_vec()).collect();
        out.labels = Tensor::from_rows(&rows).expect("same widths");
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeamDataset {
    pub teams: Vec<DynamicTeam>,
    pub tasks: Vec<String>,
    pub task_scales: Vec<(f64, f64)>,
}

impl TeamDataset {
    /// Builds a dataset after checking every team and cross-team consistency.
    pub fn new(teams: Vec<DynamicTeam>) -> Result<Self, DataError> {
        let first = teams.first().ok_or_else(|| invalid("$", "dataset contains no teams"))?;
        let tasks = first.tasks.clone();
        let scales = first.task_scales.clone();
        let d = first.snapshots.first().map(|s| s.features.cols());
        let mut ids = BTreeSet::new();
        for (i, team) in teams.iter().enumerate() {
            let path = format!("$[{i}]");
            team.validate(&path)?;
            if team.tasks != tasks {
                return Err(invalid(format!("{path}.tasks"), "task list differs from team 0"));
            }
            if team.task_scales != scales {
                return Err(invalid(format!("{path}.task_scales"), "task scales differ from team 0"));
            }
            if Some(team.feature_dim()) != d {
                return Err(invalid(
                    format!("{path}.snapshots[0].features"),
                    "feature dimension differs from team 0",
                ));
            }
            if !ids.insert(team.team_id.clone()) {
                return Err(invalid(format!("{path}.team_id"), "duplicate team id"));
            }
        }
        Ok(Self {
            teams,
            tasks,
            task_scales: scales,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.teams[0].feature_dim()
    }

    pub fn task_index(&self, task: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t == task)
    }
}

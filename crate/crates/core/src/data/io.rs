//! JSON interchange: a dataset file is a JSON array of team documents
//!
//! ```json
//! {"team_id": "t0", "tasks": ["EL"], "task_scales": {"EL": [1, 5]},
//!  "snapshots": [{"t": 0, "members": [0, 1], "edges": [[0, 1]], "features": [[0.5], [1.5]]}],
//!  "labels": {"0": {"EL": 4.0}, "1": {"EL": 2.5}}}
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{invalid, is_known_task, DataError, DynamicTeam, MemberId, Snapshot, TeamDataset};
use crate::tensor::Tensor;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TeamDoc {
    team_id: String,
    tasks: Vec<String>,
    task_scales: BTreeMap<String, [f64; 2]>,
    snapshots: Vec<SnapshotDoc>,
    labels: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotDoc {
    t: usize,
    members: Vec<MemberId>,
    edges: Vec<[MemberId; 2]>,
    features: Vec<Vec<f64>>,
}

fn to_doc(team: &DynamicTeam) -> TeamDoc {
    let labels = team
        .members()
        .iter()
        .enumerate()
        .map(|(r, id)| {
            let per_task = team
                .tasks
                .iter()
                .enumerate()
                .map(|(k, task)| (task.clone(), team.labels.get(r, k)))
                .collect();
            (id.to_string(), per_task)
        })
        .collect();
    TeamDoc {
        team_id: team.team_id.clone(),
        tasks: team.tasks.clone(),
        task_scales: team
            .tasks
            .iter()
            .zip(&team.task_scales)
            .map(|(t, &(lo, hi))| (t.clone(), [lo, hi]))
            .collect(),
        snapshots: team
            .snapshots
            .iter()
            .map(|s| SnapshotDoc {
                t: s.timestep,
                members: s.members.clone(),
                edges: s.edges.iter().map(|&(a, b)| [a, b]).collect(),
                features: (0..s.features.rows()).map(|r| s.features.row(r).to_vec()).collect(),
            })
            .collect(),
        labels,
    }
}

fn from_doc(doc: TeamDoc, path: &str) -> Result<DynamicTeam, DataError> {
    for (k, task) in doc.tasks.iter().enumerate() {
        if !is_known_task(task) {
            return Err(invalid(format!("{path}.tasks[{k}]"), format!("unknown task `{task}`")));
        }
    }
    for key in doc.task_scales.keys() {
        if !doc.tasks.contains(key) {
            return Err(invalid(
                format!("{path}.task_scales.{key}"),
                format!("unknown task `{key}`"),
            ));
        }
    }
    let task_scales = doc
        .tasks
        .iter()
        .map(|t| {
            doc.task_scales
                .get(t)
                .map(|&[lo, hi]| (lo, hi))
                .ok_or_else(|| invalid(format!("{path}.task_scales"), format!("missing scale for `{t}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if doc.snapshots.is_empty() {
        return Err(invalid(format!("{path}.snapshots"), "team has no snapshots"));
    }

    let mut snapshots = Vec::with_capacity(doc.snapshots.len());
    for (t, s) in doc.snapshots.into_iter().enumerate() {
        let sp = format!("{path}.snapshots[{t}]");
        if s.features.len() != s.members.len() {
            return Err(invalid(
                format!("{sp}.features"),
                format!("{} feature rows for {} members", s.features.len(), s.members.len()),
            ));
        }
        let width = s.features.first().map_or(0, Vec::len);
        if width == 0 {
            return Err(invalid(format!("{sp}.features"), "feature rows must be non-empty"));
        }
        if let Some(r) = s.features.iter().position(|row| row.len() != width) {
            return Err(invalid(
                format!("{sp}.features[{r}]"),
                format!("ragged feature row: {} values, expected {width}", s.features[r].len()),
            ));
        }
        snapshots.push(Snapshot {
            timestep: s.t,
            members: s.members,
            edges: s.edges.into_iter().map(|[a, b]| (a, b)).collect(),
            features: Tensor::from_rows(&s.features).expect("checked rectangular"),
        });
    }

    let roster = snapshots[0].members.clone();
    let mut by_member: BTreeMap<MemberId, BTreeMap<String, f64>> = BTreeMap::new();
    for (key, per_task) in doc.labels {
        let id: MemberId = key
            .parse()
            .map_err(|_| invalid(format!("{path}.labels.{key}"), "label key is not a member id"))?;
        if !roster.contains(&id) {
            return Err(invalid(
                format!("{path}.labels.{key}"),
                format!("member {id} not in roster"),
            ));
        }
        for task in per_task.keys() {
            if !doc.tasks.contains(task) {
                return Err(invalid(
                    format!("{path}.labels.{key}.{task}"),
                    format!("unknown task `{task}`"),
                ));
            }
        }
        by_member.insert(id, per_task);
    }
    let mut labels = Vec::with_capacity(roster.len() * doc.tasks.len());
    for id in &roster {
        let per_task = by_member
            .get(id)
            .ok_or_else(|| invalid(format!("{path}.labels"), format!("no labels for member {id}")))?;
        for task in &doc.tasks {
            let y = per_task
                .get(task)
                .ok_or_else(|| invalid(format!("{path}.labels.{id}"), format!("missing label for `{task}`")))?;
            labels.push(*y);
        }
    }

    let team = DynamicTeam {
        team_id: doc.team_id,
        labels: Tensor::new(vec![roster.len(), doc.tasks.len()], labels).expect("n×m"),
        snapshots,
        tasks: doc.tasks,
        task_scales,
    };
    team.validate(path)?;
    Ok(team)
}

/// Parses and validates a dataset document.
pub fn parse_dataset(json: &str) -> Result<TeamDataset, DataError> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let docs: Vec<TeamDoc> = serde_path_to_error::deserialize(de).map_err(|e| {
        let p = e.path().to_string();
        let path = match p.as_str() {
            "." => "$".to_string(),
            _ if p.starts_with('[') => format!("${p}"),
            _ => format!("$.{p}"),
        };
        invalid(path, e.into_inner().to_string())
    })?;
    let teams = docs
        .into_iter()
        .enumerate()
        .map(|(i, d)| from_doc(d, &format!("$[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    TeamDataset::new(teams)
}

pub fn to_json(ds: &TeamDataset) -> String {
    let docs: Vec<TeamDoc> = ds.teams.iter().map(to_doc).collect();
    serde_json::to_string_pretty(&docs).expect("dataset serializes")
}

pub fn load_dataset(path: &Path) -> Result<TeamDataset, DataError> {
    let s = std::fs::read_to_string(path).map_err(|e| invalid("$", format!("cannot read {}: {e}", path.display())))?;
    parse_dataset(&s)
}

pub fn save_dataset(ds: &TeamDataset, path: &Path) -> Result<(), DataError> {
    std::fs::write(path, to_json(ds)).map_err(|e| DataError::Config(format!("cannot write {}: {e}", path.display())))
}

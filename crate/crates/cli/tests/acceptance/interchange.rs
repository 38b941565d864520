use std::path::Path;
use std::process::Command;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use teamnet::data::{all_tasks, default_scale, load_dataset, save_dataset, to_json, MemberId};
use teamnet::{DynamicTeam, Snapshot, TeamDataset, Tensor};

use crate::support::{rng, verdict};
use crate::Outcome;

/// Valid dataset with sparse member ids, a random task subset and features
/// spanning sixteen orders of magnitude.
fn random_dataset(rng: &mut ChaCha8Rng) -> TeamDataset {
    let mut tasks = all_tasks();
    tasks.shuffle(rng);
    tasks.truncate(rng.gen_range(1..=tasks.len()));
    let scales: Vec<(f64, f64)> = tasks.iter().map(|t| default_scale(t).unwrap()).collect();
    let d = rng.gen_range(1..=5);
    let teams = (0..rng.gen_range(1..=4))
        .map(|i| {
            let n = rng.gen_range(1..=6);
            let mut roster: Vec<MemberId> = (0..50).collect();
            roster.shuffle(rng);
            roster.truncate(n);
            let snapshots = (0..rng.gen_range(1..=5))
                .map(|t| {
                    let mut edges: Vec<(MemberId, MemberId)> = roster
                        .iter()
                        .flat_map(|&s| roster.iter().map(move |&r| (s, r)))
                        .filter(|(s, r)| s != r)
                        .collect();
                    edges.retain(|_| rng.gen_bool(0.3));
                    edges.shuffle(rng);
                    let features = (0..n * d)
                        .map(|_| rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-8..8)))
                        .collect();
                    Snapshot {
                        timestep: t,
                        members: roster.clone(),
                        edges,
                        features: Tensor::new(vec![n, d], features).unwrap(),
                    }
                })
                .collect();
            let labels = (0..n)
                .flat_map(|_| scales.clone())
                .map(|(lo, hi)| rng.gen_range(lo..=hi))
                .collect();
            DynamicTeam {
                team_id: format!("team-{i}-{}", rng.gen::<u16>()),
                snapshots,
                labels: Tensor::new(vec![n, tasks.len()], labels).unwrap(),
                tasks: tasks.clone(),
                task_scales: scales.clone(),
            }
        })
        .collect();
    TeamDataset::new(teams).unwrap()
}

const MUTATIONS: usize = 16;

/// Applies one schema or consistency violation to a valid document.
fn mutate(doc: &mut Value, kind: usize, rng: &mut ChaCha8Rng) {
    let teams = doc.as_array_mut().unwrap();
    let ti = rng.gen_range(0..teams.len());
    let dup = teams[ti].clone();
    let team = &mut teams[ti];
    let roster: Vec<u64> = team["snapshots"][0]["members"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m.as_u64().unwrap())
        .collect();
    let n_snaps = team["snapshots"].as_array().unwrap().len();
    let snap = &mut team["snapshots"][rng.gen_range(0..n_snaps)];
    match kind {
        0 => snap["edges"].as_array_mut().unwrap().push(json!([roster[0], 999])),
        1 => snap["edges"]
            .as_array_mut()
            .unwrap()
            .push(json!([roster[0], roster[0]])),
        2 => {
            let row = &mut snap["features"][0];
            let extra = row[0].clone();
            row.as_array_mut().unwrap().push(extra);
            if roster.len() == 1 {
                snap["features"].as_array_mut().unwrap().push(json!([]));
            }
        }
        3 => snap["features"].as_array_mut().unwrap().push(json!([1.0])),
        4 => snap["t"] = json!("zero"),
        5 => snap["features"][0][0] = json!("x"),
        6 => {
            snap["members"].as_array_mut().unwrap().push(json!(1000));
            let row = snap["features"][0].clone();
            snap["features"].as_array_mut().unwrap().push(row);
            if n_snaps == 1 {
                let first = team["snapshots"][0].clone();
                team["snapshots"].as_array_mut().unwrap().push(first);
                team["snapshots"][0]["members"].as_array_mut().unwrap().pop();
                team["snapshots"][0]["features"].as_array_mut().unwrap().pop();
            }
        }
        7 => {
            let task = team["tasks"][0].as_str().unwrap().to_string();
            let hi = team["task_scales"][&task][1].as_f64().unwrap();
            team["labels"][roster[0].to_string()][&task] = json!(hi + 1.0);
        }
        8 => team["tasks"].as_array_mut().unwrap().push(json!("TW_XYZ")),
        9 => {
            let task = team["tasks"][0].as_str().unwrap().to_string();
            team["task_scales"][&task] = json!([5, 1]);
        }
        10 => {
            team.as_object_mut()
                .unwrap()
                .remove(["team_id", "tasks", "snapshots", "labels"][rng.gen_range(0..4)]);
        }
        11 => {
            team.as_object_mut().unwrap().insert("colour".into(), json!("blue"));
        }
        12 => {
            team["labels"].as_object_mut().unwrap().remove(&roster[0].to_string());
        }
        13 => team["snapshots"] = json!([]),
        14 => teams.push(dup),
        _ => {
            let labels = team["labels"].as_object_mut().unwrap();
            let v = labels.remove(&roster[0].to_string()).unwrap();
            labels.insert("lead".into(), v);
        }
    }
}

fn validate(path: &Path) -> std::io::Result<(Option<i32>, String)> {
    let out = Command::new(env!("CARGO_BIN_EXE_teamnet"))
        .arg("validate")
        .arg(path)
        .output()?;
    Ok((out.status.code(), String::from_utf8_lossy(&out.stderr).into_owned()))
}

pub fn interchange_robustness() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut round_trips = 0;
    let mut problems = Vec::new();
    let mut valid_docs = Vec::new();
    for seed in 0..200 {
        let ds = random_dataset(&mut rng(70_000 + seed));
        let path = dir.path().join(format!("valid-{seed}.json"));
        save_dataset(&ds, &path).map_err(|e| e.to_string())?;
        match load_dataset(&path) {
            Ok(back) if back == ds => round_trips += 1,
            Ok(_) => problems.push(format!("seed {seed}: round trip changed the dataset")),
            Err(e) => problems.push(format!("seed {seed}: {e}")),
        }
        if seed < 20 {
            valid_docs.push(path);
        }
    }
    for path in &valid_docs {
        let (code, err) = validate(path).map_err(|e| e.to_string())?;
        if code != Some(0) {
            problems.push(format!("valid file rejected ({code:?}): {err}"));
        }
    }

    let mut malformed = 0;
    let mut rejected = 0;
    for case in 0..160u64 {
        let rng = &mut rng(80_000 + case);
        let text = to_json(&random_dataset(rng));
        let bad = if case % 10 == 9 {
            // Any strict prefix of an array document is incomplete JSON.
            text[..rng.gen_range(0..text.len() - 1)].to_string()
        } else {
            let mut doc: Value = serde_json::from_str(&text).unwrap();
            mutate(&mut doc, case as usize % MUTATIONS, rng);
            doc.to_string()
        };
        let path = dir.path().join(format!("malformed-{case}.json"));
        std::fs::write(&path, bad).map_err(|e| e.to_string())?;
        malformed += 1;
        let (code, err) = validate(&path).map_err(|e| e.to_string())?;
        if code == Some(2) && err.contains('$') {
            rejected += 1;
        } else if problems.len() < 5 {
            problems.push(format!("malformed case {case}: exit {code:?}, stderr {}", err.trim()));
        }
    }
    verdict(
        problems.is_empty() && round_trips == 200 && rejected == malformed,
        format!(
            "{round_trips}/200 fuzzed datasets round-trip through save and load; {rejected}/{malformed} malformed \
             files exit 2 with a JSON-path diagnostic{}",
            problems.first().map(|p| format!("; {p}")).unwrap_or_default()
        ),
    )
}

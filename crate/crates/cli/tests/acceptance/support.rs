use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teamnet::data::{all_tasks, default_scale, MemberId};
use teamnet::eval::ModelConfig;
use teamnet::{DynamicTeam, Model, Paradigm, Snapshot, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..len).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

pub fn random_edges(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(MemberId, MemberId)> {
    let mut out = Vec::new();
    for s in 0..n as MemberId {
        for d in 0..n as MemberId {
            if s != d && rng.gen_bool(p) {
                out.push((s, d));
            }
        }
    }
    out
}

/// Roster `0..n`, features in `[-1, 1]`, labels for every task.
pub fn team(rng: &mut ChaCha8Rng, n: usize, d: usize, edges: Vec<Vec<(MemberId, MemberId)>>) -> DynamicTeam {
    let tasks = all_tasks();
    let snapshots = edges
        .into_iter()
        .enumerate()
        .map(|(t, e)| Snapshot {
            timestep: t,
            members: (0..n as MemberId).collect(),
            edges: e,
            features: uniform(rng, &[n, d], -1.0, 1.0),
        })
        .collect();
    let scales: Vec<(f64, f64)> = tasks.iter().map(|t| default_scale(t).unwrap()).collect();
    let labels = (0..n)
        .flat_map(|_| scales.clone())
        .map(|(lo, hi)| rng.gen_range(lo..hi))
        .collect();
    DynamicTeam {
        team_id: format!("team-{}", rng.gen::<u32>()),
        snapshots,
        labels: Tensor::new(vec![n, tasks.len()], labels).unwrap(),
        tasks,
        task_scales: scales,
    }
}

/// Small untrained model with every parameter drawn from `[-1, 1]`.
pub fn random_model(paradigm: Paradigm, tasks: &[&str], d: usize, seed: u64) -> Model {
    let cfg = ModelConfig {
        tasks: tasks.iter().map(|t| t.to_string()).collect(),
        hidden: 4,
        heads: 2,
        head_hidden: 4,
        ..ModelConfig::default()
    }
    .with_paradigm(paradigm);
    let mut model = Model::new(cfg.specs(d).unwrap().remove(0), seed).unwrap();
    let mut r = rng(seed ^ 0xabcdef);
    let names: Vec<String> = model.params.names().map(str::to_string).collect();
    for name in names {
        let shape = model.params.get(&name).unwrap().shape().to_vec();
        *model.params.get_mut(&name).unwrap() = uniform(&mut r, &shape, -1.0, 1.0);
    }
    model
}

/// `Ok(detail)` when `cond` holds, `Err(detail)` otherwise.
pub fn verdict(cond: bool, detail: String) -> crate::Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

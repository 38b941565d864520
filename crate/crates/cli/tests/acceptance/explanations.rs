use rand::Rng;
use rand_chacha::ChaCha8Rng;
use teamnet::eval::ModelConfig;
use teamnet::explain::{
    brute_force_counterfactual, greedy_counterfactual, saliency, target_score, Direction, EdgeRef, Objective,
    SearchConfig, Target,
};
use teamnet::model::Standardizer;
use teamnet::{DynamicTeam, Model, Paradigm, Tensor};

use crate::support::{random_edges, random_model, rng, team, uniform, verdict};
use crate::Outcome;

/// Single-snapshot SNN that is linear on its inputs: identity layers with a
/// bias large enough to keep every ReLU active, then output weights `w`.
fn linear_model(w: &[f64]) -> Model {
    let d = w.len();
    let cfg = ModelConfig {
        tasks: vec!["EL".into()],
        hidden: d,
        heads: 1,
        head_hidden: d,
        ..ModelConfig::default()
    }
    .with_paradigm(Paradigm::Snn);
    let mut m = Model::new(cfg.specs(d).unwrap().remove(0), 0).unwrap();
    for layer in ["enc.ffn.0", "enc.ffn.1", "head.EL.0"] {
        m.params.insert(format!("{layer}.weight"), Tensor::eye(d));
        m.params.insert(format!("{layer}.bias"), Tensor::full(&[1, d], 10.0));
    }
    m.params
        .insert("head.EL.1.weight", Tensor::new(vec![d, 1], w.to_vec()).unwrap());
    m.params.insert("head.EL.1.bias", Tensor::zeros(&[1, 1]));
    m
}

fn el(member: usize) -> Target {
    Target::Task {
        task: "EL".into(),
        member,
    }
}

pub fn saliency_correctness() -> Outcome {
    let mut linear_exact = true;
    for seed in 0..20 {
        let rng = &mut rng(50_000 + seed);
        let w = uniform(rng, &[4], -3.0, 3.0).into_data();
        let model = linear_model(&w);
        let edges = vec![random_edges(rng, 4, 0.5)];
        let t = team(rng, 4, 4, edges);
        for member in 0..4 {
            let map = saliency(&model, &t, &el(member), false).unwrap();
            for v in 0..4 {
                for j in 0..4 {
                    let want = if v == member { w[j].abs() } else { 0.0 };
                    linear_exact &= map.get(v, 0, j) == want;
                }
            }
        }
    }

    const EPS: f64 = 1e-4;
    let (mut worst, mut entries) = (0.0f64, 0);
    for seed in 0..10 {
        let rng = &mut rng(51_000 + seed);
        let edges = (0..3).map(|_| random_edges(rng, 4, 0.4)).collect();
        let t = team(rng, 4, 3, edges);
        let mut model = random_model(Paradigm::Trenn, &["EL"], 3, seed);
        model.standardizer = Standardizer {
            mean: uniform(rng, &[3], -1.0, 1.0).into_data(),
            std: uniform(rng, &[3], 0.5, 2.0).into_data(),
        };
        let target = el(seed as usize % 4);
        let map = saliency(&model, &t, &target, true).unwrap();
        for v in 0..4 {
            for step in 0..3 {
                for j in 0..3 {
                    let shifted = |delta: f64| {
                        let mut u = t.clone();
                        let f = &mut u.snapshots[step].features;
                        f.set(v, j, f.get(v, j) + delta);
                        target_score(&model, &u, &target).unwrap()
                    };
                    let fd = (shifted(EPS) - shifted(-EPS)) / (2.0 * EPS);
                    let g = map.get(v, step, j);
                    worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-6));
                    entries += 1;
                }
            }
        }
    }

    let mut snn_zero = true;
    for seed in 0..20 {
        let rng = &mut rng(52_000 + seed);
        let edges = (0..4).map(|_| random_edges(rng, 4, 0.6)).collect();
        let t = team(rng, 4, 3, edges);
        let model = random_model(Paradigm::Snn, &["EL"], 3, seed);
        let member = seed as usize % 4;
        let map = saliency(&model, &t, &el(member), false).unwrap();
        for v in (0..4).filter(|&v| v != member) {
            snn_zero &= (0..4).all(|s| (0..3).all(|j| map.get(v, s, j) == 0.0));
        }
    }
    verdict(
        linear_exact && worst <= 1e-3 && snn_zero,
        format!(
            "linear model attributions equal |w| exactly: {linear_exact}; trenn vs finite differences over \
             {entries} entries, worst rel err {worst:.2e} (tol 1e-3); SNN non-target attributions exactly 0: {snn_zero}"
        ),
    )
}

fn edge_positions(t: &DynamicTeam) -> Vec<(usize, usize)> {
    t.snapshots
        .iter()
        .enumerate()
        .flat_map(|(s, snap)| (0..snap.edges.len()).map(move |e| (s, e)))
        .collect()
}

/// Best objective over all 2^|E| edge subsets, scored independently of the search.
fn exhaustive_best(model: &Model, t: &DynamicTeam, objective: &Objective) -> f64 {
    let edges = edge_positions(t);
    (0u32..1 << edges.len())
        .map(|mask| {
            let removed: Vec<_> = (0..edges.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| edges[i])
                .collect();
            objective.value(target_score(model, &t.without_edges(&removed), &objective.target).unwrap())
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn small_team(rng: &mut ChaCha8Rng) -> DynamicTeam {
    let n = rng.gen_range(3..=4);
    let k = rng.gen_range(1..=3);
    let total = rng.gen_range(1..=5);
    let mut edges: Vec<Vec<(u32, u32)>> = vec![Vec::new(); k];
    while edges.iter().map(Vec::len).sum::<usize>() < total {
        let t = rng.gen_range(0..k);
        let (s, d) = (rng.gen_range(0..n as u32), rng.gen_range(0..n as u32));
        if s != d && !edges[t].contains(&(s, d)) {
            edges[t].push((s, d));
        }
    }
    team(rng, n, 2, edges)
}

/// Member 3 carries extreme features and addresses member 0 once, as member
/// 0's only speaker in that snapshot. Nobody addresses member 3 and the other
/// members' features are small.
fn planted_instance(rng: &mut ChaCha8Rng) -> (DynamicTeam, EdgeRef) {
    let mut edges: Vec<Vec<(u32, u32)>> = (0..3)
        .map(|_| {
            random_edges(rng, 4, 0.25)
                .into_iter()
                .filter(|&(s, d)| s != 3 && d != 3)
                .collect()
        })
        .collect();
    let at = rng.gen_range(0..3);
    edges[at].retain(|&(_, d)| d != 0);
    edges[at].push((3, 0));
    let mut t = team(rng, 4, 2, edges);
    for snap in &mut t.snapshots {
        for v in 0..3 {
            for j in 0..2 {
                snap.features.set(v, j, 0.05 * snap.features.get(v, j));
            }
        }
        snap.features.set(3, 0, 25.0);
        snap.features.set(3, 1, -25.0);
    }
    (t, EdgeRef { t: at, src: 3, dst: 0 })
}

pub fn counterfactual_search() -> Outcome {
    let mut matched = 0;
    let mut brute_agrees = true;
    for case in 0..50u64 {
        let rng = &mut rng(60_000 + case);
        let t = small_team(rng);
        let paradigm = [Paradigm::Trenn, Paradigm::Renn][case as usize % 2];
        let model = random_model(paradigm, &["EL"], 2, case);
        let objective = Objective {
            target: el(0),
            direction: if case % 3 == 0 {
                Direction::Decrease
            } else {
                Direction::Increase
            },
            threshold: None,
        };
        let cfg = SearchConfig {
            budget: (1 << t.n_edges()) - 1,
            ..SearchConfig::default()
        };
        let best = exhaustive_best(&model, &t, &objective);
        let greedy = greedy_counterfactual(&model, &t, &objective, &cfg).unwrap();
        brute_agrees &= brute_force_counterfactual(&model, &t, &objective)
            .unwrap()
            .best_objective
            == best;
        if greedy.best_objective == best && greedy.evaluations <= cfg.budget {
            matched += 1;
        }
    }

    let mut found = 0;
    for case in 0..50u64 {
        let rng = &mut rng(61_000 + case);
        let (t, planted) = planted_instance(rng);
        let model = random_model(Paradigm::Trenn, &["EL"], 2, 100 + case);
        let base = target_score(&model, &t, &el(0)).unwrap();
        let idx = t.snapshots[planted.t].edges.iter().position(|&e| e == (3, 0)).unwrap();
        let cut = target_score(&model, &t.without_edges(&[(planted.t, idx)]), &el(0)).unwrap();
        let objective = Objective {
            target: el(0),
            direction: if cut > base {
                Direction::Increase
            } else {
                Direction::Decrease
            },
            threshold: Some(base + 0.5 * (cut - base)),
        };
        let cfg = SearchConfig {
            budget: t.n_edges(),
            ..SearchConfig::default()
        };
        let r = greedy_counterfactual(&model, &t, &objective, &cfg).unwrap();
        if r.achieved_target && r.removed == [planted] {
            found += 1;
        }
    }
    verdict(
        matched == 50 && brute_agrees && found >= 45,
        format!(
            "full budget matches exhaustive optimum in {matched}/50 teams (need 50); \
             planted aggressive edge found with budget |E| in {found}/50 instances (need 45)"
        ),
    )
}

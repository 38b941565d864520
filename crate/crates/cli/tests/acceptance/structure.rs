use std::process::Command;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use teamnet::data::{synth_dataset, Snapshot, SynthConfig};
use teamnet::encoders::{encode, gcn_layer, gcn_propagate, normalized_adjacency, EncoderKind, EncoderSpec};
use teamnet::eval::{FoldPlan, FoldScheme, ModelConfig};
use teamnet::losses::{mtl_loss, ordered_pairs, pairwise_ranking_loss, task_weights};
use teamnet::params::ParamStore;
use teamnet::{Model, Paradigm, Tape, Tensor, Var};

use crate::support::{random_edges, rng, team, uniform, verdict};
use crate::Outcome;

const EPS: f64 = 1e-4;
const REL_TOL: f64 = 1e-3;
/// Gradients below this magnitude are compared absolutely.
const FLOOR: f64 = 1e-6;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

type Build<'a> = dyn Fn(&mut Tape, &[Var]) -> teamnet::Result<Var> + 'a;

/// Scalar objective: the output itself, or its dot product with fixed weights.
fn reduce(tape: &mut Tape, out: Var, weights: &Tensor) -> Var {
    if tape.value(out).len() == 1 {
        return out;
    }
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w).unwrap();
    tape.sum(prod).unwrap()
}

fn value_at(inputs: &[Tensor], f: &Build, weights: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &vars).unwrap();
    let loss = reduce(&mut tape, out, weights);
    tape.scalar(loss)
}

#[derive(Default)]
struct GradAudit {
    entries: usize,
    worst: f64,
    violations: Vec<String>,
}

impl GradAudit {
    fn record(&mut self, what: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let e = rel_err(analytic, numeric);
        self.entries += 1;
        self.worst = self.worst.max(e);
        if e > REL_TOL && self.violations.len() < 5 {
            self.violations.push(format!("{}: {analytic} vs {numeric}", what()));
        }
    }

    fn check(&mut self, name: &str, inputs: Vec<Tensor>, rng: &mut ChaCha8Rng, f: &Build) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars).unwrap();
        let weights = uniform(rng, tape.value(out).shape(), -1.0, 1.0);
        let loss = reduce(&mut tape, out, &weights);
        let grads = tape.backward(loss).unwrap();
        for (i, v) in vars.iter().enumerate() {
            let g = grads.get(*v).unwrap();
            for j in 0..inputs[i].len() {
                let mut plus = inputs.clone();
                plus[i].data_mut()[j] += EPS;
                let mut minus = inputs.clone();
                minus[i].data_mut()[j] -= EPS;
                let fd = (value_at(&plus, f, &weights) - value_at(&minus, f, &weights)) / (2.0 * EPS);
                self.record(|| format!("{name} input {i}[{j}]"), g.data()[j], fd);
            }
        }
    }
}

/// Entries bounded away from zero so ReLU kinks stay outside the stencil.
fn off_kink(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    uniform(rng, shape, -1.0, 1.0).map(|x| x.signum() * (0.01 + x.abs()))
}

fn layer_checks(audit: &mut GradAudit, seed: u64) {
    let rng = &mut rng(10_000 + seed);
    let (m, c, k) = (rng.gen_range(1..=5), rng.gen_range(1..=5), rng.gen_range(1..=4));
    let a = uniform(rng, &[m, c], -1.0, 1.0);
    let w = uniform(rng, &[c, k], -1.0, 1.0);
    audit.check(
        "linear",
        vec![a.clone(), w, uniform(rng, &[1, k], -1.0, 1.0)],
        rng,
        &|t, v| {
            let z = t.matmul(v[0], v[1])?;
            Ok(t.add_row(z, v[2])?)
        },
    );
    audit.check("relu", vec![off_kink(rng, &[m, c])], rng, &|t, v| Ok(t.relu(v[0])?));
    audit.check("softmax", vec![a.clone()], rng, &|t, v| Ok(t.softmax_rows(v[0])?));
    audit.check(
        "mean pooling",
        vec![uniform(rng, &[m * k, c], -1.0, 1.0)],
        rng,
        &|t, v| Ok(t.group_mean(v[0], k)?),
    );

    let (seq_len, seqs, heads) = (rng.gen_range(1..=4), rng.gen_range(1..=3), rng.gen_range(1..=2));
    let shape = [seq_len * seqs, heads * rng.gen_range(1..=3)];
    let qkv = vec![
        uniform(rng, &shape, -1.5, 1.5),
        uniform(rng, &shape, -1.5, 1.5),
        uniform(rng, &shape, -1.5, 1.5),
    ];
    audit.check("attention", qkv, rng, &|t, v| {
        Ok(t.attention(v[0], v[1], v[2], seq_len, heads)?)
    });

    let n = rng.gen_range(2..=4);
    let (d, h) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
    let snapshot = Snapshot {
        timestep: 0,
        members: (0..n as u32).collect(),
        edges: random_edges(rng, n, 0.5),
        features: Tensor::zeros(&[n, d]),
    };
    let (x, w) = loop {
        let x = uniform(rng, &[n, d], -1.0, 1.0);
        let w = uniform(rng, &[d, h], -1.0, 1.0);
        let mut tape = Tape::new();
        let (xv, wv) = (tape.constant(x.clone()), tape.constant(w.clone()));
        let z = gcn_propagate(&mut tape, &snapshot, xv, wv).unwrap();
        if tape.value(z).data().iter().all(|v| v.abs() > 1e-2) {
            break (x, w);
        }
    };
    audit.check("gcn", vec![x, w], rng, &|t, v| gcn_layer(t, &snapshot, v[0], v[1]));

    let target = uniform(rng, &[m, c], 1.0, 7.0);
    audit.check("mse", vec![uniform(rng, &[m, c], 1.0, 7.0)], rng, &|t, v| {
        Ok(t.mse(v[0], target.clone())?)
    });
    let n = rng.gen_range(2..=6);
    let labels: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=5) as f64).collect();
    let pairs = ordered_pairs(&labels);
    // Scores on a 0.3 grid with small jitter keep every gap clear of the margin.
    let scores = (0..n)
        .map(|_| rng.gen_range(-5..=5) as f64 * 0.3 + rng.gen_range(-0.02..0.02))
        .collect();
    let scores = Tensor::new(vec![n, 1], scores).unwrap();
    audit.check("ranking", vec![scores], rng, &|t, v| {
        Ok(t.pairwise_hinge(v[0], pairs.clone(), 1.0)?)
    });

    let tasks = rng.gen_range(1..=4);
    let names: Vec<String> = (0..tasks).map(|i| format!("t{i}")).collect();
    let mut inputs: Vec<Tensor> = (0..tasks).map(|_| Tensor::scalar(rng.gen_range(0.0..5.0))).collect();
    inputs.push(uniform(rng, &[1, tasks], -2.0, 2.0));
    audit.check("multi-task", inputs, rng, &|t, v| {
        mtl_loss(t, &v[..tasks], &names, v[tasks])
    });
}

fn model_objective(model: &Model, input: &teamnet::encoders::TeamInput, targets: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let p = model.params.bind_frozen(&mut tape);
    let x = tape.constant(input.features.clone());
    let out = model.forward(&mut tape, &p, input, x).unwrap();
    let loss = model.objective(&mut tape, &p, out.predictions, targets).unwrap();
    tape.scalar(loss)
}

/// Every parameter of a full model under its training objective.
fn model_checks(audit: &mut GradAudit, seed: u64, paradigm: Paradigm) {
    let rng = &mut rng(20_000 + seed);
    let ds = synth_dataset(&SynthConfig {
        seed,
        n_teams: 3,
        roster_size: rng.gen_range(3..=4),
        steps: rng.gen_range(2..=4),
        feature_dim: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    let tasks: Vec<String> = if paradigm.is_multi_task() {
        ["EL", "TW_CC", "LS_dominance"].map(String::from).to_vec()
    } else {
        vec!["EL".into()]
    };
    let cfg = ModelConfig {
        tasks,
        hidden: 4,
        heads: 2,
        head_hidden: 3,
        ..ModelConfig::default()
    }
    .with_paradigm(paradigm);
    let mut model = Model::new(cfg.specs(2).unwrap().remove(0), seed).unwrap();
    let names: Vec<String> = model.params.names().map(str::to_string).collect();
    for name in &names {
        let shape = model.params.get(name).unwrap().shape().to_vec();
        *model.params.get_mut(name).unwrap() = uniform(rng, &shape, -1.0, 1.0);
    }
    let input = model.prepare(&ds.teams[0]).unwrap();
    let targets = model.targets(&ds.teams[0]).unwrap();
    let mut tape = Tape::new();
    let p = model.params.bind(&mut tape);
    let x = tape.constant(input.features.clone());
    let out = model.forward(&mut tape, &p, &input, x).unwrap();
    let loss = model.objective(&mut tape, &p, out.predictions, &targets).unwrap();
    let grads = tape.backward(loss).unwrap();
    for name in &names {
        let g = grads.get(p.var(name).unwrap()).unwrap().clone();
        for j in 0..g.len() {
            let orig = model.params.get(name).unwrap().data()[j];
            model.params.get_mut(name).unwrap().data_mut()[j] = orig + EPS;
            let up = model_objective(&model, &input, &targets);
            model.params.get_mut(name).unwrap().data_mut()[j] = orig - EPS;
            let down = model_objective(&model, &input, &targets);
            model.params.get_mut(name).unwrap().data_mut()[j] = orig;
            audit.record(
                || format!("{paradigm} seed {seed} {name}[{j}]"),
                g.data()[j],
                (up - down) / (2.0 * EPS),
            );
        }
    }
}

pub fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut audit = GradAudit::default();
    for seed in 0..100 {
        layer_checks(&mut audit, seed);
    }
    for seed in 0..20 {
        for paradigm in Paradigm::ALL {
            model_checks(&mut audit, seed, paradigm);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        audit.violations.is_empty() && secs < 60.0,
        format!(
            "{} entries, worst rel err {:.2e} (tol {REL_TOL:.0e}), {secs:.1} s (limit 60){}",
            audit.entries,
            audit.worst,
            audit
                .violations
                .first()
                .map(|v| format!("; first violation {v}"))
                .unwrap_or_default()
        ),
    )
}

/// Dense D̃^{-1/2}ÃD̃^{-1/2} with Ã[dst][src] = 1 plus self-loops.
fn dense_propagation(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for &(s, d) in edges {
        a[d][s] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (deg[i] * deg[j]).sqrt()).collect())
        .collect()
}

fn max_diff(got: &Tensor, want: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, row) in want.iter().enumerate() {
        for (j, w) in row.iter().enumerate() {
            worst = worst.max((got.get(i, j) - w).abs());
        }
    }
    worst
}

pub fn gcn_propagation() -> Outcome {
    let r2 = 0.5f64.sqrt();
    let r3 = 1.0 / 3f64.sqrt();
    let r6 = 1.0 / 6f64.sqrt();
    // Values worked out by hand from in-degree + 1 per node.
    let hand: Vec<(usize, Vec<(usize, usize)>, Vec<Vec<f64>>)> = vec![
        (2, vec![(0, 1)], vec![vec![1.0, 0.0], vec![r2, 0.5]]),
        (2, vec![(0, 1), (1, 0)], vec![vec![0.5, 0.5], vec![0.5, 0.5]]),
        (
            3,
            vec![(0, 1), (1, 2)],
            vec![vec![1.0, 0.0, 0.0], vec![r2, 0.5, 0.0], vec![0.0, 0.5, 0.5]],
        ),
        (
            3,
            vec![(1, 0), (2, 0)],
            vec![vec![1.0 / 3.0, r3, r3], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        ),
        (
            4,
            vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)],
            vec![
                vec![0.5, 0.0, 0.0, 0.5],
                vec![0.5, 0.5, 0.0, 0.0],
                vec![r6, r6, 1.0 / 3.0, 0.0],
                vec![0.0, 0.0, r6, 0.5],
            ],
        ),
        (
            4,
            vec![],
            (0..4)
                .map(|i| (0..4).map(|j| f64::from(u8::from(i == j))).collect())
                .collect(),
        ),
    ];
    let mut worst: f64 = 0.0;
    for (n, edges, want) in &hand {
        worst = worst.max(max_diff(&normalized_adjacency(*n, edges), want));
    }
    let mut graphs = 0;
    for n in 2..=4usize {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|s| (0..n).map(move |d| (s, d)))
            .filter(|(s, d)| s != d)
            .collect();
        for mask in 0u32..(1 << pairs.len()) {
            let edges: Vec<_> = (0..pairs.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| pairs[i])
                .collect();
            worst = worst.max(max_diff(
                &normalized_adjacency(n, &edges),
                &dense_propagation(n, &edges),
            ));
            graphs += 1;
        }
    }
    verdict(
        worst <= 1e-12,
        format!(
            "{} hand-built graphs and {graphs} enumerated graphs, max abs diff {worst:.1e} (tol 1e-12)",
            hand.len()
        ),
    )
}

pub fn attention_invariants() -> Outcome {
    let mut worst_row: f64 = 0.0;
    let mut single_ok = true;
    for seed in 0..200 {
        let rng = &mut rng(30_000 + seed);
        let (seq_len, seqs, heads, dk) = (
            rng.gen_range(1..=6),
            rng.gen_range(1..=3),
            rng.gen_range(1..=3),
            rng.gen_range(1..=3),
        );
        let shape = [seq_len * seqs, heads * dk];
        let mut tape = Tape::new();
        let q = tape.constant(uniform(rng, &shape, -5.0, 5.0));
        let k = tape.constant(uniform(rng, &shape, -5.0, 5.0));
        let v = tape.constant(uniform(rng, &shape, -5.0, 5.0));
        let out = tape.attention(q, k, v, seq_len, heads).unwrap();
        for w in tape.attention_weights(out).unwrap() {
            for r in 0..seq_len {
                worst_row = worst_row.max((w.row(r).iter().sum::<f64>() - 1.0).abs());
            }
            if seq_len == 1 {
                single_ok &= w.data() == [1.0];
            }
        }
    }
    let mut worst_perm: f64 = 0.0;
    for seed in 0..50 {
        let rng = &mut rng(31_000 + seed);
        let k = rng.gen_range(2..=8);
        let edges = (0..k).map(|_| random_edges(rng, 4, 0.3)).collect();
        let t = team(rng, 4, 3, edges);
        let mut shuffled = t.clone();
        shuffled.snapshots.reverse();
        shuffled.snapshots.rotate_left(1);
        let spec = EncoderSpec {
            positional_encoding: false,
            ..EncoderSpec::new(EncoderKind::Tnn, 3)
        };
        let mut params = ParamStore::new();
        spec.init_params(rng, &mut params).unwrap();
        let a = encode(&t, &spec, &params).unwrap();
        let b = encode(&shuffled, &spec, &params).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            worst_perm = worst_perm.max((x - y).abs());
        }
    }
    verdict(
        worst_row <= 1e-9 && single_ok && worst_perm <= 1e-9,
        format!(
            "max |row sum - 1| {worst_row:.1e}, K=1 weights exactly 1: {single_ok}, \
             max snapshot-permutation drift without positional encoding {worst_perm:.1e} (tol 1e-9)"
        ),
    )
}

pub fn loss_contracts() -> Outcome {
    let mut problems = Vec::new();
    let rng = &mut rng(40_000);
    let alphas = Tensor::new(vec![1, 1000], (0..1000).map(|_| rng.gen_range(-30.0..30.0)).collect()).unwrap();
    if !task_weights(&alphas).iter().all(|&w| w > 0.0) {
        problems.push("non-positive task weight".to_string());
    }
    for trial in 0..100 {
        let losses: Vec<f64> = (0..rng.gen_range(1..=12)).map(|_| rng.gen_range(0.0..50.0)).collect();
        let mut tape = Tape::new();
        let vars: Vec<Var> = losses.iter().map(|&l| tape.constant(Tensor::scalar(l))).collect();
        let names: Vec<String> = (0..losses.len()).map(|i| format!("t{i}")).collect();
        let alpha = tape.leaf(Tensor::zeros(&[1, losses.len()]));
        let total = mtl_loss(&mut tape, &vars, &names, alpha).unwrap();
        // Same left-to-right summation order as the objective.
        let plain = losses.iter().fold(0.0, |acc, l| acc + l);
        if tape.scalar(total) != plain {
            problems.push(format!("trial {trial}: α = 0 gives {} not {plain}", tape.scalar(total)));
        }
    }
    let (mut zero_cases, mut equal_cases) = (0, 0);
    for trial in 0..200 {
        let n = rng.gen_range(2..=8);
        let labels: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=5) as f64).collect();
        let margin = f64::from(rng.gen_range(1..=24u32)) / 8.0;
        // Integer labels scaled by a multiple of the margin: every ordered gap
        // is at least the margin and exactly representable.
        let spacing = f64::from(rng.gen_range(1..=3u32));
        let scores: Vec<f64> = labels.iter().map(|y| (y - 1.0) * margin * spacing).collect();
        let gaps_ok = ordered_pairs(&labels)
            .iter()
            .all(|&(i, j)| scores[i] - scores[j] >= margin);
        if gaps_ok {
            zero_cases += 1;
            let r = pairwise_ranking_loss(&scores, &labels, margin).unwrap();
            if r.value != 0.0 {
                problems.push(format!("trial {trial}: loss {} with every gap ≥ margin", r.value));
            }
        }
        let s = rng.gen_range(-10.0..10.0);
        let r = pairwise_ranking_loss(&vec![s; n], &labels, margin).unwrap();
        let want = margin * ordered_pairs(&labels).len() as f64;
        equal_cases += 1;
        if r.value != want {
            problems.push(format!("trial {trial}: equal scores give {} not {want}", r.value));
        }
    }
    verdict(
        problems.is_empty() && zero_cases >= 50,
        format!(
            "1000 task weights positive, 100 zero-logit sums exact, {zero_cases} separated and {equal_cases} \
             equal-score rankings checked{}",
            problems.first().map(|p| format!("; {p}")).unwrap_or_default()
        ),
    )
}

fn eval_report(dir: &std::path::Path, data: &std::path::Path, run: usize) -> Result<(Vec<u8>, Vec<u8>), String> {
    let out = dir.join(format!("run{run}"));
    let status = Command::new(env!("CARGO_BIN_EXE_teamnet"))
        .args([
            "eval",
            "--paradigm",
            "trenn",
            "--tasks",
            "EL,TW_A",
            "--seeds",
            "2",
            "--max-epochs",
            "5",
            "--no-timing",
        ])
        .arg("--data")
        .arg(data)
        .arg("--out")
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| e.to_string());
    Ok((read("report.csv")?, read("report.json")?))
}

pub fn logo_structure() -> Outcome {
    let mut problems = Vec::new();
    for n in 3..=12 {
        let plan = FoldPlan::new(n, FoldScheme::All).unwrap();
        let mut pairs = plan.folds.clone();
        pairs.sort_unstable();
        pairs.dedup();
        if plan.len() != n * (n - 1) || pairs.len() != plan.len() {
            problems.push(format!("n = {n}: {} folds", plan.len()));
        }
        for team in 0..n {
            let tested = plan.folds.iter().filter(|f| f.1 == team).count();
            if tested != n - 1 {
                problems.push(format!("n = {n}: team {team} tests {tested} times"));
            }
        }
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("data.json");
    let ds = synth_dataset(&SynthConfig {
        seed: 2,
        n_teams: 4,
        steps: 5,
        ..SynthConfig::default()
    })
    .unwrap();
    teamnet::data::save_dataset(&ds, &data).map_err(|e| e.to_string())?;
    let a = eval_report(dir.path(), &data, 0)?;
    let b = eval_report(dir.path(), &data, 1)?;
    let identical = a == b;
    if !identical {
        problems.push("same-seed reports differ".into());
    }
    verdict(
        problems.is_empty(),
        format!(
            "fold counts n(n-1) with n-1 tests per team for n = 3..12; two same-seed CLI runs (12 folds, 2 seeds) \
             byte-identical: {identical}{}",
            problems.first().map(|p| format!("; {p}")).unwrap_or_default()
        ),
    )
}

//! Edge-removal counterfactuals.
//!
//! The search tree is rooted at the unmodified team; a node's children
//! remove one more edge, always of a higher canonical index than any edge
//! already removed, so every subset of edges appears exactly once. Each
//! iteration selects a path by an upper-confidence score (unvisited
//! children first), simulates the newly expanded child with one model call
//! and backs up the best objective seen below every ancestor.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{target_score, Target};
use crate::data::{DynamicTeam, MemberId};
use crate::model::Model;
use crate::{Error, Result};

pub const BRUTE_FORCE_EDGE_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeRef {
    pub t: usize,
    pub src: MemberId,
    pub dst: MemberId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increase,
    Decrease,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub target: Target,
    pub direction: Direction,
    /// Score to reach. Without one the search maximizes the objective.
    pub threshold: Option<f64>,
}

impl Objective {
    /// Higher is better regardless of direction.
    pub fn value(&self, score: f64) -> f64 {
        match self.direction {
            Direction::Increase => score,
            Direction::Decrease => -score,
        }
    }

    fn meets(&self, score: f64) -> bool {
        match (self.threshold, self.direction) {
            (Some(th), Direction::Increase) => score >= th,
            (Some(th), Direction::Decrease) => score <= th,
            (None, _) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Maximum model calls spent on candidate edge sets.
    pub budget: usize,
    pub c_explore: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: 200,
            c_explore: std::f64::consts::SQRT_2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub removed: Vec<EdgeRef>,
    pub original_score: f64,
    /// Fresh forward pass on the team with exactly `removed` deleted.
    pub counterfactual_score: f64,
    /// Best objective value among every evaluated edge set.
    pub best_objective: f64,
    /// Model calls on candidate sets; never exceeds the budget.
    pub evaluations: usize,
    /// Calls for the original score and the final re-check.
    pub verification_evaluations: usize,
    pub achieved_target: bool,
}

fn edge_list(team: &DynamicTeam) -> Vec<(EdgeRef, (usize, usize))> {
    team.snapshots
        .iter()
        .enumerate()
        .flat_map(|(t, s)| {
            s.edges
                .iter()
                .enumerate()
                .map(move |(e, &(src, dst))| (EdgeRef { t, src, dst }, (t, e)))
        })
        .collect()
}

struct Scorer<'a> {
    model: &'a Model,
    team: &'a DynamicTeam,
    objective: &'a Objective,
    edges: Vec<(EdgeRef, (usize, usize))>,
    calls: usize,
}

impl Scorer<'_> {
    fn score(&mut self, set: &[usize]) -> Result<f64> {
        self.calls += 1;
        let removed: Vec<(usize, usize)> = set.iter().map(|&i| self.edges[i].1).collect();
        target_score(self.model, &self.team.without_edges(&removed), &self.objective.target)
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    set: Vec<usize>,
    score: f64,
    value: f64,
    meets: bool,
}

/// Threshold reached first; then smaller sets, higher objective and
/// lexicographic order when thresholded, or higher objective first otherwise.
fn compare(a: &Candidate, b: &Candidate, thresholded: bool) -> Ordering {
    let by_value = b.value.total_cmp(&a.value);
    let by_size = a.set.len().cmp(&b.set.len());
    let by_lex = a.set.cmp(&b.set);
    if thresholded {
        b.meets
            .cmp(&a.meets)
            .then(if a.meets {
                by_size.then(by_value)
            } else {
                by_value.then(by_size)
            })
            .then(by_lex)
    } else {
        by_value.then(by_size).then(by_lex)
    }
}

fn finish(
    scorer: &mut Scorer<'_>,
    best: Candidate,
    original: f64,
    best_objective: f64,
    evaluations: usize,
) -> Result<CounterfactualResult> {
    let verified = scorer.score(&best.set)?;
    let achieved = if scorer.objective.threshold.is_some() {
        scorer.objective.meets(verified)
    } else {
        scorer.objective.value(verified) > scorer.objective.value(original)
    };
    Ok(CounterfactualResult {
        removed: best.set.iter().map(|&i| scorer.edges[i].0).collect(),
        original_score: original,
        counterfactual_score: verified,
        best_objective,
        evaluations,
        verification_evaluations: scorer.calls - evaluations,
        achieved_target: achieved,
    })
}

#[derive(Debug)]
struct Node {
    set: Vec<usize>,
    next_edge: usize,
    children: Vec<usize>,
    visits: f64,
    best: f64,
    exhausted: bool,
}

/// Upper-confidence tree search over edge deletions.
pub fn greedy_counterfactual(
    model: &Model,
    team: &DynamicTeam,
    objective: &Objective,
    cfg: &SearchConfig,
) -> Result<CounterfactualResult> {
    if cfg.budget == 0 {
        return Err(Error::Search("budget must be at least 1".into()));
    }
    let edges = edge_list(team);
    if edges.is_empty() {
        return Err(Error::Search(format!("team {} has no edges to remove", team.team_id)));
    }
    let n_edges = edges.len();
    let mut scorer = Scorer {
        model,
        team,
        objective,
        edges,
        calls: 0,
    };
    let original = scorer.score(&[])?;
    let thresholded = objective.threshold.is_some();
    let root_value = objective.value(original);
    let mut best = Candidate {
        set: Vec::new(),
        score: original,
        value: root_value,
        meets: objective.meets(original),
    };
    if best.meets {
        return finish(&mut scorer, best, original, root_value, 0);
    }

    let mut nodes = vec![Node {
        set: Vec::new(),
        next_edge: 0,
        children: Vec::new(),
        visits: 1.0,
        best: root_value,
        exhausted: false,
    }];
    let (mut lo, mut hi) = (root_value, root_value);
    let mut evaluations = 0;
    while evaluations < cfg.budget && !nodes[0].exhausted {
        let mut path = vec![0usize];
        let mut cur = 0usize;
        let expanded = loop {
            if nodes[cur].next_edge < n_edges {
                let e = nodes[cur].next_edge;
                nodes[cur].next_edge += 1;
                let mut set = nodes[cur].set.clone();
                set.push(e);
                nodes.push(Node {
                    set,
                    next_edge: e + 1,
                    children: Vec::new(),
                    visits: 0.0,
                    best: f64::NEG_INFINITY,
                    exhausted: e + 1 >= n_edges,
                });
                let id = nodes.len() - 1;
                nodes[cur].children.push(id);
                break Some(id);
            }
            let parent_visits = nodes[cur].visits.max(1.0);
            let span = hi - lo;
            let pick = nodes[cur]
                .children
                .iter()
                .copied()
                .filter(|&c| !nodes[c].exhausted)
                .map(|c| {
                    let n = &nodes[c];
                    let value = if span > 0.0 { (n.best - lo) / span } else { 0.0 };
                    (c, value + cfg.c_explore * (parent_visits.ln() / n.visits).sqrt())
                })
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            match pick {
                Some((c, _)) => {
                    cur = c;
                    path.push(c);
                }
                None => {
                    nodes[cur].exhausted = true;
                    break None;
                }
            }
        };
        let Some(child) = expanded else { continue };

        let score = scorer.score(&nodes[child].set)?;
        evaluations += 1;
        let value = objective.value(score);
        lo = lo.min(value);
        hi = hi.max(value);
        nodes[child].visits = 1.0;
        nodes[child].best = value;
        for &a in &path {
            nodes[a].visits += 1.0;
            nodes[a].best = nodes[a].best.max(value);
        }
        let cand = Candidate {
            set: nodes[child].set.clone(),
            score,
            value,
            meets: objective.meets(score),
        };
        if compare(&cand, &best, thresholded) == Ordering::Less {
            best = cand;
        }
        if best.meets {
            break;
        }
    }
    log::debug!(
        "counterfactual search: {evaluations} evaluations, best score {:.4}",
        best.score
    );
    finish(&mut scorer, best, original, hi, evaluations)
}

/// Exhaustive search over all edge subsets (at most
/// [`BRUTE_FORCE_EDGE_CAP`] edges).
pub fn brute_force_counterfactual(
    model: &Model,
    team: &DynamicTeam,
    objective: &Objective,
) -> Result<CounterfactualResult> {
    let edges = edge_list(team);
    let n = edges.len();
    if n > BRUTE_FORCE_EDGE_CAP {
        return Err(Error::Search(format!(
            "{n} edges exceed the exhaustive search cap of {BRUTE_FORCE_EDGE_CAP}"
        )));
    }
    let mut scorer = Scorer {
        model,
        team,
        objective,
        edges,
        calls: 0,
    };
    let original = scorer.score(&[])?;
    let thresholded = objective.threshold.is_some();
    let mut best = Candidate {
        set: Vec::new(),
        score: original,
        value: objective.value(original),
        meets: objective.meets(original),
    };
    let mut top = best.value;
    let mut evaluations = 0;
    for mask in 1u32..(1u32 << n) {
        let set: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        let score = scorer.score(&set)?;
        evaluations += 1;
        let value = objective.value(score);
        top = top.max(value);
        let cand = Candidate {
            set,
            score,
            value,
            meets: objective.meets(score),
        };
        if compare(&cand, &best, thresholded) == Ordering::Less {
            best = cand;
        }
    }
    finish(&mut scorer, best, original, top, evaluations)
}

/// Topology before and after: removed edges drawn dashed red.
pub fn counterfactual_dot(team: &DynamicTeam, result: &CounterfactualResult) -> String {
    let mut out = String::from("digraph counterfactual {\n");
    for (t, snap) in team.snapshots.iter().enumerate() {
        let _ = writeln!(out, "  subgraph cluster_{t} {{\n    label=\"t={}\";", snap.timestep);
        for m in &snap.members {
            let _ = writeln!(out, "    \"t{t}_m{m}\" [label=\"{m}\"];");
        }
        for &(src, dst) in &snap.edges {
            let removed = result.removed.contains(&EdgeRef { t, src, dst });
            let style = if removed { " [color=red, style=dashed]" } else { "" };
            let _ = writeln!(out, "    \"t{t}_m{src}\" -> \"t{t}_m{dst}\"{style};");
        }
        out.push_str("  }\n");
    }
    out.push_str("}\n");
    out
}

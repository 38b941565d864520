use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::AttributionMap;
use crate::data::DynamicTeam;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCell {
    pub member: u32,
    pub step: usize,
    pub score: f64,
    /// `0` (least important) to `bins − 1`.
    pub level: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedReport {
    pub bins: usize,
    pub min: f64,
    pub max: f64,
    pub cells: Vec<BinnedCell>,
}

/// Quantizes the per-member per-step scores into `bins` equal-width levels
/// spanning the map's own range. A flat map puts every cell in the top level.
pub fn render_attribution(map: &AttributionMap, bins: usize) -> Result<BinnedReport> {
    if bins == 0 {
        return Err(Error::Config("at least one bin is required".into()));
    }
    let scores = map.per_step.data();
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = max - min;
    let (n, k) = (map.n_members(), map.n_steps());
    let mut cells = Vec::with_capacity(n * k);
    for v in 0..n {
        for t in 0..k {
            let score = map.per_step.get(v, t);
            let level = if width > 0.0 {
                (((score - min) / width * bins as f64) as usize).min(bins - 1)
            } else {
                bins - 1
            };
            cells.push(BinnedCell {
                member: map.members[v],
                step: t,
                score,
                level,
            });
        }
    }
    Ok(BinnedReport { bins, min, max, cells })
}

impl BinnedReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One cluster per snapshot; node shade encodes the importance level.
    pub fn to_dot(&self, team: &DynamicTeam) -> String {
        let mut out = String::from("digraph attribution {\n  node [style=filled];\n");
        for (t, snap) in team.snapshots.iter().enumerate() {
            let _ = writeln!(out, "  subgraph cluster_{t} {{\n    label=\"t={}\";", snap.timestep);
            for c in self.cells.iter().filter(|c| c.step == t) {
                let shade = if self.bins > 1 {
                    c.level as f64 / (self.bins - 1) as f64
                } else {
                    1.0
                };
                let _ = writeln!(
                    out,
                    "    \"t{t}_m{}\" [label=\"{}\", fillcolor=\"0.0 {shade:.3} 1.0\", level={}];",
                    c.member, c.member, c.level
                );
            }
            for &(a, b) in &snap.edges {
                let _ = writeln!(out, "    \"t{t}_m{a}\" -> \"t{t}_m{b}\";");
            }
            out.push_str("  }\n");
        }
        out.push_str("}\n");
        out
    }
}

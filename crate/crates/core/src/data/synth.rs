//! Planted-signal synthetic teams.
//!
//! Each team has one designated leader who takes the floor far more often
//! than the others. Features are nonverbal-style channels that carry no
//! information about who is speaking, so turn-taking is only visible
//! through the snapshot edges:
//!
//! * channel 0 drifts linearly over the session with a member-specific
//!   slope (the trend statistic),
//! * channel 1 is a member-specific static level,
//! * remaining channels are noise.
//!
//! Labels mix a planted signal with uniform noise according to
//! [`SignalConfig::strength`]:
//!
//! * EL and LS dominance grow monotonically with the member's out-degree
//!   fraction (share of snapshots in which it speaks),
//! * TW components blend the member's own channel-0 trend with the leader's,
//! * LS friendliness follows the own trend, LS task orientation the level.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{all_tasks, default_scale, DataError, DynamicTeam, Snapshot, TeamDataset, EL, LS_TASKS, TW_TASKS};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalConfig {
    /// 1 = labels fully determined by the planted statistics (plus noise),
    /// 0 = labels independent of the inputs.
    pub strength: f64,
    /// Standard deviation of Gaussian label noise.
    pub label_noise: f64,
    /// Peak-to-peak drift of channel 0 for a unit slope.
    pub trend_amplitude: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            strength: 1.0,
            label_noise: 0.25,
            trend_amplitude: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_teams: usize,
    pub roster_size: usize,
    pub steps: usize,
    pub feature_dim: usize,
    pub signal: SignalConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_teams: 12,
            roster_size: 4,
            steps: 20,
            feature_dim: 4,
            signal: SignalConfig::default(),
        }
    }
}

fn unit_frac(frac: f64, full_at: f64) -> f64 {
    (frac / full_at).min(1.0)
}

pub fn synth_dataset(cfg: &SynthConfig) -> Result<TeamDataset, DataError> {
    if !(3..=4).contains(&cfg.roster_size) {
        return Err(DataError::Config(format!(
            "roster size must be 3 or 4, got {}",
            cfg.roster_size
        )));
    }
    if cfg.n_teams < 3 {
        return Err(DataError::Config("at least 3 teams are required".into()));
    }
    if cfg.feature_dim == 0 || cfg.steps == 0 {
        return Err(DataError::Config(
            "feature dimension and step count must be positive".into(),
        ));
    }
    let sig = cfg.signal;
    if !(0.0..=1.0).contains(&sig.strength) || sig.label_noise < 0.0 || !sig.trend_amplitude.is_finite() {
        return Err(DataError::Config("invalid signal configuration".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let tasks = all_tasks();
    let scales: Vec<(f64, f64)> = tasks.iter().map(|t| default_scale(t).expect("known")).collect();
    let (n, k, d) = (cfg.roster_size, cfg.steps, cfg.feature_dim);

    let mut teams = Vec::with_capacity(cfg.n_teams);
    for team_idx in 0..cfg.n_teams {
        let leader = rng.gen_range(0..n);
        let speak_p: Vec<f64> = (0..n)
            .map(|v| {
                if v == leader {
                    rng.gen_range(0.6..0.9)
                } else {
                    rng.gen_range(0.02..0.2)
                }
            })
            .collect();
        let trend: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let level: Vec<f64> = (0..n).map(|_| std_normal.sample(&mut rng)).collect();
        let members: Vec<u32> = (0..n as u32).collect();

        let mut spoke = vec![0usize; n];
        let mut snapshots = Vec::with_capacity(k);
        for t in 0..k {
            let phase = if k > 1 { t as f64 / (k - 1) as f64 - 0.5 } else { 0.0 };
            let mut edges = Vec::new();
            for v in 0..n {
                if rng.gen::<f64>() < speak_p[v] {
                    spoke[v] += 1;
                    edges.extend((0..n).filter(|&u| u != v).map(|u| (v as u32, u as u32)));
                }
            }
            let mut feats = Vec::with_capacity(n * d);
            for v in 0..n {
                for c in 0..d {
                    let noise = std_normal.sample(&mut rng);
                    feats.push(match c {
                        0 => sig.trend_amplitude * trend[v] * phase + 0.5 * noise,
                        1 => level[v] + 0.5 * noise,
                        _ => noise,
                    });
                }
            }
            snapshots.push(Snapshot {
                timestep: t,
                members: members.clone(),
                edges,
                features: Tensor::new(vec![n, d], feats).expect("n×d"),
            });
        }

        let mut labels = Vec::with_capacity(n * tasks.len());
        for v in 0..n {
            let frac = spoke[v] as f64 / k as f64;
            for (task, &(lo, hi)) in tasks.iter().zip(&scales) {
                let planted = if task == EL {
                    1.0 + 4.0 * unit_frac(frac, 0.7)
                } else if task == LS_TASKS[0] {
                    1.0 + 3.5 * unit_frac(frac, 0.8)
                } else if task == LS_TASKS[1] {
                    3.0 + 1.5 * trend[v]
                } else if task == LS_TASKS[2] {
                    3.0 + 1.2 * level[v].clamp(-1.5, 1.5)
                } else {
                    let idx = TW_TASKS.iter().position(|t| t == task).expect("teamwork task");
                    let own = 0.2 + 0.08 * idx as f64;
                    4.0 + 2.5 * (own * trend[v] + (1.0 - own) * trend[leader])
                };
                let random = rng.gen_range(lo..=hi);
                let noise = sig.label_noise * std_normal.sample(&mut rng);
                let y = sig.strength * planted + (1.0 - sig.strength) * random + noise;
                labels.push(y.clamp(lo, hi));
            }
        }

        teams.push(DynamicTeam {
            team_id: format!("team{team_idx:02}"),
            snapshots,
            labels: Tensor::new(vec![n, tasks.len()], labels).expect("n×m"),
            tasks: tasks.clone(),
            task_scales: scales.clone(),
        });
    }
    TeamDataset::new(teams)
}

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{DataError, MemberId, Snapshot};
use crate::tensor::Tensor;

/// One activity interval of a member (e.g. a diarized speaking turn) with
/// the features extracted over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub member_id: MemberId,
    pub t_start: f64,
    pub t_end: f64,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    /// Seconds covered by one labeled segment.
    pub annotation_freq: f64,
    /// Seconds covered by one snapshot.
    pub subsegment_len: f64,
    pub feature_dim: usize,
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.annotation_freq) || !ok(self.subsegment_len) {
            return Err(DataError::Config(
                "segment and subsegment lengths must be positive".into(),
            ));
        }
        if self.subsegment_len > self.annotation_freq {
            return Err(DataError::Config(
                "subsegment length cannot exceed the annotation interval".into(),
            ));
        }
        if self.feature_dim == 0 {
            return Err(DataError::Config("feature dimension must be at least 1".into()));
        }
        Ok(())
    }

    /// Snapshots per labeled segment, `⌈f / s⌉`.
    pub fn snapshots_per_segment(&self) -> usize {
        ceil_ratio(self.annotation_freq, self.subsegment_len)
    }
}

/// `⌈a / b⌉`, forgiving ratios that land a rounding error above an integer.
fn ceil_ratio(a: f64, b: f64) -> usize {
    let r = a / b;
    let rounded = r.round();
    if (r - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded as usize
    } else {
        r.ceil() as usize
    }
}

/// Cuts an event stream into `⌈total_len / f⌉` labeled segments of
/// `⌈f / s⌉` snapshots each.
///
/// A member active anywhere inside a snapshot window sends an edge to every
/// other roster member for that snapshot; its feature row is the mean of the
/// payloads of its events overlapping the window, or zeros when silent.
pub fn segment_events(
    events: &[InteractionEvent],
    roster: &[MemberId],
    total_len: f64,
    cfg: &SegmentationConfig,
) -> Result<Vec<Vec<Snapshot>>, DataError> {
    cfg.validate()?;
    if roster.is_empty() {
        return Err(DataError::Config("empty roster".into()));
    }
    if roster.iter().collect::<BTreeSet<_>>().len() != roster.len() {
        return Err(DataError::Config("duplicate member id in roster".into()));
    }
    if !(total_len.is_finite() && total_len > 0.0) {
        return Err(DataError::Config("total length must be positive".into()));
    }
    let d = cfg.feature_dim;
    for (i, e) in events.iter().enumerate() {
        let path = format!("events[{i}]");
        if !roster.contains(&e.member_id) {
            return Err(super::invalid(path, format!("member {} not in roster", e.member_id)));
        }
        if !(e.t_start.is_finite() && e.t_end.is_finite() && e.t_start < e.t_end) {
            return Err(super::invalid(path, "event needs finite t_start < t_end"));
        }
        if e.features.len() != d {
            return Err(super::invalid(
                path,
                format!("expected {d} features, got {}", e.features.len()),
            ));
        }
        if e.features.iter().any(|v| !v.is_finite()) {
            return Err(super::invalid(path, "non-finite feature payload"));
        }
        if e.t_end > total_len {
            return Err(super::invalid(
                path,
                format!("event ends after total length {total_len}"),
            ));
        }
    }

    let f = cfg.annotation_freq;
    let s = cfg.subsegment_len;
    let n_segments = ceil_ratio(total_len, f);
    let z = cfg.snapshots_per_segment();
    let n = roster.len();
    let mut segments = Vec::with_capacity(n_segments);
    for seg in 0..n_segments {
        let seg_start = seg as f64 * f;
        let seg_end = seg_start + f;
        let mut snaps = Vec::with_capacity(z);
        for j in 0..z {
            let w_start = seg_start + j as f64 * s;
            let w_end = (w_start + s).min(seg_end);
            let mut sums = vec![0.0; n * d];
            let mut counts = vec![0usize; n];
            for e in events.iter().filter(|e| e.t_start < w_end && e.t_end > w_start) {
                let r = roster.iter().position(|&m| m == e.member_id).expect("validated");
                counts[r] += 1;
                for (acc, v) in sums[r * d..(r + 1) * d].iter_mut().zip(&e.features) {
                    *acc += v;
                }
            }
            for r in 0..n {
                if counts[r] > 0 {
                    let inv = 1.0 / counts[r] as f64;
                    sums[r * d..(r + 1) * d].iter_mut().for_each(|v| *v *= inv);
                }
            }
            let mut edges = Vec::new();
            for (r, &src) in roster.iter().enumerate() {
                if counts[r] == 0 {
                    continue;
                }
                edges.extend(roster.iter().filter(|&&dst| dst != src).map(|&dst| (src, dst)));
            }
            snaps.push(Snapshot {
                timestep: j,
                members: roster.to_vec(),
                edges,
                features: Tensor::new(vec![n, d], sums).expect("n×d"),
            });
        }
        segments.push(snaps);
    }
    Ok(segments)
}

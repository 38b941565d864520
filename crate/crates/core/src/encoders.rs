//! Encoders mapping a dynamic team to one social embedding per member.
//!
//! | kind  | input                                  | structure                          |
//! |-------|----------------------------------------|------------------------------------|
//! | snn   | time-mean features of the member       | two dense ReLU layers              |
//! | tnn   | the member's own feature sequence      | multi-head self-attention, mean    |
//! | renn  | time-mean snapshot, union of all edges | stacked GCN layers                 |
//! | trenn | every snapshot                         | GCN per snapshot, then attention   |
//!
//! Feature rows are stacked time-major (`row = t·n + member`); attention
//! runs on the member-major reordering (`row = member·K + t`).

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DynamicTeam, Snapshot};
use crate::params::{BoundParams, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Snn,
    Tnn,
    Renn,
    Trenn,
}

impl EncoderKind {
    pub fn uses_attention(self) -> bool {
        matches!(self, Self::Tnn | Self::Trenn)
    }

    pub fn uses_graph(self) -> bool {
        matches!(self, Self::Renn | Self::Trenn)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub d_in: usize,
    /// Embedding width.
    pub hidden: usize,
    pub gcn_layers: usize,
    pub heads: usize,
    pub positional_encoding: bool,
    pub gcn_bias: bool,
}

impl EncoderSpec {
    pub fn new(kind: EncoderKind, d_in: usize) -> Self {
        Self {
            kind,
            d_in,
            hidden: 8,
            gcn_layers: 2,
            heads: 2,
            positional_encoding: true,
            gcn_bias: true,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.hidden == 0 {
            return Err(Error::Config("encoder widths must be positive".into()));
        }
        if self.kind.uses_attention() && (self.heads == 0 || !self.hidden.is_multiple_of(self.heads)) {
            return Err(Error::Config(format!(
                "hidden width {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if self.kind.uses_graph() && self.gcn_layers == 0 {
            return Err(Error::Config("graph encoders need at least one GCN layer".into()));
        }
        Ok(())
    }

    /// Adds Glorot-initialized weights (zero biases) under `enc.*`.
    pub fn init_params<R: Rng>(&self, rng: &mut R, store: &mut ParamStore) -> Result<()> {
        self.validate()?;
        let h = self.hidden;
        match self.kind {
            EncoderKind::Snn => {
                store.insert("enc.ffn.0.weight", ParamStore::glorot(rng, self.d_in, h));
                store.insert("enc.ffn.0.bias", Tensor::zeros(&[1, h]));
                store.insert("enc.ffn.1.weight", ParamStore::glorot(rng, h, h));
                store.insert("enc.ffn.1.bias", Tensor::zeros(&[1, h]));
            }
            EncoderKind::Tnn => init_attention(rng, store, self.d_in, h),
            EncoderKind::Renn | EncoderKind::Trenn => {
                for l in 0..self.gcn_layers {
                    let fan_in = if l == 0 { self.d_in } else { h };
                    store.insert(format!("enc.gcn.{l}.weight"), ParamStore::glorot(rng, fan_in, h));
                    if self.gcn_bias {
                        store.insert(format!("enc.gcn.{l}.bias"), Tensor::zeros(&[1, h]));
                    }
                }
                if self.kind == EncoderKind::Trenn {
                    init_attention(rng, store, h, h);
                }
            }
        }
        Ok(())
    }
}

fn init_attention<R: Rng>(rng: &mut R, store: &mut ParamStore, d_in: usize, hidden: usize) {
    for name in ["q", "k", "v"] {
        store.insert(format!("enc.attn.{name}"), ParamStore::glorot(rng, d_in, hidden));
    }
    store.insert("enc.attn.out.weight", ParamStore::glorot(rng, hidden, hidden));
    store.insert("enc.attn.out.bias", Tensor::zeros(&[1, hidden]));
}

/// `D̃^{-1/2} Ã D̃^{-1/2}` with `Ã = A + I`, where `A[dst][src] = 1` for
/// every edge `src → dst` (a listener aggregates its speakers' messages) and
/// `D̃` holds the row sums of `Ã`.
pub fn normalized_adjacency(n: usize, edges: &[(usize, usize)]) -> Tensor {
    let mut a = Tensor::eye(n);
    for &(src, dst) in edges {
        if src != dst {
            a.set(dst, src, 1.0);
        }
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    for i in 0..n {
        for j in 0..n {
            let v = a.get(i, j);
            if v != 0.0 {
                a.set(i, j, v / (deg[i] * deg[j]).sqrt());
            }
        }
    }
    a
}

/// Sinusoidal position codes, `len × width`.
pub fn positional_encoding(len: usize, width: usize) -> Tensor {
    let mut pe = Tensor::zeros(&[len, width]);
    for t in 0..len {
        for c in 0..width {
            let pair = (c / 2) as f64;
            let angle = t as f64 / 10000f64.powf(2.0 * pair / width as f64);
            pe.set(t, c, if c % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    pe
}

/// Encoder-ready view of a team: stacked features plus precomputed
/// propagation matrices and reordering indices.
#[derive(Debug, Clone)]
pub struct TeamInput {
    pub n: usize,
    pub steps: usize,
    /// `(steps·n) × d`, time-major.
    pub features: Tensor,
    pub snapshot_props: Rc<[Tensor]>,
    pub union_prop: Rc<[Tensor]>,
    pub member_major: Rc<[usize]>,
    pub time_mean_order: Rc<[usize]>,
}

impl TeamInput {
    pub fn new(team: &DynamicTeam) -> Result<Self> {
        Self::from_snapshots(&team.snapshots)
    }

    pub fn from_snapshots(snapshots: &[Snapshot]) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::Model("team has no snapshots".into()))?;
        let n = first.n_members();
        if n == 0 {
            return Err(Error::Model("team has no members".into()));
        }
        let k = snapshots.len();
        let parts: Vec<&Tensor> = snapshots.iter().map(|s| &s.features).collect();
        let features = Tensor::concat_rows(&parts)?;
        let mut union = Vec::new();
        let props: Vec<Tensor> = snapshots
            .iter()
            .map(|s| {
                let e = s.edge_positions();
                union.extend(e.iter().copied());
                normalized_adjacency(n, &e)
            })
            .collect();
        union.sort_unstable();
        union.dedup();
        let member_major: Vec<usize> = (0..n).flat_map(|v| (0..k).map(move |t| t * n + v)).collect();
        Ok(Self {
            n,
            steps: k,
            features,
            snapshot_props: props.into(),
            union_prop: vec![normalized_adjacency(n, &union)].into(),
            time_mean_order: member_major.clone().into(),
            member_major: member_major.into(),
        })
    }

    /// Same graph structure, different feature values.
    pub fn with_features(&self, features: Tensor) -> Self {
        Self {
            features,
            ..self.clone()
        }
    }
}

/// Result of one encoder pass.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    /// `n × hidden`.
    pub embedding: Var,
    /// The attention node, for encoders that have one.
    pub attention: Option<Var>,
}

fn dense(tape: &mut Tape, p: &BoundParams, x: Var, prefix: &str) -> Result<Var> {
    let w = p.var(&format!("{prefix}.weight"))?;
    let b = p.var(&format!("{prefix}.bias"))?;
    let xw = tape.matmul(x, w)?;
    Ok(tape.add_row(xw, b)?)
}

/// `φ(P · (H·W + b))` for a stack of `P` blocks. The bias is part of each
/// message, so a node receives it weighted by its normalized in-degree.
fn gcn_stack(tape: &mut Tape, spec: &EncoderSpec, p: &BoundParams, x: Var, props: &Rc<[Tensor]>) -> Result<Var> {
    let mut h = x;
    for l in 0..spec.gcn_layers {
        let w = p.var(&format!("enc.gcn.{l}.weight"))?;
        let mut msg = tape.matmul(h, w)?;
        if spec.gcn_bias {
            let b = p.var(&format!("enc.gcn.{l}.bias"))?;
            msg = tape.add_row(msg, b)?;
        }
        let z = tape.propagate(msg, props.clone())?;
        h = tape.relu(z)?;
    }
    Ok(h)
}

/// One GCN layer on a single snapshot without the activation:
/// `D̃^{-1/2} Ã D̃^{-1/2} H W`.
pub fn gcn_propagate(tape: &mut Tape, snapshot: &Snapshot, h_prev: Var, w: Var) -> Result<Var> {
    let n = snapshot.n_members();
    if n == 0 {
        return Err(Error::Model("GCN layer on an empty snapshot".into()));
    }
    let prop: Rc<[Tensor]> = vec![normalized_adjacency(n, &snapshot.edge_positions())].into();
    let hw = tape.matmul(h_prev, w)?;
    Ok(tape.propagate(hw, prop)?)
}

/// `ReLU(D̃^{-1/2} Ã D̃^{-1/2} H W)` on a single snapshot.
pub fn gcn_layer(tape: &mut Tape, snapshot: &Snapshot, h_prev: Var, w: Var) -> Result<Var> {
    let z = gcn_propagate(tape, snapshot, h_prev, w)?;
    Ok(tape.relu(z)?)
}

/// Multi-head self-attention over `rows / seq_len` member sequences.
/// Returns `(output, attention node)`; output is `Concat(H_1…H_h)·W_O + b_O`.
pub fn mha_temporal(
    tape: &mut Tape,
    p: &BoundParams,
    seq: Var,
    seq_len: usize,
    heads: usize,
    positional: bool,
) -> Result<(Var, Var)> {
    let (rows, width) = (tape.value(seq).rows(), tape.value(seq).cols());
    let mut x = seq;
    if positional {
        let pe = positional_encoding(seq_len, width);
        let mut tiled = Vec::with_capacity(rows * width);
        for _ in 0..rows / seq_len.max(1) {
            tiled.extend_from_slice(pe.data());
        }
        let pe = tape.constant(Tensor::new(vec![rows, width], tiled)?);
        x = tape.add(x, pe)?;
    }
    let q = tape.matmul(x, p.var("enc.attn.q")?)?;
    let k = tape.matmul(x, p.var("enc.attn.k")?)?;
    let v = tape.matmul(x, p.var("enc.attn.v")?)?;
    let att = tape.attention(q, k, v, seq_len, heads)?;
    let out = dense(tape, p, att, "enc.attn.out")?;
    Ok((out, att))
}

/// Runs the encoder on `x`, the time-major feature stack of `input`
/// (passed separately so callers can differentiate with respect to it).
pub fn encode_var(tape: &mut Tape, spec: &EncoderSpec, p: &BoundParams, input: &TeamInput, x: Var) -> Result<Encoded> {
    let (n, k) = (input.n, input.steps);
    if tape.value(x).shape() != [n * k, spec.d_in] {
        return Err(Error::Model(format!(
            "encoder expects {}×{} features, got {:?}",
            n * k,
            spec.d_in,
            tape.value(x).shape()
        )));
    }
    match spec.kind {
        EncoderKind::Snn => {
            let xm = tape.select_rows(x, input.member_major.clone())?;
            let mean = tape.group_mean(xm, k)?;
            let h = dense(tape, p, mean, "enc.ffn.0")?;
            let h = tape.relu(h)?;
            let h = dense(tape, p, h, "enc.ffn.1")?;
            Ok(Encoded {
                embedding: tape.relu(h)?,
                attention: None,
            })
        }
        EncoderKind::Tnn => {
            let xm = tape.select_rows(x, input.member_major.clone())?;
            let (out, att) = mha_temporal(tape, p, xm, k, spec.heads, spec.positional_encoding)?;
            Ok(Encoded {
                embedding: tape.group_mean(out, k)?,
                attention: Some(att),
            })
        }
        EncoderKind::Renn => {
            let xm = tape.select_rows(x, input.time_mean_order.clone())?;
            let mean = tape.group_mean(xm, k)?;
            Ok(Encoded {
                embedding: gcn_stack(tape, spec, p, mean, &input.union_prop)?,
                attention: None,
            })
        }
        EncoderKind::Trenn => {
            let h = gcn_stack(tape, spec, p, x, &input.snapshot_props)?;
            let hm = tape.select_rows(h, input.member_major.clone())?;
            let (out, att) = mha_temporal(tape, p, hm, k, spec.heads, spec.positional_encoding)?;
            Ok(Encoded {
                embedding: tape.group_mean(out, k)?,
                attention: Some(att),
            })
        }
    }
}

/// Social embeddings (`n × hidden`) of a team under frozen parameters.
pub fn encode(team: &DynamicTeam, spec: &EncoderSpec, params: &ParamStore) -> Result<Tensor> {
    let input = TeamInput::new(team)?;
    let mut tape = Tape::new();
    let p = params.bind_frozen(&mut tape);
    let x = tape.constant(input.features.clone());
    let enc = encode_var(&mut tape, spec, &p, &input, x)?;
    Ok(tape.value(enc.embedding).clone())
}

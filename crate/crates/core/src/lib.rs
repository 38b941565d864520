//! Tempo-relational team modeling.
//!
//! Interaction streams become snapshot temporal graphs ([`data`]); encoders
//! of increasing structural richness ([`encoders`]) map each member to a
//! social embedding; single- or multi-task heads ([`heads`]) decode team
//! constructs and are trained with the objectives in [`losses`]. The
//! [`eval`] module runs the nested leave-one-group-out protocol, and
//! [`explain`] produces gradient saliency maps and edge-removal
//! counterfactuals.

pub mod data;
pub mod encoders;
pub mod eval;
pub mod explain;
pub mod heads;
pub mod losses;
pub mod model;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;
pub mod train;

pub use data::{DynamicTeam, Snapshot, TeamDataset};
pub use model::{Model, ModelSpec, Paradigm};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] tensor::TensorError),
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error("model: {0}")]
    Model(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("search: {0}")]
    Search(String),
}

pub type Result<T> = std::result::Result<T, Error>;

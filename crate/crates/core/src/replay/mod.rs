//! The replay side of the algorithm: loss-percentile data preservation,
//! synthetic-data-generation sources with KS arbitration, and balanced
//! mini-batch composition.

mod batch;
mod persist;
mod preserve;
mod sdg;

pub use batch::{compose_balanced_batch, BalancedBatcher};
pub use persist::{load_replay_source, preserved_buffer_bytes, save_replay_source};
pub use preserve::{preserve_data, PreservationConfig};
pub use sdg::{
    build_gmm_source, build_kde_source, build_sdg_source, generate_replay, KsArbitration,
    PROBE_CAP,
};

use std::sync::Arc;

use ndarray::Array2;

use crate::density::DensityModel;
use crate::nn::{MultiHeadMlp, TaskId};
use crate::scalar::Scalar;

/// Replay material for one past mission: either real preserved rows or a
/// density model plus the frozen network snapshot that labels its samples.
/// Labels are head-local class indices, stable under later head expansion.
#[derive(Debug, Clone)]
pub enum ReplaySourceKind<F: Scalar> {
    Preserved {
        rows: Array2<F>,
        labels: Vec<u32>,
    },
    Generative {
        density: DensityModel<F>,
        /// Model state saved right after the source mission trained; later
        /// training never touches this copy, so replay labels cannot drift.
        snapshot: Arc<MultiHeadMlp<F>>,
        /// Rows the density was fitted on; scales the per-epoch synthetic
        /// budget.
        train_size: usize,
    },
}

#[derive(Debug, Clone)]
pub struct ReplaySource<F: Scalar> {
    pub mission_id: u32,
    pub task_id: TaskId,
    pub kind: ReplaySourceKind<F>,
}

impl<F: Scalar> ReplaySource<F> {
    pub fn is_generative(&self) -> bool {
        matches!(self.kind, ReplaySourceKind::Generative { .. })
    }
}

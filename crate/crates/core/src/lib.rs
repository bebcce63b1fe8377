//! Continual learning for tabular data with replay.
//!
//! The crate trains a single multi-headed MLP across a sequence of missions
//! (new data distributions, new classes, or entirely new tasks) and fights
//! catastrophic forgetting with two interchangeable replay mechanisms:
//!
//! * **Data preservation** — after a mission is trained, the per-class
//!   top-loss slice of its training data (by accumulated average training
//!   loss) is kept as exemplars for future mini-batches.
//! * **Generative replay** — a density model (Gaussian mixture fitted by EM,
//!   or a Gaussian-kernel KDE) is fitted to the mission's training data;
//!   whichever model's samples are closer to the real data under a
//!   per-feature two-sample Kolmogorov-Smirnov statistic is stored, and
//!   future missions replay fresh samples labeled by a frozen snapshot of
//!   the network.
//!
//! Mini-batches are composed with an even share per mission so missions with
//! more data do not dominate. Everything is generic over the floating-point
//! type through [`Scalar`]; the aliases below pin the common `f64`
//! instantiation used by the CLI.

pub mod data;
pub mod density;
pub mod error;
mod linalg;
pub mod nn;
pub mod replay;
pub mod rng;
pub mod scalar;
pub mod scenario;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` instantiations of the main domain types.
pub type TabularDataset64 = data::TabularDataset<f64>;
pub type SplitDataset64 = data::SplitDataset<f64>;
pub type MultiHeadMlp64 = nn::MultiHeadMlp<f64>;
pub type LossLedger64 = nn::LossLedger<f64>;
pub type GmmModel64 = density::GmmModel<f64>;
pub type KdeModel64 = density::KdeModel<f64>;
pub type DensityModel64 = density::DensityModel<f64>;
pub type ReplaySource64 = replay::ReplaySource<f64>;

/// `f32` instantiations for memory-constrained uses.
pub type TabularDataset32 = data::TabularDataset<f32>;
pub type MultiHeadMlp32 = nn::MultiHeadMlp<f32>;

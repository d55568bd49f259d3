//! Desk-scale adversarial training with diversified attacks and adaptive
//! knowledge amalgamation.
//!
//! The crate trains small robust classifiers by distilling an ensemble of
//! teachers, each fed a distinct adversarial variant of every training
//! sample. The variants come from a particle attack (Stein variational
//! gradient descent) whose kernel repulsion keeps them spread out inside the
//! perturbation budget; the teachers' logits are then fused per sample by one
//! of four adaptive amalgamation rules and matched by the student.
//!
//! Modules:
//! - [`nn`] — dense feed-forward networks with exact parameter and input
//!   gradients, the loss zoo, and momentum SGD.
//! - [`attack`] — FGSM, PGD with random restarts, and the SVGD particle
//!   attack, all projected onto the L∞ budget ball and input domain.
//! - [`amalgamation`] — naive / linear / soft / Pareto teacher fusion.
//! - [`distill`] — training loops: natural, SAT, single-teacher distillation,
//!   teacher-ensemble distillation, and the all-students collaborative
//!   variant.
//! - [`data`] — toy datasets (two moons, spirals), CSV ingestion.
//! - [`metrics`] — diversity statistics, robustness evaluation, decision
//!   boundary grids.
//!
//! Everything is deterministic under a fixed seed. The data-parallel inner
//! loops (attack generation, evaluation) run on rayon when the `parallel`
//! feature is enabled and [`parallel::set_threads`] asks for more than one
//! thread; results are bit-identical either way because every parallel map
//! preserves order and reductions happen sequentially afterwards.

pub mod amalgamation;
pub mod attack;
pub mod data;
pub mod distill;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod parallel;
pub mod seed;

pub use error::{Error, Result};

//! Class-wise, epoch-weighted perturbation intensities for adversarial
//! training on long-tailed data.
//!
//! - [`theory`]: closed-form risks, optimal bias and feasible intensity
//!   regions for the binary Gaussian task, with sampling oracles.
//! - [`schedules`]: class-wise balancing and warm-up of intensities.
//! - [`data`]: long-tailed synthetic datasets and their file format.
//! - [`model`], [`attack`], [`train`]: small classifiers, PGD and the
//!   training loop.
//! - [`metrics`]: all/tail aggregates, skew decomposition and the
//!   Wasserstein budget surrogate.

pub mod attack;
pub mod data;
pub mod metrics;
pub mod model;
pub mod normal;
pub mod schedules;
pub mod theory;
pub mod train;

pub use attack::{pgd_attack, AttackConfig};
pub use data::{class_counts, Dataset, LongTailSpec};
pub use model::{ClassifierModel, LossFn, LossTag, ModelKind};
pub use schedules::{aiw_weight, cpb_intensities, ClassProfile, IntensityTable, ScheduleConfig};
pub use theory::{GaussianTaskSpec, Label, LinearHypothesis};
pub use train::{evaluate, train, Enhance, TrainConfig, TrainState};

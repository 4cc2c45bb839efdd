//! Adaptive diffusion terrain generation for curriculum training of
//! navigation policies.
//!
//! The crate is organized around an elevation-grid core and three layers
//! built on top of it:
//!
//! - [`heightfield`], [`procgen`]: terrain data type, statistics, binary
//!   I/O, procedural generators, and a Gaussian-mixture terrain prior.
//! - [`diffusion`], [`guidance`], [`diversity`]: DDPM forward/reverse
//!   machinery over pluggable noise predictors, performance-weighted
//!   latent fusion, and PCA-based dataset variability with the forward-step
//!   scheduler.
//! - [`navsim`], [`learner`], [`curriculum`]: a kinematic navigation
//!   environment with success-rate evaluation, a cross-entropy policy
//!   trainer, and the adaptive curriculum loop plus its baselines.
//!
//! [`config`] holds the run configuration shared by the CLI and the
//! library entry points; [`experiments`] hosts the reference experiments
//! (variance-vs-step, difficulty consistency, curriculum comparisons).
//!
//! All randomness derives from a single root seed through named streams
//! (see [`rng`]), so every result is reproducible bit-for-bit regardless
//! of worker count.

pub mod config;
pub mod curriculum;
pub mod dataset;
pub mod diffusion;
pub mod diversity;
pub mod experiments;
pub mod guidance;
pub mod heightfield;
pub mod learner;
pub mod navsim;
pub mod procgen;
pub mod rng;

pub use config::RunConfig;
pub use curriculum::{CurriculumState, Mode};
pub use dataset::{Origin, TerrainRecord};
pub use diffusion::{Latent, NoisePredictor, NoiseSchedule};
pub use guidance::WeightingParams;
pub use heightfield::{Heightmap, TerrainStats};
pub use learner::PolicyParams;
pub use procgen::{GaussianMixturePrior, ProcGenSpec};

//! Modulo-lattice transformation of multiple-access channels.
//!
//! A K-user continuous-amplitude channel — possibly non-additive and
//! non-Gaussian — is converted into a modulo-lattice additive-noise channel:
//! each transmitter folds its message plus an independent dither into the
//! lattice's Voronoi region, and the receiver folds an estimate of the
//! transmitted sum minus the dithers back into the region. The effective
//! noise of the induced channel is the estimation error, and it is
//! statistically independent of the messages.
//!
//! The crate provides:
//!
//! - [`lattice`]: scalar, cubic, hexagonal, D4 and E8 lattices with
//!   closed-form nearest-point quantizers, modulo folding, uniform dither
//!   sampling, and second moments;
//! - [`channel`]: a zoo of memoryless K-user channel models and per-user
//!   preprocessing maps;
//! - [`estimator`]: linear-MMSE and binned conditional-mean estimators of
//!   the input sum from the channel output;
//! - [`pipeline`]: the end-to-end transformation, trial records, and noise
//!   collection;
//! - [`analysis`]: noise-entropy and achievable-rate estimation,
//!   independence testing, and estimator comparisons;
//! - [`discrete`]: an exact finite analogue over Z_q used as ground truth;
//! - [`stats`], [`seeding`]: statistical tests and deterministic
//!   substream derivation.

pub mod analysis;
pub mod channel;
pub mod discrete;
pub mod estimator;
pub mod lattice;
pub mod pipeline;
pub mod seeding;
pub mod stats;

pub use analysis::{
    achievable_rate, compare_estimators, estimate_entropy_folded, estimate_entropy_raw,
    independence_report, AnalysisError, ComparisonTable, EntropyEstimate, EstimatorReport,
    IndependenceReport, NoiseProfile, ProductHistogram, RateEstimate,
};
pub use channel::{
    standard_zoo, ChannelError, ChannelModel, ChannelStructure, NoiseLaw, Preprocessor, UserMap,
};
pub use discrete::{DiscreteError, DiscreteSystem};
pub use estimator::{
    evaluate_mse, fit_binned_conditional_mean, fit_linear_mmse, Estimator, EstimatorError,
    MseEstimate, TrainingSet,
};
pub use lattice::{Lattice, LatticeError, LatticeStats, QuantizerKind};
pub use pipeline::{
    collect_noise, generate_training_set, identity_pass_rate, induced_channel_residual,
    message_grid, random_message_tuples, receive, records_to_pairs, run_trials,
    run_trials_with_options, transmit_user, transmitted_power, GroupedNoise, MessageAssignment,
    PipelineError, TransformConfig, TrialRecord, VORONOI_TOL,
};

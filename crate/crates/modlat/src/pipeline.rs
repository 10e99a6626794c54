//! End-to-end modulo-lattice transformation: each transmitter folds its
//! message plus dither into the fundamental region, the channel combines the
//! K signals, and the receiver re-folds the estimate of the signal sum minus
//! the dithers. The induced channel from messages to receiver output is then
//! additive modulo the lattice, with noise equal to the estimation error.
//!
//! Dithers are drawn fresh per trial per user from seed-derived substreams;
//! the receiver reconstructs them from the shared seed, mirroring a
//! pseudorandom dither sequence shared by both ends of the link.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{ChannelError, ChannelModel, Preprocessor};
use crate::estimator::{Estimator, TrainingSet};
use crate::lattice::{Lattice, LatticeError};
use crate::seeding::substream;
use crate::stats::Moments;

/// Tolerance for "lies in the fundamental region" checks.
pub const VORONOI_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("config has {config_users} users but channel expects {channel_users}")]
    UserCountMismatch {
        config_users: usize,
        channel_users: usize,
    },
    #[error("preprocessor covers {got} users, expected {expected}")]
    PreprocessorMismatch { expected: usize, got: usize },
    #[error("block dimension {block} does not match lattice dimension {lattice}")]
    BlockDimensionMismatch { block: usize, lattice: usize },
    #[error("vector of length {got} is outside the fundamental region or has wrong length {expected}")]
    NotInFundamentalRegion { expected: usize, got: usize },
    #[error("message list is empty")]
    EmptyMessageList,
    #[error("fixed message tuple {tuple} has {got} users, expected {expected}")]
    MessageTupleSize {
        tuple: usize,
        expected: usize,
        got: usize,
    },
    #[error("grid assignment needs at least one point per dimension")]
    EmptyGrid,
    #[error("no trial records to collect")]
    NoRecords,
}

/// Immutable configuration of one transformation experiment.
#[derive(Debug, Clone)]
pub struct TransformConfig {
    lattice: Lattice,
    channel: ChannelModel,
    preprocessor: Preprocessor,
    estimator: Estimator,
    num_users: usize,
    block_dimension: usize,
}

impl TransformConfig {
    pub fn new(
        lattice: Lattice,
        channel: ChannelModel,
        preprocessor: Preprocessor,
        estimator: Estimator,
    ) -> Result<Self, PipelineError> {
        let num_users = channel.num_users();
        if preprocessor.num_users() != num_users {
            return Err(PipelineError::PreprocessorMismatch {
                expected: num_users,
                got: preprocessor.num_users(),
            });
        }
        let block_dimension = lattice.dimension();
        Ok(Self {
            lattice,
            channel,
            preprocessor,
            estimator,
            num_users,
            block_dimension,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    pub fn preprocessor(&self) -> &Preprocessor {
        &self.preprocessor
    }

    pub fn estimator(&self) -> &Estimator {
        &self.estimator
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn block_dimension(&self) -> usize {
        self.block_dimension
    }

    /// Replaces the estimator, keeping everything else (used to compare
    /// estimators on identical randomness).
    pub fn with_estimator(&self, estimator: Estimator) -> Self {
        let mut cfg = self.clone();
        cfg.estimator = estimator;
        cfg
    }
}

/// One end-to-end pass of the transformation.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    /// Messages v_i, one per user, each in the fundamental region.
    pub messages: Vec<Vec<f64>>,
    /// Dithers u_i, uniform over the fundamental region.
    pub dithers: Vec<Vec<f64>>,
    /// Transmitted signals x_i = (v_i + u_i) mod lattice.
    pub transmitted: Vec<Vec<f64>>,
    /// Channel output y.
    pub channel_output: Vec<f64>,
    /// Estimate of the signal sum, g(y) coordinate-wise.
    pub estimate: Vec<f64>,
    /// Receiver output y' = (g(y) - sum of dithers) mod lattice.
    pub receiver_output: Vec<f64>,
    /// Effective noise g(y) - s with s the transmitted sum.
    pub effective_noise: Vec<f64>,
    /// Folded noise, effective noise mod lattice.
    pub folded_noise: Vec<f64>,
}

/// Rule for picking the message tuple (v_1..v_K) of each trial.
#[derive(Debug, Clone)]
pub enum MessageAssignment {
    /// Cycle through an explicit list of K-tuples.
    FixedList(Vec<Vec<Vec<f64>>>),
    /// Fresh uniform draw over the fundamental region per user per trial.
    UniformRandom,
    /// Cycle through a deterministic grid folded into the fundamental
    /// region, `points_per_dim`^n points; user i is offset by i along the
    /// cycle so tuples vary across users.
    Grid { points_per_dim: usize },
}

/// Sends one user's message: x = (v + u) mod lattice. Both inputs must lie
/// in the fundamental region.
pub fn transmit_user(
    cfg: &TransformConfig,
    message: &[f64],
    dither: &[f64],
) -> Result<Vec<f64>, PipelineError> {
    for input in [message, dither] {
        if input.len() != cfg.block_dimension
            || !cfg.lattice.in_voronoi(input, VORONOI_TOL)?
        {
            return Err(PipelineError::NotInFundamentalRegion {
                expected: cfg.block_dimension,
                got: input.len(),
            });
        }
    }
    let sum: Vec<f64> = message.iter().zip(dither).map(|(v, u)| v + u).collect();
    Ok(cfg.lattice.mod_lattice(&sum)?)
}

/// Receiver post-processing: y' = (g(y) - sum of dithers) mod lattice.
pub fn receive(
    cfg: &TransformConfig,
    channel_output: &[f64],
    dithers: &[Vec<f64>],
) -> Result<Vec<f64>, PipelineError> {
    let estimate = cfg.estimator.estimate_block(channel_output);
    receive_from_estimate(cfg, &estimate, dithers)
}

fn receive_from_estimate(
    cfg: &TransformConfig,
    estimate: &[f64],
    dithers: &[Vec<f64>],
) -> Result<Vec<f64>, PipelineError> {
    let mut shifted = estimate.to_vec();
    for u in dithers {
        for (a, b) in shifted.iter_mut().zip(u) {
            *a -= b;
        }
    }
    Ok(cfg.lattice.mod_lattice(&shifted)?)
}

/// Runs `num_trials` independent passes. Trials take their randomness from
/// substreams of `seed` keyed by trial index, so results are identical
/// whether trials run serially or across worker threads; records come back
/// in trial order either way.
pub fn run_trials(
    cfg: &TransformConfig,
    assignment: &MessageAssignment,
    num_trials: usize,
    seed: u64,
) -> Result<Vec<TrialRecord>, PipelineError> {
    run_trials_with_options(cfg, assignment, num_trials, seed, true)
}

/// `run_trials` with the dithers switched off (every u_i = 0) — the
/// negative control for the noise/message independence experiments.
pub fn run_trials_with_options(
    cfg: &TransformConfig,
    assignment: &MessageAssignment,
    num_trials: usize,
    seed: u64,
    dithered: bool,
) -> Result<Vec<TrialRecord>, PipelineError> {
    let fixed = prepared_assignment(cfg, assignment)?;
    (0..num_trials)
        .into_par_iter()
        .map(|trial| run_one_trial(cfg, &fixed, trial, seed, dithered))
        .collect()
}

enum PreparedAssignment {
    List(Vec<Vec<Vec<f64>>>),
    Uniform,
}

fn prepared_assignment(
    cfg: &TransformConfig,
    assignment: &MessageAssignment,
) -> Result<PreparedAssignment, PipelineError> {
    match assignment {
        MessageAssignment::FixedList(tuples) => {
            if tuples.is_empty() {
                return Err(PipelineError::EmptyMessageList);
            }
            for (t, tuple) in tuples.iter().enumerate() {
                if tuple.len() != cfg.num_users {
                    return Err(PipelineError::MessageTupleSize {
                        tuple: t,
                        expected: cfg.num_users,
                        got: tuple.len(),
                    });
                }
                for v in tuple {
                    if v.len() != cfg.block_dimension
                        || !cfg.lattice.in_voronoi(v, VORONOI_TOL)?
                    {
                        return Err(PipelineError::NotInFundamentalRegion {
                            expected: cfg.block_dimension,
                            got: v.len(),
                        });
                    }
                }
            }
            Ok(PreparedAssignment::List(tuples.clone()))
        }
        MessageAssignment::UniformRandom => Ok(PreparedAssignment::Uniform),
        MessageAssignment::Grid { points_per_dim } => {
            let grid = message_grid(&cfg.lattice, *points_per_dim)?;
            let tuples = grid_tuples(&grid, cfg.num_users);
            Ok(PreparedAssignment::List(tuples))
        }
    }
}

/// Deterministic set of `points_per_dim`^n messages: a uniform grid over the
/// fundamental parallelepiped folded into the Voronoi region.
pub fn message_grid(lattice: &Lattice, points_per_dim: usize) -> Result<Vec<Vec<f64>>, PipelineError> {
    if points_per_dim == 0 {
        return Err(PipelineError::EmptyGrid);
    }
    let n = lattice.dimension();
    let total = points_per_dim.pow(n as u32);
    let mut points = Vec::with_capacity(total);
    for index in 0..total {
        let mut rem = index;
        let mut x = vec![0.0; n];
        for d in 0..n {
            let step = rem % points_per_dim;
            rem /= points_per_dim;
            // Fractional coordinate in [-1/2, 1/2), offset half a cell.
            let w = (step as f64 + 0.5) / points_per_dim as f64 - 0.5;
            let basis = lattice.basis_vector(d);
            for (xj, bj) in x.iter_mut().zip(&basis) {
                *xj += w * bj;
            }
        }
        points.push(lattice.mod_lattice(&x)?);
    }
    Ok(points)
}

fn grid_tuples(grid: &[Vec<f64>], num_users: usize) -> Vec<Vec<Vec<f64>>> {
    let len = grid.len();
    (0..len)
        .map(|t| (0..num_users).map(|i| grid[(t + i) % len].clone()).collect())
        .collect()
}

/// Draws `count` uniform-random message tuples from a dedicated substream —
/// a reproducible "fixed list" for grouping noise by message.
pub fn random_message_tuples(
    lattice: &Lattice,
    num_users: usize,
    count: usize,
    seed: u64,
) -> Vec<Vec<Vec<f64>>> {
    (0..count)
        .map(|t| {
            let mut rng = substream(seed, "message-tuple", t as u64);
            (0..num_users)
                .map(|_| lattice.sample_dither(&mut rng))
                .collect()
        })
        .collect()
}

fn run_one_trial(
    cfg: &TransformConfig,
    assignment: &PreparedAssignment,
    trial: usize,
    seed: u64,
    dithered: bool,
) -> Result<TrialRecord, PipelineError> {
    let mut rng = substream(seed, "trial", trial as u64);
    let n = cfg.block_dimension;

    let messages: Vec<Vec<f64>> = match assignment {
        PreparedAssignment::List(tuples) => tuples[trial % tuples.len()].clone(),
        PreparedAssignment::Uniform => (0..cfg.num_users)
            .map(|_| cfg.lattice.sample_dither(&mut rng))
            .collect(),
    };

    let dithers: Vec<Vec<f64>> = (0..cfg.num_users)
        .map(|_| {
            if dithered {
                cfg.lattice.sample_dither(&mut rng)
            } else {
                vec![0.0; n]
            }
        })
        .collect();

    let transmitted: Vec<Vec<f64>> = messages
        .iter()
        .zip(&dithers)
        .map(|(v, u)| transmit_user(cfg, v, u))
        .collect::<Result<_, _>>()?;

    let channel_output =
        cfg.channel
            .transmit_through(cfg.preprocessor(), &transmitted, &mut rng)?;
    let estimate = cfg.estimator.estimate_block(&channel_output);
    let receiver_output = receive_from_estimate(cfg, &estimate, &dithers)?;

    let mut signal_sum = vec![0.0; n];
    for x in &transmitted {
        for (s, xi) in signal_sum.iter_mut().zip(x) {
            *s += xi;
        }
    }
    let effective_noise: Vec<f64> = estimate
        .iter()
        .zip(&signal_sum)
        .map(|(e, s)| e - s)
        .collect();
    let folded_noise = cfg.lattice.mod_lattice(&effective_noise)?;

    Ok(TrialRecord {
        messages,
        dithers,
        transmitted,
        channel_output,
        estimate,
        receiver_output,
        effective_noise,
        folded_noise,
    })
}

/// Largest per-coordinate deviation between the receiver output and the
/// induced-channel form (sum of messages + effective noise) mod lattice,
/// recomputed from scratch. Zero (to float rounding) for every trial is the
/// algebraic content of the transformation.
pub fn induced_channel_residual(
    cfg: &TransformConfig,
    record: &TrialRecord,
) -> Result<f64, PipelineError> {
    let n = cfg.block_dimension;
    let mut v_sum = vec![0.0; n];
    for v in &record.messages {
        for (a, b) in v_sum.iter_mut().zip(v) {
            *a += b;
        }
    }
    let shifted: Vec<f64> = v_sum
        .iter()
        .zip(&record.effective_noise)
        .map(|(v, e)| v + e)
        .collect();
    let oracle = cfg.lattice.mod_lattice(&shifted)?;
    Ok(oracle
        .iter()
        .zip(&record.receiver_output)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Fraction of records whose induced-channel residual stays within `tol`.
pub fn identity_pass_rate(
    cfg: &TransformConfig,
    records: &[TrialRecord],
    tol: f64,
) -> Result<f64, PipelineError> {
    if records.is_empty() {
        return Err(PipelineError::NoRecords);
    }
    let mut passes = 0usize;
    for record in records {
        if induced_channel_residual(cfg, record)? <= tol {
            passes += 1;
        }
    }
    Ok(passes as f64 / records.len() as f64)
}

/// Per-user empirical transmit power (per dimension) with standard errors.
pub fn transmitted_power(records: &[TrialRecord]) -> Vec<Moments> {
    if records.is_empty() {
        return Vec::new();
    }
    let num_users = records[0].transmitted.len();
    let n = records[0].transmitted[0].len() as f64;
    let mut per_user = vec![Moments::new(); num_users];
    for record in records {
        for (m, x) in per_user.iter_mut().zip(&record.transmitted) {
            m.push(x.iter().map(|v| v * v).sum::<f64>() / n);
        }
    }
    per_user
}

/// Generates paired (s, y) training data by driving the channel with
/// dithered uniform inputs — the deployment input distribution — pooled per
/// coordinate. No estimator is involved.
pub fn generate_training_set(
    lattice: &Lattice,
    channel: &ChannelModel,
    preprocessor: &Preprocessor,
    num_trials: usize,
    seed: u64,
) -> Result<TrainingSet, PipelineError> {
    const BATCH: usize = 8_192;
    let num_users = channel.num_users();
    let num_batches = num_trials.div_ceil(BATCH);
    let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..num_batches)
        .into_par_iter()
        .map(|batch| -> Result<(Vec<f64>, Vec<f64>), PipelineError> {
            let lo = batch * BATCH;
            let hi = (lo + BATCH).min(num_trials);
            let n = lattice.dimension();
            let mut s_flat = Vec::with_capacity((hi - lo) * n);
            let mut y_flat = Vec::with_capacity((hi - lo) * n);
            for trial in lo..hi {
                let mut rng = substream(seed, "train", trial as u64);
                let xs: Vec<Vec<f64>> = (0..num_users)
                    .map(|_| {
                        let v = lattice.sample_dither(&mut rng);
                        let u = lattice.sample_dither(&mut rng);
                        let sum: Vec<f64> = v.iter().zip(&u).map(|(a, b)| a + b).collect();
                        lattice.mod_lattice(&sum)
                    })
                    .collect::<Result<_, _>>()?;
                let y = channel.transmit_through(preprocessor, &xs, &mut rng)?;
                for j in 0..n {
                    s_flat.push(xs.iter().map(|x| x[j]).sum());
                    y_flat.push(y[j]);
                }
            }
            Ok((s_flat, y_flat))
        })
        .collect::<Result<_, _>>()?;

    let mut train = TrainingSet::default();
    for (s, y) in chunks {
        for (si, yi) in s.iter().zip(&y) {
            train.push(*si, *yi);
        }
    }
    Ok(train)
}

/// A measurement run reduced to (s, y) pairs, for out-of-sample MSE.
pub fn records_to_pairs(records: &[TrialRecord]) -> TrainingSet {
    let mut set = TrainingSet::default();
    for record in records {
        let n = record.channel_output.len();
        let mut s = vec![0.0; n];
        for x in &record.transmitted {
            for (a, b) in s.iter_mut().zip(x) {
                *a += b;
            }
        }
        for (si, yi) in s.iter().zip(&record.channel_output) {
            set.push(*si, *yi);
        }
    }
    set
}

/// Effective-noise samples grouped by message tuple, plus the ungrouped
/// pools used for entropy estimation.
#[derive(Debug, Clone)]
pub struct GroupedNoise {
    /// All folded-noise samples, in trial order.
    pub pooled_folded: Vec<Vec<f64>>,
    /// All raw (unfolded) effective-noise samples, in trial order.
    pub pooled_raw: Vec<Vec<f64>>,
    /// Folded-noise samples keyed by the message tuple that produced them.
    pub groups: BTreeMap<MessageKey, Vec<Vec<f64>>>,
}

/// Bit-exact key identifying a message tuple.
pub type MessageKey = Vec<u64>;

fn message_key(messages: &[Vec<f64>]) -> MessageKey {
    messages
        .iter()
        .flat_map(|v| v.iter().map(|x| x.to_bits()))
        .collect()
}

/// Splits trial records into noise pools and per-message groups.
pub fn collect_noise(records: &[TrialRecord]) -> Result<GroupedNoise, PipelineError> {
    if records.is_empty() {
        return Err(PipelineError::NoRecords);
    }
    let mut pooled_folded = Vec::with_capacity(records.len());
    let mut pooled_raw = Vec::with_capacity(records.len());
    let mut groups: BTreeMap<MessageKey, Vec<Vec<f64>>> = BTreeMap::new();
    for record in records {
        pooled_folded.push(record.folded_noise.clone());
        pooled_raw.push(record.effective_noise.clone());
        groups
            .entry(message_key(&record.messages))
            .or_default()
            .push(record.folded_noise.clone());
    }
    Ok(GroupedNoise {
        pooled_folded,
        pooled_raw,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::NoiseLaw;
    use crate::estimator::LinearCoefficients;

    fn scalar_config(noise_power: f64, estimator: Estimator) -> TransformConfig {
        let lattice = Lattice::scalar(4.0).unwrap();
        let channel = ChannelModel::additive(2, NoiseLaw::Gaussian, noise_power).unwrap();
        TransformConfig::new(lattice, channel, Preprocessor::identity(2), estimator).unwrap()
    }

    #[test]
    fn transmit_user_zero_message_returns_dither() {
        let cfg = scalar_config(0.0, Estimator::Identity);
        let u = vec![1.25];
        assert_eq!(transmit_user(&cfg, &[0.0], &u).unwrap(), u);
    }

    #[test]
    fn transmit_user_matches_mod_arithmetic() {
        // Lattice 4Z folds into [-2, 2).
        let cfg = scalar_config(0.0, Estimator::Identity);
        assert_eq!(transmit_user(&cfg, &[1.5], &[1.0]).unwrap(), vec![2.5 - 4.0]);
        assert_eq!(transmit_user(&cfg, &[1.5], &[1.5]).unwrap(), vec![-1.0]);
        assert_eq!(transmit_user(&cfg, &[0.5], &[1.0]).unwrap(), vec![1.5]);
    }

    #[test]
    fn transmit_user_rejects_out_of_region_inputs() {
        let cfg = scalar_config(0.0, Estimator::Identity);
        assert!(matches!(
            transmit_user(&cfg, &[3.0], &[0.0]),
            Err(PipelineError::NotInFundamentalRegion { .. })
        ));
        assert!(matches!(
            transmit_user(&cfg, &[0.0, 0.0], &[0.0]),
            Err(PipelineError::NotInFundamentalRegion { .. })
        ));
    }

    #[test]
    fn receive_noiseless_identity_recovers_message_sum() {
        let cfg = scalar_config(0.0, Estimator::Identity);
        let records = run_trials(&cfg, &MessageAssignment::UniformRandom, 200, 99).unwrap();
        for r in &records {
            let expected = cfg
                .lattice()
                .mod_lattice(&[r.messages[0][0] + r.messages[1][0]])
                .unwrap();
            assert!(
                (r.receiver_output[0] - expected[0]).abs() < 1e-9,
                "y' = {}, expected {}",
                r.receiver_output[0],
                expected[0]
            );
            assert_eq!(r.folded_noise[0], 0.0);
        }
    }

    #[test]
    fn single_user_noiseless_identity_is_lossless() {
        let lattice = Lattice::scalar(4.0).unwrap();
        let channel = ChannelModel::additive(1, NoiseLaw::Gaussian, 0.0).unwrap();
        let cfg = TransformConfig::new(
            lattice,
            channel,
            Preprocessor::identity(1),
            Estimator::Identity,
        )
        .unwrap();
        let tuples = vec![vec![vec![0.75]], vec![vec![-1.5]]];
        let records =
            run_trials(&cfg, &MessageAssignment::FixedList(tuples), 10, 5).unwrap();
        for (t, r) in records.iter().enumerate() {
            let expected = if t % 2 == 0 { 0.75 } else { -1.5 };
            assert!(
                (r.receiver_output[0] - expected).abs() < 1e-9,
                "trial {t}: {} vs {expected}",
                r.receiver_output[0]
            );
        }
    }

    #[test]
    fn identity_holds_with_awgn_and_linear_estimator() {
        let est = Estimator::Linear(LinearCoefficients { alpha: 0.66, beta: 0.01 });
        let cfg = scalar_config(1.0, est);
        let records = run_trials(&cfg, &MessageAssignment::UniformRandom, 2_000, 123).unwrap();
        for r in &records {
            assert!(induced_channel_residual(&cfg, r).unwrap() <= 1e-9);
        }
        assert_eq!(identity_pass_rate(&cfg, &records, 1e-9).unwrap(), 1.0);
    }

    #[test]
    fn records_satisfy_region_invariants() {
        let cfg = scalar_config(1.0, Estimator::Identity);
        let records = run_trials(&cfg, &MessageAssignment::UniformRandom, 500, 7).unwrap();
        for r in &records {
            for x in &r.transmitted {
                assert!(cfg.lattice().in_voronoi(x, VORONOI_TOL).unwrap());
            }
            assert!(cfg.lattice().in_voronoi(&r.receiver_output, VORONOI_TOL).unwrap());
            let refold = cfg.lattice().mod_lattice(&r.effective_noise).unwrap();
            assert_eq!(refold, r.folded_noise);
        }
    }

    #[test]
    fn trials_are_seed_deterministic_and_parallel_stable() {
        let cfg = scalar_config(1.0, Estimator::Identity);
        let a = run_trials(&cfg, &MessageAssignment::UniformRandom, 400, 42).unwrap();
        let b = run_trials(&cfg, &MessageAssignment::UniformRandom, 400, 42).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.channel_output, rb.channel_output);
            assert_eq!(ra.receiver_output, rb.receiver_output);
        }
        // Single-thread pool must agree with the default pool.
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial =
            pool.install(|| run_trials(&cfg, &MessageAssignment::UniformRandom, 400, 42)).unwrap();
        for (ra, rb) in a.iter().zip(&serial) {
            assert_eq!(ra.channel_output, rb.channel_output);
        }
    }

    #[test]
    fn grid_assignment_produces_in_region_messages() {
        let lattice = Lattice::hex_a2(1.0).unwrap();
        let grid = message_grid(&lattice, 4).unwrap();
        assert_eq!(grid.len(), 16);
        for p in &grid {
            assert!(lattice.in_voronoi(p, VORONOI_TOL).unwrap());
        }
        // Grid points are distinct.
        for (i, p) in grid.iter().enumerate() {
            for q in &grid[i + 1..] {
                assert!(
                    p.iter().zip(q).any(|(a, b)| (a - b).abs() > 1e-9),
                    "duplicate grid point {p:?}"
                );
            }
        }
    }

    #[test]
    fn fixed_list_validation() {
        let cfg = scalar_config(0.0, Estimator::Identity);
        let bad_len = MessageAssignment::FixedList(vec![vec![vec![0.5]]]);
        assert!(matches!(
            run_trials(&cfg, &bad_len, 4, 0),
            Err(PipelineError::MessageTupleSize { .. })
        ));
        let out_of_region =
            MessageAssignment::FixedList(vec![vec![vec![5.0], vec![0.0]]]);
        assert!(matches!(
            run_trials(&cfg, &out_of_region, 4, 0),
            Err(PipelineError::NotInFundamentalRegion { .. })
        ));
        let empty = MessageAssignment::FixedList(Vec::new());
        assert!(matches!(
            run_trials(&cfg, &empty, 4, 0),
            Err(PipelineError::EmptyMessageList)
        ));
    }

    #[test]
    fn collect_noise_partitions_by_message() {
        let cfg = scalar_config(0.5, Estimator::Identity);
        let tuples = random_message_tuples(cfg.lattice(), 2, 10, 77);
        let records =
            run_trials(&cfg, &MessageAssignment::FixedList(tuples), 1_000, 8).unwrap();
        let noise = collect_noise(&records).unwrap();
        assert_eq!(noise.groups.len(), 10);
        let total: usize = noise.groups.values().map(|g| g.len()).sum();
        assert_eq!(total, 1_000);
        assert_eq!(noise.pooled_folded.len(), 1_000);

        // Pooled mean agrees with group means within 3 combined SE.
        let pooled = Moments::from_slice(
            &noise.pooled_folded.iter().map(|v| v[0]).collect::<Vec<_>>(),
        );
        for group in noise.groups.values() {
            let gm = Moments::from_slice(&group.iter().map(|v| v[0]).collect::<Vec<_>>());
            let se = (pooled.std_error().powi(2) + gm.std_error().powi(2)).sqrt();
            assert!(
                (pooled.mean() - gm.mean()).abs() <= 3.0 * se,
                "group mean {} vs pooled {}",
                gm.mean(),
                pooled.mean()
            );
        }
    }

    #[test]
    fn transmitted_power_meets_constraint_for_fixed_message() {
        // E[|X|^2]/n = P for any fixed message, by dither uniformity.
        let lattice = Lattice::scalar(1.0).unwrap().scale_to_power(1.0).unwrap();
        let channel = ChannelModel::additive(2, NoiseLaw::Gaussian, 1.0).unwrap();
        let cfg = TransformConfig::new(
            lattice,
            channel,
            Preprocessor::identity(2),
            Estimator::Identity,
        )
        .unwrap();
        let v = vec![vec![vec![1.2], vec![-0.7]]];
        let records =
            run_trials(&cfg, &MessageAssignment::FixedList(v), 40_000, 11).unwrap();
        for m in transmitted_power(&records) {
            assert!(
                (m.mean() - 1.0).abs() <= 3.0 * m.std_error(),
                "power {} +- {}",
                m.mean(),
                m.std_error()
            );
        }
    }

    #[test]
    fn three_user_pipeline_satisfies_the_identity() {
        let lattice = Lattice::scalar(1.0).unwrap().scale_to_power(1.0).unwrap();
        let channel = ChannelModel::cubic(3, NoiseLaw::Gaussian, 0.3, 0.1).unwrap();
        let cfg = TransformConfig::new(
            lattice,
            channel,
            Preprocessor::identity(3),
            Estimator::Linear(LinearCoefficients { alpha: 0.8, beta: 0.0 }),
        )
        .unwrap();
        let records = run_trials(&cfg, &MessageAssignment::UniformRandom, 3_000, 31).unwrap();
        assert_eq!(records[0].messages.len(), 3);
        assert_eq!(identity_pass_rate(&cfg, &records, 1e-9).unwrap(), 1.0);
    }

    #[test]
    fn undithered_run_uses_messages_directly() {
        let cfg = scalar_config(0.1, Estimator::Identity);
        let tuples = vec![vec![vec![1.0], vec![-0.5]]];
        let records = run_trials_with_options(
            &cfg,
            &MessageAssignment::FixedList(tuples),
            50,
            3,
            false,
        )
        .unwrap();
        for r in &records {
            assert_eq!(r.transmitted[0], vec![1.0]);
            assert_eq!(r.transmitted[1], vec![-0.5]);
            assert_eq!(r.dithers[0], vec![0.0]);
        }
    }
}

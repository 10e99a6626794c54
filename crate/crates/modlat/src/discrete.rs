//! Exact finite analogue of the transformation over Z_q: dithers are uniform
//! on Z_q, the modulo operation is integer, and every distribution is
//! computable by exhaustive enumeration. The message-independence of the
//! effective noise holds exactly here, which makes this module the ground
//! truth for the continuous pipeline's statistical tests.

use rand::Rng;
use thiserror::Error;

use crate::seeding::substream;
use crate::stats::total_variation;

#[derive(Debug, Error, PartialEq)]
pub enum DiscreteError {
    #[error("modulus must be in [5, 64], got {0}")]
    InvalidModulus(u32),
    #[error("channel table has {got} rows, expected q^K = {expected}")]
    WrongTableSize { expected: usize, got: usize },
    #[error("conditional distribution in row {row} sums to {sum}, not 1")]
    RowNotNormalized { row: usize, sum: f64 },
    #[error("row {row} contains a negative or non-finite probability")]
    InvalidProbability { row: usize },
    #[error("estimator maps {got} outputs, expected {expected}")]
    WrongEstimatorSize { expected: usize, got: usize },
    #[error("estimator value {value} is outside Z_{q}")]
    EstimatorOutOfRange { value: u32, q: u32 },
    #[error("message tuple has {got} entries, expected {expected}")]
    WrongMessageCount { expected: usize, got: usize },
    #[error("message {0} is outside Z_{1}")]
    MessageOutOfRange(u32, u32),
    #[error("simulation needs at least {need} trials, got {got}")]
    TooFewTrials { need: usize, got: usize },
    #[error("system needs at least one user")]
    NoUsers,
}

/// A K-user system over Z_q: an explicit channel law and a receiver-side
/// estimator over a finite output alphabet.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    modulus: u32,
    num_users: usize,
    /// Row x = joint input index (mixed radix, user 0 least significant);
    /// column y = output symbol. Rows sum to 1.
    channel: Vec<Vec<f64>>,
    /// Cumulative rows for inverse-CDF sampling.
    channel_cdf: Vec<Vec<f64>>,
    /// Map from output symbol to an element of Z_q.
    estimator: Vec<u32>,
}

impl DiscreteSystem {
    pub fn new(
        modulus: u32,
        num_users: usize,
        channel: Vec<Vec<f64>>,
        estimator: Vec<u32>,
    ) -> Result<Self, DiscreteError> {
        if !(5..=64).contains(&modulus) {
            return Err(DiscreteError::InvalidModulus(modulus));
        }
        if num_users == 0 {
            return Err(DiscreteError::NoUsers);
        }
        let expected_rows = (modulus as usize).pow(num_users as u32);
        if channel.len() != expected_rows {
            return Err(DiscreteError::WrongTableSize {
                expected: expected_rows,
                got: channel.len(),
            });
        }
        let output_size = channel.first().map(|r| r.len()).unwrap_or(0);
        for (row, dist) in channel.iter().enumerate() {
            if dist.len() != output_size {
                return Err(DiscreteError::WrongTableSize {
                    expected: output_size,
                    got: dist.len(),
                });
            }
            if dist.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(DiscreteError::InvalidProbability { row });
            }
            let sum: f64 = dist.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(DiscreteError::RowNotNormalized { row, sum });
            }
        }
        if estimator.len() != output_size {
            return Err(DiscreteError::WrongEstimatorSize {
                expected: output_size,
                got: estimator.len(),
            });
        }
        if let Some(&bad) = estimator.iter().find(|&&v| v >= modulus) {
            return Err(DiscreteError::EstimatorOutOfRange { value: bad, q: modulus });
        }
        let channel_cdf = channel
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            modulus,
            num_users,
            channel,
            channel_cdf,
            estimator,
        })
    }

    /// Noiseless adder y = (sum x_i) mod q with the identity estimator.
    pub fn noiseless_adder(modulus: u32, num_users: usize) -> Result<Self, DiscreteError> {
        Self::adder_with_symmetric_noise(modulus, num_users, 0.0)
    }

    /// Adder channel whose output is shifted by +-1 with probability
    /// `flip_prob` each; identity estimator.
    pub fn adder_with_symmetric_noise(
        modulus: u32,
        num_users: usize,
        flip_prob: f64,
    ) -> Result<Self, DiscreteError> {
        let q = modulus as usize;
        let rows = q.pow(num_users as u32);
        let mut channel = vec![vec![0.0; q]; rows];
        for (x, row) in channel.iter_mut().enumerate() {
            let s = joint_input_sum(x as u32, modulus, num_users);
            row[s as usize] += 1.0 - 2.0 * flip_prob;
            row[(s as usize + 1) % q] += flip_prob;
            row[(s as usize + q - 1) % q] += flip_prob;
        }
        let estimator: Vec<u32> = (0..modulus).collect();
        Self::new(modulus, num_users, channel, estimator)
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn output_size(&self) -> usize {
        self.estimator.len()
    }

    pub fn estimator(&self) -> &[u32] {
        &self.estimator
    }

    fn check_messages(&self, messages: &[u32]) -> Result<(), DiscreteError> {
        if messages.len() != self.num_users {
            return Err(DiscreteError::WrongMessageCount {
                expected: self.num_users,
                got: messages.len(),
            });
        }
        if let Some(&bad) = messages.iter().find(|&&v| v >= self.modulus) {
            return Err(DiscreteError::MessageOutOfRange(bad, self.modulus));
        }
        Ok(())
    }

    /// Exact law of the effective noise delta = (g(y) - sum u_i - sum v_i)
    /// mod q, by exhaustive enumeration over all dither tuples (uniform on
    /// Z_q^K) and channel outputs.
    pub fn exact_noise_distribution(&self, messages: &[u32]) -> Result<Vec<f64>, DiscreteError> {
        self.check_messages(messages)?;
        let q = self.modulus as i64;
        let dither_tuples = (self.modulus as usize).pow(self.num_users as u32);
        let weight = 1.0 / dither_tuples as f64;
        let message_sum: i64 = messages.iter().map(|&v| v as i64).sum();
        let mut law = vec![0.0f64; self.modulus as usize];
        for tuple in 0..dither_tuples {
            let dithers = decode_tuple(tuple as u32, self.modulus, self.num_users);
            let inputs: Vec<u32> = messages
                .iter()
                .zip(&dithers)
                .map(|(&v, &u)| (v + u) % self.modulus)
                .collect();
            let row = joint_input_index(&inputs, self.modulus);
            let dither_sum: i64 = dithers.iter().map(|&u| u as i64).sum();
            for (y, &p) in self.channel[row].iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                // delta = g(y) - sum u - sum v (mod q)
                let delta =
                    (self.estimator[y] as i64 - dither_sum - message_sum).rem_euclid(q);
                law[delta as usize] += weight * p;
            }
        }
        Ok(law)
    }

    /// Monte Carlo estimate of the same law.
    pub fn simulate(
        &self,
        messages: &[u32],
        num_trials: usize,
        seed: u64,
    ) -> Result<Vec<f64>, DiscreteError> {
        const MIN_TRIALS: usize = 10_000;
        if num_trials < MIN_TRIALS {
            return Err(DiscreteError::TooFewTrials {
                need: MIN_TRIALS,
                got: num_trials,
            });
        }
        self.check_messages(messages)?;
        let q = self.modulus as i64;
        let message_sum: i64 = messages.iter().map(|&v| v as i64).sum();
        let mut counts = vec![0u64; self.modulus as usize];
        let mut rng = substream(seed, "discrete-sim", 0);
        for _ in 0..num_trials {
            let dithers: Vec<u32> =
                (0..self.num_users).map(|_| rng.random_range(0..self.modulus)).collect();
            let inputs: Vec<u32> = messages
                .iter()
                .zip(&dithers)
                .map(|(&v, &u)| (v + u) % self.modulus)
                .collect();
            let row = joint_input_index(&inputs, self.modulus);
            let r: f64 = rng.random();
            let y = self.channel_cdf[row].partition_point(|&c| c < r).min(self.output_size() - 1);
            let dither_sum: i64 = dithers.iter().map(|&u| u as i64).sum();
            let delta =
                (self.estimator[y] as i64 - dither_sum - message_sum).rem_euclid(q);
            counts[delta as usize] += 1;
        }
        Ok(counts.iter().map(|&c| c as f64 / num_trials as f64).collect())
    }

    /// Largest pairwise total-variation distance of the exact noise law over
    /// all q^K message tuples. Exactly zero (to float rounding): the noise
    /// law does not depend on the messages.
    pub fn max_pairwise_tv(&self) -> Result<f64, DiscreteError> {
        let tuples = (self.modulus as usize).pow(self.num_users as u32);
        let laws: Vec<Vec<f64>> = (0..tuples)
            .map(|t| {
                let messages = decode_tuple(t as u32, self.modulus, self.num_users);
                self.exact_noise_distribution(&messages)
            })
            .collect::<Result<_, _>>()?;
        let mut worst = 0.0f64;
        for (i, a) in laws.iter().enumerate() {
            for b in &laws[i + 1..] {
                worst = worst.max(total_variation(a, b));
            }
        }
        Ok(worst)
    }
}

fn joint_input_index(inputs: &[u32], modulus: u32) -> usize {
    let mut index = 0usize;
    for &x in inputs.iter().rev() {
        index = index * modulus as usize + x as usize;
    }
    index
}

fn decode_tuple(mut index: u32, modulus: u32, num_users: usize) -> Vec<u32> {
    (0..num_users)
        .map(|_| {
            let v = index % modulus;
            index /= modulus;
            v
        })
        .collect()
}

fn joint_input_sum(index: u32, modulus: u32, num_users: usize) -> u32 {
    decode_tuple(index, modulus, num_users)
        .iter()
        .fold(0, |acc, &x| (acc + x) % modulus)
}

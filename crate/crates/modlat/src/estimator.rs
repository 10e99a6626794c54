//! Estimators of the input sum S from the channel output Y: the identity,
//! the empirical linear MMSE fit, and a quantile-binned conditional-mean
//! approximation of E[S|Y]. All are deterministic scalar maps applied
//! coordinate-wise once fitted.

use thiserror::Error;

use crate::stats::{BivariateMoments, Moments};

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("training set needs at least {need} samples, got {got}")]
    TooFewTrainingPoints { need: usize, got: usize },
    #[error("training pairs have mismatched lengths ({0} vs {1})")]
    PairLengthMismatch(usize, usize),
    #[error("training data contains a non-finite value")]
    NonFiniteTrainingData,
    #[error("output variance is degenerate (constant-output channel)")]
    DegenerateOutputVariance,
    #[error("bin count must be at least {min}, got {got}")]
    InvalidBinCount { min: usize, got: usize },
    #[error("too few training points per bin: {per_bin} < {min} (reduce bins or add data)")]
    TooFewPerBin { per_bin: usize, min: usize },
}

/// Paired (s, y) samples for fitting and evaluation, pooled per coordinate:
/// s is the sum of the transmitted signals, y the channel output.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    s: Vec<f64>,
    y: Vec<f64>,
}

impl TrainingSet {
    pub fn new(s: Vec<f64>, y: Vec<f64>) -> Result<Self, EstimatorError> {
        if s.len() != y.len() {
            return Err(EstimatorError::PairLengthMismatch(s.len(), y.len()));
        }
        if s.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(EstimatorError::NonFiniteTrainingData);
        }
        Ok(Self { s, y })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn sums(&self) -> &[f64] {
        &self.s
    }

    pub fn outputs(&self) -> &[f64] {
        &self.y
    }

    pub fn push(&mut self, s: f64, y: f64) {
        self.s.push(s);
        self.y.push(y);
    }
}

/// Coefficients of the affine map g(y) = alpha*y + beta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearCoefficients {
    pub alpha: f64,
    pub beta: f64,
}

impl LinearCoefficients {
    fn apply(&self, y: f64) -> f64 {
        self.alpha * y + self.beta
    }
}

/// Quantile-binned conditional-mean regression with a linear fallback
/// outside the observed output range.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedRegression {
    /// Interior bin edges, strictly increasing; bin i covers
    /// [edge_{i-1}, edge_i) with the outermost bins bounded by the range.
    edges: Vec<f64>,
    /// Conditional mean of s per bin; len = edges.len() + 1.
    means: Vec<f64>,
    /// Observed output range during training.
    y_min: f64,
    y_max: f64,
    fallback: LinearCoefficients,
}

impl BinnedRegression {
    pub fn num_bins(&self) -> usize {
        self.means.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn bin_means(&self) -> &[f64] {
        &self.means
    }

    pub fn training_range(&self) -> (f64, f64) {
        (self.y_min, self.y_max)
    }

    pub fn fallback(&self) -> LinearCoefficients {
        self.fallback
    }

    fn apply(&self, y: f64) -> f64 {
        if y < self.y_min || y > self.y_max {
            return self.fallback.apply(y);
        }
        let bin = self.edges.partition_point(|&e| e <= y);
        self.means[bin]
    }
}

/// A fitted estimator of S from Y.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    /// g(y) = y.
    Identity,
    /// Empirical linear MMSE fit.
    Linear(LinearCoefficients),
    /// Quantile-binned approximation of the conditional mean E[S|Y].
    BinnedConditionalMean(BinnedRegression),
}

impl Estimator {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Estimator::Identity => "identity",
            Estimator::Linear(_) => "linear",
            Estimator::BinnedConditionalMean(_) => "binned_conditional_mean",
        }
    }

    /// Plain-text table of the fitted map: linear coefficients, and for the
    /// binned estimator one `edge,mean` row per bin boundary.
    pub fn to_plain_table(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "kind = {}", self.kind_name());
        match self {
            Estimator::Identity => {}
            Estimator::Linear(c) => {
                let _ = writeln!(out, "alpha = {}", c.alpha);
                let _ = writeln!(out, "beta = {}", c.beta);
            }
            Estimator::BinnedConditionalMean(b) => {
                let _ = writeln!(out, "fallback_alpha = {}", b.fallback.alpha);
                let _ = writeln!(out, "fallback_beta = {}", b.fallback.beta);
                let _ = writeln!(out, "y_min = {}", b.y_min);
                let _ = writeln!(out, "y_max = {}", b.y_max);
                let _ = writeln!(out, "bin_lo,bin_hi,mean");
                let mut bounds = vec![b.y_min];
                bounds.extend_from_slice(&b.edges);
                bounds.push(b.y_max);
                for (i, mean) in b.means.iter().enumerate() {
                    let _ = writeln!(out, "{},{},{}", bounds[i], bounds[i + 1], mean);
                }
            }
        }
        out
    }

    /// Applies the scalar map to one output value.
    pub fn estimate(&self, y: f64) -> f64 {
        match self {
            Estimator::Identity => y,
            Estimator::Linear(c) => c.apply(y),
            Estimator::BinnedConditionalMean(b) => b.apply(y),
        }
    }

    /// Applies the map coordinate-wise to a block.
    pub fn estimate_block(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|&v| self.estimate(v)).collect()
    }
}

/// Minimum training-set size for moment-based fits.
pub const MIN_LINEAR_TRAINING: usize = 10_000;
/// Minimum bin count for the binned conditional mean.
pub const MIN_BINS: usize = 16;
/// Default number of quantile bins.
pub const DEFAULT_BINS: usize = 64;
/// Default minimum number of training points per bin.
pub const DEFAULT_MIN_PER_BIN: usize = 100;

/// Fits the affine least-squares estimator: alpha = Cov(S,Y)/Var(Y),
/// beta = E[S] - alpha*E[Y], all moments empirical.
pub fn fit_linear_mmse(train: &TrainingSet) -> Result<Estimator, EstimatorError> {
    if train.len() < MIN_LINEAR_TRAINING {
        return Err(EstimatorError::TooFewTrainingPoints {
            need: MIN_LINEAR_TRAINING,
            got: train.len(),
        });
    }
    let mut m = BivariateMoments::new();
    for (&s, &y) in train.sums().iter().zip(train.outputs()) {
        m.push(y, s);
    }
    let var_y = m.variance_x();
    // Relative threshold: a channel whose output barely moves cannot be
    // regressed against.
    if var_y <= 1e-12 * (1.0 + m.mean_x() * m.mean_x()) {
        return Err(EstimatorError::DegenerateOutputVariance);
    }
    let alpha = m.covariance() / var_y;
    let beta = m.mean_y() - alpha * m.mean_x();
    Ok(Estimator::Linear(LinearCoefficients { alpha, beta }))
}

/// Fits the equal-count binned conditional mean of S given Y.
///
/// Bin edges are empirical quantiles of y, so every bin holds roughly
/// `len/num_bins` training points; duplicate edges (atoms in y) merge bins.
/// Outside the training range the estimator falls back to the linear fit.
pub fn fit_binned_conditional_mean(
    train: &TrainingSet,
    num_bins: usize,
    min_per_bin: usize,
) -> Result<Estimator, EstimatorError> {
    if num_bins < MIN_BINS {
        return Err(EstimatorError::InvalidBinCount {
            min: MIN_BINS,
            got: num_bins,
        });
    }
    let m = train.len();
    if m < MIN_LINEAR_TRAINING {
        return Err(EstimatorError::TooFewTrainingPoints {
            need: MIN_LINEAR_TRAINING,
            got: m,
        });
    }
    if m / num_bins < min_per_bin {
        return Err(EstimatorError::TooFewPerBin {
            per_bin: m / num_bins,
            min: min_per_bin,
        });
    }
    let fallback = match fit_linear_mmse(train)? {
        Estimator::Linear(c) => c,
        _ => unreachable!("fit_linear_mmse returns Linear"),
    };

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        train.outputs()[a]
            .partial_cmp(&train.outputs()[b])
            .expect("finite training data")
    });

    // Quantile edges at ranks k*m/num_bins; duplicates collapse so each bin
    // is a non-empty half-open interval [edge_{k-1}, edge_k).
    let mut edges: Vec<f64> = Vec::with_capacity(num_bins - 1);
    for k in 1..num_bins {
        let rank = k * m / num_bins;
        let e = train.outputs()[order[rank]];
        if edges.last().is_none_or(|&last| e > last) {
            edges.push(e);
        }
    }

    let mut means = vec![0.0f64; edges.len() + 1];
    let mut counts = vec![0usize; edges.len() + 1];
    let mut sums = vec![0.0f64; edges.len() + 1];
    for &i in &order {
        let y = train.outputs()[i];
        let bin = edges.partition_point(|&e| e <= y);
        sums[bin] += train.sums()[i];
        counts[bin] += 1;
    }
    for (mean, (&sum, &count)) in means.iter_mut().zip(sums.iter().zip(&counts)) {
        debug_assert!(count > 0, "quantile bins are non-empty by construction");
        *mean = sum / count as f64;
    }

    let y_min = train.outputs()[order[0]];
    let y_max = train.outputs()[order[m - 1]];
    Ok(Estimator::BinnedConditionalMean(BinnedRegression {
        edges,
        means,
        y_min,
        y_max,
        fallback,
    }))
}

/// Out-of-sample mean squared error with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct MseEstimate {
    pub mse: f64,
    pub std_error: f64,
    pub num_samples: usize,
}

/// Empirical mean of (g(y) - s)^2 over a test set (which must be disjoint
/// from the data the estimator was fitted on for the result to be an
/// out-of-sample error).
pub fn evaluate_mse(est: &Estimator, test: &TrainingSet) -> MseEstimate {
    let mut m = Moments::new();
    for (&s, &y) in test.sums().iter().zip(test.outputs()) {
        let err = est.estimate(y) - s;
        m.push(err * err);
    }
    MseEstimate {
        mse: m.mean(),
        std_error: m.std_error(),
        num_samples: test.len(),
    }
}

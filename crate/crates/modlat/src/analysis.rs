//! Effective-noise analysis: plug-in histogram entropy over the fundamental
//! region, the uniform-input achievable rate of the induced modulo channel,
//! message-independence testing, and estimator comparisons.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::estimator::{evaluate_mse, Estimator, MseEstimate};
use crate::lattice::Lattice;
use crate::pipeline::{
    collect_noise, records_to_pairs, run_trials, MessageAssignment, MessageKey, PipelineError,
    TransformConfig,
};
use crate::stats::{chi_square_two_sample, ks_two_sample, pairwise_sum, StatsError, TestOutcome};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("empty sample set")]
    EmptySamples,
    #[error("sample {index} lies outside the binning region")]
    SampleOutsideRegion { index: usize },
    #[error("sample {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("bins per dimension must be at least 2, got {0}")]
    TooFewBins(usize),
    #[error("binning would allocate {cells} cells; limit is {limit}")]
    TooManyCells { cells: usize, limit: usize },
    #[error("independence testing needs at least 2 groups with {min} samples each; {got} qualify")]
    TooFewGroups { min: usize, got: usize },
    #[error("estimator comparison needs matching configurations: {0}")]
    MismatchedConfigs(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

const MAX_CELLS: usize = 1 << 24;

/// Equal-width product binning of a box, with counts.
#[derive(Debug, Clone)]
pub struct ProductHistogram {
    lo: Vec<f64>,
    hi: Vec<f64>,
    bins_per_dim: usize,
    counts: Vec<u64>,
    total: u64,
}

impl ProductHistogram {
    /// Bins `samples` over the box `[lo, hi]^n`. Samples outside the box by
    /// more than a relative tolerance are an error; boundary hits clamp into
    /// the edge bins.
    pub fn from_samples(
        lo: &[f64],
        hi: &[f64],
        bins_per_dim: usize,
        samples: &[Vec<f64>],
    ) -> Result<Self, AnalysisError> {
        if samples.is_empty() {
            return Err(AnalysisError::EmptySamples);
        }
        if bins_per_dim < 2 {
            return Err(AnalysisError::TooFewBins(bins_per_dim));
        }
        let n = lo.len();
        let cells = bins_per_dim
            .checked_pow(n as u32)
            .filter(|&c| c <= MAX_CELLS)
            .ok_or(AnalysisError::TooManyCells {
                cells: usize::MAX,
                limit: MAX_CELLS,
            })?;
        let mut counts = vec![0u64; cells];
        let tol: Vec<f64> = lo
            .iter()
            .zip(hi)
            .map(|(a, b)| 1e-9 * (b - a).abs().max(1.0))
            .collect();
        for (index, x) in samples.iter().enumerate() {
            if x.len() != n {
                return Err(AnalysisError::DimensionMismatch {
                    index,
                    expected: n,
                    got: x.len(),
                });
            }
            let mut cell = 0usize;
            for d in 0..n {
                if x[d] < lo[d] - tol[d] || x[d] > hi[d] + tol[d] {
                    return Err(AnalysisError::SampleOutsideRegion { index });
                }
                let w = (hi[d] - lo[d]) / bins_per_dim as f64;
                let b = (((x[d] - lo[d]) / w) as usize).min(bins_per_dim - 1);
                cell = cell * bins_per_dim + b;
            }
            counts[cell] += 1;
        }
        Ok(Self {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            bins_per_dim,
            counts,
            total: samples.len() as u64,
        })
    }

    pub fn dimensions(&self) -> usize {
        self.lo.len()
    }

    pub fn bins_per_dim(&self) -> usize {
        self.bins_per_dim
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Cell volume (all cells are congruent).
    pub fn cell_volume(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) / self.bins_per_dim as f64)
            .product()
    }

    /// Cell probabilities; sums to 1 exactly up to float rounding.
    pub fn probabilities(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.total as f64)
            .collect()
    }

    /// Marginal counts along one coordinate.
    pub fn marginal(&self, dim: usize) -> Vec<u64> {
        let n = self.dimensions();
        let b = self.bins_per_dim;
        let mut out = vec![0u64; b];
        for (cell, &c) in self.counts.iter().enumerate() {
            let mut rem = cell;
            let mut idx = 0;
            for d in (0..n).rev() {
                let this = rem % b;
                rem /= b;
                if d == dim {
                    idx = this;
                }
            }
            out[idx] += c;
        }
        out
    }

    /// Bin edges along one coordinate.
    pub fn edges(&self, dim: usize) -> Vec<f64> {
        let w = (self.hi[dim] - self.lo[dim]) / self.bins_per_dim as f64;
        (0..=self.bins_per_dim)
            .map(|i| self.lo[dim] + w * i as f64)
            .collect()
    }
}

/// Plug-in differential entropy estimate, in nats per dimension.
#[derive(Debug, Clone, Copy)]
pub struct EntropyEstimate {
    pub nats_per_dim: f64,
    /// Delta-method standard error of the plug-in estimate.
    pub std_error: f64,
    /// |H(B bins) - H(B/2 bins)| per dimension, a binning-sensitivity proxy.
    pub sensitivity_delta: f64,
    pub bins_per_dim: usize,
    pub num_samples: usize,
    /// Set when a single cell holds at least half the mass: the histogram
    /// resolution floor dominates the estimate.
    pub resolution_limited: bool,
}

fn plug_in_entropy(hist: &ProductHistogram) -> (f64, f64, bool) {
    let n = hist.dimensions() as f64;
    let total = hist.total() as f64;
    let log_w = hist.cell_volume().ln();
    let mut terms = Vec::new();
    let mut sq_terms = Vec::new();
    let mut max_p = 0.0f64;
    for &c in hist.counts() {
        if c == 0 {
            continue;
        }
        let p = c as f64 / total;
        max_p = max_p.max(p);
        let log_density = p.ln() - log_w;
        terms.push(-p * log_density);
        sq_terms.push(p * log_density * log_density);
    }
    let h = pairwise_sum(&terms);
    let second = pairwise_sum(&sq_terms);
    let var = (second - h * h).max(0.0);
    let se = (var / total).sqrt() / n;
    (h / n, se, max_p >= 0.5)
}

fn entropy_from_box(
    lo: &[f64],
    hi: &[f64],
    bins_per_dim: usize,
    samples: &[Vec<f64>],
) -> Result<EntropyEstimate, AnalysisError> {
    let hist = ProductHistogram::from_samples(lo, hi, bins_per_dim, samples)?;
    let (h, se, limited) = plug_in_entropy(&hist);
    let coarse = ProductHistogram::from_samples(lo, hi, (bins_per_dim / 2).max(2), samples)?;
    let (h_coarse, _, _) = plug_in_entropy(&coarse);
    Ok(EntropyEstimate {
        nats_per_dim: h,
        std_error: se,
        sensitivity_delta: (h - h_coarse).abs(),
        bins_per_dim,
        num_samples: samples.len(),
        resolution_limited: limited,
    })
}

/// Default bins per dimension: 256 for scalar data, otherwise enough that
/// cells keep a healthy expected count.
pub fn default_bins_per_dim(dimension: usize, num_samples: usize) -> usize {
    if dimension == 1 {
        return 256;
    }
    let target = (num_samples as f64 / 50.0).powf(1.0 / dimension as f64).floor() as usize;
    target.clamp(2, 64)
}

/// Histogram differential entropy of folded-noise samples over the
/// fundamental region's bounding box.
///
/// For scalar lattices the box is exactly the region, so uniform samples
/// calibrate to (1/n) log volume. For n > 1 the box circumscribes the
/// region; cells straddling the region boundary bias a uniform input
/// slightly upward, which the sensitivity delta tracks.
pub fn estimate_entropy_folded(
    samples: &[Vec<f64>],
    lattice: &Lattice,
    bins_per_dim: usize,
) -> Result<EntropyEstimate, AnalysisError> {
    let hw = lattice.coordinate_halfwidth();
    let n = lattice.dimension();
    let lo = vec![-hw; n];
    let hi = vec![hw; n];
    entropy_from_box(&lo, &hi, bins_per_dim, samples)
}

/// Histogram differential entropy of unfolded samples over their own
/// bounding box.
pub fn estimate_entropy_raw(
    samples: &[Vec<f64>],
    bins_per_dim: usize,
) -> Result<EntropyEstimate, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::EmptySamples);
    }
    let n = samples[0].len();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for x in samples {
        for d in 0..n.min(x.len()) {
            lo[d] = lo[d].min(x[d]);
            hi[d] = hi[d].max(x[d]);
        }
    }
    for d in 0..n {
        if hi[d] <= lo[d] {
            // Degenerate coordinate: widen so binning stays well-defined.
            let pad = lo[d].abs().max(1.0) * 1e-9;
            lo[d] -= pad;
            hi[d] += pad;
        }
    }
    entropy_from_box(&lo, &hi, bins_per_dim, samples)
}

/// Uniform-input achievable rate of the induced modulo channel, in nats per
/// dimension.
#[derive(Debug, Clone, Copy)]
pub struct RateEstimate {
    pub nats_per_dim: f64,
    /// Combined uncertainty: 3 statistical SEs plus the binning sensitivity.
    pub uncertainty: f64,
    /// Set when the raw estimate was negative and clamped to zero.
    pub clamped: bool,
}

/// rate = (1/n) log volume - folded-noise entropy, clamped below at zero.
pub fn achievable_rate(entropy_folded: &EntropyEstimate, lattice: &Lattice) -> RateEstimate {
    let n = lattice.dimension() as f64;
    let uniform = lattice.volume().ln() / n;
    let raw = uniform - entropy_folded.nats_per_dim;
    RateEstimate {
        nats_per_dim: raw.max(0.0),
        uncertainty: 3.0 * entropy_folded.std_error + entropy_folded.sensitivity_delta,
        clamped: raw < 0.0,
    }
}

/// Summary of pairwise two-sample tests between noise groups.
#[derive(Debug, Clone)]
pub struct IndependenceReport {
    pub num_groups: usize,
    pub num_pairs: usize,
    pub accepted: usize,
    pub acceptance_fraction: f64,
    pub significance: f64,
    /// Largest test statistic seen across pairs.
    pub worst_statistic: f64,
    /// Smallest p-value seen across pairs.
    pub worst_p_value: f64,
    /// "ks" for scalar noise, "chi_square" for vector noise.
    pub test_kind: &'static str,
}

/// Minimum per-group sample count for the independence tests.
pub const MIN_GROUP_SAMPLES: usize = 1_000;

/// Pairwise two-sample tests of the folded-noise groups: KS for scalar
/// lattices, chi-square on a shared product binning otherwise. Noise that is
/// independent of the messages accepts in about `1 - significance` of pairs.
pub fn independence_report(
    groups: &BTreeMap<MessageKey, Vec<Vec<f64>>>,
    lattice: &Lattice,
    significance: f64,
) -> Result<IndependenceReport, AnalysisError> {
    let eligible: Vec<&Vec<Vec<f64>>> = groups
        .values()
        .filter(|g| g.len() >= MIN_GROUP_SAMPLES)
        .collect();
    if eligible.len() < 2 {
        return Err(AnalysisError::TooFewGroups {
            min: MIN_GROUP_SAMPLES,
            got: eligible.len(),
        });
    }

    let n = lattice.dimension();
    let scalar = n == 1;
    let hw = lattice.coordinate_halfwidth();
    let bins = if scalar {
        0
    } else {
        // Keep expected pooled counts per cell comfortably high.
        let per_group = eligible.iter().map(|g| g.len()).min().unwrap_or(0);
        default_bins_per_dim(n, 2 * per_group)
    };

    let mut num_pairs = 0usize;
    let mut accepted = 0usize;
    let mut worst_statistic = 0.0f64;
    let mut worst_p = 1.0f64;
    let outcome_of = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Result<TestOutcome, AnalysisError> {
        if scalar {
            let xs: Vec<f64> = a.iter().map(|v| v[0]).collect();
            let ys: Vec<f64> = b.iter().map(|v| v[0]).collect();
            Ok(ks_two_sample(&xs, &ys)?)
        } else {
            let lo = vec![-hw; n];
            let hi = vec![hw; n];
            let ha = ProductHistogram::from_samples(&lo, &hi, bins, a)?;
            let hb = ProductHistogram::from_samples(&lo, &hi, bins, b)?;
            Ok(chi_square_two_sample(ha.counts(), hb.counts(), 10)?)
        }
    };
    for (i, a) in eligible.iter().enumerate() {
        for b in &eligible[i + 1..] {
            let outcome = outcome_of(a, b)?;
            num_pairs += 1;
            if outcome.accepts(significance) {
                accepted += 1;
            }
            worst_statistic = worst_statistic.max(outcome.statistic);
            worst_p = worst_p.min(outcome.p_value);
        }
    }
    Ok(IndependenceReport {
        num_groups: eligible.len(),
        num_pairs,
        accepted,
        acceptance_fraction: accepted as f64 / num_pairs as f64,
        significance,
        worst_statistic,
        worst_p_value: worst_p,
        test_kind: if scalar { "ks" } else { "chi_square" },
    })
}

/// Empirical profile of the induced channel's effective noise: the folded
/// and raw sample pools with their entropies, the estimation MSE, and the
/// uniform-input achievable rate.
///
/// The folded entropy of any distribution on the fundamental region is at
/// most the per-dimension log volume (uniform maximizes it); the plug-in
/// estimate can exceed the bound only through boundary-cell bias on
/// non-box regions, in which case the rate clamps at zero.
#[derive(Debug, Clone)]
pub struct NoiseProfile {
    /// Folded-noise samples, in trial order.
    pub folded: Vec<Vec<f64>>,
    /// Raw (unfolded) effective-noise samples, in trial order.
    pub raw: Vec<Vec<f64>>,
    pub entropy_folded: EntropyEstimate,
    pub entropy_raw: EntropyEstimate,
    pub mse: MseEstimate,
    pub rate: RateEstimate,
}

impl NoiseProfile {
    /// Builds the profile from noise sample pools: histogram entropies over
    /// the fundamental region (folded) and the data range (raw), plus the
    /// rate implied by the folded entropy.
    pub fn build(
        lattice: &Lattice,
        folded: Vec<Vec<f64>>,
        raw: Vec<Vec<f64>>,
        mse: MseEstimate,
        bins_per_dim: usize,
    ) -> Result<Self, AnalysisError> {
        let entropy_folded = estimate_entropy_folded(&folded, lattice, bins_per_dim)?;
        let entropy_raw = estimate_entropy_raw(&raw, bins_per_dim)?;
        let rate = achievable_rate(&entropy_folded, lattice);
        Ok(Self {
            folded,
            raw,
            entropy_folded,
            entropy_raw,
            mse,
            rate,
        })
    }
}

/// One estimator's end-to-end figure of merit on a shared experiment.
#[derive(Debug, Clone)]
pub struct EstimatorReport {
    pub name: String,
    pub mse: MseEstimate,
    pub entropy_folded: EntropyEstimate,
    pub entropy_raw: EntropyEstimate,
    pub rate: RateEstimate,
}

impl EstimatorReport {
    fn from_profile(name: String, profile: &NoiseProfile) -> Self {
        Self {
            name,
            mse: profile.mse,
            entropy_folded: profile.entropy_folded,
            entropy_raw: profile.entropy_raw,
            rate: profile.rate,
        }
    }
}

/// Comparison of several estimators on identical trials (same lattice,
/// channel, messages, dithers, and channel noise; only the receiver-side
/// map differs).
#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub rows: Vec<EstimatorReport>,
}

impl ComparisonTable {
    pub fn row(&self, name: &str) -> Option<&EstimatorReport> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Rate difference a - b with its combined uncertainty.
    pub fn rate_gap(&self, a: &str, b: &str) -> Option<(f64, f64)> {
        let ra = self.row(a)?;
        let rb = self.row(b)?;
        let gap = ra.rate.nats_per_dim - rb.rate.nats_per_dim;
        let unc = (ra.rate.uncertainty.powi(2) + rb.rate.uncertainty.powi(2)).sqrt();
        Some((gap, unc))
    }
}

/// Runs the measurement trials once per named estimator, on identical
/// randomness, and tabulates MSE, noise entropies, and achievable rate.
pub fn compare_estimators(
    base: &TransformConfig,
    estimators: &[(String, Estimator)],
    assignment: &MessageAssignment,
    num_trials: usize,
    seed: u64,
    entropy_bins: Option<usize>,
) -> Result<ComparisonTable, AnalysisError> {
    if estimators.is_empty() {
        return Err(AnalysisError::MismatchedConfigs(
            "no estimators to compare".to_string(),
        ));
    }
    let mut rows = Vec::with_capacity(estimators.len());
    for (name, est) in estimators {
        let cfg = base.with_estimator(est.clone());
        let records = run_trials(&cfg, assignment, num_trials, seed)?;
        let noise = collect_noise(&records)?;
        let mse = evaluate_mse(est, &records_to_pairs(&records));
        let bins = entropy_bins.unwrap_or_else(|| {
            default_bins_per_dim(base.lattice().dimension(), noise.pooled_folded.len())
        });
        let profile = NoiseProfile::build(
            base.lattice(),
            noise.pooled_folded,
            noise.pooled_raw,
            mse,
            bins,
        )?;
        rows.push(EstimatorReport::from_profile(name.clone(), &profile));
    }
    Ok(ComparisonTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::substream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn histogram_probabilities_sum_to_one() {
        let mut rng = substream(41, "hist", 0);
        let samples: Vec<Vec<f64>> = (0..10_000)
            .map(|_| vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5])
            .collect();
        let hist =
            ProductHistogram::from_samples(&[-0.5, -0.5], &[0.5, 0.5], 16, &samples).unwrap();
        let p: f64 = hist.probabilities().iter().sum();
        assert!((p - 1.0).abs() < 1e-12);
        assert_eq!(hist.total(), 10_000);
        let marg: u64 = hist.marginal(0).iter().sum();
        assert_eq!(marg, 10_000);
    }

    #[test]
    fn histogram_rejects_out_of_box_samples() {
        let samples = vec![vec![2.0]];
        let err =
            ProductHistogram::from_samples(&[-0.5], &[0.5], 8, &samples).unwrap_err();
        assert!(matches!(err, AnalysisError::SampleOutsideRegion { index: 0 }));
    }

    #[test]
    fn uniform_entropy_matches_log_volume_scalar() {
        // Criterion: uniform on [-q/2, q/2) has entropy ln q; estimate
        // within 0.02 nats at 1e6 samples, 256 bins.
        let q = 12.0f64.sqrt();
        let lat = Lattice::scalar(q).unwrap();
        let mut rng = substream(42, "uniform-entropy", 0);
        let samples: Vec<Vec<f64>> =
            (0..1_000_000).map(|_| lat.sample_dither(&mut rng)).collect();
        let est = estimate_entropy_folded(&samples, &lat, 256).unwrap();
        assert_abs_diff_eq!(est.nats_per_dim, q.ln(), epsilon = 0.02);
        assert!(!est.resolution_limited);
    }

    #[test]
    fn gaussian_entropy_matches_closed_form() {
        // Unfolded Gaussian: h = 0.5 ln(2 pi e sigma^2), within 0.05 nats.
        let sigma2: f64 = 0.04;
        let mut rng = substream(42, "gauss-entropy", 1);
        let normal = Normal::new(0.0, sigma2.sqrt()).unwrap();
        let samples: Vec<Vec<f64>> =
            (0..1_000_000).map(|_| vec![normal.sample(&mut rng)]).collect();
        let est = estimate_entropy_raw(&samples, 256).unwrap();
        let expected = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * sigma2).ln();
        assert_abs_diff_eq!(est.nats_per_dim, expected, epsilon = 0.05);
    }

    #[test]
    fn near_zero_noise_reports_resolution_floor() {
        let q = 4.0;
        let lat = Lattice::scalar(q).unwrap();
        let samples: Vec<Vec<f64>> = (0..100_000).map(|_| vec![1e-13]).collect();
        let est = estimate_entropy_folded(&samples, &lat, 256).unwrap();
        assert!(est.resolution_limited);
        // Floor: all mass in one cell of width q/256.
        let floor = (q / 256.0).ln();
        assert_abs_diff_eq!(est.nats_per_dim, floor, epsilon = 1e-9);
        assert!(est.nats_per_dim >= -(256.0f64.ln()) + q.ln() - 1e-9);
    }

    #[test]
    fn entropy_estimate_is_sample_consistent() {
        // Doubling samples at fixed bins moves the estimate by less than
        // the sensitivity delta plus statistical noise.
        let mut rng = substream(43, "consistency", 0);
        let normal = Normal::<f64>::new(0.0, 1.0).unwrap();
        let big: Vec<Vec<f64>> =
            (0..400_000).map(|_| vec![normal.sample(&mut rng)]).collect();
        let small = big[..200_000].to_vec();
        let e_small = estimate_entropy_raw(&small, 128).unwrap();
        let e_big = estimate_entropy_raw(&big, 128).unwrap();
        let allowance =
            e_small.sensitivity_delta + 3.0 * (e_small.std_error + e_big.std_error);
        assert!(
            (e_small.nats_per_dim - e_big.nats_per_dim).abs() <= allowance.max(2e-3),
            "delta {} vs allowance {}",
            (e_small.nats_per_dim - e_big.nats_per_dim).abs(),
            allowance
        );

        let mut u = substream(43, "consistency", 1);
        let ubig: Vec<Vec<f64>> =
            (0..400_000).map(|_| vec![u.random::<f64>() - 0.5]).collect();
        let usmall = ubig[..200_000].to_vec();
        let lat = Lattice::scalar(1.0).unwrap();
        let eu_small = estimate_entropy_folded(&usmall, &lat, 128).unwrap();
        let eu_big = estimate_entropy_folded(&ubig, &lat, 128).unwrap();
        let allowance =
            eu_small.sensitivity_delta + 3.0 * (eu_small.std_error + eu_big.std_error);
        assert!(
            (eu_small.nats_per_dim - eu_big.nats_per_dim).abs() <= allowance.max(2e-3)
        );
    }

    #[test]
    fn pure_uniform_noise_gives_zero_rate() {
        let q = 2.0;
        let lat = Lattice::scalar(q).unwrap();
        let mut rng = substream(44, "rate-uniform", 0);
        let samples: Vec<Vec<f64>> =
            (0..500_000).map(|_| lat.sample_dither(&mut rng)).collect();
        let h = estimate_entropy_folded(&samples, &lat, 256).unwrap();
        let rate = achievable_rate(&h, &lat);
        assert!(rate.nats_per_dim <= 0.02, "rate {}", rate.nats_per_dim);
    }

    #[test]
    fn rate_never_negative_and_flags_clamp() {
        let est = EntropyEstimate {
            nats_per_dim: 10.0,
            std_error: 0.0,
            sensitivity_delta: 0.0,
            bins_per_dim: 8,
            num_samples: 1,
            resolution_limited: false,
        };
        let lat = Lattice::scalar(2.0).unwrap();
        let rate = achievable_rate(&est, &lat);
        assert_eq!(rate.nats_per_dim, 0.0);
        assert!(rate.clamped);
    }

    #[test]
    fn noise_profile_bundles_consistent_measures() {
        let q = 4.0;
        let lat = Lattice::scalar(q).unwrap();
        let mut rng = substream(47, "profile", 0);
        let normal = Normal::<f64>::new(0.0, 0.3).unwrap();
        let raw: Vec<Vec<f64>> =
            (0..100_000).map(|_| vec![normal.sample(&mut rng)]).collect();
        let folded: Vec<Vec<f64>> =
            raw.iter().map(|x| lat.mod_lattice(x).unwrap()).collect();
        let mse = crate::estimator::MseEstimate {
            mse: 0.09,
            std_error: 1e-4,
            num_samples: raw.len(),
        };
        let profile = NoiseProfile::build(&lat, folded, raw, mse, 128).unwrap();
        assert_eq!(profile.folded.len(), 100_000);
        // Narrow noise barely folds: folded and raw entropies agree.
        assert!(
            (profile.entropy_folded.nats_per_dim - profile.entropy_raw.nats_per_dim).abs() < 0.02
        );
        let expected_rate = q.ln() - profile.entropy_folded.nats_per_dim;
        assert!((profile.rate.nats_per_dim - expected_rate).abs() < 1e-12);
        assert!(profile.entropy_folded.nats_per_dim <= q.ln());
    }

    #[test]
    fn independence_calibration_same_pool_accepts() {
        // Two random halves of one pool accept at ~99%.
        let mut rng = substream(45, "indep-cal", 0);
        let normal = Normal::<f64>::new(0.0, 1.0).unwrap();
        let mut groups: BTreeMap<MessageKey, Vec<Vec<f64>>> = BTreeMap::new();
        for g in 0..8u64 {
            let samples: Vec<Vec<f64>> =
                (0..2_000).map(|_| vec![normal.sample(&mut rng).clamp(-1.9, 1.9)]).collect();
            groups.insert(vec![g], samples);
        }
        let lat = Lattice::scalar(4.0).unwrap();
        let report = independence_report(&groups, &lat, 0.01).unwrap();
        assert_eq!(report.num_pairs, 28);
        assert!(
            report.acceptance_fraction >= 0.95,
            "acceptance {}",
            report.acceptance_fraction
        );
        assert_eq!(report.test_kind, "ks");
    }

    #[test]
    fn independence_detects_shifted_group() {
        let mut rng = substream(45, "indep-neg", 0);
        let normal = Normal::<f64>::new(0.0, 0.1).unwrap();
        let mut groups: BTreeMap<MessageKey, Vec<Vec<f64>>> = BTreeMap::new();
        for g in 0..4u64 {
            let shift = g as f64 * 0.3;
            let samples: Vec<Vec<f64>> = (0..2_000)
                .map(|_| vec![(normal.sample(&mut rng) + shift).clamp(-1.9, 1.9)])
                .collect();
            groups.insert(vec![g], samples);
        }
        let lat = Lattice::scalar(4.0).unwrap();
        let report = independence_report(&groups, &lat, 0.01).unwrap();
        assert!(report.acceptance_fraction < 0.5);
    }

    #[test]
    fn independence_requires_groups() {
        let lat = Lattice::scalar(4.0).unwrap();
        let mut groups: BTreeMap<MessageKey, Vec<Vec<f64>>> = BTreeMap::new();
        groups.insert(vec![0], vec![vec![0.0]; 10]);
        assert!(matches!(
            independence_report(&groups, &lat, 0.01),
            Err(AnalysisError::TooFewGroups { .. })
        ));
    }

    #[test]
    fn vector_independence_uses_chi_square() {
        let lat = Lattice::cubic(2, 1.0).unwrap();
        let mut rng = substream(46, "indep-vec", 0);
        let mut groups: BTreeMap<MessageKey, Vec<Vec<f64>>> = BTreeMap::new();
        for g in 0..4u64 {
            let samples: Vec<Vec<f64>> = (0..3_000)
                .map(|_| lat.sample_dither(&mut rng))
                .collect();
            groups.insert(vec![g], samples);
        }
        let report = independence_report(&groups, &lat, 0.01).unwrap();
        assert_eq!(report.test_kind, "chi_square");
        assert!(report.acceptance_fraction >= 0.8);
    }
}

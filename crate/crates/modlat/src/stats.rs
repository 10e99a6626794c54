//! Statistical plumbing shared by the analysis layer and the test suites:
//! running moments, deterministic summation, a two-sample Kolmogorov-Smirnov
//! test, and chi-square tests with a hand-rolled regularized incomplete gamma.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample set too small: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("samples must be finite")]
    NonFiniteSample,
    #[error("count vectors have mismatched lengths ({0} vs {1})")]
    CountLengthMismatch(usize, usize),
    #[error("too few populated cells for a chi-square test")]
    TooFewCells,
    #[error("series for the incomplete gamma function did not converge")]
    GammaNoConvergence,
}

/// Running mean/variance accumulator (Welford).
#[derive(Debug, Clone, Default)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Self::new();
        for &x in xs {
            m.push(x);
        }
        m
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; 0 for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n as f64 - 1.0)
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Covariance accumulator for the linear-MMSE fit.
#[derive(Debug, Clone, Default)]
pub struct BivariateMoments {
    n: u64,
    mean_x: f64,
    mean_y: f64,
    m2_x: f64,
    m2_y: f64,
    cxy: f64,
}

impl BivariateMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean_x;
        self.mean_x += dx / n;
        self.m2_x += dx * (x - self.mean_x);
        let dy = y - self.mean_y;
        self.mean_y += dy / n;
        self.m2_y += dy * (y - self.mean_y);
        self.cxy += dx * (y - self.mean_y);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean_x(&self) -> f64 {
        self.mean_x
    }

    pub fn mean_y(&self) -> f64 {
        self.mean_y
    }

    pub fn variance_x(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2_x / (self.n as f64 - 1.0)
        }
    }

    pub fn variance_y(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2_y / (self.n as f64 - 1.0)
        }
    }

    pub fn covariance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.cxy / (self.n as f64 - 1.0)
        }
    }
}

/// Sums in a fixed pairwise order, independent of any parallel partitioning
/// upstream. Also keeps rounding error at O(log n) growth.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Outcome of a two-sample distribution-equality test.
#[derive(Debug, Clone)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    /// Degrees of freedom for chi-square variants; 0 for KS.
    pub dof: usize,
}

impl TestOutcome {
    /// Accept the equal-distribution hypothesis at significance `alpha`.
    pub fn accepts(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// Two-sample Kolmogorov-Smirnov test for scalar samples.
///
/// Uses the asymptotic significance of the D statistic with the small-sample
/// correction factor `sqrt(ne) + 0.12 + 0.11/sqrt(ne)`. Requires at least
/// eight samples on each side.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<TestOutcome, StatsError> {
    if xs.len() < 8 || ys.len() < 8 {
        let got = xs.len().min(ys.len());
        return Err(StatsError::TooFewSamples { need: 8, got });
    }
    if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFiniteSample);
    }
    let mut xs = xs.to_vec();
    let mut ys = ys.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    ys.sort_by(|a, b| a.partial_cmp(b).expect("finite"));

    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let (mut cdf_x, mut cdf_y) = (0.0f64, 0.0f64);
    let mut statistic = 0.0f64;
    while i < n && j < m {
        let x = xs[i];
        let y = ys[j];
        let current = x.min(y);
        while i < n && xs[i] == current {
            i += 1;
        }
        while j < m && ys[j] == current {
            j += 1;
        }
        cdf_x = i as f64 / n as f64;
        cdf_y = j as f64 / m as f64;
        statistic = statistic.max((cdf_x - cdf_y).abs());
    }
    let _ = (cdf_x, cdf_y);

    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let sqrt_ne = ne.sqrt();
    let lambda = (sqrt_ne + 0.12 + 0.11 / sqrt_ne) * statistic;
    Ok(TestOutcome {
        statistic,
        p_value: ks_significance(lambda),
        dof: 0,
    })
}

/// Asymptotic KS tail probability Q_KS(lambda) = 2 sum (-1)^{j-1} exp(-2 j^2 lambda^2).
pub fn ks_significance(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let a = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    for j in 1..=200 {
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * 2.0 * (a * (j * j) as f64).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Two-sample chi-square test on pre-binned counts over a shared binning.
///
/// Cells whose pooled count falls below `min_pooled` are merged into a single
/// remainder cell so the asymptotic null distribution stays valid. Degrees of
/// freedom are `(effective cells) - 1`.
pub fn chi_square_two_sample(
    counts_a: &[u64],
    counts_b: &[u64],
    min_pooled: u64,
) -> Result<TestOutcome, StatsError> {
    if counts_a.len() != counts_b.len() {
        return Err(StatsError::CountLengthMismatch(counts_a.len(), counts_b.len()));
    }
    let total_a: u64 = counts_a.iter().sum();
    let total_b: u64 = counts_b.iter().sum();
    if total_a == 0 || total_b == 0 {
        return Err(StatsError::TooFewSamples { need: 1, got: 0 });
    }

    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut rest_a, mut rest_b) = (0u64, 0u64);
    for (&a, &b) in counts_a.iter().zip(counts_b) {
        if a + b == 0 {
            continue;
        }
        if a + b < min_pooled {
            rest_a += a;
            rest_b += b;
        } else {
            cells.push((a as f64, b as f64));
        }
    }
    if rest_a + rest_b >= min_pooled.max(1) {
        cells.push((rest_a as f64, rest_b as f64));
    }
    if cells.len() < 2 {
        return Err(StatsError::TooFewCells);
    }

    // Scaling constants make the statistic valid for unequal sample sizes.
    let k1 = (total_b as f64 / total_a as f64).sqrt();
    let k2 = (total_a as f64 / total_b as f64).sqrt();
    let mut chi2 = 0.0;
    for (a, b) in &cells {
        let d = k1 * a - k2 * b;
        chi2 += d * d / (a + b);
    }
    let dof = cells.len() - 1;
    Ok(TestOutcome {
        statistic: chi2,
        p_value: chi_square_tail(dof as f64, chi2)?,
        dof,
    })
}

/// Goodness-of-fit chi-square of observed counts against given cell
/// probabilities. Degrees of freedom are `cells - 1`.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> Result<TestOutcome, StatsError> {
    if counts.len() != probs.len() {
        return Err(StatsError::CountLengthMismatch(counts.len(), probs.len()));
    }
    if counts.len() < 2 {
        return Err(StatsError::TooFewCells);
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(StatsError::TooFewSamples { need: 1, got: 0 });
    }
    let mut chi2 = 0.0;
    for (&o, &p) in counts.iter().zip(probs) {
        let e = total as f64 * p;
        if e <= 0.0 {
            if o > 0 {
                return Err(StatsError::TooFewCells);
            }
            continue;
        }
        let d = o as f64 - e;
        chi2 += d * d / e;
    }
    let dof = counts.len() - 1;
    Ok(TestOutcome {
        statistic: chi2,
        p_value: chi_square_tail(dof as f64, chi2)?,
        dof,
    })
}

/// Upper tail P(X > x) for a chi-square variable with `dof` degrees of freedom.
pub fn chi_square_tail(dof: f64, x: f64) -> Result<f64, StatsError> {
    regularized_gamma_q(dof / 2.0, x / 2.0)
}

/// Regularized lower incomplete gamma P(a, x).
pub fn regularized_gamma_p(a: f64, x: f64) -> Result<f64, StatsError> {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return Ok(0.0);
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        Ok(1.0 - gamma_q_continued_fraction(a, x)?)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn regularized_gamma_q(a: f64, x: f64) -> Result<f64, StatsError> {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        Ok(1.0 - gamma_p_series(a, x)?)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> Result<f64, StatsError> {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..500 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-15 {
            return Ok((sum * (-x + a * x.ln() - ln_gamma(a)).exp()).clamp(0.0, 1.0));
        }
    }
    Err(StatsError::GammaNoConvergence)
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> Result<f64, StatsError> {
    const FPMIN: f64 = f64::MIN_POSITIVE / 1e-15;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            return Ok((h * (-x + a * x.ln() - ln_gamma(a)).exp()).clamp(0.0, 1.0));
        }
    }
    Err(StatsError::GammaNoConvergence)
}

/// Lanczos approximation of ln Gamma, accurate to ~1e-13 for positive reals.
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 14] = [
        57.156_235_665_862_92,
        -59.597_960_355_475_49,
        14.136_097_974_741_746,
        -0.491_913_816_097_620_2,
        0.339_946_499_848_118_87e-4,
        0.465_236_289_270_485_76e-4,
        -0.983_744_753_048_795_65e-4,
        0.158_088_703_224_912_49e-3,
        -0.210_264_441_724_104_88e-3,
        0.217_439_618_115_212_64e-3,
        -0.164_318_106_536_763_89e-3,
        0.844_182_239_838_527_43e-4,
        -0.261_908_384_015_814_087e-4,
        0.368_991_826_595_316_15e-5,
    ];
    debug_assert!(x > 0.0);
    let mut y = x;
    let tmp = x + 5.242_187_5;
    let tmp = (x + 0.5) * tmp.ln() - tmp;
    let mut ser = 0.999_999_999_999_997_1;
    for c in COEFFS {
        y += 1.0;
        ser += c / y;
    }
    tmp + (2.506_628_274_631_000_5 * ser / x).ln()
}

/// Total variation distance between two finite distributions on a shared
/// support: half the L1 distance.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    0.5 * p
        .iter()
        .zip(q)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

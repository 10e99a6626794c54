//! A zoo of memoryless K-user multiple-access channel models, including
//! non-additive structures and non-Gaussian noise, plus per-user transmitter
//! preprocessing maps.
//!
//! Channels act coordinate-wise: an n-dimensional block is K input vectors,
//! and each output coordinate depends only on the K input coordinates at the
//! same index plus independent noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("channel expects {expected} user inputs, got {got}")]
    UserCountMismatch { expected: usize, got: usize },
    #[error("user inputs must share one block length; user {user} has {got}, expected {expected}")]
    BlockLengthMismatch {
        user: usize,
        expected: usize,
        got: usize,
    },
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("noise power must be non-negative and finite, got {0}")]
    InvalidNoisePower(f64),
    #[error("clip level must be positive, got {0}")]
    InvalidClipLevel(f64),
    #[error("need one gain per user: {expected} users, {got} gains")]
    GainCountMismatch { expected: usize, got: usize },
    #[error("channel needs at least one user")]
    NoUsers,
    #[error("power must be positive, got {0}")]
    InvalidPower(f64),
    #[error("preprocessor covers {got} users, channel has {expected}")]
    PreprocessorMismatch { expected: usize, got: usize },
}

/// Marginal law of the per-coordinate noise term, parametrized by variance
/// so channels are comparable at equal noise power.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseLaw {
    Gaussian,
    Laplace,
    Uniform,
    /// Two-component zero-mean Gaussian mixture, weights (0.9, 0.1) with
    /// variances (sigma^2/2, 5.5*sigma^2); total variance is sigma^2. A
    /// standard impulsive-noise surrogate.
    GaussianMixture,
}

/// How the channel combines the (preprocessed) user inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelStructure {
    /// y = sum_i f_i(x_i) + Z
    AdditiveSum,
    /// y = clamp(sum, -c, c) + Z
    ClippedSum,
    /// y = s + kappa*s^3 + Z with s = sum
    CubicSum,
    /// y = sum_i h_i * f_i(x_i) + Z
    WeightedSum,
    /// y = s * (1 + Z); degenerates to the noiseless sum at sigma^2 = 0
    Multiplicative,
}

impl ChannelStructure {
    pub fn name(self) -> &'static str {
        match self {
            ChannelStructure::AdditiveSum => "additive_sum",
            ChannelStructure::ClippedSum => "clipped_sum",
            ChannelStructure::CubicSum => "cubic_sum",
            ChannelStructure::WeightedSum => "weighted_sum",
            ChannelStructure::Multiplicative => "multiplicative",
        }
    }
}

/// One per-user deterministic preprocessing map, applied coordinate-wise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UserMap {
    Identity,
    /// x -> a*x + b
    Affine { a: f64, b: f64 },
    /// x -> tanh(a*x)/a; unit slope at the origin, saturates at 1/a.
    TanhCompanding { a: f64 },
    /// x -> x + kappa*x^3
    CubicPredistortion { kappa: f64 },
}

impl UserMap {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            UserMap::Identity => x,
            UserMap::Affine { a, b } => a * x + b,
            UserMap::TanhCompanding { a } => (a * x).tanh() / a,
            UserMap::CubicPredistortion { kappa } => x + kappa * x * x * x,
        }
    }
}

/// Per-user preprocessing stage in front of the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    maps: Vec<UserMap>,
}

impl Preprocessor {
    pub fn new(maps: Vec<UserMap>) -> Self {
        Self { maps }
    }

    /// Identity preprocessing for `num_users` users.
    pub fn identity(num_users: usize) -> Self {
        Self {
            maps: vec![UserMap::Identity; num_users],
        }
    }

    pub fn num_users(&self) -> usize {
        self.maps.len()
    }

    pub fn apply(&self, user: usize, x: f64) -> f64 {
        self.maps[user].apply(x)
    }

    pub fn maps(&self) -> &[UserMap] {
        &self.maps
    }
}

/// A memoryless K-user MAC channel model.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    name: String,
    num_users: usize,
    structure: ChannelStructure,
    noise_law: NoiseLaw,
    noise_power: f64,
    clip_level: f64,
    cubic_coeff: f64,
    gains: Vec<f64>,
}

impl ChannelModel {
    pub fn new(
        name: impl Into<String>,
        num_users: usize,
        structure: ChannelStructure,
        noise_law: NoiseLaw,
        noise_power: f64,
    ) -> Result<Self, ChannelError> {
        if num_users == 0 {
            return Err(ChannelError::NoUsers);
        }
        if !noise_power.is_finite() || noise_power < 0.0 {
            return Err(ChannelError::InvalidNoisePower(noise_power));
        }
        Ok(Self {
            name: name.into(),
            num_users,
            structure,
            noise_law,
            noise_power,
            clip_level: 1.0,
            cubic_coeff: 0.0,
            gains: vec![1.0; num_users],
        })
    }

    pub fn additive(
        num_users: usize,
        noise_law: NoiseLaw,
        noise_power: f64,
    ) -> Result<Self, ChannelError> {
        Self::new("additive_sum", num_users, ChannelStructure::AdditiveSum, noise_law, noise_power)
    }

    pub fn clipped(
        num_users: usize,
        noise_law: NoiseLaw,
        noise_power: f64,
        clip_level: f64,
    ) -> Result<Self, ChannelError> {
        if !clip_level.is_finite() || clip_level <= 0.0 {
            return Err(ChannelError::InvalidClipLevel(clip_level));
        }
        let mut ch =
            Self::new("clipped_sum", num_users, ChannelStructure::ClippedSum, noise_law, noise_power)?;
        ch.clip_level = clip_level;
        Ok(ch)
    }

    pub fn cubic(
        num_users: usize,
        noise_law: NoiseLaw,
        noise_power: f64,
        cubic_coeff: f64,
    ) -> Result<Self, ChannelError> {
        let mut ch =
            Self::new("cubic_sum", num_users, ChannelStructure::CubicSum, noise_law, noise_power)?;
        ch.cubic_coeff = cubic_coeff;
        Ok(ch)
    }

    pub fn weighted(
        num_users: usize,
        noise_law: NoiseLaw,
        noise_power: f64,
        gains: Vec<f64>,
    ) -> Result<Self, ChannelError> {
        if gains.len() != num_users {
            return Err(ChannelError::GainCountMismatch {
                expected: num_users,
                got: gains.len(),
            });
        }
        let mut ch =
            Self::new("weighted_sum", num_users, ChannelStructure::WeightedSum, noise_law, noise_power)?;
        ch.gains = gains;
        Ok(ch)
    }

    pub fn multiplicative(
        num_users: usize,
        noise_law: NoiseLaw,
        noise_power: f64,
    ) -> Result<Self, ChannelError> {
        Self::new(
            "multiplicative",
            num_users,
            ChannelStructure::Multiplicative,
            noise_law,
            noise_power,
        )
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn structure(&self) -> ChannelStructure {
        self.structure
    }

    pub fn noise_law(&self) -> NoiseLaw {
        self.noise_law
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    pub fn clip_level(&self) -> f64 {
        self.clip_level
    }

    pub fn cubic_coeff(&self) -> f64 {
        self.cubic_coeff
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    /// Second moment of the input sum S = sum_i X_i when every user transmits
    /// zero-mean power-P signals independently: K*P.
    pub fn sum_power(&self, power: f64) -> Result<f64, ChannelError> {
        if !(power.is_finite() && power > 0.0) {
            return Err(ChannelError::InvalidPower(power));
        }
        Ok(self.num_users as f64 * power)
    }

    /// Applies the channel to one block of K user inputs, coordinate-wise
    /// with independent noise per coordinate.
    pub fn transmit_through<R: Rng + ?Sized>(
        &self,
        pre: &Preprocessor,
        inputs: &[Vec<f64>],
        rng: &mut R,
    ) -> Result<Vec<f64>, ChannelError> {
        if pre.num_users() != self.num_users {
            return Err(ChannelError::PreprocessorMismatch {
                expected: self.num_users,
                got: pre.num_users(),
            });
        }
        if inputs.len() != self.num_users {
            return Err(ChannelError::UserCountMismatch {
                expected: self.num_users,
                got: inputs.len(),
            });
        }
        let n = inputs[0].len();
        for (user, x) in inputs.iter().enumerate() {
            if x.len() != n {
                return Err(ChannelError::BlockLengthMismatch {
                    user,
                    expected: n,
                    got: x.len(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(ChannelError::NonFiniteInput);
            }
        }

        let mut y = Vec::with_capacity(n);
        for j in 0..n {
            let z = sample_noise(self.noise_law, self.noise_power, rng);
            let out = match self.structure {
                ChannelStructure::AdditiveSum => {
                    let s: f64 = (0..self.num_users).map(|i| pre.apply(i, inputs[i][j])).sum();
                    s + z
                }
                ChannelStructure::ClippedSum => {
                    let s: f64 = (0..self.num_users).map(|i| pre.apply(i, inputs[i][j])).sum();
                    s.clamp(-self.clip_level, self.clip_level) + z
                }
                ChannelStructure::CubicSum => {
                    let s: f64 = (0..self.num_users).map(|i| pre.apply(i, inputs[i][j])).sum();
                    s + self.cubic_coeff * s * s * s + z
                }
                ChannelStructure::WeightedSum => {
                    let s: f64 = (0..self.num_users)
                        .map(|i| self.gains[i] * pre.apply(i, inputs[i][j]))
                        .sum();
                    s + z
                }
                ChannelStructure::Multiplicative => {
                    let s: f64 = (0..self.num_users).map(|i| pre.apply(i, inputs[i][j])).sum();
                    s * (1.0 + z)
                }
            };
            y.push(out);
        }
        Ok(y)
    }
}

/// Draws one zero-mean noise sample with variance `sigma2`.
fn sample_noise<R: Rng + ?Sized>(law: NoiseLaw, sigma2: f64, rng: &mut R) -> f64 {
    if sigma2 == 0.0 {
        return 0.0;
    }
    match law {
        NoiseLaw::Gaussian => Normal::new(0.0, sigma2.sqrt())
            .expect("positive std dev")
            .sample(rng),
        NoiseLaw::Laplace => {
            // Inverse CDF; variance of Laplace(b) is 2 b^2.
            let b = (sigma2 / 2.0).sqrt();
            let u: f64 = rng.random::<f64>() - 0.5;
            let magnitude = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
            -b * u.signum() * magnitude.ln()
        }
        NoiseLaw::Uniform => {
            // Half-width a gives variance a^2/3.
            let a = (3.0 * sigma2).sqrt();
            (rng.random::<f64>() - 0.5) * 2.0 * a
        }
        NoiseLaw::GaussianMixture => {
            let (w0, v0, v1) = (0.9, 0.5 * sigma2, 5.5 * sigma2);
            let v = if rng.random::<f64>() < w0 { v0 } else { v1 };
            Normal::new(0.0, v.sqrt()).expect("positive std dev").sample(rng)
        }
    }
}

/// The standard channel family used by the experiment suites: six channels
/// exercising every structure plus two non-Gaussian noise laws, at operating
/// points tied to the per-user power `power`.
pub fn standard_zoo(num_users: usize, power: f64) -> Result<Vec<ChannelModel>, ChannelError> {
    let kp = num_users as f64 * power;
    Ok(vec![
        ChannelModel::additive(num_users, NoiseLaw::Gaussian, 0.5 * kp)?.with_name("awgn"),
        ChannelModel::additive(num_users, NoiseLaw::Laplace, 0.5 * kp)?.with_name("laplace"),
        ChannelModel::additive(num_users, NoiseLaw::GaussianMixture, 0.5 * kp)?
            .with_name("impulsive"),
        ChannelModel::clipped(num_users, NoiseLaw::Gaussian, 0.1 * kp, 0.8 * kp.sqrt())?,
        ChannelModel::cubic(num_users, NoiseLaw::Gaussian, 0.25 * kp, 0.15)?,
        ChannelModel::multiplicative(num_users, NoiseLaw::Gaussian, 0.05)?,
        ChannelModel::weighted(
            num_users,
            NoiseLaw::Uniform,
            0.25 * kp,
            (0..num_users).map(|i| 1.0 + 0.5 * i as f64).collect(),
        )?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::substream;
    use crate::stats::Moments;

    fn det_rng() -> impl Rng {
        substream(21, "channel-tests", 0)
    }

    #[test]
    fn noiseless_sum_is_exact() {
        let ch = ChannelModel::additive(2, NoiseLaw::Gaussian, 0.0).unwrap();
        let pre = Preprocessor::identity(2);
        let y = ch
            .transmit_through(&pre, &[vec![1.0], vec![2.0]], &mut det_rng())
            .unwrap();
        assert_eq!(y, vec![3.0]);
    }

    #[test]
    fn clipping_applies_before_noise() {
        let ch = ChannelModel::clipped(2, NoiseLaw::Gaussian, 0.0, 1.0).unwrap();
        let pre = Preprocessor::identity(2);
        let y = ch
            .transmit_through(&pre, &[vec![2.0], vec![2.0]], &mut det_rng())
            .unwrap();
        assert_eq!(y, vec![1.0]);
    }

    #[test]
    fn multiplicative_degenerates_to_sum_at_zero_noise() {
        let ch = ChannelModel::multiplicative(2, NoiseLaw::Gaussian, 0.0).unwrap();
        let pre = Preprocessor::identity(2);
        let y = ch
            .transmit_through(&pre, &[vec![1.5], vec![-0.5]], &mut det_rng())
            .unwrap();
        assert_eq!(y, vec![1.0]);
    }

    #[test]
    fn sum_power_is_k_times_p() {
        assert_eq!(
            ChannelModel::additive(2, NoiseLaw::Gaussian, 1.0).unwrap().sum_power(1.0).unwrap(),
            2.0
        );
        assert_eq!(
            ChannelModel::additive(1, NoiseLaw::Gaussian, 1.0).unwrap().sum_power(3.0).unwrap(),
            3.0
        );
        assert_eq!(
            ChannelModel::additive(4, NoiseLaw::Gaussian, 1.0).unwrap().sum_power(0.5).unwrap(),
            2.0
        );
        assert!(ChannelModel::additive(2, NoiseLaw::Gaussian, 1.0)
            .unwrap()
            .sum_power(-1.0)
            .is_err());
    }

    #[test]
    fn noise_variance_matches_declared_power_for_every_law() {
        let sigma2 = 0.7;
        for law in [
            NoiseLaw::Gaussian,
            NoiseLaw::Laplace,
            NoiseLaw::Uniform,
            NoiseLaw::GaussianMixture,
        ] {
            let mut rng = substream(22, "noise-var", law as u64);
            let mut m = Moments::new();
            for _ in 0..200_000 {
                m.push(sample_noise(law, sigma2, &mut rng));
            }
            // Mean zero and variance sigma2 within Monte Carlo error. The
            // mixture's variance estimator is heavy-tailed, hence 4 sigma.
            assert!(m.mean().abs() < 4.0 * m.std_error(), "{law:?} mean {}", m.mean());
            let var_se = (2.0 / m.count() as f64).sqrt() * sigma2 * 4.0;
            assert!(
                (m.variance() - sigma2).abs() < 4.0 * var_se,
                "{law:?} var {} vs {}",
                m.variance(),
                sigma2
            );
        }
    }

    #[test]
    fn weighted_sum_uses_gains() {
        let ch = ChannelModel::weighted(2, NoiseLaw::Gaussian, 0.0, vec![2.0, 2.0]).unwrap();
        let pre = Preprocessor::identity(2);
        let y = ch
            .transmit_through(&pre, &[vec![1.0], vec![0.5]], &mut det_rng())
            .unwrap();
        assert_eq!(y, vec![3.0]);
    }

    #[test]
    fn preprocessing_maps_apply_per_user() {
        let ch = ChannelModel::additive(2, NoiseLaw::Gaussian, 0.0).unwrap();
        let pre = Preprocessor::new(vec![
            UserMap::Affine { a: 2.0, b: 1.0 },
            UserMap::CubicPredistortion { kappa: 1.0 },
        ]);
        let y = ch
            .transmit_through(&pre, &[vec![1.0], vec![2.0]], &mut det_rng())
            .unwrap();
        // 2*1+1 = 3 and 2 + 8 = 10.
        assert_eq!(y, vec![13.0]);
    }

    #[test]
    fn tanh_companding_has_unit_slope_at_origin() {
        let map = UserMap::TanhCompanding { a: 2.0 };
        assert!((map.apply(1e-8) - 1e-8).abs() < 1e-12);
        assert!(map.apply(100.0) < 0.51);
    }

    #[test]
    fn shape_errors_are_reported() {
        let ch = ChannelModel::additive(2, NoiseLaw::Gaussian, 1.0).unwrap();
        let pre = Preprocessor::identity(2);
        assert!(matches!(
            ch.transmit_through(&pre, &[vec![1.0]], &mut det_rng()),
            Err(ChannelError::UserCountMismatch { .. })
        ));
        assert!(matches!(
            ch.transmit_through(&pre, &[vec![1.0], vec![1.0, 2.0]], &mut det_rng()),
            Err(ChannelError::BlockLengthMismatch { user: 1, .. })
        ));
        assert!(matches!(
            ch.transmit_through(&Preprocessor::identity(3), &[vec![1.0], vec![1.0]], &mut det_rng()),
            Err(ChannelError::PreprocessorMismatch { .. })
        ));
        assert!(ChannelModel::additive(2, NoiseLaw::Gaussian, -1.0).is_err());
        assert!(ChannelModel::clipped(2, NoiseLaw::Gaussian, 1.0, 0.0).is_err());
        assert!(ChannelModel::additive(0, NoiseLaw::Gaussian, 1.0).is_err());
    }

    #[test]
    fn identical_seeds_give_identical_outputs() {
        let ch = ChannelModel::additive(2, NoiseLaw::GaussianMixture, 1.0).unwrap();
        let pre = Preprocessor::identity(2);
        let inputs = [vec![0.3, -0.4, 1.1], vec![0.0, 0.2, -0.9]];
        let y1 = ch
            .transmit_through(&pre, &inputs, &mut substream(7, "det", 0))
            .unwrap();
        let y2 = ch
            .transmit_through(&pre, &inputs, &mut substream(7, "det", 0))
            .unwrap();
        assert_eq!(y1, y2);
    }

    #[test]
    fn coordinates_are_independent_noise_draws() {
        // Chi-square independence test on a 2-D binning of coordinate pairs.
        let ch = ChannelModel::additive(1, NoiseLaw::Gaussian, 1.0).unwrap();
        let pre = Preprocessor::identity(1);
        let mut rng = substream(23, "memoryless", 0);
        let bins = 4usize;
        let mut joint = vec![0u64; bins * bins];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut pairs = Vec::with_capacity(20_000);
        for _ in 0..20_000 {
            let y = ch
                .transmit_through(&pre, &[vec![0.0, 0.0]], &mut rng)
                .unwrap();
            lo = lo.min(y[0]).min(y[1]);
            hi = hi.max(y[0]).max(y[1]);
            pairs.push((y[0], y[1]));
        }
        let idx = |v: f64| (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1);
        let mut marg_a = vec![0u64; bins];
        let mut marg_b = vec![0u64; bins];
        for &(a, b) in &pairs {
            joint[idx(a) * bins + idx(b)] += 1;
            marg_a[idx(a)] += 1;
            marg_b[idx(b)] += 1;
        }
        let n = pairs.len() as f64;
        let mut chi2 = 0.0;
        for i in 0..bins {
            for j in 0..bins {
                let e = marg_a[i] as f64 * marg_b[j] as f64 / n;
                if e > 0.0 {
                    let d = joint[i * bins + j] as f64 - e;
                    chi2 += d * d / e;
                }
            }
        }
        let dof = ((bins - 1) * (bins - 1)) as f64;
        let p = crate::stats::chi_square_tail(dof, chi2).unwrap();
        assert!(p > 0.01, "independence rejected: chi2 = {chi2}, p = {p}");
    }

    #[test]
    fn standard_zoo_covers_required_structures() {
        let zoo = standard_zoo(2, 1.0).unwrap();
        assert!(zoo.len() >= 6);
        let structures: Vec<_> = zoo.iter().map(|c| c.structure()).collect();
        for required in [
            ChannelStructure::ClippedSum,
            ChannelStructure::CubicSum,
            ChannelStructure::Multiplicative,
        ] {
            assert!(structures.contains(&required), "missing {required:?}");
        }
    }
}

//! Lattices with Voronoi fundamental regions: closed-form nearest-point
//! quantizers, modulo-lattice folding, uniform dither sampling, and second
//! moments.
//!
//! The fundamental region is always the Voronoi region of the origin,
//! realized implicitly through `nearest_point`: a vector lies in the region
//! exactly when its nearest lattice point is zero. Folding is norm-minimal
//! as a consequence.

use rand::Rng;
use thiserror::Error;

use crate::stats::Moments;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("dimension mismatch: lattice is {expected}-dimensional, input has length {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input vector contains a non-finite coordinate")]
    NonFiniteInput,
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("target power must be positive and finite, got {0}")]
    InvalidPower(f64),
    #[error("{kind:?} quantizer requires dimension {expected}, got {got}")]
    UnsupportedDimension {
        kind: QuantizerKind,
        expected: usize,
        got: usize,
    },
    #[error("second-moment estimation needs at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
}

/// Which closed-form nearest-point routine the lattice uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuantizerKind {
    /// q·Z in one dimension.
    Scalar,
    /// Z^n, any n >= 1.
    Cubic,
    /// Hexagonal lattice in the plane.
    HexA2,
    /// Checkerboard lattice D4 (integer vectors with even coordinate sum).
    D4,
    /// Gosset lattice E8 = D8 union (D8 + 1/2).
    E8,
}

impl QuantizerKind {
    /// Dimension the quantizer requires, or `None` when any dimension works.
    pub fn required_dimension(self) -> Option<usize> {
        match self {
            QuantizerKind::Scalar => Some(1),
            QuantizerKind::Cubic => None,
            QuantizerKind::HexA2 => Some(2),
            QuantizerKind::D4 => Some(4),
            QuantizerKind::E8 => Some(8),
        }
    }

    /// Per-dimension second moment of the base (scale 1) lattice.
    ///
    /// Scalar and cubic are the elementary 1/12; the others are the known
    /// exact Voronoi-cell second moments, cross-checked by Monte Carlo in
    /// the test suite.
    pub fn base_second_moment(self) -> f64 {
        match self {
            QuantizerKind::Scalar | QuantizerKind::Cubic => 1.0 / 12.0,
            QuantizerKind::HexA2 => 5.0 / 72.0,
            QuantizerKind::D4 => 13.0 / 120.0,
            QuantizerKind::E8 => 929.0 / 12960.0,
        }
    }

    /// Covering radius of the base lattice: every point of space is within
    /// this distance of a lattice point. Used to bound the Voronoi region
    /// and by the brute-force test oracle.
    pub fn covering_radius(self, dimension: usize) -> f64 {
        match self {
            QuantizerKind::Scalar => 0.5,
            QuantizerKind::Cubic => 0.5 * (dimension as f64).sqrt(),
            QuantizerKind::HexA2 => 1.0 / 3.0f64.sqrt(),
            QuantizerKind::D4 => 1.0,
            QuantizerKind::E8 => 1.0,
        }
    }

    /// Largest |coordinate| attainable inside the base Voronoi region.
    /// Exact for scalar and cubic (box faces); the covering radius bounds
    /// the rest.
    pub fn coordinate_halfwidth(self) -> f64 {
        match self {
            QuantizerKind::Scalar | QuantizerKind::Cubic => 0.5,
            QuantizerKind::HexA2 => 1.0 / 3.0f64.sqrt(),
            QuantizerKind::D4 => 1.0,
            QuantizerKind::E8 => 1.0,
        }
    }
}

/// Monte Carlo second-moment report for a lattice.
#[derive(Debug, Clone)]
pub struct LatticeStats {
    /// Per-dimension second moment estimate (amplitude squared).
    pub second_moment: f64,
    /// Standard error of the estimate.
    pub std_error: f64,
    /// Dimensionless normalized second moment G = sigma^2 / volume^(2/n).
    pub normalized_second_moment: f64,
    /// Volume of the fundamental region.
    pub volume: f64,
    pub num_samples: usize,
}

/// A scaled lattice with a closed-form nearest-point quantizer.
#[derive(Debug, Clone)]
pub struct Lattice {
    name: String,
    dimension: usize,
    /// Row-major basis of the base (unit-scale) lattice; rows are basis vectors.
    generator: Vec<f64>,
    scale: f64,
    kind: QuantizerKind,
}

impl Lattice {
    /// q·Z with q = `scale`.
    pub fn scalar(scale: f64) -> Result<Self, LatticeError> {
        Self::from_kind(QuantizerKind::Scalar, 1, scale)
    }

    /// scale·Z^n.
    pub fn cubic(dimension: usize, scale: f64) -> Result<Self, LatticeError> {
        Self::from_kind(QuantizerKind::Cubic, dimension, scale)
    }

    /// Hexagonal lattice, nearest-neighbor distance `scale`.
    pub fn hex_a2(scale: f64) -> Result<Self, LatticeError> {
        Self::from_kind(QuantizerKind::HexA2, 2, scale)
    }

    pub fn d4(scale: f64) -> Result<Self, LatticeError> {
        Self::from_kind(QuantizerKind::D4, 4, scale)
    }

    pub fn e8(scale: f64) -> Result<Self, LatticeError> {
        Self::from_kind(QuantizerKind::E8, 8, scale)
    }

    pub fn from_kind(
        kind: QuantizerKind,
        dimension: usize,
        scale: f64,
    ) -> Result<Self, LatticeError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(LatticeError::InvalidScale(scale));
        }
        if dimension == 0 {
            return Err(LatticeError::UnsupportedDimension {
                kind,
                expected: kind.required_dimension().unwrap_or(1),
                got: dimension,
            });
        }
        if let Some(required) = kind.required_dimension() {
            if dimension != required {
                return Err(LatticeError::UnsupportedDimension {
                    kind,
                    expected: required,
                    got: dimension,
                });
            }
        }
        let generator = base_generator(kind, dimension);
        let name = match kind {
            QuantizerKind::Scalar => "scalar".to_string(),
            QuantizerKind::Cubic => format!("cubic{dimension}"),
            QuantizerKind::HexA2 => "hex_a2".to_string(),
            QuantizerKind::D4 => "d4".to_string(),
            QuantizerKind::E8 => "e8".to_string(),
        };
        Ok(Self {
            name,
            dimension,
            generator,
            scale,
            kind,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn kind(&self) -> QuantizerKind {
        self.kind
    }

    /// Row `i` of the scaled generator matrix.
    pub fn basis_vector(&self, i: usize) -> Vec<f64> {
        let n = self.dimension;
        self.generator[i * n..(i + 1) * n]
            .iter()
            .map(|g| g * self.scale)
            .collect()
    }

    /// Volume of the fundamental region: |det(generator)| * scale^n.
    pub fn volume(&self) -> f64 {
        abs_determinant(&self.generator, self.dimension) * self.scale.powi(self.dimension as i32)
    }

    /// Exact per-dimension second moment of the Voronoi region.
    pub fn second_moment(&self) -> f64 {
        self.kind.base_second_moment() * self.scale * self.scale
    }

    /// Largest |coordinate| a folded vector can attain, per coordinate.
    pub fn coordinate_halfwidth(&self) -> f64 {
        self.kind.coordinate_halfwidth() * self.scale
    }

    /// Covering radius of the scaled lattice.
    pub fn covering_radius(&self) -> f64 {
        self.kind.covering_radius(self.dimension) * self.scale
    }

    fn check_input(&self, x: &[f64]) -> Result<(), LatticeError> {
        if x.len() != self.dimension {
            return Err(LatticeError::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LatticeError::NonFiniteInput);
        }
        Ok(())
    }

    /// Nearest lattice point to `x` in Euclidean distance; ties on Voronoi
    /// boundaries resolve to the lexicographically smaller point.
    pub fn nearest_point(&self, x: &[f64]) -> Result<Vec<f64>, LatticeError> {
        self.check_input(x)?;
        let t: Vec<f64> = x.iter().map(|v| v / self.scale).collect();
        let base = match self.kind {
            QuantizerKind::Scalar | QuantizerKind::Cubic => quantize_cubic(&t),
            QuantizerKind::HexA2 => quantize_hex(&t),
            QuantizerKind::D4 => quantize_dn(&t),
            QuantizerKind::E8 => quantize_e8(&t),
        };
        Ok(base.into_iter().map(|v| v * self.scale).collect())
    }

    /// Folds `x` into the Voronoi region: `x - nearest_point(x)`.
    pub fn mod_lattice(&self, x: &[f64]) -> Result<Vec<f64>, LatticeError> {
        let p = self.nearest_point(x)?;
        Ok(x.iter().zip(&p).map(|(a, b)| a - b).collect())
    }

    /// Whether `x` lies in the (closed) Voronoi region. The nearest point
    /// being 0 within `tol` per coordinate is the usual case; on the region
    /// boundary the quantizer may tie-break to a neighbor, so equidistance
    /// to 0 also counts as membership.
    pub fn in_voronoi(&self, x: &[f64], tol: f64) -> Result<bool, LatticeError> {
        let p = self.nearest_point(x)?;
        if p.iter().all(|v| v.abs() <= tol) {
            return Ok(true);
        }
        let d_zero: f64 = x.iter().map(|v| v * v).sum();
        let d_nearest: f64 = x.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(d_zero <= d_nearest + tol * (1.0 + d_zero))
    }

    /// Draws a sample uniform over the Voronoi region.
    ///
    /// A uniform sample over the fundamental parallelepiped of the generator
    /// is folded by `mod_lattice`; both regions tile space under the lattice,
    /// so uniformity is preserved.
    pub fn sample_dither<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.dimension;
        let mut x = vec![0.0; n];
        for i in 0..n {
            let w: f64 = rng.random::<f64>() - 0.5;
            for j in 0..n {
                x[j] += w * self.generator[i * n + j] * self.scale;
            }
        }
        self.mod_lattice(&x).expect("parallelepiped sample is finite")
    }

    /// Monte Carlo estimate of the per-dimension second moment.
    pub fn estimate_second_moment<R: Rng + ?Sized>(
        &self,
        num_samples: usize,
        rng: &mut R,
    ) -> Result<LatticeStats, LatticeError> {
        const MIN_SAMPLES: usize = 10_000;
        if num_samples < MIN_SAMPLES {
            return Err(LatticeError::TooFewSamples {
                need: MIN_SAMPLES,
                got: num_samples,
            });
        }
        let n = self.dimension as f64;
        let mut moments = Moments::new();
        for _ in 0..num_samples {
            let u = self.sample_dither(rng);
            moments.push(u.iter().map(|v| v * v).sum::<f64>() / n);
        }
        let volume = self.volume();
        let second_moment = moments.mean();
        Ok(LatticeStats {
            second_moment,
            std_error: moments.std_error(),
            normalized_second_moment: second_moment / volume.powf(2.0 / n),
            volume,
            num_samples,
        })
    }

    /// Rescales so the per-dimension second moment equals `power` exactly
    /// (using the known base second moments). Idempotent: rescaling to the
    /// same power returns the same scale.
    pub fn scale_to_power(&self, power: f64) -> Result<Lattice, LatticeError> {
        if !(power.is_finite() && power > 0.0) {
            return Err(LatticeError::InvalidPower(power));
        }
        let mut scaled = self.clone();
        scaled.scale = (power / self.kind.base_second_moment()).sqrt();
        Ok(scaled)
    }

    /// Whether `p` is a lattice point: its generator coordinates are integral
    /// within `tol`.
    pub fn is_lattice_point(&self, p: &[f64], tol: f64) -> Result<bool, LatticeError> {
        self.check_input(p)?;
        let n = self.dimension;
        // Solve c * G = p / scale for the coefficient vector c.
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                // Transpose: column i of the system is basis vector i.
                a[j * n + i] = self.generator[i * n + j];
            }
        }
        let rhs: Vec<f64> = p.iter().map(|v| v / self.scale).collect();
        let coeffs = solve_linear(&mut a, rhs, n);
        Ok(coeffs
            .iter()
            .all(|c| (c - c.round()).abs() <= tol))
    }
}

/// Rounds to the nearest integer; exact halves round down. Applied per
/// coordinate this picks the lexicographically smallest nearest point of a
/// cubic lattice.
fn round_half_down(t: f64) -> f64 {
    // +0.0 normalizes the negative zero ceil can produce.
    (t - 0.5).ceil() + 0.0
}

fn quantize_cubic(t: &[f64]) -> Vec<f64> {
    t.iter().map(|&v| round_half_down(v)).collect()
}

/// Hexagonal lattice as two rectangular cosets: R = Z x sqrt(3)Z and
/// R + (1/2, sqrt(3)/2).
fn quantize_hex(t: &[f64]) -> Vec<f64> {
    let s3 = 3.0f64.sqrt();
    let cand = |sx: f64, sy: f64| -> [f64; 2] {
        [
            sx + round_half_down(t[0] - sx),
            sy + s3 * round_half_down((t[1] - sy) / s3),
        ]
    };
    let c0 = cand(0.0, 0.0);
    let c1 = cand(0.5, 0.5 * s3);
    pick_closer(t, &c0, &c1).to_vec()
}

/// Nearest point in D_n (integer vectors with even sum): round every
/// coordinate, and if the sum comes out odd re-round the worst coordinate
/// the other way.
fn quantize_dn(t: &[f64]) -> Vec<f64> {
    let mut f = quantize_cubic(t);
    let sum: i64 = f.iter().map(|&v| v as i64).sum();
    if sum.rem_euclid(2) != 0 {
        let mut worst = 0usize;
        let mut worst_err = -1.0f64;
        for (i, (&ti, &fi)) in t.iter().zip(f.iter()).enumerate() {
            let err = (ti - fi).abs();
            if err > worst_err {
                worst_err = err;
                worst = i;
            }
        }
        // Move to the second-nearest integer; at err == 0 step down.
        if t[worst] > f[worst] {
            f[worst] += 1.0;
        } else {
            f[worst] -= 1.0;
        }
    }
    f
}

/// E8 via its two D8 cosets: Q(x) is the closer of Q_D8(x) and
/// Q_D8(x - 1/2) + 1/2.
fn quantize_e8(t: &[f64]) -> Vec<f64> {
    let c0 = quantize_dn(t);
    let shifted: Vec<f64> = t.iter().map(|v| v - 0.5).collect();
    let c1: Vec<f64> = quantize_dn(&shifted).iter().map(|v| v + 0.5).collect();
    pick_closer_vec(t, c0, c1)
}

fn dist_sq(x: &[f64], p: &[f64]) -> f64 {
    x.iter()
        .zip(p)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

fn pick_closer<'a>(x: &[f64], a: &'a [f64; 2], b: &'a [f64; 2]) -> &'a [f64; 2] {
    let da = dist_sq(x, a);
    let db = dist_sq(x, b);
    if da < db || (da == db && lex_less(a, b)) {
        a
    } else {
        b
    }
}

fn pick_closer_vec(x: &[f64], a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    let da = dist_sq(x, &a);
    let db = dist_sq(x, &b);
    if da < db || (da == db && lex_less(&a, &b)) {
        a
    } else {
        b
    }
}

fn base_generator(kind: QuantizerKind, n: usize) -> Vec<f64> {
    let mut g = vec![0.0; n * n];
    match kind {
        QuantizerKind::Scalar | QuantizerKind::Cubic => {
            for i in 0..n {
                g[i * n + i] = 1.0;
            }
        }
        QuantizerKind::HexA2 => {
            let s3 = 3.0f64.sqrt();
            g.copy_from_slice(&[1.0, 0.0, 0.5, 0.5 * s3]);
        }
        QuantizerKind::D4 => {
            #[rustfmt::skip]
            let rows = [
                -1.0, -1.0, 0.0, 0.0,
                 1.0, -1.0, 0.0, 0.0,
                 0.0,  1.0, -1.0, 0.0,
                 0.0,  0.0, 1.0, -1.0,
            ];
            g.copy_from_slice(&rows);
        }
        QuantizerKind::E8 => {
            #[rustfmt::skip]
            let rows = [
                 2.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0, 0.0,
                -1.0,  1.0,  0.0,  0.0,  0.0,  0.0,  0.0, 0.0,
                 0.0, -1.0,  1.0,  0.0,  0.0,  0.0,  0.0, 0.0,
                 0.0,  0.0, -1.0,  1.0,  0.0,  0.0,  0.0, 0.0,
                 0.0,  0.0,  0.0, -1.0,  1.0,  0.0,  0.0, 0.0,
                 0.0,  0.0,  0.0,  0.0, -1.0,  1.0,  0.0, 0.0,
                 0.0,  0.0,  0.0,  0.0,  0.0, -1.0,  1.0, 0.0,
                 0.5,  0.5,  0.5,  0.5,  0.5,  0.5,  0.5, 0.5,
            ];
            g.copy_from_slice(&rows);
        }
    }
    g
}

/// |det| of a row-major n x n matrix by Gaussian elimination with partial
/// pivoting. n is at most 8 here.
fn abs_determinant(matrix: &[f64], n: usize) -> f64 {
    let mut a = matrix.to_vec();
    let mut det = 1.0f64;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col]
                    .abs()
                    .partial_cmp(&a[j * n + col].abs())
                    .expect("finite")
            })
            .expect("non-empty range");
        if a[pivot * n + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
        }
        det *= a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / a[col * n + col];
            for j in col..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
        }
    }
    det.abs()
}

/// Solves `a * x = rhs` in place for small n.
fn solve_linear(a: &mut [f64], mut rhs: Vec<f64>, n: usize) -> Vec<f64> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col]
                    .abs()
                    .partial_cmp(&a[j * n + col].abs())
                    .expect("finite")
            })
            .expect("non-empty range");
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            rhs.swap(col, pivot);
        }
        for row in col + 1..n {
            let factor = a[row * n + col] / a[col * n + col];
            for j in col..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for j in row + 1..n {
            acc -= a[row * n + j] * x[j];
        }
        x[row] = acc / a[row * n + row];
    }
    x
}

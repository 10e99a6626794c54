//! Experiment configuration: a plain-text TOML file with nested blocks for
//! the lattice, channel, preprocessor, estimators, run parameters, and
//! output options. Every random quantity derives from the single mandatory
//! seed, so a config file pins an experiment completely.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use modlat::channel::{ChannelModel, NoiseLaw, Preprocessor, UserMap};
use modlat::lattice::{Lattice, QuantizerKind};
use modlat::pipeline::{random_message_tuples, MessageAssignment};

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse(toml::de::Error),
    Invalid { field: String, reason: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read config: {e}"),
            ConfigError::Parse(e) => write!(f, "invalid config: {e}"),
            ConfigError::Invalid { field, reason } => {
                write!(f, "invalid config field `{field}`: {reason}")
            }
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment name; used for report headers and default output paths.
    pub name: String,
    pub lattice: LatticeConfig,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub preprocessor: PreprocessorConfig,
    pub estimator: EstimatorConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    /// scalar | cubic | hex_a2 | d4 | e8
    pub kind: String,
    /// Required for `cubic`; implied by the kind otherwise.
    #[serde(default)]
    pub dimension: Option<usize>,
    /// Target per-dimension transmit power P.
    pub power: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    /// additive_sum | clipped_sum | cubic_sum | weighted_sum | multiplicative
    pub structure: String,
    /// gaussian | laplace | uniform | gaussian_mixture
    pub noise_law: String,
    /// Noise variance sigma^2.
    pub noise_power: f64,
    pub num_users: usize,
    #[serde(default)]
    pub clip_level: Option<f64>,
    #[serde(default)]
    pub cubic_coeff: Option<f64>,
    #[serde(default)]
    pub gains: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessorConfig {
    /// One map per user; empty means identity for every user.
    #[serde(default)]
    pub maps: Vec<UserMapConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UserMapConfig {
    Identity,
    Affine { a: f64, b: f64 },
    TanhCompanding { a: f64 },
    CubicPredistortion { kappa: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    /// identity | linear | binned; the first entry is the primary estimator
    /// whose noise profile drives the histogram and independence reports.
    pub kinds: Vec<String>,
    pub training_trials: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_min_per_bin")]
    pub min_per_bin: usize,
}

fn default_bins() -> usize {
    modlat::estimator::DEFAULT_BINS
}

fn default_min_per_bin() -> usize {
    modlat::estimator::DEFAULT_MIN_PER_BIN
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub trials: usize,
    /// Master seed; every substream derives from it. Mandatory — there is
    /// no wall-clock fallback.
    pub seed: u64,
    /// fixed | uniform | grid
    pub message_assignment: String,
    /// For `fixed` without explicit values: how many random tuples to draw.
    #[serde(default)]
    pub num_messages: Option<usize>,
    /// Explicit fixed list: messages[tuple][user][coordinate].
    #[serde(default)]
    pub messages: Option<Vec<Vec<Vec<f64>>>>,
    /// For `grid`.
    #[serde(default)]
    pub grid_points_per_dim: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory reports are written into (overridable from the CLI).
    #[serde(default)]
    pub dir: Option<String>,
    /// Bins per dimension for the noise-entropy histogram; auto when unset.
    #[serde(default)]
    pub entropy_bins: Option<usize>,
    /// nats | bits
    #[serde(default = "default_units")]
    pub units: String,
    /// Also dump every trial as one CSV row.
    #[serde(default)]
    pub raw_dump: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            entropy_bins: None,
            units: default_units(),
            raw_dump: false,
        }
    }
}

fn default_units() -> String {
    "nats".to_string()
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(ConfigError::Parse)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The resolved config as TOML, echoed into report headers.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.build_lattice()?;
        self.build_channel()?;
        self.build_preprocessor()?;
        if self.estimator.kinds.is_empty() {
            return Err(invalid("estimator.kinds", "need at least one estimator"));
        }
        for kind in &self.estimator.kinds {
            if !matches!(kind.as_str(), "identity" | "linear" | "binned") {
                return Err(invalid(
                    "estimator.kinds",
                    format!("unknown estimator `{kind}` (expected identity, linear or binned)"),
                ));
            }
        }
        if self.estimator.training_trials == 0 {
            return Err(invalid("estimator.training_trials", "must be positive"));
        }
        if self.run.trials == 0 {
            return Err(invalid("run.trials", "must be positive"));
        }
        match self.run.message_assignment.as_str() {
            "fixed" => {
                let has_list = self.run.messages.as_ref().is_some_and(|m| !m.is_empty());
                let count = self.run.num_messages.unwrap_or(0);
                if !has_list && count == 0 {
                    return Err(invalid(
                        "run.num_messages",
                        "fixed assignment needs explicit `messages` or a positive `num_messages`",
                    ));
                }
            }
            "uniform" => {}
            "grid" => {
                if self.run.grid_points_per_dim.unwrap_or(0) == 0 {
                    return Err(invalid(
                        "run.grid_points_per_dim",
                        "grid assignment needs a positive point count",
                    ));
                }
            }
            other => {
                return Err(invalid(
                    "run.message_assignment",
                    format!("unknown rule `{other}` (expected fixed, uniform or grid)"),
                ));
            }
        }
        if !matches!(self.output.units.as_str(), "nats" | "bits") {
            return Err(invalid(
                "output.units",
                format!("unknown units `{}` (expected nats or bits)", self.output.units),
            ));
        }
        if let Some(bins) = self.output.entropy_bins {
            if bins < 2 {
                return Err(invalid("output.entropy_bins", "need at least 2 bins"));
            }
        }
        Ok(())
    }

    /// Builds the lattice scaled to the configured power.
    pub fn build_lattice(&self) -> Result<Lattice, ConfigError> {
        let kind = match self.lattice.kind.as_str() {
            "scalar" => QuantizerKind::Scalar,
            "cubic" => QuantizerKind::Cubic,
            "hex_a2" => QuantizerKind::HexA2,
            "d4" => QuantizerKind::D4,
            "e8" => QuantizerKind::E8,
            other => {
                return Err(invalid(
                    "lattice.kind",
                    format!("unknown kind `{other}` (expected scalar, cubic, hex_a2, d4 or e8)"),
                ))
            }
        };
        let dimension = match (kind.required_dimension(), self.lattice.dimension) {
            (Some(required), Some(given)) if required != given => {
                return Err(invalid(
                    "lattice.dimension",
                    format!("{} requires dimension {required}, got {given}", self.lattice.kind),
                ))
            }
            (Some(required), _) => required,
            (None, Some(given)) => given,
            (None, None) => {
                return Err(invalid("lattice.dimension", "cubic lattices need a dimension"))
            }
        };
        let base = Lattice::from_kind(kind, dimension, 1.0)
            .map_err(|e| invalid("lattice", e.to_string()))?;
        base.scale_to_power(self.lattice.power)
            .map_err(|e| invalid("lattice.power", e.to_string()))
    }

    pub fn build_channel(&self) -> Result<ChannelModel, ConfigError> {
        let law = match self.channel.noise_law.as_str() {
            "gaussian" => NoiseLaw::Gaussian,
            "laplace" => NoiseLaw::Laplace,
            "uniform" => NoiseLaw::Uniform,
            "gaussian_mixture" => NoiseLaw::GaussianMixture,
            other => {
                return Err(invalid(
                    "channel.noise_law",
                    format!(
                        "unknown law `{other}` (expected gaussian, laplace, uniform or gaussian_mixture)"
                    ),
                ))
            }
        };
        let k = self.channel.num_users;
        let sigma2 = self.channel.noise_power;
        let model = match self.channel.structure.as_str() {
            "additive_sum" => ChannelModel::additive(k, law, sigma2),
            "clipped_sum" => {
                let c = self.channel.clip_level.ok_or_else(|| {
                    invalid("channel.clip_level", "clipped_sum requires a clip level")
                })?;
                ChannelModel::clipped(k, law, sigma2, c)
            }
            "cubic_sum" => {
                let kappa = self.channel.cubic_coeff.ok_or_else(|| {
                    invalid("channel.cubic_coeff", "cubic_sum requires a cubic coefficient")
                })?;
                ChannelModel::cubic(k, law, sigma2, kappa)
            }
            "weighted_sum" => {
                let gains = self.channel.gains.clone().ok_or_else(|| {
                    invalid("channel.gains", "weighted_sum requires per-user gains")
                })?;
                ChannelModel::weighted(k, law, sigma2, gains)
            }
            "multiplicative" => ChannelModel::multiplicative(k, law, sigma2),
            other => {
                return Err(invalid(
                    "channel.structure",
                    format!("unknown structure `{other}`"),
                ))
            }
        };
        model.map_err(|e| invalid("channel", e.to_string()))
    }

    pub fn build_preprocessor(&self) -> Result<Preprocessor, ConfigError> {
        if self.preprocessor.maps.is_empty() {
            return Ok(Preprocessor::identity(self.channel.num_users));
        }
        if self.preprocessor.maps.len() != self.channel.num_users {
            return Err(invalid(
                "preprocessor.maps",
                format!(
                    "need one map per user ({} users, {} maps)",
                    self.channel.num_users,
                    self.preprocessor.maps.len()
                ),
            ));
        }
        let maps = self
            .preprocessor
            .maps
            .iter()
            .map(|m| match *m {
                UserMapConfig::Identity => UserMap::Identity,
                UserMapConfig::Affine { a, b } => UserMap::Affine { a, b },
                UserMapConfig::TanhCompanding { a } => UserMap::TanhCompanding { a },
                UserMapConfig::CubicPredistortion { kappa } => {
                    UserMap::CubicPredistortion { kappa }
                }
            })
            .collect();
        Ok(Preprocessor::new(maps))
    }

    /// Builds the per-trial message rule. Fixed lists without explicit
    /// values draw `num_messages` tuples from the seed's message substream.
    pub fn build_assignment(&self, lattice: &Lattice) -> Result<MessageAssignment, ConfigError> {
        match self.run.message_assignment.as_str() {
            "fixed" => {
                if let Some(messages) = &self.run.messages {
                    if !messages.is_empty() {
                        return Ok(MessageAssignment::FixedList(messages.clone()));
                    }
                }
                let count = self.run.num_messages.unwrap_or(0);
                Ok(MessageAssignment::FixedList(random_message_tuples(
                    lattice,
                    self.channel.num_users,
                    count,
                    self.run.seed,
                )))
            }
            "uniform" => Ok(MessageAssignment::UniformRandom),
            "grid" => Ok(MessageAssignment::Grid {
                points_per_dim: self.run.grid_points_per_dim.unwrap_or(0),
            }),
            other => Err(invalid(
                "run.message_assignment",
                format!("unknown rule `{other}`"),
            )),
        }
    }

    /// Whether entropy and rate are reported in bits instead of nats.
    pub fn bits(&self) -> bool {
        self.output.units == "bits"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        name = "t"
        [lattice]
        kind = "scalar"
        power = 1.0
        [channel]
        structure = "additive_sum"
        noise_law = "gaussian"
        noise_power = 1.0
        num_users = 2
        [estimator]
        kinds = ["linear"]
        training_trials = 10000
        [run]
        trials = 1000
        seed = 7
        message_assignment = "uniform"
    "#;

    #[test]
    fn minimal_config_parses_and_builds() {
        let cfg = ExperimentConfig::from_str(MINIMAL).unwrap();
        let lat = cfg.build_lattice().unwrap();
        assert_eq!(lat.dimension(), 1);
        assert!((lat.second_moment() - 1.0).abs() < 1e-12);
        assert!(cfg.build_channel().is_ok());
        assert!(!cfg.bits());
    }

    #[test]
    fn missing_lattice_kind_is_named_in_error() {
        let broken = MINIMAL.replace("kind = \"scalar\"", "");
        let err = ExperimentConfig::from_str(&broken).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("kind"), "error does not name the field: {msg}");
    }

    #[test]
    fn unknown_structure_is_rejected() {
        let broken = MINIMAL.replace("additive_sum", "if_only");
        let err = ExperimentConfig::from_str(&broken).unwrap_err();
        assert!(err.to_string().contains("channel.structure"));
    }

    #[test]
    fn clipped_requires_clip_level() {
        let broken = MINIMAL.replace("additive_sum", "clipped_sum");
        let err = ExperimentConfig::from_str(&broken).unwrap_err();
        assert!(err.to_string().contains("clip_level"));
    }

    #[test]
    fn fixed_assignment_needs_messages() {
        let broken = MINIMAL.replace("uniform", "fixed");
        let err = ExperimentConfig::from_str(&broken).unwrap_err();
        assert!(err.to_string().contains("num_messages"));
    }

    #[test]
    fn cubic_lattice_needs_dimension() {
        let broken = MINIMAL.replace("kind = \"scalar\"", "kind = \"cubic\"");
        let err = ExperimentConfig::from_str(&broken).unwrap_err();
        assert!(err.to_string().contains("lattice.dimension"));
    }

    #[test]
    fn units_are_validated() {
        let with_units = format!("{MINIMAL}\n[output]\nunits = \"furlongs\"\n");
        let err = ExperimentConfig::from_str(&with_units).unwrap_err();
        assert!(err.to_string().contains("output.units"));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ExperimentConfig::from_str(MINIMAL).unwrap();
        let echoed = cfg.to_toml();
        let again = ExperimentConfig::from_str(&echoed).unwrap();
        assert_eq!(again.name, cfg.name);
        assert_eq!(again.run.seed, cfg.run.seed);
    }
}

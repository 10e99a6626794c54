//! Experiment orchestration: fit the configured estimators on a training
//! run, execute the measurement trials once per estimator on identical
//! randomness, and reduce everything to the report quantities.

use anyhow::{bail, Context, Result};

use modlat::analysis::{
    default_bins_per_dim, independence_report, EntropyEstimate, IndependenceReport, NoiseProfile,
    ProductHistogram, RateEstimate,
};
use modlat::estimator::{
    evaluate_mse, fit_binned_conditional_mean, fit_linear_mmse, Estimator, MseEstimate,
};
use modlat::pipeline::{
    collect_noise, identity_pass_rate, induced_channel_residual, records_to_pairs, run_trials,
    transmitted_power, TransformConfig, TrialRecord,
};

use crate::config::ExperimentConfig;

/// Identity-check tolerance, per coordinate.
pub const IDENTITY_TOL: f64 = 1e-9;

/// Everything one estimator produced on the shared measurement run.
#[derive(Debug, Clone)]
pub struct EstimatorOutcome {
    pub name: String,
    /// Linear coefficients when the estimator is (or falls back to) affine.
    pub linear_coefficients: Option<(f64, f64)>,
    pub mse: MseEstimate,
    pub entropy_folded: EntropyEstimate,
    pub entropy_raw: EntropyEstimate,
    pub rate: RateEstimate,
    pub identity_pass_rate: f64,
    pub identity_max_residual: f64,
}

/// Full result of one experiment run.
#[derive(Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub lattice_name: String,
    pub lattice_scale: f64,
    pub lattice_volume: f64,
    pub target_power: f64,
    /// Per-user empirical transmit power (mean, standard error).
    pub power_per_user: Vec<(f64, f64)>,
    pub outcomes: Vec<EstimatorOutcome>,
    /// Message-independence tests on the primary estimator's noise, when
    /// the assignment produced at least two sufficiently large groups.
    pub independence: Option<IndependenceReport>,
    /// Marginal folded-noise histograms of the primary estimator, one per
    /// coordinate: (coordinate, edges, counts).
    pub histograms: Vec<(usize, Vec<f64>, Vec<u64>)>,
    /// Plain-text tables of the fitted estimators, by name.
    pub estimator_tables: Vec<(String, String)>,
    /// Raw trial records of the primary estimator when a dump is requested.
    pub raw_records: Option<Vec<TrialRecord>>,
}

/// Runs the full experiment described by `config`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let lattice = config.build_lattice()?;
    let channel = config.build_channel()?;
    let preprocessor = config.build_preprocessor()?;
    let assignment = config.build_assignment(&lattice)?;
    let seed = config.run.seed;

    // Training run on its own substream; measurement trials use a different
    // label, so MSE and entropy reports stay out-of-sample.
    let train = modlat::pipeline::generate_training_set(
        &lattice,
        &channel,
        &preprocessor,
        config.estimator.training_trials,
        seed,
    )
    .context("training run failed")?;

    let mut estimators: Vec<(String, Estimator)> = Vec::new();
    for kind in &config.estimator.kinds {
        let est = match kind.as_str() {
            "identity" => Estimator::Identity,
            "linear" => fit_linear_mmse(&train).context("linear MMSE fit failed")?,
            "binned" => {
                fit_binned_conditional_mean(&train, config.estimator.bins, config.estimator.min_per_bin)
                    .context("binned conditional-mean fit failed")?
            }
            other => bail!("unknown estimator kind `{other}`"),
        };
        estimators.push((kind.clone(), est));
    }

    let base = TransformConfig::new(lattice, channel, preprocessor, Estimator::Identity)?;
    let n = base.block_dimension();
    let entropy_bins = config
        .output
        .entropy_bins
        .unwrap_or_else(|| default_bins_per_dim(n, config.run.trials));

    let mut outcomes = Vec::new();
    let mut power_per_user = Vec::new();
    let mut independence = None;
    let mut histograms = Vec::new();
    let mut raw_records = None;

    for (index, (name, est)) in estimators.iter().enumerate() {
        let cfg = base.with_estimator(est.clone());
        let records = run_trials(&cfg, &assignment, config.run.trials, seed)
            .with_context(|| format!("measurement run for `{name}` failed"))?;

        let mut max_residual = 0.0f64;
        for record in &records {
            max_residual = max_residual.max(induced_channel_residual(&cfg, record)?);
        }
        let pass_rate = identity_pass_rate(&cfg, &records, IDENTITY_TOL)?;

        let noise = collect_noise(&records)?;
        let mse = evaluate_mse(est, &records_to_pairs(&records));

        let linear_coefficients = match est {
            Estimator::Linear(c) => Some((c.alpha, c.beta)),
            Estimator::BinnedConditionalMean(b) => {
                Some((b.fallback().alpha, b.fallback().beta))
            }
            Estimator::Identity => None,
        };

        if index == 0 {
            power_per_user = transmitted_power(&records)
                .iter()
                .map(|m| (m.mean(), m.std_error()))
                .collect();
            independence = match independence_report(&noise.groups, cfg.lattice(), 0.01) {
                Ok(report) => Some(report),
                Err(modlat::analysis::AnalysisError::TooFewGroups { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            histograms = marginal_histograms(&noise.pooled_folded, cfg.lattice(), entropy_bins)?;
            if config.output.raw_dump {
                raw_records = Some(records);
            }
        }

        let profile = NoiseProfile::build(
            cfg.lattice(),
            noise.pooled_folded,
            noise.pooled_raw,
            mse,
            entropy_bins,
        )?;
        outcomes.push(EstimatorOutcome {
            name: name.clone(),
            linear_coefficients,
            mse: profile.mse,
            entropy_folded: profile.entropy_folded,
            entropy_raw: profile.entropy_raw,
            rate: profile.rate,
            identity_pass_rate: pass_rate,
            identity_max_residual: max_residual,
        });
    }

    let estimator_tables = estimators
        .iter()
        .map(|(name, est)| (name.clone(), est.to_plain_table()))
        .collect();

    Ok(ExperimentResult {
        config: config.clone(),
        lattice_name: base.lattice().name().to_string(),
        lattice_scale: base.lattice().scale(),
        lattice_volume: base.lattice().volume(),
        target_power: config.lattice.power,
        power_per_user,
        outcomes,
        independence,
        histograms,
        estimator_tables,
        raw_records,
    })
}

fn marginal_histograms(
    folded: &[Vec<f64>],
    lattice: &modlat::lattice::Lattice,
    bins: usize,
) -> Result<Vec<(usize, Vec<f64>, Vec<u64>)>> {
    let n = lattice.dimension();
    let hw = lattice.coordinate_halfwidth();
    let lo = vec![-hw; n];
    let hi = vec![hw; n];
    // Scalar histograms stay at the configured resolution; joint binnings in
    // higher dimension are coarse, so rebin marginals at 64 cells.
    let marginal_bins = if n == 1 { bins } else { 64 };
    let mut out = Vec::with_capacity(n);
    for d in 0..n {
        let coords: Vec<Vec<f64>> = folded.iter().map(|x| vec![x[d]]).collect();
        let hist =
            ProductHistogram::from_samples(&lo[d..=d], &hi[d..=d], marginal_bins, &coords)?;
        out.push((d, hist.edges(0), hist.counts().to_vec()));
    }
    Ok(out)
}

/// One row of a parameter sweep.
#[derive(Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub result: ExperimentResult,
}

/// Runs one experiment per value of a dotted numeric config path (e.g.
/// `channel.noise_power`), all from the same master seed. A single-value
/// sweep is identical to `run_experiment` on the modified config.
pub fn sweep(base_text: &str, param: &str, values: &[f64]) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let text = set_numeric_path(base_text, param, value)?;
        let config = ExperimentConfig::from_str(&text)
            .with_context(|| format!("config invalid at {param} = {value}"))?;
        let result =
            run_experiment(&config).with_context(|| format!("sweep point {param} = {value}"))?;
        points.push(SweepPoint { value, result });
    }
    Ok(points)
}

/// Sets a dotted path in a TOML document to a numeric value, preserving the
/// integer/float type of the existing entry.
pub fn set_numeric_path(text: &str, path: &str, value: f64) -> Result<String> {
    let mut doc: toml::Value = toml::from_str(text).context("invalid TOML config")?;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.is_empty() {
        bail!("empty parameter path");
    }
    let mut cursor = &mut doc;
    for segment in &segments[..segments.len() - 1] {
        cursor = cursor
            .get_mut(segment)
            .with_context(|| format!("unknown parameter path `{path}` (missing `{segment}`)"))?;
    }
    let leaf = segments[segments.len() - 1];
    let slot = cursor
        .get_mut(leaf)
        .with_context(|| format!("unknown parameter path `{path}` (missing `{leaf}`)"))?;
    *slot = match slot {
        toml::Value::Integer(_) if value.fract() == 0.0 => {
            toml::Value::Integer(value as i64)
        }
        toml::Value::Integer(_) | toml::Value::Float(_) => toml::Value::Float(value),
        _ => bail!("parameter `{path}` is not numeric"),
    };
    Ok(toml::to_string_pretty(&doc).expect("document serializes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        name = "sweep-test"
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
        training_trials = 20000
        [run]
        trials = 5000
        seed = 3
        message_assignment = "uniform"
    "#;

    #[test]
    fn numeric_path_set_preserves_types() {
        let text = set_numeric_path(BASE, "channel.noise_power", 2.5).unwrap();
        assert!(text.contains("noise_power = 2.5"));
        let text = set_numeric_path(BASE, "run.trials", 100.0).unwrap();
        assert!(text.contains("trials = 100"));
    }

    #[test]
    fn unknown_path_is_an_error() {
        let err = set_numeric_path(BASE, "channel.does_not_exist", 1.0).unwrap_err();
        assert!(err.to_string().contains("unknown parameter path"));
        let err = set_numeric_path(BASE, "channel.structure", 1.0).unwrap_err();
        assert!(err.to_string().contains("not numeric"));
    }

    #[test]
    fn single_value_sweep_matches_run_experiment() {
        let points = sweep(BASE, "channel.noise_power", &[1.0]).unwrap();
        assert_eq!(points.len(), 1);
        let config = ExperimentConfig::from_str(BASE).unwrap();
        let direct = run_experiment(&config).unwrap();
        let swept = &points[0].result;
        assert_eq!(
            direct.outcomes[0].mse.mse,
            swept.outcomes[0].mse.mse,
            "sweep point must be bit-identical to a direct run"
        );
        assert_eq!(
            direct.outcomes[0].entropy_folded.nats_per_dim,
            swept.outcomes[0].entropy_folded.nats_per_dim
        );
    }
}

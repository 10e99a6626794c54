//! Report rendering: a key-value summary with the effective config echoed in
//! the header, CSV tables for estimator comparisons and noise histograms,
//! and the optional raw trial dump. All numbers format through one helper so
//! identical runs yield byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::experiment::{ExperimentResult, SweepPoint};

const LN_2: f64 = std::f64::consts::LN_2;

/// Shortest-roundtrip float formatting; deterministic per bit pattern.
fn num(x: f64) -> String {
    if x == 0.0 {
        // Avoid "-0".
        "0".to_string()
    } else {
        format!("{x}")
    }
}

fn info_unit(nats: f64, bits: bool) -> f64 {
    if bits {
        nats / LN_2
    } else {
        nats
    }
}

/// Files written by one run.
#[derive(Debug, Clone)]
pub struct WrittenReports {
    pub summary: PathBuf,
    pub estimators: PathBuf,
    pub histogram: PathBuf,
    pub trials: Option<PathBuf>,
}

/// Renders the key-value summary text.
pub fn render_summary(result: &ExperimentResult, bits: bool) -> String {
    let unit_name = if bits { "bits" } else { "nats" };
    let mut out = String::new();
    let _ = writeln!(out, "# experiment summary: {}", result.config.name);
    let _ = writeln!(out, "# effective config:");
    for line in result.config.to_toml().lines() {
        let _ = writeln!(out, "#   {line}");
    }
    let _ = writeln!(out, "units = {unit_name}");
    let _ = writeln!(out, "lattice.name = {}", result.lattice_name);
    let _ = writeln!(out, "lattice.scale = {}", num(result.lattice_scale));
    let _ = writeln!(out, "lattice.volume = {}", num(result.lattice_volume));
    let _ = writeln!(out, "lattice.target_power = {}", num(result.target_power));
    for (user, (mean, se)) in result.power_per_user.iter().enumerate() {
        let _ = writeln!(out, "power.user{user}.mean = {}", num(*mean));
        let _ = writeln!(out, "power.user{user}.std_error = {}", num(*se));
    }
    for o in &result.outcomes {
        let prefix = format!("estimator.{}", o.name);
        if let Some((alpha, beta)) = o.linear_coefficients {
            let _ = writeln!(out, "{prefix}.alpha = {}", num(alpha));
            let _ = writeln!(out, "{prefix}.beta = {}", num(beta));
        }
        let _ = writeln!(out, "{prefix}.mse = {}", num(o.mse.mse));
        let _ = writeln!(out, "{prefix}.mse_std_error = {}", num(o.mse.std_error));
        let _ = writeln!(
            out,
            "{prefix}.entropy_folded = {}",
            num(info_unit(o.entropy_folded.nats_per_dim, bits))
        );
        let _ = writeln!(
            out,
            "{prefix}.entropy_folded_sensitivity = {}",
            num(info_unit(o.entropy_folded.sensitivity_delta, bits))
        );
        let _ = writeln!(
            out,
            "{prefix}.entropy_folded_resolution_limited = {}",
            o.entropy_folded.resolution_limited
        );
        let _ = writeln!(
            out,
            "{prefix}.entropy_raw = {}",
            num(info_unit(o.entropy_raw.nats_per_dim, bits))
        );
        let _ = writeln!(
            out,
            "{prefix}.rate = {}",
            num(info_unit(o.rate.nats_per_dim, bits))
        );
        let _ = writeln!(
            out,
            "{prefix}.rate_uncertainty = {}",
            num(info_unit(o.rate.uncertainty, bits))
        );
        let _ = writeln!(out, "{prefix}.rate_clamped = {}", o.rate.clamped);
        let _ = writeln!(
            out,
            "{prefix}.identity_pass_rate = {}",
            num(o.identity_pass_rate)
        );
        let _ = writeln!(
            out,
            "{prefix}.identity_max_residual = {}",
            num(o.identity_max_residual)
        );
    }
    match &result.independence {
        Some(report) => {
            let _ = writeln!(out, "independence.groups = {}", report.num_groups);
            let _ = writeln!(out, "independence.pairs = {}", report.num_pairs);
            let _ = writeln!(out, "independence.accepted = {}", report.accepted);
            let _ = writeln!(
                out,
                "independence.acceptance_fraction = {}",
                num(report.acceptance_fraction)
            );
            let _ = writeln!(out, "independence.significance = {}", num(report.significance));
            let _ = writeln!(out, "independence.worst_p_value = {}", num(report.worst_p_value));
            let _ = writeln!(out, "independence.test = {}", report.test_kind);
        }
        None => {
            let _ = writeln!(out, "independence.skipped = no message groups large enough");
        }
    }
    out
}

/// Renders the estimator comparison CSV.
pub fn render_estimator_table(result: &ExperimentResult, bits: bool) -> String {
    let mut out = String::new();
    out.push_str(
        "estimator,alpha,beta,mse,mse_std_error,entropy_folded,entropy_sensitivity,\
         entropy_raw,rate,rate_uncertainty,rate_clamped,identity_pass_rate\n",
    );
    for o in &result.outcomes {
        let (alpha, beta) = match o.linear_coefficients {
            Some((a, b)) => (num(a), num(b)),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            o.name,
            alpha,
            beta,
            num(o.mse.mse),
            num(o.mse.std_error),
            num(info_unit(o.entropy_folded.nats_per_dim, bits)),
            num(info_unit(o.entropy_folded.sensitivity_delta, bits)),
            num(info_unit(o.entropy_raw.nats_per_dim, bits)),
            num(info_unit(o.rate.nats_per_dim, bits)),
            num(info_unit(o.rate.uncertainty, bits)),
            o.rate.clamped,
            num(o.identity_pass_rate),
        );
    }
    out
}

/// Renders the folded-noise marginal histograms CSV.
pub fn render_histogram(result: &ExperimentResult) -> String {
    let mut out = String::new();
    out.push_str("coordinate,bin_lo,bin_hi,count,density\n");
    for (coord, edges, counts) in &result.histograms {
        let total: u64 = counts.iter().sum();
        for (i, &c) in counts.iter().enumerate() {
            let width = edges[i + 1] - edges[i];
            let density = c as f64 / (total as f64 * width);
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                coord,
                num(edges[i]),
                num(edges[i + 1]),
                c,
                num(density)
            );
        }
    }
    out
}

/// Renders the raw trial dump CSV. Column order per trial: messages
/// (user-major, coordinate-minor), dithers, transmitted signals, channel
/// output, estimate, receiver output, effective noise, folded noise.
pub fn render_trial_dump(result: &ExperimentResult) -> Option<String> {
    let records = result.raw_records.as_ref()?;
    let first = records.first()?;
    let users = first.messages.len();
    let n = first.channel_output.len();
    let mut out = String::new();
    out.push_str("trial");
    for label in ["v", "u", "x"] {
        for i in 0..users {
            for c in 0..n {
                let _ = write!(out, ",{label}{i}_c{c}");
            }
        }
    }
    for label in ["y", "shat", "yprime", "neff", "nfold"] {
        for c in 0..n {
            let _ = write!(out, ",{label}_c{c}");
        }
    }
    out.push('\n');
    for (t, r) in records.iter().enumerate() {
        let _ = write!(out, "{t}");
        for group in [&r.messages, &r.dithers, &r.transmitted] {
            for v in group.iter() {
                for &x in v {
                    let _ = write!(out, ",{}", num(x));
                }
            }
        }
        for vector in [
            &r.channel_output,
            &r.estimate,
            &r.receiver_output,
            &r.effective_noise,
            &r.folded_noise,
        ] {
            for &x in vector.iter() {
                let _ = write!(out, ",{}", num(x));
            }
        }
        out.push('\n');
    }
    Some(out)
}

/// Renders the combined sweep table.
pub fn render_sweep_table(param: &str, points: &[SweepPoint], bits: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{param},estimator,mse,mse_std_error,entropy_folded,rate,rate_uncertainty,rate_clamped"
    );
    for point in points {
        for o in &point.result.outcomes {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                num(point.value),
                o.name,
                num(o.mse.mse),
                num(o.mse.std_error),
                num(info_unit(o.entropy_folded.nats_per_dim, bits)),
                num(info_unit(o.rate.nats_per_dim, bits)),
                num(info_unit(o.rate.uncertainty, bits)),
                o.rate.clamped,
            );
        }
    }
    out
}

/// Writes the full report set for one run.
pub fn write_reports(result: &ExperimentResult, dir: &Path, bits: bool) -> Result<WrittenReports> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let summary = dir.join("summary.txt");
    fs::write(&summary, render_summary(result, bits))?;
    let estimators = dir.join("estimators.csv");
    fs::write(&estimators, render_estimator_table(result, bits))?;
    let histogram = dir.join("histogram.csv");
    fs::write(&histogram, render_histogram(result))?;
    for (name, table) in &result.estimator_tables {
        fs::write(dir.join(format!("estimator_{name}.txt")), table)?;
    }
    let trials = match render_trial_dump(result) {
        Some(text) => {
            let path = dir.join("trials.csv");
            fs::write(&path, text)?;
            Some(path)
        }
        None => None,
    };
    Ok(WrittenReports {
        summary,
        estimators,
        histogram,
        trials,
    })
}

/// Writes the sweep table next to per-point reports.
pub fn write_sweep_reports(
    param: &str,
    points: &[SweepPoint],
    dir: &Path,
    bits: bool,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    for (i, point) in points.iter().enumerate() {
        write_reports(&point.result, &dir.join(format!("point_{i}")), bits)?;
    }
    let table = dir.join("sweep.csv");
    fs::write(&table, render_sweep_table(param, points, bits))?;
    Ok(table)
}

use std::path::Path;

use emucal::calibration::{PosteriorChain, PosteriorSummary};
use emucal::emulator::{FittedEmulator, Z95};

use crate::calibrate::{RunManifest, BIAS_FILE, CHAIN_FILE, CODE_FILE, RESIDUALS_FILE, SUMMARY_FILE};
use crate::io::{fmt_f64, read_text, write_csv, Table};
use crate::{CliError, CliResult};

pub const REPORT_DIR: &str = "report";

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Equal-width bins over the sample range; counts sum to the sample size.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in values {
        counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (lo + k as f64 * width, lo + (k + 1) as f64 * width, c))
        .collect()
}

fn band(mean: f64, mse: f64) -> [String; 4] {
    let sd = mse.sqrt();
    [
        fmt_f64(mean),
        fmt_f64(sd),
        fmt_f64(mean - Z95 * sd),
        fmt_f64(mean + Z95 * sd),
    ]
}

fn load_emulators(path: &Path) -> CliResult<Vec<FittedEmulator>> {
    let docs: Vec<serde_json::Value> = serde_json::from_str(&read_text(path)?).map_err(|e| data_err(path, e))?;
    docs.iter()
        .map(|d| FittedEmulator::from_json(&d.to_string()).map_err(|e| data_err(path, e)))
        .collect()
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn curve(em: &FittedEmulator, xs: &[f64], theta: &[f64]) -> CliResult<Vec<Vec<String>>> {
    let points: Vec<Vec<f64>> = xs.iter().map(|x| [&[*x], theta].concat()).collect();
    let p = em.predict_batch(&points, false)?;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut row = vec![fmt_f64(*x)];
            row.extend(band(p.means[i], p.mse[i]));
            row
        })
        .collect())
}

/// Writes plot-ready tables into `<run>/report/`: posterior histograms, the
/// trace, predictive-vs-observed at the validation sites, and emulator curves
/// with 95% bands when there is a single design variable.
pub fn report(run: &Path, bins: usize, grid_points: usize) -> CliResult<()> {
    if bins == 0 || grid_points < 2 {
        return Err(CliError::Config("need at least one bin and two grid points".into()));
    }
    let manifest = RunManifest::read(run)?;
    let out = run.join(REPORT_DIR);
    let summary_path = run.join(SUMMARY_FILE);
    let summary: PosteriorSummary =
        serde_json::from_str(&read_text(&summary_path)?).map_err(|e| data_err(&summary_path, e))?;
    let chain_path = run.join(CHAIN_FILE);
    let file = std::fs::File::open(&chain_path).map_err(|e| data_err(&chain_path, e))?;
    let chain = PosteriorChain::read_csv(file, &summary).map_err(|e| data_err(&chain_path, e))?;

    let hist_header = ["bin_lower", "bin_upper", "count"].map(String::from);
    for (k, name) in chain.names().iter().enumerate() {
        let rows: Vec<Vec<String>> = histogram(&chain.component(k), bins)
            .into_iter()
            .map(|(a, b, c)| vec![fmt_f64(a), fmt_f64(b), c.to_string()])
            .collect();
        write_csv(&out.join(format!("histogram_{name}.csv")), &hist_header, &rows)?;
    }

    let trace = Table::read(&chain_path)?;
    write_csv(&out.join("trace.csv"), &trace.headers, &trace.rows)?;

    let residuals = Table::read(&run.join(RESIDUALS_FILE))?;
    let predicted = residuals.numeric("predicted")?;
    let mse = residuals.numeric("mse")?;
    let actual = residuals.numeric("actual")?;
    let qoi = residuals.index("qoi")?;
    let mut header = manifest.x_names.clone();
    header.extend(["qoi", "predicted", "sd", "lower", "upper", "observed"].map(String::from));
    let x_cols = manifest
        .x_names
        .iter()
        .map(|n| residuals.index(n))
        .collect::<CliResult<Vec<_>>>()?;
    let rows: Vec<Vec<String>> = (0..predicted.len())
        .map(|i| {
            let mut row: Vec<String> = x_cols.iter().map(|c| residuals.rows[i][*c].clone()).collect();
            row.push(residuals.rows[i][qoi].clone());
            row.extend(band(predicted[i], mse[i]));
            row.push(fmt_f64(actual[i]));
            row
        })
        .collect();
    write_csv(&out.join("predictive_vs_observed.csv"), &header, &rows)?;

    if manifest.x_names.len() == 1 {
        let curve_header = [manifest.x_names[0].as_str(), "mean", "sd", "lower", "upper"].map(String::from);
        let theta = chain.mean();
        for (file, with_theta, prefix) in [(BIAS_FILE, false, "gp_bias"), (CODE_FILE, true, "gp_code")] {
            if manifest.artifact(prefix).is_none() {
                continue;
            }
            for (em, q) in load_emulators(&run.join(file))?.iter().zip(&manifest.qoi_names) {
                let s = em.training().input_scaling();
                let xs = grid(s.lower[0], s.upper[0], grid_points);
                let rows = curve(em, &xs, if with_theta { &theta } else { &[] })?;
                write_csv(&out.join(format!("{prefix}_{q}.csv")), &curve_header, &rows)?;
            }
        }
    } else {
        log::info!("emulator curves are only written for a single design variable");
    }
    Ok(())
}

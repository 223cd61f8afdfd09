use std::path::{Path, PathBuf};

use emucal::calibration::{EmulatorSettings, Estimator};
use emucal::diagnostics::{q2_loocv, LoocvMode, ValidationReport};
use emucal::emulator::{Estimation, FitOptions, FittedEmulator, Hyperparameters, TrainingSet, TrendSpec, Z95};
use emucal::kernel::KernelKind;
use serde::Serialize;

use crate::io::{fmt_f64, read_text, write_atomic, write_csv, write_json, Table};
use crate::{CliError, CliResult, MethodArg};

#[derive(Debug, Clone)]
pub struct FitArgs {
    pub training: PathBuf,
    pub output: String,
    pub kernel: KernelKind,
    pub trend: TrendSpec,
    pub method: MethodArg,
    pub folds: usize,
    pub seed: u64,
    pub restarts: usize,
}

#[derive(Serialize)]
struct FitReport<'a> {
    training: String,
    output: &'a str,
    inputs: &'a [String],
    estimation: &'a Estimation,
    hyperparameters: &'a Hyperparameters,
    physical_length_scales: Vec<f64>,
    q2_loocv: Option<f64>,
    loocv: ValidationReport,
}

/// `<out>` with its extension replaced by `report.json`.
pub fn report_path(out: &Path) -> PathBuf {
    out.with_extension("report.json")
}

/// Fits an emulator to every non-output column of the training CSV, writes
/// its JSON and a leave-one-out report, and prints the LOOCV Q2.
pub fn fit(args: &FitArgs, out: &Path) -> CliResult<()> {
    let table = Table::read(&args.training)?;
    let inputs: Vec<String> = table.headers.iter().filter(|h| **h != args.output).cloned().collect();
    if inputs.len() == table.headers.len() {
        return Err(CliError::Data(format!(
            "{}: missing column `{}`",
            args.training.display(),
            args.output
        )));
    }
    if inputs.is_empty() {
        return Err(CliError::Data(format!("{}: no input columns", args.training.display())));
    }
    let x = table.matrix(&inputs)?;
    let y = table.numeric(&args.output)?;
    let training = TrainingSet::new(x, y)?.with_names(inputs.clone(), args.output.clone())?;
    let settings = EmulatorSettings {
        kernel: args.kernel,
        trend: args.trend.clone(),
        estimator: match args.method {
            MethodArg::Mle => Estimator::Mle,
            MethodArg::Cv => Estimator::Cv { folds: args.folds },
        },
        fit: FitOptions {
            seed: args.seed,
            n_restarts: args.restarts,
            ..FitOptions::default()
        },
    };
    let emulator = settings.fit(&training)?;
    write_atomic(out, emulator.to_json()?.as_bytes())?;
    let q2 = q2_loocv(&emulator, &LoocvMode::Fixed).ok();
    let report = FitReport {
        training: args.training.display().to_string(),
        output: &args.output,
        inputs: &inputs,
        estimation: emulator.estimation(),
        hyperparameters: emulator.hyperparameters(),
        physical_length_scales: emulator.physical_length_scales(),
        q2_loocv: q2,
        loocv: ValidationReport::loocv(&emulator, &LoocvMode::Fixed)?,
    };
    write_json(&report_path(out), &report)?;
    match q2 {
        Some(q) => println!("q2_loocv = {q:.6}"),
        None => println!("q2_loocv undefined (constant outputs)"),
    }
    Ok(())
}

/// Writes `<inputs…>,mean,sd,lower,upper,extrapolated` for every row of `points`,
/// with `lower/upper = mean ∓ 1.96·sd`.
pub fn predict(emulator: &Path, points: &Path, out: &Path) -> CliResult<()> {
    let em = FittedEmulator::from_json(&read_text(emulator)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", emulator.display())))?;
    let names = em.training().input_names().to_vec();
    let table = Table::read(points)?;
    let x = table.matrix(&names)?;
    let pred = em.predict_batch(&x, false)?;
    let mut header = names.clone();
    header.extend(["mean", "sd", "lower", "upper", "extrapolated"].map(String::from));
    let rows: Vec<Vec<String>> = x
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let sd = pred.mse[i].sqrt();
            let mean = pred.means[i];
            let mut row: Vec<String> = p.iter().map(|v| fmt_f64(*v)).collect();
            row.extend([
                fmt_f64(mean),
                fmt_f64(sd),
                fmt_f64(mean - Z95 * sd),
                fmt_f64(mean + Z95 * sd),
            ]);
            row.push(pred.extrapolated[i].to_string());
            row
        })
        .collect();
    write_csv(out, &header, &rows)
}

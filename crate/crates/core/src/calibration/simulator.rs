//! Computer models `y^M(x, θ)` that the calibration workflow can call.

use std::fmt;
use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Environment variable holding the number of concurrent subprocess workers.
pub const WORKERS_ENV: &str = "EMUCAL_WORKERS";

/// One simulator input row: design variables then calibration parameters.
pub type SimInput = (Vec<f64>, Vec<f64>);

/// A deterministic computer model with named inputs and QoI outputs.
pub trait Simulator: Send + Sync + fmt::Debug {
    fn x_names(&self) -> &[String];
    fn theta_names(&self) -> &[String];
    fn qoi_names(&self) -> &[String];

    /// Evaluates every row; on failure the error names the offending row index.
    fn evaluate_batch(&self, inputs: &[SimInput]) -> Result<Vec<Vec<f64>>>;

    fn evaluate(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate_batch(&[(x.to_vec(), theta.to_vec())])?.remove(0))
    }

    /// Maximum number of runs a single request may spend, if the model is costly.
    fn evaluation_budget(&self) -> Option<usize> {
        None
    }
}

fn check_inputs(sim: &dyn Simulator, inputs: &[SimInput]) -> Result<()> {
    for (row, (x, t)) in inputs.iter().enumerate() {
        if x.len() != sim.x_names().len() || t.len() != sim.theta_names().len() {
            return Err(Error::Simulator {
                row,
                message: format!(
                    "expected {} design variables and {} parameters, got {} and {}",
                    sim.x_names().len(),
                    sim.theta_names().len(),
                    x.len(),
                    t.len()
                ),
            });
        }
    }
    Ok(())
}

fn describe(input: &SimInput) -> String {
    format!("x = {:?}, theta = {:?}", input.0, input.1)
}

/// Analytic demo models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum BuiltinModel {
    /// `θ₁·x + θ₂`
    Linear,
    /// `θ₁·x + θ₂ + amplitude·sin(x)`: the linear model plus a known bias.
    LinearBiased { amplitude: f64 },
    /// `x·sin(x)`, no calibration parameters.
    DemoFunction,
}

impl BuiltinModel {
    pub fn x_dim(&self) -> usize {
        1
    }

    pub fn theta_dim(&self) -> usize {
        match self {
            BuiltinModel::Linear | BuiltinModel::LinearBiased { .. } => 2,
            BuiltinModel::DemoFunction => 0,
        }
    }

    pub fn eval(&self, x: &[f64], theta: &[f64]) -> f64 {
        match *self {
            BuiltinModel::Linear => theta[0] * x[0] + theta[1],
            BuiltinModel::LinearBiased { amplitude } => theta[0] * x[0] + theta[1] + amplitude * x[0].sin(),
            BuiltinModel::DemoFunction => x[0] * x[0].sin(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuiltinSimulator {
    model: BuiltinModel,
    x_names: Vec<String>,
    theta_names: Vec<String>,
    qoi_names: Vec<String>,
}

impl BuiltinSimulator {
    pub fn new(
        model: BuiltinModel,
        x_names: Vec<String>,
        theta_names: Vec<String>,
        qoi_names: Vec<String>,
    ) -> Result<Self> {
        check_dim(model.x_dim(), x_names.len())?;
        check_dim(model.theta_dim(), theta_names.len())?;
        check_dim(1, qoi_names.len())?;
        Ok(BuiltinSimulator {
            model,
            x_names,
            theta_names,
            qoi_names,
        })
    }

    /// Default names: `x`, `theta1`, `theta2`…, QoI `y`.
    pub fn with_default_names(model: BuiltinModel) -> Self {
        let theta_names = (1..=model.theta_dim()).map(|k| format!("theta{k}")).collect();
        BuiltinSimulator {
            model,
            x_names: vec!["x".into()],
            theta_names,
            qoi_names: vec!["y".into()],
        }
    }

    pub fn model(&self) -> BuiltinModel {
        self.model
    }
}

impl Simulator for BuiltinSimulator {
    fn x_names(&self) -> &[String] {
        &self.x_names
    }

    fn theta_names(&self) -> &[String] {
        &self.theta_names
    }

    fn qoi_names(&self) -> &[String] {
        &self.qoi_names
    }

    fn evaluate_batch(&self, inputs: &[SimInput]) -> Result<Vec<Vec<f64>>> {
        check_inputs(self, inputs)?;
        Ok(inputs.iter().map(|(x, t)| vec![self.model.eval(x, t)]).collect())
    }
}

/// External program following the file protocol
/// `command [args…] <input.csv> <output.csv>`.
///
/// The input CSV has a header of design-variable names then parameter names;
/// the program must write one output row per input row with a header naming
/// the QoIs and exit with status 0.
#[derive(Debug, Clone)]
pub struct SubprocessSimulator {
    command: String,
    args: Vec<String>,
    x_names: Vec<String>,
    theta_names: Vec<String>,
    qoi_names: Vec<String>,
    budget: Option<usize>,
}

impl SubprocessSimulator {
    pub fn new(
        command: impl Into<String>,
        args: Vec<String>,
        x_names: Vec<String>,
        theta_names: Vec<String>,
        qoi_names: Vec<String>,
    ) -> Result<Self> {
        if qoi_names.is_empty() {
            return Err(Error::invalid("subprocess simulator needs at least one QoI"));
        }
        Ok(SubprocessSimulator {
            command: command.into(),
            args,
            x_names,
            theta_names,
            qoi_names,
            budget: None,
        })
    }

    /// Caps the number of runs per request; posterior validation then uses
    /// the code emulator instead.
    pub fn with_budget(mut self, budget: Option<usize>) -> Self {
        self.budget = budget;
        self
    }

    fn workers() -> usize {
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .filter(|n| *n > 0)
            .unwrap_or(1)
    }

    fn run_chunk(&self, inputs: &[SimInput], offset: usize) -> Result<Vec<Vec<f64>>> {
        let fail = |row: usize, message: String| Error::Simulator {
            row: offset + row,
            message,
        };
        let dir = tempfile::tempdir()?;
        let input_path = dir.path().join("input.csv");
        let output_path = dir.path().join("output.csv");
        write_inputs(&input_path, &self.x_names, &self.theta_names, inputs)?;
        let out = Command::new(&self.command)
            .args(&self.args)
            .arg(&input_path)
            .arg(&output_path)
            .output()
            .map_err(|e| fail(0, format!("cannot run {}: {e}", self.command)))?;
        if !out.status.success() {
            return Err(fail(
                0,
                format!(
                    "{} exited with {}: {}",
                    self.command,
                    out.status,
                    String::from_utf8_lossy(&out.stderr).trim()
                ),
            ));
        }
        let mut reader =
            csv::Reader::from_path(&output_path).map_err(|e| fail(0, format!("cannot read simulator output: {e}")))?;
        let header = reader.headers()?.clone();
        let cols: Vec<usize> = self
            .qoi_names
            .iter()
            .map(|q| {
                header
                    .iter()
                    .position(|h| h.trim() == q)
                    .ok_or_else(|| fail(0, format!("simulator output lacks column {q:?}")))
            })
            .collect::<Result<_>>()?;
        let mut rows = Vec::with_capacity(inputs.len());
        for (r, record) in reader.records().enumerate() {
            let record = record.map_err(|e| {
                fail(
                    r.min(inputs.len().saturating_sub(1)),
                    format!("malformed output row: {e}"),
                )
            })?;
            if r >= inputs.len() {
                return Err(fail(
                    inputs.len() - 1,
                    format!("simulator wrote more than {} rows", inputs.len()),
                ));
            }
            let values: Option<Vec<f64>> = cols
                .iter()
                .map(|c| {
                    record
                        .get(*c)
                        .and_then(|s| s.trim().parse::<f64>().ok())
                        .filter(|v| v.is_finite())
                })
                .collect();
            match values {
                Some(v) => rows.push(v),
                None => {
                    return Err(fail(
                        r,
                        format!("malformed output row for input {}", describe(&inputs[r])),
                    ))
                }
            }
        }
        if rows.len() != inputs.len() {
            return Err(fail(
                rows.len(),
                format!(
                    "simulator wrote {} rows for {} inputs; first missing input {}",
                    rows.len(),
                    inputs.len(),
                    describe(&inputs[rows.len()])
                ),
            ));
        }
        Ok(rows)
    }
}

fn write_inputs(path: &Path, x_names: &[String], theta_names: &[String], inputs: &[SimInput]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(x_names.iter().chain(theta_names))?;
    for (x, t) in inputs {
        w.write_record(x.iter().chain(t).map(|v| format!("{v:.16e}")))?;
    }
    w.flush()?;
    Ok(())
}

impl Simulator for SubprocessSimulator {
    fn x_names(&self) -> &[String] {
        &self.x_names
    }

    fn theta_names(&self) -> &[String] {
        &self.theta_names
    }

    fn qoi_names(&self) -> &[String] {
        &self.qoi_names
    }

    fn evaluate_batch(&self, inputs: &[SimInput]) -> Result<Vec<Vec<f64>>> {
        check_inputs(self, inputs)?;
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let workers = Self::workers().min(inputs.len());
        let size = inputs.len().div_ceil(workers);
        let chunks: Vec<(usize, &[SimInput])> = inputs.chunks(size).enumerate().map(|(k, c)| (k * size, c)).collect();
        let results: Vec<Result<Vec<Vec<f64>>>> = if chunks.len() == 1 {
            vec![self.run_chunk(inputs, 0)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = chunks
                    .iter()
                    .map(|(off, c)| s.spawn(move || self.run_chunk(c, *off)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("simulator worker panicked"))
                    .collect()
            })
        };
        let mut out = Vec::with_capacity(inputs.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }

    fn evaluation_budget(&self) -> Option<usize> {
        self.budget
    }
}

/// Precomputed runs looked up by exact input match.
#[derive(Debug, Clone)]
pub struct TableSimulator {
    x_names: Vec<String>,
    theta_names: Vec<String>,
    qoi_names: Vec<String>,
    inputs: Vec<SimInput>,
    outputs: Vec<Vec<f64>>,
}

impl TableSimulator {
    pub fn new(
        x_names: Vec<String>,
        theta_names: Vec<String>,
        qoi_names: Vec<String>,
        inputs: Vec<SimInput>,
        outputs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_dim(inputs.len(), outputs.len())?;
        for ((x, t), y) in inputs.iter().zip(&outputs) {
            check_dim(x_names.len(), x.len())?;
            check_dim(theta_names.len(), t.len())?;
            check_dim(qoi_names.len(), y.len())?;
        }
        Ok(TableSimulator {
            x_names,
            theta_names,
            qoi_names,
            inputs,
            outputs,
        })
    }
}

impl Simulator for TableSimulator {
    fn x_names(&self) -> &[String] {
        &self.x_names
    }

    fn theta_names(&self) -> &[String] {
        &self.theta_names
    }

    fn qoi_names(&self) -> &[String] {
        &self.qoi_names
    }

    fn evaluate_batch(&self, inputs: &[SimInput]) -> Result<Vec<Vec<f64>>> {
        check_inputs(self, inputs)?;
        inputs
            .iter()
            .enumerate()
            .map(|(row, q)| {
                self.inputs
                    .iter()
                    .position(|e| e == q)
                    .map(|k| self.outputs[k].clone())
                    .ok_or_else(|| Error::Simulator {
                        row,
                        message: format!("no table entry for {}", describe(q)),
                    })
            })
            .collect()
    }
}

use std::path::Path;

use emucal::calibration::{run_workflow, StageTiming};
use emucal::emulator::{FittedEmulator, EMULATOR_FORMAT_VERSION};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{config_hash, load_config, WorkflowConfig};
use crate::io::{csv_bytes, fmt_f64, read_experiments, write_atomic};
use crate::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHAIN_FILE: &str = "chain.csv";
pub const SUMMARY_FILE: &str = "posterior_summary.json";
pub const VALIDATION_FILE: &str = "validation.json";
pub const RESIDUALS_FILE: &str = "validation_residuals.csv";
pub const BIAS_FILE: &str = "gp_bias.json";
pub const CODE_FILE: &str = "gp_code.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub emucal: String,
    pub emulator_format: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub config: WorkflowConfig,
    pub experiments_sha256: String,
    pub x_names: Vec<String>,
    pub theta_names: Vec<String>,
    pub qoi_names: Vec<String>,
    /// LOOCV Q2 of each GPcode QoI emulator, when one was trained.
    pub code_q2: Option<Vec<f64>>,
    pub stage_timings: Vec<StageTiming>,
    pub artifacts: Vec<Artifact>,
    pub versions: Versions,
}

impl RunManifest {
    pub fn read(run: &Path) -> CliResult<RunManifest> {
        let path = run.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Data(format!("cannot read run manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Writer<'a> {
    dir: &'a Path,
    artifacts: Vec<Artifact>,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, file: &str, bytes: &[u8]) -> CliResult<()> {
        write_atomic(&self.dir.join(file), bytes)?;
        self.artifacts.push(Artifact {
            name: name.into(),
            path: file.into(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn put_json<T: Serialize>(&mut self, name: &str, file: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        self.put(name, file, text.as_bytes())
    }
}

fn emulator_documents(emulators: &[FittedEmulator]) -> CliResult<serde_json::Value> {
    let docs = emulators
        .iter()
        .map(|e| serde_json::from_str(&e.to_json()?).map_err(emucal::Error::from))
        .collect::<Result<Vec<serde_json::Value>, _>>()?;
    Ok(serde_json::Value::Array(docs))
}

/// Runs the workflow of `config` and writes every artifact plus the manifest
/// (last) into `out`.
pub fn calibrate(config_path: &Path, out: &Path) -> CliResult<RunManifest> {
    let config = load_config(config_path)?;
    let hash = config_hash(&config)?;
    let sim = config.simulator.build()?;
    if sim.theta_names() != config.prior.names() {
        return Err(CliError::Config(format!(
            "prior parameters {:?} do not match simulator parameters {:?}",
            config.prior.names(),
            sim.theta_names()
        )));
    }
    let data = read_experiments(&config.experiments.path, sim.x_names(), sim.qoi_names())?;
    let experiments_sha256 = sha256_hex(
        &std::fs::read(&config.experiments.path)
            .map_err(|e| CliError::Data(format!("{}: {e}", config.experiments.path.display())))?,
    );
    let result = run_workflow(sim.clone(), &data, &config.prior, &config.settings())?;

    let mut w = Writer {
        dir: out,
        artifacts: Vec::new(),
    };
    let mut chain_csv = Vec::new();
    result.chain.write_csv(&mut chain_csv)?;
    w.put("chain", CHAIN_FILE, &chain_csv)?;
    w.put_json("posterior_summary", SUMMARY_FILE, &result.chain.summary())?;
    w.put_json("validation", VALIDATION_FILE, &result.validation)?;

    let n_val = result.val.n_rows();
    let mut header: Vec<String> = sim.x_names().to_vec();
    header.extend(["qoi", "predicted", "mse", "actual"].map(String::from));
    let rows: Vec<Vec<String>> = result
        .validation
        .residuals
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let (q, i) = (k / n_val, k % n_val);
            let mut row: Vec<String> = result.val.x()[i].iter().map(|v| fmt_f64(*v)).collect();
            row.push(sim.qoi_names()[q].clone());
            row.extend([fmt_f64(r.predicted), fmt_f64(r.mse), fmt_f64(r.actual)]);
            row
        })
        .collect();
    w.put("validation_residuals", RESIDUALS_FILE, &csv_bytes(&header, &rows)?)?;
    if let Some(d) = &result.discrepancy {
        w.put_json("gp_bias", BIAS_FILE, &emulator_documents(d.emulators())?)?;
    }
    if let Some(c) = &result.code {
        w.put_json("gp_code", CODE_FILE, &emulator_documents(c.emulators())?)?;
    }

    let manifest = RunManifest {
        config_hash: hash,
        config,
        experiments_sha256,
        x_names: sim.x_names().to_vec(),
        theta_names: sim.theta_names().to_vec(),
        qoi_names: sim.qoi_names().to_vec(),
        code_q2: result.code.as_ref().map(|c| c.q2().to_vec()),
        stage_timings: result.timings.clone(),
        artifacts: w.artifacts,
        versions: Versions {
            emucal: env!("CARGO_PKG_VERSION").into(),
            emulator_format: EMULATOR_FORMAT_VERSION,
        },
    };
    crate::io::write_json(&out.join(MANIFEST_FILE), &manifest)?;
    let summary = result.chain.summary();
    for c in &summary.components {
        println!("{}: mean {:.6}, sd {:.6}", c.name, c.mean, c.std);
    }
    println!(
        "acceptance {:.3}; validation rmse {:.6}, coverage {:.3}",
        summary.acceptance_rate,
        result.validation.rmse(),
        result.validation.coverage_95
    );
    Ok(manifest)
}

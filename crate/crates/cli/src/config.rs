//! Calibration run configuration: TOML (or JSON by extension), with paths
//! resolved against the config file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use emucal::calibration::{
    BuiltinModel, BuiltinSimulator, CodeSettings, CodeSource, EmulatorSettings, McmcSettings, PriorSpec, Simulator,
    Split, SubprocessSimulator, WorkflowSettings,
};
use emucal::diagnostics::Q2_SATISFACTORY;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimulatorConfig {
    Builtin {
        model: BuiltinModel,
        #[serde(default)]
        x_names: Option<Vec<String>>,
        #[serde(default)]
        theta_names: Option<Vec<String>>,
        #[serde(default)]
        qoi_names: Option<Vec<String>>,
    },
    Subprocess {
        command: String,
        #[serde(default)]
        args: Vec<String>,
        x_names: Vec<String>,
        theta_names: Vec<String>,
        qoi_names: Vec<String>,
        /// Simulator runs allowed for posterior validation before falling
        /// back to the code emulator.
        #[serde(default)]
        budget: Option<usize>,
    },
}

impl SimulatorConfig {
    pub fn build(&self) -> CliResult<Arc<dyn Simulator>> {
        let config = |e: emucal::Error| CliError::Config(format!("simulator: {e}"));
        Ok(match self {
            SimulatorConfig::Builtin {
                model,
                x_names,
                theta_names,
                qoi_names,
            } => {
                let defaults = BuiltinSimulator::with_default_names(*model);
                Arc::new(
                    BuiltinSimulator::new(
                        *model,
                        x_names.clone().unwrap_or_else(|| defaults.x_names().to_vec()),
                        theta_names.clone().unwrap_or_else(|| defaults.theta_names().to_vec()),
                        qoi_names.clone().unwrap_or_else(|| defaults.qoi_names().to_vec()),
                    )
                    .map_err(config)?,
                )
            }
            SimulatorConfig::Subprocess {
                command,
                args,
                x_names,
                theta_names,
                qoi_names,
                budget,
            } => Arc::new(
                SubprocessSimulator::new(
                    command.clone(),
                    args.clone(),
                    x_names.clone(),
                    theta_names.clone(),
                    qoi_names.clone(),
                )
                .map_err(config)?
                .with_budget(*budget),
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentsConfig {
    /// CSV with design-variable, QoI and noise columns.
    pub path: PathBuf,
}

fn default_true() -> bool {
    true
}

fn default_gate() -> f64 {
    Q2_SATISFACTORY
}

fn default_draws() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowConfig {
    pub simulator: SimulatorConfig,
    pub experiments: ExperimentsConfig,
    pub prior: PriorSpec,
    #[serde(default = "default_split")]
    pub split: Split,
    #[serde(default = "default_true")]
    pub use_discrepancy: bool,
    #[serde(default)]
    pub code_source: CodeSource,
    #[serde(default = "default_gate")]
    pub q2_gate: f64,
    #[serde(default = "default_draws")]
    pub validation_draws: usize,
    #[serde(default)]
    pub discrepancy: EmulatorSettings,
    #[serde(default)]
    pub code: CodeSettings,
    #[serde(default)]
    pub mcmc: McmcSettings,
}

fn default_split() -> Split {
    Split::Tagged
}

impl WorkflowConfig {
    pub fn settings(&self) -> WorkflowSettings {
        WorkflowSettings {
            split: self.split.clone(),
            use_discrepancy: self.use_discrepancy,
            discrepancy: self.discrepancy.clone(),
            code_source: self.code_source,
            code: self.code.clone(),
            q2_gate: self.q2_gate,
            mcmc: self.mcmc.clone(),
            validation_draws: self.validation_draws,
        }
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.mcmc.n_samples == 0 || self.mcmc.n_chains == 0 || self.mcmc.thin == 0 {
            return bad("mcmc budgets (n_samples, n_chains, thin) must be positive");
        }
        if self.validation_draws == 0 {
            return bad("validation_draws must be positive");
        }
        if self.code_source == CodeSource::Emulator && self.code.n_train == 0 {
            return bad("code.n_train must be positive");
        }
        if !self.q2_gate.is_finite() {
            return bad("q2_gate must be finite");
        }
        Ok(())
    }
}

fn parse_value(path: &Path, text: &str) -> CliResult<serde_json::Value> {
    let config = |e: String| CliError::Config(format!("{}: {e}", path.display()));
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(text).map_err(|e| config(e.to_string()))
    } else {
        toml::from_str(text).map_err(|e| config(e.to_string()))
    }
}

fn require_seed(value: &serde_json::Value, section: &str, path: &Path) -> CliResult<()> {
    if value.get(section).and_then(|s| s.get("seed")).is_none() {
        return Err(CliError::Config(format!(
            "{}: `{section}.seed` must be set explicitly",
            path.display()
        )));
    }
    Ok(())
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads, validates and path-resolves a config file. Random seeds must be
/// given explicitly; every referenced file must exist.
pub fn load_config(path: &Path) -> CliResult<WorkflowConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let value = parse_value(path, &text)?;
    require_seed(&value, "mcmc", path)?;
    let mut config: WorkflowConfig =
        serde_json::from_value(value.clone()).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if config.code_source == CodeSource::Emulator {
        require_seed(&value, "code", path)?;
    }
    config.validate()?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    config.experiments.path = resolve(&base, &config.experiments.path);
    if !config.experiments.path.is_file() {
        return Err(CliError::Config(format!(
            "experiment file {} does not exist",
            config.experiments.path.display()
        )));
    }
    if let SimulatorConfig::Subprocess { command, args, .. } = &mut config.simulator {
        if command.contains('/') {
            let resolved = resolve(&base, Path::new(command.as_str()));
            if !resolved.exists() {
                return Err(CliError::Config(format!(
                    "simulator command {} does not exist",
                    resolved.display()
                )));
            }
            *command = resolved.to_string_lossy().into_owned();
        }
        for a in args.iter_mut() {
            let candidate = base.join(a.as_str());
            if !Path::new(a.as_str()).is_absolute() && candidate.is_file() {
                *a = candidate.to_string_lossy().into_owned();
            }
        }
    }
    Ok(config)
}

/// SHA-256 of the canonical JSON form of the resolved config (sorted keys,
/// defaults filled in), so formatting and key order do not matter.
pub fn config_hash(config: &WorkflowConfig) -> CliResult<String> {
    let value = serde_json::to_value(config).map_err(|e| CliError::Config(e.to_string()))?;
    let canonical = serde_json::to_string(&value).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

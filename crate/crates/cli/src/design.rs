use std::path::Path;

use emucal::design::{DesignMethod, ParameterSpace};
use serde::Serialize;

use crate::io::{fmt_f64, write_csv, write_json};
use crate::{CliError, CliResult, DesignKind};

#[derive(Serialize)]
struct DesignSidecar<'a> {
    generator: DesignMethod,
    n: usize,
    space: &'a ParameterSpace,
    min_distance: f64,
}

pub(crate) fn read_space(path: &Path) -> CliResult<ParameterSpace> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read space file {}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Writes the design in physical units with a header of parameter names, plus
/// a `<out>.json` sidecar recording the generator.
pub fn design(
    kind: DesignKind,
    n: usize,
    space: &Path,
    seed: u64,
    restarts: usize,
    skip: u64,
    out: &Path,
) -> CliResult<()> {
    let space = read_space(space)?;
    let method = match kind {
        DesignKind::Lhs => DesignMethod::Lhs { seed },
        DesignKind::Maximin => DesignMethod::Maximin { seed, restarts },
        DesignKind::Sobol => DesignMethod::Sobol { skip },
        DesignKind::Halton => DesignMethod::Halton { skip },
    };
    let design = method
        .generate(n, &space)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let rows: Vec<Vec<String>> = design
        .physical_points()
        .iter()
        .map(|p| p.iter().map(|v| fmt_f64(*v)).collect())
        .collect();
    write_csv(out, space.names(), &rows)?;
    let mut sidecar = out.as_os_str().to_owned();
    sidecar.push(".json");
    write_json(
        Path::new(&sidecar),
        &DesignSidecar {
            generator: method,
            n,
            space: &space,
            min_distance: design.min_distance(),
        },
    )?;
    log::info!("wrote {n} design points to {}", out.display());
    Ok(())
}

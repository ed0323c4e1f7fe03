use std::path::Path;

use rayon::prelude::*;

use super::config::{set_dotted, ScenarioConfig};
use super::metrics::{evaluate_metrics, MetricsReport};
use super::{run_scenario, RunResult};
use crate::error::{Error, Result};

/// Named axes of a parameter grid. Each key is a dotted path into the
/// scenario document, e.g. `initial.phi_x_deg`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterGrid {
    pub axes: Vec<(String, Vec<toml::Value>)>,
}

impl ParameterGrid {
    /// Parses a `[grid]` table whose values are arrays.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: toml::Table = toml::from_str(text).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut axes = Vec::new();
        for (key, value) in doc {
            if key != "grid" {
                return Err(Error::InvalidParameter(format!("unknown grid section {key:?}")));
            }
            let table = value
                .as_table()
                .ok_or_else(|| Error::InvalidParameter("grid must be a table".into()))?;
            for (path, values) in table {
                let values = values
                    .as_array()
                    .filter(|a| !a.is_empty())
                    .ok_or_else(|| Error::InvalidParameter(format!("grid axis {path:?} must be a non-empty array")))?;
                axes.push((path.clone(), values.clone()));
            }
        }
        Ok(Self { axes })
    }

    pub fn cells(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }
}

pub fn load_grid(path: &Path) -> Result<ParameterGrid> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
    ParameterGrid::from_toml_str(&text)
}

fn label(value: &toml::Value) -> String {
    match value {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// All combinations of the grid values applied to `template`, as
/// `(overrides, document)` pairs in row-major order.
pub fn expand_grid(template: &toml::Value, grid: &ParameterGrid) -> Result<Vec<(Vec<(String, String)>, toml::Value)>> {
    let mut cells = vec![(Vec::new(), template.clone())];
    for (path, values) in &grid.axes {
        let mut next = Vec::with_capacity(cells.len() * values.len());
        for (overrides, doc) in &cells {
            for v in values {
                let mut doc = doc.clone();
                set_dotted(&mut doc, path, v.clone())?;
                let mut o: Vec<(String, String)> = overrides.clone();
                o.push((path.clone(), label(v)));
                next.push((o, doc));
            }
        }
        cells = next;
    }
    Ok(cells)
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub id: String,
    pub overrides: Vec<(String, String)>,
    /// Run outcome, or the configuration error that prevented the run.
    pub run: Result<RunResult>,
    pub metrics: Option<MetricsReport>,
}

fn cell_id(base: &str, overrides: &[(String, String)]) -> String {
    let mut id = base.to_string();
    for (path, value) in overrides {
        let key = path.rsplit('.').next().unwrap_or(path);
        id.push_str(&format!("-{key}={value}"));
    }
    id.replace(|c: char| c.is_whitespace() || c == '/' || c == '"', "_")
}

/// Runs every grid cell in parallel. Cell failures are captured in the
/// result; only an empty grid or a malformed override fails the sweep.
pub fn sweep(template: &toml::Value, grid: &ParameterGrid) -> Result<Vec<SweepCell>> {
    if grid.cells() == 0 {
        return Err(Error::InvalidParameter("parameter grid is empty".into()));
    }
    let base = template
        .get("id")
        .and_then(|v| v.as_str())
        .unwrap_or("scenario")
        .to_string();
    let cells = expand_grid(template, grid)?;
    Ok(cells
        .into_par_iter()
        .map(|(overrides, mut doc)| {
            let id = cell_id(&base, &overrides);
            let run = set_dotted(&mut doc, "id", toml::Value::String(id.clone()))
                .and_then(|_| ScenarioConfig::from_toml_value(doc))
                .and_then(|cfg| run_scenario(&cfg));
            let metrics = run.as_ref().ok().map(|r| evaluate_metrics(&r.trace));
            SweepCell {
                id,
                overrides,
                run,
                metrics,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expands_cartesian_product() {
        let grid = ParameterGrid::from_toml_str(
            "[grid]\n\"initial.phi_x_deg\" = [5.0, 10.0]\n\"estimator.initial_length\" = [0.5, 0.7, 1.4]",
        )
        .unwrap();
        assert_eq!(grid.cells(), 6);
        let template: toml::Value = toml::from_str("id = \"g\"").unwrap();
        let cells = expand_grid(&template, &grid).unwrap();
        assert_eq!(cells.len(), 6);
        let ids: Vec<String> = cells.iter().map(|(o, _)| cell_id("g", o)).collect();
        let mut unique = ids.clone();
        unique.dedup();
        assert_eq!(unique.len(), 6);
        for (_, doc) in cells {
            ScenarioConfig::from_toml_value(doc).unwrap();
        }
    }

    #[test]
    fn rejects_malformed_grid() {
        assert!(ParameterGrid::from_toml_str("[grid]\nseed = 3").is_err());
        assert!(ParameterGrid::from_toml_str("[grid]\nseed = []").is_err());
        assert!(ParameterGrid::from_toml_str("[other]\nseed = [1]").is_err());
    }

    #[test]
    fn bad_cells_are_captured() {
        let grid = ParameterGrid::from_toml_str("[grid]\nduration = [0.2, -1.0]").unwrap();
        let template: toml::Value = toml::from_str("[rig]\npixel_noise_sigma = 0.0").unwrap();
        let cells = sweep(&template, &grid).unwrap();
        assert_eq!(cells.len(), 2);
        assert!(cells[0].run.is_ok() && cells[0].metrics.is_some());
        assert!(cells[1].run.is_err() && cells[1].metrics.is_none());
    }
}

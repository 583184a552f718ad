//! Scenario files: one JSON object per grid.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use chansearch_core::{BathyScenario, GridGeometry, Point};
use serde::{Deserialize, Serialize};

/// On-disk layout. Depths are row-major, feet; cells are flat indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub cell_size_m: f64,
    #[serde(default)]
    pub rotation_deg: f64,
    #[serde(default)]
    pub origin_m: [f64; 2],
    pub depths_ft: Vec<f64>,
    pub start_cells: Vec<usize>,
    pub goal_cells: Vec<usize>,
}

impl From<&BathyScenario> for ScenarioFile {
    fn from(s: &BathyScenario) -> Self {
        let g = s.geometry();
        ScenarioFile {
            name: s.name.clone(),
            rows: g.rows,
            cols: g.cols,
            cell_size_m: g.cell_size_m,
            rotation_deg: g.rotation_deg,
            origin_m: [g.origin_m.x, g.origin_m.y],
            depths_ft: s.depths_ft().to_vec(),
            start_cells: s.start_cells().to_vec(),
            goal_cells: s.goal_cells().to_vec(),
        }
    }
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<BathyScenario> {
        let g = GridGeometry::new(
            self.rows,
            self.cols,
            self.cell_size_m,
            self.rotation_deg,
            Point::new(self.origin_m[0], self.origin_m[1]),
        )?;
        Ok(BathyScenario::new(self.name, g, self.depths_ft, self.start_cells, self.goal_cells)?)
    }
}

pub fn parse_scenario(text: &str) -> Result<BathyScenario> {
    let file: ScenarioFile = serde_json::from_str(text)?;
    file.into_scenario()
}

pub fn load_scenario(path: &Path) -> Result<BathyScenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_scenario(&text).with_context(|| format!("parsing scenario {}", path.display()))
}

pub fn scenario_to_json(s: &BathyScenario) -> String {
    serde_json::to_string_pretty(&ScenarioFile::from(s)).expect("scenario serializes")
}

pub fn save_scenario(s: &BathyScenario, path: &Path) -> Result<()> {
    fs::write(path, scenario_to_json(s)).with_context(|| format!("writing {}", path.display()))
}

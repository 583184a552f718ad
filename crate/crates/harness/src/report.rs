//! CSV and JSON report files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::aggregate::Summary;

pub const DURATIONS_CSV: &str = "durations.csv";
pub const TIMEOUTS_CSV: &str = "timeouts.csv";
pub const RATIOS_CSV: &str = "ratios.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SERIES_JSON: &str = "series.json";

/// Plot-ready series: mean duration against vehicle count per planner, and
/// the ratio samples per planner and count.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub duration_vs_n: BTreeMap<String, Vec<(usize, f64)>>,
    pub ratio_boxes: BTreeMap<String, Vec<(usize, Vec<f64>)>>,
}

pub fn series(summary: &Summary) -> Series {
    let mut s = Series::default();
    for d in &summary.durations {
        s.duration_vs_n.entry(d.planner.to_string()).or_default().push((d.n, d.mean_s));
    }
    for r in &summary.ratios {
        s.ratio_boxes
            .entry(r.planner.to_string())
            .or_default()
            .push((r.n, r.values.clone()));
    }
    s
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

fn write_csv<const N: usize>(path: &Path, header: [&str; N], rows: Vec<[String; N]>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.write_record(&row).with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

/// Write every report file into `dir`, creating it if needed. Returns the
/// paths written.
pub fn report(summary: &Summary, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let p = |name: &str| dir.join(name);

    write_csv(
        &p(DURATIONS_CSV),
        ["planner", "n", "mean_s", "min_s", "max_s", "count"],
        summary
            .durations
            .iter()
            .map(|d| {
                [
                    d.planner.to_string(),
                    d.n.to_string(),
                    d.mean_s.to_string(),
                    d.min_s.to_string(),
                    d.max_s.to_string(),
                    d.count.to_string(),
                ]
            })
            .collect(),
    )?;
    write_csv(
        &p(TIMEOUTS_CSV),
        ["planner", "n", "timeouts", "total", "fraction"],
        summary
            .timeouts
            .iter()
            .map(|t| {
                [
                    t.planner.to_string(),
                    t.n.to_string(),
                    t.timeouts.to_string(),
                    t.total.to_string(),
                    t.fraction.to_string(),
                ]
            })
            .collect(),
    )?;
    write_csv(
        &p(RATIOS_CSV),
        ["planner", "n", "count", "min", "q1", "median", "q3", "max"],
        summary
            .ratios
            .iter()
            .map(|r| {
                [
                    r.planner.to_string(),
                    r.n.to_string(),
                    r.count.to_string(),
                    r.min.to_string(),
                    r.q1.to_string(),
                    r.median.to_string(),
                    r.q3.to_string(),
                    r.max.to_string(),
                ]
            })
            .collect(),
    )?;
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    fs::write(p(SUMMARY_JSON), json).with_context(|| format!("writing {}", p(SUMMARY_JSON).display()))?;
    let json = serde_json::to_string_pretty(&series(summary)).expect("series serializes");
    fs::write(p(SERIES_JSON), json).with_context(|| format!("writing {}", p(SERIES_JSON).display()))?;
    Ok([DURATIONS_CSV, TIMEOUTS_CSV, RATIOS_CSV, SUMMARY_JSON, SERIES_JSON]
        .iter()
        .map(|n| p(n))
        .collect())
}

pub fn load_summary(path: &Path) -> Result<Summary> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

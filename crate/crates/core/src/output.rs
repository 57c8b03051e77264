//! Artifact files: CSV tables and JSON records with fixed headers and key
//! sets, plus the readers the reporting commands use to load them back.

use std::fmt::Write as FmtWrite;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blowup::BlowupRecord;
use crate::config::OutputFormat;
use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::selfsim::{EnergyReport, SelfSimilarFrame};
use crate::sweep::{PeakConcentrationCheck, SweepReport, TimeAsymptoticsCheck};

/// Fixed column set of the energy table.
pub const ENERGY_HEADER: &str =
    "s,E,E2,E4,E6,tildeE2,res_var,res_wvar1,res_dissipation,res_pohozaev,dev_core";

/// Fixed column set of the sweep table.
pub const SWEEP_HEADER: &str = "M,T_est,T_ci,TMp1,a,phiV_at_a,rate_exponent";

/// Fixed column set of the trajectory table.
pub const TRAJECTORY_HEADER: &str = "t,u_max,argmax";

fn wants(formats: &[OutputFormat], format: OutputFormat) -> bool {
    formats.contains(&format)
}

fn io_err(context: &str, path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{} {}: {}", context, path.display(), e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err("creating", dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_err("writing", path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_err("reading", path, e))
}

/// Format a number for CSV: shortest round-trip form, `nan` for missing.
fn csv_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{}", x)
    }
}

/// The single-run record as stored on disk. Field names follow the
/// artifact contract rather than internal naming.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    #[serde(rename = "T_est")]
    pub blowup_time: f64,
    #[serde(rename = "T_ci")]
    pub time_uncertainty: f64,
    #[serde(rename = "a")]
    pub location: f64,
    pub rate_exponent: f64,
    #[serde(rename = "typeI_sup")]
    pub type_one_sup: f64,
    pub fit_window: (f64, f64),
}

impl From<&BlowupRecord> for StoredRecord {
    fn from(record: &BlowupRecord) -> Self {
        StoredRecord {
            blowup_time: record.blowup_time,
            time_uncertainty: record.time_uncertainty,
            location: record.location,
            rate_exponent: record.rate_exponent,
            type_one_sup: record.type_one_sup,
            fit_window: record.fit_window,
        }
    }
}

/// Pass/fail verdicts of the sweep checks; the concentration entries are
/// null when the exponent is supercritical and the check does not apply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredChecks {
    pub final_margin_ok: bool,
    pub trend_ok: bool,
    pub nonnegative_ok: Option<bool>,
    pub shrinking_ok: Option<bool>,
    pub locations_ok: Option<bool>,
}

impl StoredChecks {
    pub fn all_ok(&self) -> bool {
        self.final_margin_ok
            && self.trend_ok
            && self.nonnegative_ok.unwrap_or(true)
            && self.shrinking_ok.unwrap_or(true)
            && self.locations_ok.unwrap_or(true)
    }
}

/// The sweep summary as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredSummary {
    #[serde(rename = "A")]
    pub time_scale: f64,
    pub target: f64,
    pub margins2: Vec<f64>,
    pub margins3: Vec<f64>,
    pub fitted_decay_exponent: Option<f64>,
    pub checks: StoredChecks,
}

pub fn build_summary(
    report: &SweepReport,
    times: &TimeAsymptoticsCheck,
    concentration: Option<&PeakConcentrationCheck>,
) -> StoredSummary {
    StoredSummary {
        time_scale: report.time_scale,
        target: report.target,
        margins2: times.margins.clone(),
        margins3: concentration.map(|c| c.margins.clone()).unwrap_or_default(),
        fitted_decay_exponent: concentration.and_then(|c| c.fitted_decay_exponent),
        checks: StoredChecks {
            final_margin_ok: times.final_margin_ok,
            trend_ok: times.trend_ok,
            nonnegative_ok: concentration.map(|c| c.nonnegative_ok),
            shrinking_ok: concentration.map(|c| c.shrinking_ok),
            locations_ok: concentration.map(|c| c.locations_ok),
        },
    }
}

/// Write the artifacts of a single run: `trajectory.csv` and the
/// `snap_<index>.csv` dumps (CSV family), `record.json` (JSON family).
/// Returns the paths written.
pub fn write_run_artifacts(
    dir: &Path,
    trajectory: &Trajectory,
    record: &BlowupRecord,
    formats: &[OutputFormat],
) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    if wants(formats, OutputFormat::Csv) {
        let mut table = String::from(TRAJECTORY_HEADER);
        table.push('\n');
        for entry in &trajectory.series {
            let _ = writeln!(
                table,
                "{},{},{}",
                csv_num(entry.time),
                csv_num(entry.sup),
                csv_num(entry.argmax)
            );
        }
        let path = dir.join("trajectory.csv");
        write_text(&path, &table)?;
        written.push(path);
        for (index, snapshot) in trajectory.snapshots.iter().enumerate() {
            let mut dump = String::from("x,u\n");
            for (x, u) in snapshot.grid.nodes.iter().zip(&snapshot.values) {
                let _ = writeln!(dump, "{},{}", csv_num(*x), csv_num(*u));
            }
            let path = dir.join(format!("snap_{}.csv", index));
            write_text(&path, &dump)?;
            written.push(path);
        }
    }
    if wants(formats, OutputFormat::Json) {
        let stored = StoredRecord::from(record);
        let text = serde_json::to_string_pretty(&stored)
            .map_err(|e| Error::Io(format!("encoding record: {}", e)))?;
        let path = dir.join("record.json");
        write_text(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_record(dir: &Path) -> Result<StoredRecord> {
    let path = dir.join("record.json");
    let text = read_text(&path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Io(format!("decoding {}: {}", path.display(), e)))
}

/// Write the artifacts of a sweep: `sweep.csv` and `summary.json`.
pub fn write_sweep_artifacts(
    dir: &Path,
    report: &SweepReport,
    summary: &StoredSummary,
    formats: &[OutputFormat],
) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    if wants(formats, OutputFormat::Csv) {
        let mut table = String::from(SWEEP_HEADER);
        table.push('\n');
        for row in &report.rows {
            let _ = writeln!(
                table,
                "{},{},{},{},{},{},{}",
                csv_num(row.amplitude),
                csv_num(row.blowup_time),
                csv_num(row.time_uncertainty),
                csv_num(row.scaled_time),
                csv_num(row.location),
                csv_num(row.weighted_potential_at_location),
                csv_num(row.rate_exponent)
            );
        }
        let path = dir.join("sweep.csv");
        write_text(&path, &table)?;
        written.push(path);
    }
    if wants(formats, OutputFormat::Json) {
        let text = serde_json::to_string_pretty(summary)
            .map_err(|e| Error::Io(format!("encoding summary: {}", e)))?;
        let path = dir.join("summary.json");
        write_text(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_summary(dir: &Path) -> Result<StoredSummary> {
    let path = dir.join("summary.json");
    let text = read_text(&path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Io(format!("decoding {}: {}", path.display(), e)))
}

/// Write the artifacts of an energy pass: `energy.csv` with the fixed
/// column set (columns for unrequested moment orders hold `nan`) and one
/// `frame_<index>.csv` dump per self-similar frame.
pub fn write_energy_artifacts(
    dir: &Path,
    report: &EnergyReport,
    frames: &[SelfSimilarFrame],
    moment_orders: &[u32],
    formats: &[OutputFormat],
) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    if !wants(formats, OutputFormat::Csv) {
        return Ok(written);
    }
    let mut table = String::from(ENERGY_HEADER);
    table.push('\n');
    for frame in &report.frames {
        let moment = |k: u32| {
            if moment_orders.contains(&k) {
                frame.weighted[(k - 1) as usize]
            } else {
                f64::NAN
            }
        };
        let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{},{},{},{},{}",
            csv_num(frame.s),
            csv_num(frame.energy),
            csv_num(moment(1)),
            csv_num(moment(2)),
            csv_num(moment(3)),
            csv_num(frame.corrected_second),
            csv_num(opt(frame.residual_variance)),
            csv_num(opt(frame.residual_weighted_variance)),
            csv_num(opt(frame.residual_dissipation)),
            csv_num(opt(frame.residual_pohozaev)),
            csv_num(frame.core_deviation)
        );
    }
    let path = dir.join("energy.csv");
    write_text(&path, &table)?;
    written.push(path);
    for (index, frame) in frames.iter().enumerate() {
        let mut dump = String::from("y,w\n");
        for (y, w) in frame.w.grid.nodes.iter().zip(&frame.w.values) {
            let _ = writeln!(dump, "{},{}", csv_num(*y), csv_num(*w));
        }
        let path = dir.join(format!("frame_{}.csv", index));
        write_text(&path, &dump)?;
        written.push(path);
    }
    Ok(written)
}

/// A CSV table read back: header fields and numeric rows.
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Io(format!("{} is empty", path.display())))?
        .split(',')
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for (index, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|field| {
                field.trim().parse::<f64>().map_err(|_| {
                    Error::Io(format!(
                        "{} line {}: `{}` is not a number",
                        path.display(),
                        index + 2,
                        field
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != header.len() {
            return Err(Error::Io(format!(
                "{} line {}: {} fields, header has {}",
                path.display(),
                index + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(CsvTable { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{run_to_blowup, SolverParams};
    use crate::mesh::build_grid;
    use crate::model::{Domain, DomainKind, FunctionSpec, ProblemSpec};
    use std::sync::Arc;

    fn tiny_run() -> (Trajectory, BlowupRecord) {
        let spec = ProblemSpec {
            dim: 1,
            exponent: 2.0,
            domain: Domain { kind: DomainKind::Interval, extent: 1.0 },
            potential: FunctionSpec::Constant { value: 1.0 },
            profile: FunctionSpec::CosineCap,
            potential_floor: 1e-6,
        };
        let grid = Arc::new(spec.solver_grid(64).unwrap());
        let params = SolverParams { stop_threshold: 1e6, ..SolverParams::default() };
        let trajectory = run_to_blowup(&spec, 40.0, &grid, &params).unwrap();
        let record = crate::blowup::analyze_trajectory(&trajectory).unwrap();
        (trajectory, record)
    }

    #[test]
    fn record_json_uses_exactly_the_documented_keys() {
        let (_, record) = tiny_run();
        let stored = StoredRecord::from(&record);
        let value: serde_json::Value =
            serde_json::from_str(&serde_json::to_string(&stored).unwrap()).unwrap();
        let mut keys: Vec<&str> =
            value.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            vec!["T_ci", "T_est", "a", "fit_window", "rate_exponent", "typeI_sup"]
        );
        let reparsed: StoredRecord = serde_json::from_value(value).unwrap();
        assert_eq!(reparsed, stored);
    }

    #[test]
    fn summary_json_uses_exactly_the_documented_keys() {
        let summary = StoredSummary {
            time_scale: 1.0,
            target: 1.0,
            margins2: vec![0.1, 0.05],
            margins3: vec![],
            fitted_decay_exponent: None,
            checks: StoredChecks {
                final_margin_ok: true,
                trend_ok: true,
                nonnegative_ok: None,
                shrinking_ok: None,
                locations_ok: None,
            },
        };
        let value: serde_json::Value =
            serde_json::from_str(&serde_json::to_string(&summary).unwrap()).unwrap();
        let mut keys: Vec<&str> =
            value.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            vec!["A", "checks", "fitted_decay_exponent", "margins2", "margins3", "target"]
        );
        assert!(summary.checks.all_ok(), "null concentration checks count as passing");
    }

    #[test]
    fn run_artifacts_respect_the_format_selection() {
        let (trajectory, record) = tiny_run();
        let dir = tempfile::tempdir().unwrap();
        let csv_only = write_run_artifacts(
            dir.path(),
            &trajectory,
            &record,
            &[OutputFormat::Csv],
        )
        .unwrap();
        assert!(csv_only.iter().all(|p| p.extension().unwrap() == "csv"));
        assert!(!dir.path().join("record.json").exists());
        let json_only = write_run_artifacts(
            dir.path(),
            &trajectory,
            &record,
            &[OutputFormat::Json],
        )
        .unwrap();
        assert_eq!(json_only, vec![dir.path().join("record.json")]);
        let read_back = read_record(dir.path()).unwrap();
        assert_eq!(read_back.blowup_time, record.blowup_time);
        assert_eq!(read_back.fit_window, record.fit_window);
    }

    #[test]
    fn trajectory_table_reads_back_with_the_documented_header() {
        let (trajectory, record) = tiny_run();
        let dir = tempfile::tempdir().unwrap();
        write_run_artifacts(
            dir.path(),
            &trajectory,
            &record,
            &[OutputFormat::Csv, OutputFormat::Json],
        )
        .unwrap();
        let table = read_csv(&dir.path().join("trajectory.csv")).unwrap();
        assert_eq!(table.header, vec!["t", "u_max", "argmax"]);
        assert_eq!(table.rows.len(), trajectory.series.len());
        let last = table.rows.last().unwrap();
        let entry = trajectory.final_entry();
        assert_eq!(last[0], entry.time);
        assert_eq!(last[1], entry.sup);
        let snap = read_csv(&dir.path().join("snap_0.csv")).unwrap();
        assert_eq!(snap.header, vec!["x", "u"]);
        assert_eq!(snap.rows.len(), trajectory.snapshots[0].values.len());
    }

    #[test]
    fn nan_round_trips_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, format!("a,b\n{},{}\n", csv_num(f64::NAN), csv_num(2.5)))
            .unwrap();
        let table = read_csv(&path).unwrap();
        assert!(table.rows[0][0].is_nan());
        assert_eq!(table.rows[0][1], 2.5);
    }
}

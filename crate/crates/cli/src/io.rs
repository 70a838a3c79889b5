//! On-disk formats: fixed-column CSV with a one-line header, JSON for
//! anything nested.

use std::fs;
use std::path::Path;

use hopperlab_core::controller::PhaseKind;
use hopperlab_core::estimation::{EstimateRow, ForceEstimateSeries, ObserverTruth, TruthColumns};
use hopperlab_core::simulator::{IntrusionLog, IntrusionSample, SensorFrame, StrideEvents, TrialLog};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{io_err, CliError};

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Missing files are a missing-input error; unreadable contents are not.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    if !path.is_file() {
        return Err(CliError::MissingInput(format!("{} does not exist", path.display())));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| io_err(path, e))).collect()
}

/// Pretty JSON, written to a sibling temporary and renamed into place so a
/// reader never sees half a file.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

/// Truth at one sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub t: f64,
    pub x_b: f64,
    pub v_b: f64,
    pub x_f: f64,
    pub v_f: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub phase: PhaseKind,
    pub a_b: f64,
    pub a_f: f64,
    pub theta_ddot: f64,
    pub tau: f64,
    pub f_static: f64,
    pub f_drag: f64,
    pub f_added: f64,
    pub f_total: f64,
}

impl TruthRow {
    pub fn observer_truth(&self) -> ObserverTruth {
        ObserverTruth {
            theta: self.theta,
            theta_dot: self.theta_dot,
            v_f: self.v_f,
            tau: self.tau,
            columns: TruthColumns {
                x_b: self.x_b,
                v_b: self.v_b,
                x_f: self.x_f,
                v_f: self.v_f,
                a_f: self.a_f,
                f_c: self.f_total,
            },
        }
    }
}

/// Truth decimated onto the frame clock, one row per frame.
pub fn truth_rows(log: &TrialLog) -> Result<Vec<TruthRow>, CliError> {
    let decim = log.config.sim.decimation()?;
    Ok(log
        .truth
        .iter()
        .step_by(decim)
        .zip(&log.frames)
        .map(|(s, f)| TruthRow {
            t: f.t,
            x_b: s.state.x_b,
            v_b: s.state.v_b,
            x_f: s.state.x_f,
            v_f: s.state.v_f,
            theta: s.state.theta,
            theta_dot: s.state.theta_dot,
            phase: s.state.phase.kind,
            a_b: s.accel_body,
            a_f: s.accel_foot,
            theta_ddot: s.theta_ddot,
            tau: s.tau,
            f_static: s.force.f_static,
            f_drag: s.force.f_drag,
            f_added: s.force.f_added,
            f_total: s.force.f_total,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateCsvRow {
    pub t: f64,
    pub x_b_hat: f64,
    pub v_b_hat: f64,
    pub x_f_hat: f64,
    pub v_f_hat: f64,
    #[serde(rename = "F_qs")]
    pub f_qs: Option<f64>,
    #[serde(rename = "F_mo")]
    pub f_mo: f64,
    #[serde(rename = "F_loadcell")]
    pub f_loadcell: f64,
    pub a_f_meas: f64,
    pub x_b: Option<f64>,
    pub v_b: Option<f64>,
    pub x_f: Option<f64>,
    pub v_f: Option<f64>,
    pub a_f: Option<f64>,
    #[serde(rename = "F_true")]
    pub f_true: Option<f64>,
}

impl From<&EstimateRow> for EstimateCsvRow {
    fn from(r: &EstimateRow) -> Self {
        let tr = r.truth;
        Self {
            t: r.t,
            x_b_hat: r.x_b_hat,
            v_b_hat: r.v_b_hat,
            x_f_hat: r.x_f_hat,
            v_f_hat: r.v_f_hat,
            f_qs: r.f_qs,
            f_mo: r.f_mo,
            f_loadcell: r.f_loadcell,
            a_f_meas: r.a_f_meas,
            x_b: tr.map(|c| c.x_b),
            v_b: tr.map(|c| c.v_b),
            x_f: tr.map(|c| c.x_f),
            v_f: tr.map(|c| c.v_f),
            a_f: tr.map(|c| c.a_f),
            f_true: tr.map(|c| c.f_c),
        }
    }
}

impl From<&EstimateCsvRow> for EstimateRow {
    fn from(r: &EstimateCsvRow) -> Self {
        let truth = match (r.x_b, r.v_b, r.x_f, r.v_f, r.a_f, r.f_true) {
            (Some(x_b), Some(v_b), Some(x_f), Some(v_f), Some(a_f), Some(f_c)) => Some(TruthColumns {
                x_b,
                v_b,
                x_f,
                v_f,
                a_f,
                f_c,
            }),
            _ => None,
        };
        Self {
            t: r.t,
            x_b_hat: r.x_b_hat,
            v_b_hat: r.v_b_hat,
            x_f_hat: r.x_f_hat,
            v_f_hat: r.v_f_hat,
            f_qs: r.f_qs,
            f_mo: r.f_mo,
            f_loadcell: r.f_loadcell,
            a_f_meas: r.a_f_meas,
            truth,
        }
    }
}

pub fn write_estimates(path: &Path, series: &ForceEstimateSeries) -> Result<(), CliError> {
    let rows: Vec<EstimateCsvRow> = series.rows.iter().map(EstimateCsvRow::from).collect();
    write_csv(path, &rows)
}

pub fn read_estimates(path: &Path) -> Result<ForceEstimateSeries, CliError> {
    let rows: Vec<EstimateCsvRow> = read_csv(path)?;
    Ok(ForceEstimateSeries {
        rows: rows.iter().map(EstimateRow::from).collect(),
    })
}

pub fn read_frames(path: &Path) -> Result<Vec<SensorFrame>, CliError> {
    read_csv(path)
}

/// Stride events with the sweep cell they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsFile {
    pub trial_id: String,
    /// Nominal touchdown speed of the cell [m/s].
    pub v_td: f64,
    /// [N/m]
    pub k_c: f64,
    pub seed: u64,
    pub events: StrideEvents,
}

pub fn write_intrusion(path: &Path, log: &IntrusionLog) -> Result<(), CliError> {
    write_csv(path, &log.samples)
}

pub fn read_intrusion(path: &Path) -> Result<IntrusionLog, CliError> {
    let samples: Vec<IntrusionSample> = read_csv(path)?;
    let speed = samples
        .first()
        .map(|s| s.speed)
        .ok_or_else(|| CliError::Runtime(format!("{}: no samples", path.display())))?;
    Ok(IntrusionLog { speed, samples })
}

//! Summary JSON and plot-ready CSVs built from identification output.

use std::path::Path;

use hopperlab_core::identification::{
    added_mass_reconstruction, extract_samples, ConditionSummary, DepthSpeedFit, ForceSource, KinematicsSource,
    Treatment, TreatmentReport, WindowPolicy,
};
use hopperlab_core::terrain::penetration_depth;
use serde::{Deserialize, Serialize};

use crate::commands::{DEPTH_SPEED_FIT, TREATMENT_REPORT};
use crate::config::{ExperimentConfig, N_PER_CM};
use crate::io::{read_estimates, read_intrusion, read_json, write_csv, write_json, EventsFile};
use crate::manifest::{HopEntry, Manifest};
use crate::CliError;

pub const SUMMARY: &str = "report/summary.json";
pub const FIG_FORCE_DEPTH: &str = "report/fig4a_force_depth.csv";
pub const FIG_FORCE_SURFACE: &str = "report/fig4c_force_surface.csv";
pub const FIG_ADDED_MASS: &str = "report/fig4f_added_mass.csv";
pub const FIG_SPEED: &str = "report/fig5c_speed.csv";
pub const FIG_STIFFNESS: &str = "report/fig5d_stiffness.csv";

/// Speed the stiffness panel is drawn at (closest grid speed).
const STIFFNESS_PANEL_SPEED: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// [N/m]
    pub k_gt: f64,
    pub n_trials: usize,
    /// Hop whose traces fill the force-depth and added-mass panels.
    pub reference_trial: String,
    /// Controller stiffness of the speed panel [N/m].
    pub reference_k_c: f64,
    /// Touchdown speed of the stiffness panel [m/s].
    pub reference_v_td: f64,
    pub conditions: Vec<ConditionSummary>,
    pub depth_speed_fit: Option<DepthSpeedFit>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceDepthRow {
    pub t: f64,
    pub depth_hat: f64,
    pub depth_true: Option<f64>,
    #[serde(rename = "F_qs")]
    pub f_qs: Option<f64>,
    #[serde(rename = "F_mo")]
    pub f_mo: f64,
    #[serde(rename = "F_loadcell")]
    pub f_loadcell: f64,
    #[serde(rename = "F_true")]
    pub f_true: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub depth: f64,
    pub speed: f64,
    pub force: f64,
    pub force_fit: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AddedMassRow {
    pub t: f64,
    pub residual: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub v_td: f64,
    /// [N/cm]
    pub k_c: f64,
    pub treatment: Treatment,
    pub n: usize,
    pub mean_k: f64,
    pub sem_k: f64,
    pub rel_err: f64,
}

impl From<&ConditionSummary> for PanelRow {
    fn from(c: &ConditionSummary) -> Self {
        Self {
            v_td: c.v_td,
            k_c: c.k_c / N_PER_CM,
            treatment: c.treatment,
            n: c.n,
            mean_k: c.mean_k,
            sem_k: c.sem_k,
            rel_err: c.rel_err,
        }
    }
}

fn closest(values: impl Iterator<Item = f64>, target: f64) -> Option<f64> {
    values.min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
}

/// Fastest hop at the reference stiffness, lowest seed.
fn reference_hop(manifest: &Manifest, k_c: f64) -> Option<&HopEntry> {
    manifest
        .hops
        .iter()
        .filter(|h| h.k_c == k_c)
        .max_by(|a, b| a.v_td.total_cmp(&b.v_td).then(b.seed.cmp(&a.seed)))
}

pub fn write_report(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let report: TreatmentReport = read_json(&out.join(TREATMENT_REPORT))?;
    if report.conditions.is_empty() {
        return Err(CliError::Runtime("treatment report has no conditions".into()));
    }
    let fit_path = out.join(DEPTH_SPEED_FIT);
    let fit: Option<DepthSpeedFit> = if fit_path.is_file() {
        Some(read_json(&fit_path)?)
    } else {
        None
    };
    let manifest = Manifest::load(out)?;
    let terrain = &cfg.trial.terrain;

    let k_ref = closest(report.conditions.iter().map(|c| c.k_c), cfg.trial.controller.k_compress)
        .expect("conditions are non-empty");
    let v_ref = closest(report.conditions.iter().map(|c| c.v_td), STIFFNESS_PANEL_SPEED).expect("non-empty");
    let mut files = Vec::new();

    let speed_rows: Vec<PanelRow> = report
        .conditions
        .iter()
        .filter(|c| c.k_c == k_ref)
        .map(PanelRow::from)
        .collect();
    write_csv(&out.join(FIG_SPEED), &speed_rows)?;
    files.push(FIG_SPEED);
    let stiff_rows: Vec<PanelRow> = report
        .conditions
        .iter()
        .filter(|c| c.v_td == v_ref)
        .map(PanelRow::from)
        .collect();
    write_csv(&out.join(FIG_STIFFNESS), &stiff_rows)?;
    files.push(FIG_STIFFNESS);

    let reference = reference_hop(&manifest, k_ref)
        .ok_or_else(|| CliError::MissingInput(format!("no hop in the manifest at k_c {k_ref} N/m")))?;
    let series = read_estimates(&out.join(&reference.estimate))?;
    let depth_rows: Vec<ForceDepthRow> = series
        .rows
        .iter()
        .map(|r| ForceDepthRow {
            t: r.t,
            depth_hat: penetration_depth(r.x_f_hat, terrain),
            depth_true: r.truth.map(|c| penetration_depth(c.x_f, terrain)),
            f_qs: r.f_qs,
            f_mo: r.f_mo,
            f_loadcell: r.f_loadcell,
            f_true: r.truth.map(|c| c.f_c),
        })
        .collect();
    write_csv(&out.join(FIG_FORCE_DEPTH), &depth_rows)?;
    files.push(FIG_FORCE_DEPTH);

    if !manifest.intrusions.is_empty() {
        let mut rows = Vec::new();
        for e in &manifest.intrusions {
            let log = read_intrusion(&out.join(&e.path))?;
            rows.extend(log.samples.iter().map(|s| SurfaceRow {
                depth: s.depth,
                speed: s.speed,
                force: s.force,
                force_fit: fit.as_ref().map(|f| f.force(s.depth, s.speed)),
            }));
        }
        write_csv(&out.join(FIG_FORCE_SURFACE), &rows)?;
        files.push(FIG_FORCE_SURFACE);
    }

    if let Some(f) = &fit {
        let events: EventsFile = read_json(&out.join(&reference.events))?;
        let policy = WindowPolicy {
            source: ForceSource::Loadcell,
            kinematics: KinematicsSource::Measured,
            half_width: cfg.sweep.half_width,
        };
        let samples = extract_samples(&series, &events.events, terrain, &policy)?;
        let rec = added_mass_reconstruction(f, &samples);
        let rows: Vec<AddedMassRow> = (0..rec.t.len())
            .map(|i| AddedMassRow {
                t: rec.t[i],
                residual: rec.residual[i],
                predicted: rec.predicted[i],
            })
            .collect();
        write_csv(&out.join(FIG_ADDED_MASS), &rows)?;
        files.push(FIG_ADDED_MASS);
    }

    files.push(SUMMARY);
    let summary = Summary {
        k_gt: report.k_gt,
        n_trials: manifest.hops.len(),
        reference_trial: reference.trial_id.clone(),
        reference_k_c: k_ref,
        reference_v_td: v_ref,
        conditions: report.conditions,
        depth_speed_fit: fit,
        files: files.iter().map(|s| s.to_string()).collect(),
    };
    write_json(&out.join(SUMMARY), &summary)?;
    Ok(format!("report written to {}", out.join("report").display()))
}

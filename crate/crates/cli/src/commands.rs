//! Pipeline stages behind the CLI subcommands.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use hopperlab_core::estimation::{estimate_frames, ObserverTruth};
use hopperlab_core::identification::{
    fit_depth_speed_model, treatment_comparison, Condition, DepthSpeedFit, Treatment, TreatmentReport, TrialEstimate,
};
use hopperlab_core::simulator::{run_constant_speed_intrusion, run_hop_trial, TrialConfig};
use hopperlab_core::GRAVITY;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::io::{
    read_csv, read_estimates, read_frames, read_intrusion, read_json, truth_rows, write_csv, write_estimates,
    write_intrusion, write_json, EventsFile, TruthRow,
};
use crate::manifest::{HopEntry, Manifest, Status};
use crate::{report, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    /// One hop per seed with the configured drop.
    Simulate,
    /// Constant-speed intrusion grid.
    Intrude,
    /// Kalman filter, observer and quasi-static force for every logged hop.
    Estimate,
    /// Depth-speed fit and the three-treatment stiffness comparison.
    Identify,
    /// Hops, intrusions, estimation, identification and report in one go.
    Sweep,
    /// Summary JSON and plot-ready CSVs from identification output.
    Report,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    pub resume: bool,
    /// Seeds given on the command line.
    pub seeds: Option<Vec<u64>>,
}

pub const TREATMENT_REPORT: &str = "identify/treatment_report.json";
pub const TREATMENT_TRIALS: &str = "identify/treatment_trials.csv";
pub const DEPTH_SPEED_FIT: &str = "identify/depth_speed_fit.json";

pub fn run_command(cfg: &ExperimentConfig, cmd: Command, opts: &RunOptions) -> Result<String, CliError> {
    let out = opts.out.as_path();
    crate::io::ensure_dir(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    pool.install(|| match cmd {
        Command::Simulate => simulate(cfg, opts),
        Command::Intrude => intrude(cfg, opts),
        Command::Estimate => estimate(cfg, out),
        Command::Identify => identify(cfg, out).map(|r| format!("{} condition summaries", r.conditions.len())),
        Command::Report => report::write_report(cfg, out),
        Command::Sweep => sweep(cfg, opts),
    })
}

fn existing_manifest(out: &Path) -> Result<Option<Manifest>, CliError> {
    match Manifest::load(out) {
        Ok(m) => Ok(Some(m)),
        Err(CliError::MissingInput(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Run one hop and write its frames, truth and events.
pub fn simulate_hop(trial: &TrialConfig, entry: &HopEntry, out: &Path) -> Result<(), CliError> {
    let log = run_hop_trial(trial, entry.seed)?;
    write_csv(&out.join(&entry.frames), &log.frames)?;
    write_csv(&out.join(&entry.truth), &truth_rows(&log)?)?;
    write_json(
        &out.join(&entry.events),
        &EventsFile {
            trial_id: entry.trial_id.clone(),
            v_td: entry.v_td,
            k_c: entry.k_c,
            seed: entry.seed,
            events: log.events,
        },
    )
}

/// Estimate one logged hop from its frame CSV; truth columns are attached
/// when the truth CSV is there.
pub fn estimate_hop(cfg: &ExperimentConfig, entry: &HopEntry, out: &Path) -> Result<(), CliError> {
    let frames = read_frames(&out.join(&entry.frames))?;
    let truth_path = out.join(&entry.truth);
    let truth: Option<Vec<ObserverTruth>> = if truth_path.is_file() {
        let rows: Vec<TruthRow> = read_csv(&truth_path)?;
        Some(rows.iter().map(TruthRow::observer_truth).collect())
    } else {
        None
    };
    let t = &cfg.trial;
    let series = estimate_frames(
        &frames,
        truth.as_deref(),
        &t.linkage,
        &t.noise,
        t.controller.l0_compress,
        &cfg.estimation,
    )?;
    write_estimates(&out.join(&entry.estimate), &series)
}

/// Run `work` over the pending entries selected by `pick`, recording each
/// outcome in the manifest as it lands.
fn run_pending<T: Sync>(
    manifest: &Mutex<Manifest>,
    out: &Path,
    items: &[(usize, T)],
    work: impl Fn(&T) -> Result<(), CliError> + Sync,
    mark: impl Fn(&mut Manifest, usize, Status, Option<String>) + Sync,
) -> Result<(), CliError> {
    let failures: Vec<(usize, CliError)> = items
        .par_iter()
        .filter_map(|(idx, item)| {
            let res = work(item);
            let mut m = manifest.lock().expect("manifest lock");
            let (status, err) = match &res {
                Ok(()) => (Status::Done, None),
                Err(e) => (Status::Failed, Some(e.to_string())),
            };
            mark(&mut m, *idx, status, err);
            if let Err(e) = m.save(out) {
                return Some((*idx, e));
            }
            res.err().map(|e| (*idx, e))
        })
        .collect();
    match failures.into_iter().min_by_key(|(i, _)| *i) {
        None => Ok(()),
        Some((_, e)) => Err(e),
    }
}

fn hop_error(id: &str) -> impl Fn(CliError) -> CliError + '_ {
    move |e| e.context(id)
}

fn run_hops(
    manifest: &Mutex<Manifest>,
    out: &Path,
    trial_for: impl Fn(&HopEntry) -> TrialConfig + Sync,
    then: Option<&ExperimentConfig>,
) -> Result<(), CliError> {
    let pending: Vec<(usize, HopEntry)> = {
        let m = manifest.lock().expect("manifest lock");
        m.hops
            .iter()
            .enumerate()
            .filter(|(_, h)| h.status != Status::Done)
            .map(|(i, h)| (i, h.clone()))
            .collect()
    };
    run_pending(
        manifest,
        out,
        &pending,
        |h| {
            simulate_hop(&trial_for(h), h, out).map_err(hop_error(&h.trial_id))?;
            match then {
                Some(cfg) => estimate_hop(cfg, h, out).map_err(hop_error(&h.trial_id)),
                None => Ok(()),
            }
        },
        |m, i, status, err| {
            m.hops[i].status = status;
            m.hops[i].error = err;
        },
    )
}

fn run_intrusions(cfg: &ExperimentConfig, manifest: &Mutex<Manifest>, out: &Path) -> Result<(), CliError> {
    let rig = cfg.intrusion.rig();
    let pending: Vec<(usize, (String, f64, u64, PathBuf))> = {
        let m = manifest.lock().expect("manifest lock");
        m.intrusions
            .iter()
            .enumerate()
            .filter(|(_, e)| e.status != Status::Done)
            .map(|(i, e)| (i, (e.trial_id.clone(), e.speed, e.seed, e.path.clone())))
            .collect()
    };
    run_pending(
        manifest,
        out,
        &pending,
        |(id, speed, seed, path)| {
            let log = run_constant_speed_intrusion(*speed, &rig, &cfg.trial.terrain, *seed)
                .map_err(|e| CliError::from(e).context(id))?;
            write_intrusion(&out.join(path), &log)
        },
        |m, i, status, err| {
            m.intrusions[i].status = status;
            m.intrusions[i].error = err;
        },
    )
}

fn simulate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<String, CliError> {
    let out = opts.out.as_path();
    let seeds = opts.seeds.clone().unwrap_or_else(|| vec![cfg.sweep.seeds[0]]);
    let sim = &cfg.trial.sim;
    let v_td = (sim.release_speed.powi(2) + 2.0 * GRAVITY * sim.drop_height).sqrt();
    let k_c = cfg.trial.controller.k_compress;
    let mut manifest = existing_manifest(out)?.unwrap_or_default();
    manifest.hops = seeds
        .iter()
        .map(|&s| HopEntry::named(format!("sim_s{s}"), v_td, k_c, s))
        .collect();
    manifest.validate()?;
    manifest.save(out)?;
    let n = manifest.hops.len();
    let manifest = Mutex::new(manifest);
    run_hops(&manifest, out, |_| cfg.trial, None)?;
    Ok(format!("simulated {n} hop(s) into {}", out.join("trials").display()))
}

fn intrude(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<String, CliError> {
    let out = opts.out.as_path();
    let previous = existing_manifest(out)?;
    let mut manifest = previous.clone().unwrap_or_default();
    manifest.intrusions = Manifest::plan(cfg).intrusions;
    if let (true, Some(prev)) = (opts.resume, &previous) {
        manifest.resume_from(prev, out);
    }
    manifest.save(out)?;
    let n = manifest.intrusions.len();
    let manifest = Mutex::new(manifest);
    run_intrusions(cfg, &manifest, out)?;
    Ok(format!("{n} intrusion logs in {}", out.join("intrusion").display()))
}

fn estimate(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let manifest = Manifest::load(out)?;
    if manifest.hops.is_empty() {
        return Err(CliError::MissingInput("manifest lists no hop trials".into()));
    }
    manifest
        .hops
        .par_iter()
        .map(|h| estimate_hop(cfg, h, out).map_err(hop_error(&h.trial_id)))
        .collect::<Result<Vec<()>, _>>()?;
    Ok(format!("estimated {} hop(s)", manifest.hops.len()))
}

/// One row of the flat treatment CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentTrialRow {
    pub v_td: f64,
    pub k_c: f64,
    pub treatment: Treatment,
    pub k_est: f64,
    pub seed: u64,
}

pub fn load_trial_estimates(manifest: &Manifest, out: &Path) -> Result<Vec<TrialEstimate>, CliError> {
    manifest
        .hops
        .par_iter()
        .map(|h| {
            let series = read_estimates(&out.join(&h.estimate)).map_err(hop_error(&h.trial_id))?;
            let ev: EventsFile = read_json(&out.join(&h.events)).map_err(hop_error(&h.trial_id))?;
            Ok(TrialEstimate {
                condition: Condition {
                    v_td: h.v_td,
                    k_c: h.k_c,
                },
                seed: h.seed,
                series,
                events: ev.events,
            })
        })
        .collect()
}

/// Depth-speed fit over every intrusion log the manifest lists, if any.
pub fn fit_intrusions(manifest: &Manifest, out: &Path) -> Result<Option<DepthSpeedFit>, CliError> {
    if manifest.intrusions.is_empty() {
        return Ok(None);
    }
    let logs = manifest
        .intrusions
        .par_iter()
        .map(|e| read_intrusion(&out.join(&e.path)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Some(fit_depth_speed_model(&logs)?))
}

pub fn identify(cfg: &ExperimentConfig, out: &Path) -> Result<TreatmentReport, CliError> {
    let manifest = Manifest::load(out)?;
    if manifest.hops.is_empty() {
        return Err(CliError::MissingInput("manifest lists no hop trials".into()));
    }
    let fit = fit_intrusions(&manifest, out)?;
    if let Some(f) = &fit {
        write_json(&out.join(DEPTH_SPEED_FIT), f)?;
    }
    let mut options = cfg.treatment_options();
    if cfg.sweep.drag_correction {
        options.drag_correction = Some(fit.ok_or_else(|| {
            CliError::MissingInput("drag correction needs intrusion logs; run `intrude` first".into())
        })?);
    }
    let trials = load_trial_estimates(&manifest, out)?;
    let report = treatment_comparison(&trials, cfg.trial.terrain.k_stiff, &cfg.trial.terrain, &options)?;
    write_json(&out.join(TREATMENT_REPORT), &report)?;
    let rows: Vec<TreatmentTrialRow> = report
        .trials
        .iter()
        .map(|f| TreatmentTrialRow {
            v_td: f.v_td,
            k_c: f.k_c,
            treatment: f.treatment,
            k_est: f.k_est,
            seed: f.seed,
        })
        .collect();
    write_csv(&out.join(TREATMENT_TRIALS), &rows)?;
    Ok(report)
}

fn sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<String, CliError> {
    let out = opts.out.as_path();
    let mut manifest = Manifest::plan(cfg);
    manifest.validate()?;
    if opts.resume {
        if let Some(prev) = existing_manifest(out)? {
            manifest.resume_from(&prev, out);
        }
    }
    let skipped = manifest.hops.iter().filter(|h| h.status == Status::Done).count()
        + manifest.intrusions.iter().filter(|i| i.status == Status::Done).count();
    manifest.save(out)?;
    let manifest = Mutex::new(manifest);
    run_hops(&manifest, out, |h| cfg.trial_for(h.v_td, h.k_c), Some(cfg))?;
    run_intrusions(cfg, &manifest, out)?;
    let m = manifest.into_inner().expect("manifest lock");
    let report = identify(cfg, out)?;
    report::write_report(cfg, out)?;
    Ok(format!(
        "{} hops, {} intrusions ({skipped} reused), {} condition summaries",
        m.hops.len(),
        m.intrusions.len(),
        report.conditions.len()
    ))
}

//! Sweep manifest: every planned trial with its output paths and status,
//! written before the first trial runs so an interrupted sweep can resume.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, N_PER_CM};
use crate::io::{read_json, write_json};
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopEntry {
    pub trial_id: String,
    pub v_td: f64,
    /// [N/m]
    pub k_c: f64,
    pub seed: u64,
    /// Paths relative to the output directory.
    pub frames: PathBuf,
    pub truth: PathBuf,
    pub events: PathBuf,
    pub estimate: PathBuf,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl HopEntry {
    pub fn new(v_td: f64, k_c: f64, seed: u64) -> Self {
        Self::named(hop_id(v_td, k_c, seed), v_td, k_c, seed)
    }

    pub fn named(trial_id: String, v_td: f64, k_c: f64, seed: u64) -> Self {
        let t = Path::new("trials");
        Self {
            frames: t.join(format!("{trial_id}_frames.csv")),
            truth: t.join(format!("{trial_id}_truth.csv")),
            events: t.join(format!("{trial_id}_events.json")),
            estimate: Path::new("estimates").join(format!("{trial_id}_estimate.csv")),
            trial_id,
            v_td,
            k_c,
            seed,
            status: Status::Pending,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrusionEntry {
    pub trial_id: String,
    pub speed: f64,
    pub repeat: usize,
    pub seed: u64,
    pub path: PathBuf,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub hops: Vec<HopEntry>,
    pub intrusions: Vec<IntrusionEntry>,
}

/// `hop_v1.20_k3.75_s2`: speed in m/s, stiffness in N/cm.
pub fn hop_id(v_td: f64, k_c: f64, seed: u64) -> String {
    format!("hop_v{v_td:.2}_k{:.2}_s{seed}", k_c / N_PER_CM)
}

pub fn intrusion_id(speed: f64, repeat: usize) -> String {
    format!("intr_v{speed:.3}_r{}", repeat + 1)
}

impl Manifest {
    /// Full sweep plan: hop grid (speed-major) then the intrusion grid.
    pub fn plan(cfg: &ExperimentConfig) -> Self {
        let mut hops = Vec::new();
        for &v in &cfg.sweep.speeds {
            for &k in &cfg.sweep.stiffnesses {
                for &s in &cfg.sweep.seeds {
                    hops.push(HopEntry::new(v, k, s));
                }
            }
        }
        let speeds = cfg.intrusion.speeds();
        let mut intrusions = Vec::new();
        for repeat in 0..cfg.intrusion.repeats {
            for (i, &speed) in speeds.iter().enumerate() {
                let trial_id = intrusion_id(speed, repeat);
                intrusions.push(IntrusionEntry {
                    path: Path::new("intrusion").join(format!("{trial_id}.csv")),
                    trial_id,
                    speed,
                    repeat,
                    seed: (repeat * speeds.len() + i) as u64 + 1,
                    status: Status::Pending,
                    error: None,
                });
            }
        }
        Self { hops, intrusions }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let mut ids = BTreeSet::new();
        let all = self
            .hops
            .iter()
            .map(|h| &h.trial_id)
            .chain(self.intrusions.iter().map(|i| &i.trial_id));
        for id in all {
            if !ids.insert(id) {
                return Err(CliError::Config(format!("duplicate trial id {id} in the sweep plan")));
            }
        }
        Ok(())
    }

    pub fn load(out: &Path) -> Result<Self, CliError> {
        read_json(&out.join(MANIFEST))
    }

    pub fn save(&self, out: &Path) -> Result<(), CliError> {
        write_json(&out.join(MANIFEST), self)
    }

    /// Carry over completed entries of `previous` whose outputs still exist.
    /// Entries are matched by trial id and must describe the same cell.
    pub fn resume_from(&mut self, previous: &Manifest, out: &Path) {
        for h in &mut self.hops {
            let done = previous.hops.iter().any(|p| {
                p.trial_id == h.trial_id
                    && p.status == Status::Done
                    && p.v_td == h.v_td
                    && p.k_c == h.k_c
                    && p.seed == h.seed
                    && [&p.frames, &p.truth, &p.events, &p.estimate]
                        .iter()
                        .all(|f| out.join(f).is_file())
            });
            if done {
                h.status = Status::Done;
            }
        }
        for i in &mut self.intrusions {
            let done = previous.intrusions.iter().any(|p| {
                p.trial_id == i.trial_id && p.status == Status::Done && p.seed == i.seed && out.join(&p.path).is_file()
            });
            if done {
                i.status = Status::Done;
            }
        }
    }
}

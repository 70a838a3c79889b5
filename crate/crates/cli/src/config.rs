//! TOML experiment configuration.
//!
//! Every section is optional and falls back to the library defaults.
//! Controller and sweep stiffnesses are written in N/cm and stored in N/m.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use hopperlab_core::controller::{ControllerConfig, TouchdownDetector};
use hopperlab_core::estimation::EstimationConfig;
use hopperlab_core::identification::{KinematicsSource, TreatmentOptions, WeightConfig};
use hopperlab_core::linkage::LinkageParams;
use hopperlab_core::simulator::{IntrusionConfig, NoiseConfig, SimConfig, TrialConfig};
use hopperlab_core::terrain::TerrainParams;
use serde::{Deserialize, Deserializer, Serialize};

use crate::CliError;

/// N/cm → N/m.
pub const N_PER_CM: f64 = 100.0;

/// A stiffness in N/cm, written either as a number or a numeric string.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct NPerCm(pub f64);

impl<'de> Deserialize<'de> for NPerCm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(NPerCm(v)),
            Raw::Int(v) => Ok(NPerCm(v as f64)),
            Raw::Text(s) => s
                .trim()
                .trim_end_matches("N/cm")
                .trim()
                .parse()
                .map(NPerCm)
                .map_err(|_| serde::de::Error::custom(format!("`{s}` is not a stiffness in N/cm"))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ControllerSection {
    #[serde(alias = "k_c")]
    k_compress: NPerCm,
    #[serde(alias = "k_e")]
    k_extend: NPerCm,
    l0_compress: f64,
    l0_extend: f64,
    b_stance: f64,
    b_flight: f64,
    contact_force_threshold: f64,
    min_compression: f64,
    touchdown_detector: TouchdownDetector,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let c = ControllerConfig::default();
        Self {
            k_compress: NPerCm(c.k_compress / N_PER_CM),
            k_extend: NPerCm(c.k_extend / N_PER_CM),
            l0_compress: c.l0_compress,
            l0_extend: c.l0_extend,
            b_stance: c.b_stance,
            b_flight: c.b_flight,
            contact_force_threshold: c.contact_force_threshold,
            min_compression: c.min_compression,
            touchdown_detector: c.touchdown_detector,
        }
    }
}

impl From<ControllerSection> for ControllerConfig {
    fn from(s: ControllerSection) -> Self {
        ControllerConfig {
            k_compress: s.k_compress.0 * N_PER_CM,
            k_extend: s.k_extend.0 * N_PER_CM,
            l0_compress: s.l0_compress,
            l0_extend: s.l0_extend,
            b_stance: s.b_stance,
            b_flight: s.b_flight,
            contact_force_threshold: s.contact_force_threshold,
            min_compression: s.min_compression,
            touchdown_detector: s.touchdown_detector,
        }
    }
}

/// Constant-speed intrusion grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntrusionSweep {
    pub speed_min: f64,
    pub speed_max: f64,
    pub speed_count: usize,
    pub repeats: usize,
    pub z_max: f64,
    pub sample_period: f64,
    pub loadcell_sigma: f64,
}

impl Default for IntrusionSweep {
    fn default() -> Self {
        let rig = IntrusionConfig::default();
        Self {
            speed_min: 0.022,
            speed_max: 1.1,
            speed_count: 50,
            repeats: 3,
            z_max: rig.z_max,
            sample_period: rig.sample_period,
            loadcell_sigma: rig.loadcell_sigma,
        }
    }
}

impl IntrusionSweep {
    pub fn rig(&self) -> IntrusionConfig {
        IntrusionConfig {
            z_max: self.z_max,
            sample_period: self.sample_period,
            loadcell_sigma: self.loadcell_sigma,
        }
    }

    /// Evenly spaced speeds from `speed_min` to `speed_max` inclusive.
    pub fn speeds(&self) -> Vec<f64> {
        match self.speed_count {
            0 => vec![],
            1 => vec![self.speed_min],
            n => (0..n)
                .map(|i| self.speed_min + (self.speed_max - self.speed_min) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepSection {
    speeds: Vec<f64>,
    stiffnesses: Vec<NPerCm>,
    seeds: Vec<u64>,
    kinematics: KinematicsSource,
    half_width: usize,
    drag_correction: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            speeds: vec![0.2, 0.5, 0.8, 1.0, 1.2],
            stiffnesses: vec![NPerCm(2.5), NPerCm(3.75), NPerCm(5.0)],
            seeds: (1..=5).collect(),
            kinematics: KinematicsSource::Estimated,
            half_width: 5,
            drag_correction: false,
        }
    }
}

/// Hop sweep grid, with stiffnesses in N/m.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub speeds: Vec<f64>,
    pub stiffnesses: Vec<f64>,
    pub seeds: Vec<u64>,
    pub kinematics: KinematicsSource,
    pub half_width: usize,
    /// Subtract the intrusion-fitted velocity term before the weighted fit.
    pub drag_correction: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    linkage: LinkageParams,
    terrain: TerrainParams,
    controller: ControllerSection,
    sim: SimConfig,
    noise: NoiseConfig,
    weight: WeightConfig,
    estimation: EstimationConfig,
    intrusion: IntrusionSweep,
    sweep: SweepSection,
    output: OutputSection,
}

/// Validated experiment configuration, all quantities SI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    /// Single-trial settings; the sweep overrides drop height and k_c.
    pub trial: TrialConfig,
    pub weight: WeightConfig,
    pub estimation: EstimationConfig,
    pub intrusion: IntrusionSweep,
    pub sweep: SweepGrid,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        parse_str("", Path::new("<default>")).expect("defaults are valid")
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.trial.validate()?;
        self.weight.validate()?;
        self.estimation.validate()?;
        let g = &self.sweep;
        let bad = |what: String| Err(CliError::Config(what));
        if g.speeds.is_empty() || g.stiffnesses.is_empty() || g.seeds.is_empty() {
            return bad("sweep: speeds, stiffnesses and seeds must be nonempty".into());
        }
        if let Some(v) = g.speeds.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return bad(format!("sweep.speeds: {v} is not a valid touchdown speed"));
        }
        for &k in &g.stiffnesses {
            let c = ControllerConfig {
                k_compress: k,
                ..self.trial.controller
            };
            c.validate(&self.trial.linkage)
                .map_err(|e| CliError::Config(format!("sweep.stiffnesses: {} N/cm: {e}", k / N_PER_CM)))?;
        }
        if g.seeds.iter().collect::<BTreeSet<_>>().len() != g.seeds.len() {
            return bad("sweep.seeds must be distinct".into());
        }
        if g.half_width == 0 {
            return bad("sweep.half_width must be positive".into());
        }
        let i = &self.intrusion;
        if i.speed_count == 0 || i.repeats == 0 {
            return bad("intrusion: speed_count and repeats must be positive".into());
        }
        if !(i.speed_min > 0.0 && i.speed_max >= i.speed_min) {
            return bad("intrusion: need 0 < speed_min ≤ speed_max".into());
        }
        if !(i.z_max > 0.0 && i.sample_period > 0.0 && i.loadcell_sigma >= 0.0) {
            return bad("intrusion: z_max and sample_period must be positive, loadcell_sigma nonnegative".into());
        }
        Ok(())
    }

    /// Trial settings for one sweep cell.
    pub fn trial_for(&self, v_td: f64, k_c: f64) -> TrialConfig {
        let mut t = self.trial;
        t.sim.drop_height = SimConfig::drop_height_for_speed(v_td);
        t.sim.release_speed = 0.0;
        t.controller.k_compress = k_c;
        t
    }

    pub fn treatment_options(&self) -> TreatmentOptions {
        TreatmentOptions {
            weights: self.weight,
            kinematics: self.sweep.kinematics,
            half_width: self.sweep.half_width,
            drag_correction: None,
        }
    }

    /// Replace the seed list, as `--seeds` does.
    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Result<Self, CliError> {
        self.sweep.seeds = seeds;
        self.validate()?;
        Ok(self)
    }
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

pub fn parse_str(text: &str, path: &Path) -> Result<ExperimentConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(1);
        CliError::Config(format!("{}:{line}: {}", path.display(), e.message().trim()))
    })?;
    let sweep = SweepGrid {
        speeds: raw.sweep.speeds,
        stiffnesses: raw.sweep.stiffnesses.iter().map(|k| k.0 * N_PER_CM).collect(),
        seeds: raw.sweep.seeds,
        kinematics: raw.sweep.kinematics,
        half_width: raw.sweep.half_width,
        drag_correction: raw.sweep.drag_correction,
    };
    let cfg = ExperimentConfig {
        trial: TrialConfig {
            sim: raw.sim,
            controller: raw.controller.into(),
            terrain: raw.terrain,
            linkage: raw.linkage,
            noise: raw.noise,
        },
        weight: raw.weight,
        estimation: raw.estimation,
        intrusion: raw.intrusion,
        sweep,
        output: raw.output.dir,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::MissingInput(format!("config {}: {e}", path.display())))?;
    parse_str(&text, path)
}

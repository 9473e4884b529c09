//! Scenario files: geometry, coefficients, grid and per-command settings in
//! TOML, plus the built-in preset library.
//!
//! ```toml
//! name = "example"
//!
//! [obstacle]
//! shapes = [{ kind = "disc", center = [0.0, 0.0], radius = 0.25 }]
//!
//! [[zones]]                      # outermost first
//! kind = "disc"
//! center = [0.0, 0.0]
//! radius = 0.75
//!
//! [coefficients]
//! zones = [{ speed = 1.25 }]     # same order as [[zones]]
//!
//! [domain]
//! measurement_radius = 1.5
//! box_half_width = 4.5
//!
//! [grid]
//! spacing = 0.03125
//!
//! [control_region]
//! shape = { kind = "disc", center = [0.0, 0.0], radius = 1.0 }
//! delta = 0.4
//! ```
//!
//! Optional sections: `[solver]`, `[data]`, `[simulate]`, `[decay]`,
//! `[control]`, `[rays]`. Unknown keys are rejected.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::ControlParams;
use crate::data::{bump_pair, random_smooth_pair, Bump, DataPair};
use crate::domain::{CoefficientField, ControlRegion, RegionMap, ZoneLayout, ZoneMap};
use crate::energy_decay::{EnsembleConfig, RegionTag};
use crate::error::{Error, Result};
use crate::geometry::Shape;
use crate::propagator::{Propagator, SnapshotFormat, SolverConfig};
use crate::rays::{RayProbe, SplitRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub obstacle: ObstacleSpec,
    #[serde(default)]
    pub zones: Vec<Shape>,
    #[serde(default)]
    pub coefficients: CoefficientField,
    pub domain: DomainSpec,
    pub grid: GridSpec,
    pub control_region: Option<ControlRegion>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub simulate: SimulateSpec,
    pub decay: Option<DecaySpec>,
    pub control: Option<ControlSpec>,
    pub rays: Option<RaySpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    #[serde(default)]
    pub shapes: Vec<Shape>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub measurement_radius: f64,
    pub box_half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default)]
    pub position: Vec<Bump>,
    #[serde(default)]
    pub velocity: Vec<Bump>,
    /// Random bumps instead of the listed ones.
    pub random: Option<RandomData>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomData {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "two")]
    pub bumps: usize,
    pub radius_range: (f64, f64),
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    #[serde(default = "one")]
    pub duration: f64,
    /// Steps between energy rows.
    #[serde(default = "ten")]
    pub energy_every: usize,
    /// Steps between field snapshots, checked at energy rows; 0 keeps only
    /// the final state.
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default = "text_format", with = "format_name")]
    pub snapshot_format: SnapshotFormat,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self {
            duration: 1.0,
            energy_every: 10,
            snapshot_every: 0,
            snapshot_format: SnapshotFormat::Text,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn ten() -> usize {
    10
}
fn text_format() -> SnapshotFormat {
    SnapshotFormat::Text
}

mod format_name {
    use super::SnapshotFormat;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(f: &SnapshotFormat, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match f {
            SnapshotFormat::Text => "text",
            SnapshotFormat::Binary => "binary",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SnapshotFormat, D::Error> {
        match String::deserialize(d)?.as_str() {
            "text" => Ok(SnapshotFormat::Text),
            "binary" => Ok(SnapshotFormat::Binary),
            other => Err(serde::de::Error::unknown_variant(other, &["text", "binary"])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySpec {
    /// Sample times are `dt_sample, 2·dt_sample, …, t_end`.
    pub t_end: f64,
    pub dt_sample: f64,
    #[serde(default = "ball")]
    pub region: RegionTag,
    /// Random data live in the fluid part of this disc around the origin.
    pub support_radius: f64,
    pub ensemble: EnsembleConfig,
    /// Fit window; defaults to the last two thirds of the samples.
    pub window: Option<(f64, f64)>,
}

fn ball() -> RegionTag {
    RegionTag::Ball
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    /// Candidate horizons, tried in order when no horizon is fixed.
    #[serde(default)]
    pub ladder: Vec<f64>,
    #[serde(default = "threshold")]
    pub threshold: f64,
    /// Fixed horizon, skipping the ladder.
    pub horizon: Option<f64>,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "tol")]
    pub tol: f64,
    #[serde(default = "max_iter")]
    pub max_iter: usize,
    #[serde(default = "one_usize")]
    pub filter_passes: usize,
    #[serde(default = "power_steps")]
    pub power_steps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Verification fails above this terminal relative energy.
    #[serde(default = "verify_threshold")]
    pub verify_threshold: f64,
}

fn threshold() -> f64 {
    crate::control::LADDER_THRESHOLD
}
fn tol() -> f64 {
    1e-6
}
fn max_iter() -> usize {
    200
}
fn one_usize() -> usize {
    1
}
fn power_steps() -> usize {
    20
}
fn verify_threshold() -> f64 {
    1e-2
}

impl Default for ControlSpec {
    fn default() -> Self {
        Self {
            ladder: Vec::new(),
            threshold: threshold(),
            horizon: None,
            alpha: 1.0,
            beta: 1.0,
            tol: tol(),
            max_iter: max_iter(),
            filter_passes: 1,
            power_steps: power_steps(),
            seed: 0,
            verify_threshold: verify_threshold(),
        }
    }
}

impl ControlSpec {
    pub fn params(&self, horizon: f64) -> ControlParams {
        ControlParams {
            horizon,
            alpha: self.alpha,
            beta: self.beta,
            tol: self.tol,
            max_iter: self.max_iter,
            filter_passes: self.filter_passes,
            power_steps: self.power_steps,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaySpec {
    #[serde(default = "n_rays")]
    pub n_rays: usize,
    pub t_max: f64,
    #[serde(default = "max_splits")]
    pub max_splits: usize,
    #[serde(default)]
    pub split: SplitRule,
    /// Extra launches added to the stratified set.
    #[serde(default)]
    pub probes: Vec<RayProbe>,
}

fn n_rays() -> usize {
    10_000
}
fn max_splits() -> usize {
    12
}

pub const PRESET_NAMES: [&str; 10] = [
    "fig1a",
    "fig1b",
    "fig2",
    "fig3",
    "fig4a",
    "fig4b",
    "fig5",
    "free-space",
    "convex-obstacle",
    "two-disc",
];

fn preset_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig1a" => include_str!("../presets/fig1a.toml"),
        "fig1b" => include_str!("../presets/fig1b.toml"),
        "fig2" => include_str!("../presets/fig2.toml"),
        "fig3" => include_str!("../presets/fig3.toml"),
        "fig4a" => include_str!("../presets/fig4a.toml"),
        "fig4b" => include_str!("../presets/fig4b.toml"),
        "fig5" => include_str!("../presets/fig5.toml"),
        "free-space" => include_str!("../presets/free-space.toml"),
        "convex-obstacle" => include_str!("../presets/convex-obstacle.toml"),
        "two-disc" => include_str!("../presets/two-disc.toml"),
        _ => return None,
    })
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn preset(name: &str) -> Result<Scenario> {
        let src = preset_source(name).ok_or_else(|| {
            Error::Config(format!("unknown preset `{name}`; available: {}", PRESET_NAMES.join(", ")))
        })?;
        Scenario::from_toml(src)
    }

    /// A file path, or `preset:<name>` / a bare preset name.
    pub fn load(spec: &str) -> Result<Scenario> {
        if let Some(name) = spec.strip_prefix("preset:") {
            return Scenario::preset(name);
        }
        let path = Path::new(spec);
        if !path.exists() && preset_source(spec).is_some() {
            return Scenario::preset(spec);
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        Scenario::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn layout(&self) -> ZoneLayout {
        ZoneLayout {
            obstacle: self.obstacle.shapes.clone(),
            zones: self.zones.clone(),
            measurement_radius: self.domain.measurement_radius,
            box_half_width: self.domain.box_half_width,
        }
    }

    pub fn zone_map(&self) -> Result<ZoneMap> {
        if self.coefficients.zones.len() != self.zones.len() {
            return Err(Error::Config(format!(
                "{} zones but {} zone coefficients",
                self.zones.len(),
                self.coefficients.zones.len()
            )));
        }
        ZoneMap::build(&self.layout(), &self.coefficients, self.grid.spacing)
    }

    pub fn propagator(&self, map: &ZoneMap) -> Result<Propagator> {
        Propagator::new(map, self.solver)
    }

    pub fn region(&self) -> Result<&ControlRegion> {
        self.control_region
            .as_ref()
            .ok_or_else(|| Error::Config("scenario has no [control_region]".into()))
    }

    pub fn region_map(&self, map: &ZoneMap) -> Result<RegionMap> {
        let region = self.region()?;
        region.validate(&map.layout)?;
        RegionMap::build(map, region)
    }

    /// Initial data from `[data]`, restricted to `mask` when given.
    pub fn initial_data(&self, map: &ZoneMap, allowed: &[bool]) -> Result<DataPair> {
        let pair = match &self.data.random {
            Some(r) => {
                let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
                random_smooth_pair(map, allowed, r.bumps, r.radius_range, &mut rng)
            }
            None => bump_pair(map, &self.data.position, &self.data.velocity),
        }
        .restricted(allowed);
        if pair.is_zero() {
            return Err(Error::ZeroInitialData);
        }
        Ok(pair)
    }

    pub fn control_spec(&self) -> ControlSpec {
        self.control.clone().unwrap_or_default()
    }
}

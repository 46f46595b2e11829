//! Experiment configuration: a single TOML-serializable struct with two
//! built-in profiles. Every run derives all of its randomness from
//! `master_seed` through the documented stream-splitting scheme.

use serde::{Deserialize, Serialize};

use crate::controller::{Activation, VMapping};
use crate::de::DEConfig;
use crate::env::{
    make_field, Arena, FieldProfile, SpawnSpec, DEFAULT_BOX_SIDE_M, DEFAULT_CELL_SIZE_M,
    DEFAULT_G_MAX, DEFAULT_RING_RADIUS_FACTOR,
};
use crate::error::Result;
use crate::sim::{RobotParams, SimConfig};

/// Built-in parameter sets. `Desk` finishes on a laptop in minutes;
/// `Paper` is the full-scale experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub arena_sizes: Vec<f64>,
    pub swarm_size: usize,
    /// Swarm sizes exercised by the scalability experiment.
    pub scalability_swarm_sizes: Vec<usize>,
    /// Independent repetitions per experimental condition.
    pub repetitions: usize,
    pub de: DEConfig,
    pub sim: SimConfig,
    pub robot: RobotParams,
    pub field_profile: FieldProfile,
    /// When set, arenas load their map from this grid file instead of
    /// generating one; the file must cover the arena exactly.
    pub field_file: Option<String>,
    pub cell_size_m: f64,
    pub g_max: f64,
    pub walls: bool,
    /// Spawn ring radius as a fraction of the arena side.
    pub ring_radius_factor: f64,
    pub box_side_m: f64,
    pub activation: Activation,
    pub v_mapping: VMapping,
    pub master_seed: u64,
    /// Worker threads for episode evaluation; 0 uses the global pool.
    pub workers: usize,
    /// Timestamps (seconds) for behavior-analysis pose snapshots.
    pub snapshot_times_s: Vec<f64>,
    /// Print progress lines to stderr while running.
    pub progress: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::profile(Profile::Desk)
    }
}

impl ExperimentConfig {
    pub fn profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => ExperimentConfig {
                arena_sizes: vec![10.0, 30.0, 45.0],
                swarm_size: 5,
                scalability_swarm_sizes: vec![5, 14, 50],
                repetitions: 5,
                de: DEConfig {
                    population_size: 10,
                    generations: 25,
                    ..DEConfig::default()
                },
                sim: SimConfig {
                    episode_length: 120.0,
                    ..SimConfig::default()
                },
                robot: RobotParams::default(),
                field_profile: FieldProfile::RadialRamp,
                field_file: None,
                cell_size_m: DEFAULT_CELL_SIZE_M,
                g_max: DEFAULT_G_MAX,
                walls: true,
                ring_radius_factor: DEFAULT_RING_RADIUS_FACTOR,
                box_side_m: DEFAULT_BOX_SIDE_M,
                activation: Activation::Softplus,
                v_mapping: VMapping::Affine,
                master_seed: 1,
                workers: 0,
                snapshot_times_s: vec![0.0, 30.0, 60.0, 90.0, 120.0],
                progress: false,
            },
            Profile::Paper => ExperimentConfig {
                arena_sizes: vec![10.0, 30.0, 45.0],
                swarm_size: 14,
                scalability_swarm_sizes: vec![5, 14, 50],
                repetitions: 30,
                de: DEConfig::default(),
                sim: SimConfig::default(),
                snapshot_times_s: vec![0.0, 120.0, 240.0, 360.0, 480.0, 600.0],
                ..ExperimentConfig::profile(Profile::Desk)
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.de.validate()?;
        self.sim.validate()?;
        if self.arena_sizes.is_empty() {
            return Err(crate::error::Error::invalid("no arena sizes configured"));
        }
        if self.swarm_size < 1 || self.repetitions < 1 {
            return Err(crate::error::Error::invalid(
                "swarm size and repetitions must be at least 1",
            ));
        }
        for &size in &self.arena_sizes {
            let arena = self.arena(size)?;
            self.spawn_spec(size, self.swarm_size)?.validate_for(&arena)?;
        }
        Ok(())
    }

    pub fn arena(&self, size_m: f64) -> Result<Arena> {
        let field = match &self.field_file {
            Some(path) => crate::env::ScalarFieldGrid::read_from(std::path::Path::new(path))?,
            None => make_field(self.field_profile, size_m, self.cell_size_m, self.g_max)?,
        };
        Arena::new(size_m, field, self.walls)
    }

    pub fn ring_radius(&self, arena_size_m: f64) -> f64 {
        self.ring_radius_factor * arena_size_m
    }

    pub fn spawn_spec(&self, arena_size_m: f64, n_robots: usize) -> Result<SpawnSpec> {
        SpawnSpec::new(self.ring_radius(arena_size_m), self.box_side_m, n_robots)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text)
            .map_err(|e| crate::error::Error::parse(origin, e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::error::Error::io(path.display().to_string(), e))?;
        Self::from_toml(&text, &path.display().to_string())
    }
}

//! World configuration, read from JSON with unknown keys rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behaviors::{Color, KnowledgeClass};
use crate::modality::{AgentParams, Modality};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("could not place {what} after {attempts} attempts; the arena is too crowded")]
    Placement { what: String, attempts: u32 },
}

impl ConfigError {
    fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Free targets per color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetCounts {
    pub red: usize,
    pub green: usize,
    pub yellow: usize,
    pub blue: usize,
}

impl TargetCounts {
    pub fn uniform(n: usize) -> Self {
        Self {
            red: n,
            green: n,
            yellow: n,
            blue: n,
        }
    }

    pub fn get(&self, color: Color) -> usize {
        match color {
            Color::Red => self.red,
            Color::Green => self.green,
            Color::Yellow => self.yellow,
            Color::Blue => self.blue,
        }
    }

    pub fn total(&self) -> usize {
        self.red + self.green + self.yellow + self.blue
    }
}

/// A group of identical robots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterEntry {
    pub modality: Modality,
    pub class: KnowledgeClass,
    pub count: usize,
}

/// A static disc robots steer around.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// Kinematics and sensing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotParams {
    /// Distance moved per iteration.
    pub speed: f64,
    /// Target sensor reach; also the pickup distance.
    pub sensor_radius: f64,
    /// Reach of each of the eight collision rays.
    pub ray_range: f64,
    /// Random-walk heading perturbation bound, in degrees.
    pub walk_jitter_deg: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            speed: 2.0,
            sensor_radius: 30.0,
            ray_range: 25.0,
            walk_jitter_deg: 15.0,
        }
    }
}

fn default_zone_radius() -> f64 {
    100.0
}

/// Everything that determines a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    /// Arena width and height; the arena is `[0, w] x [0, h]`.
    pub arena: [f64; 2],
    pub targets: TargetCounts,
    #[serde(default = "default_zone_radius")]
    pub zone_radius: f64,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    pub comm_range: f64,
    pub roster: Vec<RosterEntry>,
    pub iterations: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub robot: RobotParams,
    #[serde(default)]
    pub protocol: AgentParams,
}

impl WorldConfig {
    /// Parses and validates a JSON config. Errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: WorldConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::Parse {
                path: if path == "." { "<root>".into() } else { path },
                message: e.into_inner().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn robot_count(&self) -> usize {
        self.roster.iter().map(|r| r.count).sum()
    }

    /// One `(modality, class)` per robot, in id order.
    pub fn robots(&self) -> Vec<(Modality, KnowledgeClass)> {
        self.roster
            .iter()
            .flat_map(|r| std::iter::repeat_n((r.modality, r.class), r.count))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let [w, h] = self.arena;
        for (i, v) in self.arena.iter().enumerate() {
            if !(v.is_finite() && *v > 0.0) {
                return Err(ConfigError::invalid(format!("arena[{i}]"), "must be a positive number"));
            }
        }
        if !(self.zone_radius.is_finite() && self.zone_radius > 0.0 && 2.0 * self.zone_radius < w.min(h)) {
            return Err(ConfigError::invalid(
                "zone_radius",
                "must be positive and less than half the shorter arena side",
            ));
        }
        if !(self.comm_range.is_finite() && self.comm_range >= 0.0) {
            return Err(ConfigError::invalid("comm_range", "must be a non-negative number"));
        }
        if self.roster.is_empty() {
            return Err(ConfigError::invalid("roster", "must list at least one robot group"));
        }
        for (i, r) in self.roster.iter().enumerate() {
            if r.count == 0 {
                return Err(ConfigError::invalid(format!("roster[{i}].count"), "must be at least 1"));
            }
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.radius.is_finite() && o.radius > 0.0) {
                return Err(ConfigError::invalid(format!("obstacles[{i}].radius"), "must be positive"));
            }
            if !(o.x.is_finite() && o.y.is_finite()) {
                return Err(ConfigError::invalid(format!("obstacles[{i}]"), "position must be finite"));
            }
        }
        let r = &self.robot;
        for (name, v) in [
            ("robot.speed", r.speed),
            ("robot.sensor_radius", r.sensor_radius),
            ("robot.ray_range", r.ray_range),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::invalid(name, "must be a positive number"));
            }
        }
        if !(r.walk_jitter_deg.is_finite() && (0.0..=180.0).contains(&r.walk_jitter_deg)) {
            return Err(ConfigError::invalid("robot.walk_jitter_deg", "must be within [0, 180]"));
        }
        if self.protocol.query_wait == 0 {
            return Err(ConfigError::invalid("protocol.query_wait", "must be at least 1"));
        }
        if self.protocol.buffer_capacity == Some(0) {
            return Err(ConfigError::invalid("protocol.buffer_capacity", "must be at least 1 when set"));
        }
        Ok(())
    }
}

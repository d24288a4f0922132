use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::math::{is_finite, Vec3};
use crate::{Error, Result};

pub type ObjectId = u32;

/// The eight stimulus archetypes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Collide,
    Contain,
    Dominoes,
    Drape,
    Drop,
    Link,
    Roll,
    Support,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::Collide,
        Scenario::Contain,
        Scenario::Dominoes,
        Scenario::Drape,
        Scenario::Drop,
        Scenario::Link,
        Scenario::Roll,
        Scenario::Support,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Collide => "collide",
            Scenario::Contain => "contain",
            Scenario::Dominoes => "dominoes",
            Scenario::Drape => "drape",
            Scenario::Drop => "drop",
            Scenario::Link => "link",
            Scenario::Roll => "roll",
            Scenario::Support => "support",
        }
    }

    pub fn index(self) -> u8 {
        Scenario::ALL.iter().position(|&s| s == self).unwrap() as u8
    }

    pub fn from_index(i: u8) -> Option<Scenario> {
        Scenario::ALL.get(i as usize).copied()
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Scenario::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == lower)
            .ok_or_else(|| Error::InvalidInput(format!("unknown scenario `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Sphere,
    Box,
    Ramp,
    ClothProxy,
    Plank,
}

impl Category {
    /// Soft objects move particle by particle instead of as a rigid cluster.
    pub fn is_soft(self) -> bool {
        matches!(self, Category::ClothProxy)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub object_id: ObjectId,
    pub category: Category,
    pub is_distractor: bool,
    pub particle_count: u32,
    /// kg
    pub mass_per_particle: f64,
    pub restitution: f64,
    pub friction: f64,
    /// Radius of each of the object's particles, meters.
    pub radius: f64,
}

impl ObjectSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| {
            Err(Error::InvalidInput(format!(
                "object {}: {what}",
                self.object_id
            )))
        };
        if self.particle_count < 1 {
            return bad("particle_count must be >= 1");
        }
        if !(self.mass_per_particle.is_finite() && self.mass_per_particle > 0.0) {
            return bad("mass_per_particle must be > 0");
        }
        if !(0.0..=1.0).contains(&self.restitution) {
            return bad("restitution outside [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.friction) {
            return bad("friction outside [0, 1]");
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return bad("radius must be > 0");
        }
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        self.mass_per_particle * self.particle_count as f64
    }
}

/// Damped spring between two particles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spring {
    pub a: u32,
    pub b: u32,
    pub rest_length: f64,
    pub stiffness: f64,
    pub damping: f64,
}

/// Static description of a scene: objects plus spring constraints.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub springs: Vec<Spring>,
}

impl Layout {
    pub fn object(&self, id: ObjectId) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.object_id == id)
    }

    /// Position of each object id in `objects`.
    pub fn index_map(&self) -> BTreeMap<ObjectId, usize> {
        self.objects
            .iter()
            .enumerate()
            .map(|(i, o)| (o.object_id, i))
            .collect()
    }

    /// Checks the layout against a per-particle object index.
    pub fn validate(&self, object_index: &[ObjectId]) -> Result<()> {
        let map = self.index_map();
        if map.len() != self.objects.len() {
            return Err(Error::InvalidInput("duplicate object ids".into()));
        }
        let mut counts = vec![0u32; self.objects.len()];
        for &id in object_index {
            let i = *map.get(&id).ok_or_else(|| {
                Error::InvalidInput(format!("particle refers to unknown object {id}"))
            })?;
            counts[i] += 1;
        }
        for (o, &c) in self.objects.iter().zip(&counts) {
            o.validate()?;
            if o.particle_count != c {
                return Err(Error::InvalidInput(format!(
                    "object {} declares {} particles but owns {c}",
                    o.object_id, o.particle_count
                )));
            }
        }
        let n = object_index.len() as u32;
        for s in &self.springs {
            if s.a >= n || s.b >= n || s.a == s.b {
                return Err(Error::InvalidInput(format!(
                    "spring ({}, {}) out of range",
                    s.a, s.b
                )));
            }
            if ![s.rest_length, s.stiffness, s.damping]
                .iter()
                .all(|v| v.is_finite() && *v >= 0.0)
            {
                return Err(Error::InvalidInput(
                    "spring parameters must be finite and >= 0".into(),
                ));
            }
            for p in [s.a, s.b] {
                let o = &self.objects[map[&object_index[p as usize]]];
                if o.is_distractor {
                    return Err(Error::InvalidInput(format!(
                        "spring attached to distractor {}",
                        o.object_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Particle state of a scene at one timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneState {
    pub time_index: usize,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub object_index: Vec<ObjectId>,
}

impl SceneState {
    pub fn particle_count(&self) -> usize {
        self.positions.len()
    }

    pub fn check(&self) -> Result<()> {
        if self.positions.len() != self.velocities.len()
            || self.positions.len() != self.object_index.len()
        {
            return Err(Error::LayoutMismatch(format!(
                "{} positions, {} velocities, {} object indices",
                self.positions.len(),
                self.velocities.len(),
                self.object_index.len()
            )));
        }
        if !self
            .positions
            .iter()
            .chain(&self.velocities)
            .all(|v| is_finite(*v))
        {
            return Err(Error::NonFinite("scene state"));
        }
        Ok(())
    }

    /// Per-particle feature rows `[px, py, pz, vx, vy, vz]`.
    pub fn features(&self) -> impl Iterator<Item = [f64; 6]> + '_ {
        self.positions
            .iter()
            .zip(&self.velocities)
            .map(|(p, v)| [p[0], p[1], p[2], v[0], v[1], v[2]])
    }

    /// Rounds every component to single precision, as stored on disk.
    pub fn quantized(&self) -> SceneState {
        let q = |v: &Vec3| [v[0] as f32 as f64, v[1] as f32 as f64, v[2] as f32 as f64];
        SceneState {
            time_index: self.time_index,
            positions: self.positions.iter().map(q).collect(),
            velocities: self.velocities.iter().map(q).collect(),
            object_index: self.object_index.clone(),
        }
    }

    /// Whether two states share particle count and object layout.
    pub fn same_layout(&self, other: &SceneState) -> bool {
        self.object_index == other.object_index
    }
}

/// A generated scene: archetype label, layout and initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub scenario: Scenario,
    pub seed: u64,
    pub layout: Layout,
    pub state: SceneState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Partner {
    Object(ObjectId),
    Ground,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CollisionEvent {
    pub time_index: usize,
    pub object_a: ObjectId,
    pub object_b: Partner,
}

/// One stimulus: an ordered run of states plus its contact onsets.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub scenario: Scenario,
    pub seed: u64,
    pub dt: f64,
    pub states: Vec<SceneState>,
    /// Contact onsets: events at frame 0 are contacts present initially,
    /// events at later frames are pairs touching that were apart one frame earlier.
    pub collisions: Vec<CollisionEvent>,
    pub layout: Layout,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn particle_count(&self) -> usize {
        self.states.first().map_or(0, |s| s.particle_count())
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.len() < 2 {
            return Err(Error::InvalidInput(
                "trajectory needs at least 2 states".into(),
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidInput("dt must be > 0".into()));
        }
        let first = &self.states[0];
        for (i, s) in self.states.iter().enumerate() {
            s.check()?;
            if s.time_index != i {
                return Err(Error::InvalidInput(format!(
                    "state {i} has time_index {}",
                    s.time_index
                )));
            }
            if !s.same_layout(first) {
                return Err(Error::LayoutMismatch(format!(
                    "state {i} changes particle layout"
                )));
            }
        }
        self.layout.validate(&first.object_index)?;
        for e in &self.collisions {
            if e.time_index >= self.states.len() {
                return Err(Error::InvalidInput(
                    "collision event past the last state".into(),
                ));
            }
            if e.object_b == Partner::Object(e.object_a) {
                return Err(Error::InvalidInput("collision event with itself".into()));
            }
        }
        Ok(())
    }

    /// Copy with all states rounded to single precision.
    pub fn quantized(&self) -> Trajectory {
        Trajectory {
            states: self.states.iter().map(SceneState::quantized).collect(),
            ..self.clone()
        }
    }

    /// Number of contact onsets after the first frame.
    pub fn collision_count(&self) -> usize {
        self.collisions.iter().filter(|e| e.time_index >= 1).count()
    }
}

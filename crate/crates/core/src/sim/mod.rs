//! Deterministic particle simulator.
//!
//! Objects are clusters of particles. Rigid objects translate as a unit; the
//! cloth proxy is a soft object whose particles move independently and are held
//! together by damped springs. Distractors never move and never interact.

mod dynamics;
pub mod math;
mod scenario;
pub mod store;
mod types;

pub use dynamics::{detect_collisions, mechanical_energy, simulate, step, Dynamics, GRAVITY};
pub use scenario::{generate_scenario, SimConfig, Span, SpanU};
pub use types::{
    Category, CollisionEvent, Layout, ObjectId, ObjectSpec, Partner, Scenario, Scene, SceneState,
    Spring, Trajectory,
};

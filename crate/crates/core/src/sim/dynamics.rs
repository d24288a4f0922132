use std::collections::BTreeSet;

use super::math::{add, dot, is_finite, norm, scale, sub, Vec3};
use super::types::{CollisionEvent, Layout, ObjectId, Partner, Scene, SceneState, Trajectory};
use crate::{Error, Result};

/// Gravitational acceleration, m/s², along −y.
pub const GRAVITY: f64 = 9.81;

/// Gap below which a contact counts as touching for restitution impulses.
const CONTACT_SLOP: f64 = 1e-4;
/// Sweep cap for the contact solver; sweeps stop early once no accumulated
/// impulse changes by more than `SOLVER_TOLERANCE` (N·s).
const SOLVER_ITERATIONS: usize = 500;
const SOLVER_TOLERANCE: f64 = 1e-13;
/// Minimum vertical component of a contact normal for one body to support another.
const SUPPORT_COS: f64 = 0.3;

#[derive(Clone, Debug)]
struct Body {
    particles: Vec<usize>,
    inv_mass: f64,
    restitution: f64,
    friction: f64,
}

#[derive(Clone, Copy, Debug)]
struct Contact {
    /// `None` is the ground plane.
    a: Option<usize>,
    b: usize,
    /// Unit normal pointing from `a` to `b` (+y for the ground).
    normal: Vec3,
    gap: f64,
}

/// One contact row of the projected Gauss-Seidel solver, with accumulated
/// normal and friction impulses.
#[derive(Clone, Copy, Debug)]
struct Row {
    a: Option<usize>,
    b: usize,
    inv_a: f64,
    inv_b: f64,
    normal: Vec3,
    target: f64,
    mu: f64,
    lambda: f64,
    tangent: Vec3,
}

impl Row {
    fn solve(rows: &mut [Row], vel: &mut [Vec3], iterations: usize) {
        for _ in 0..iterations {
            let mut change = 0.0f64;
            for r in rows.iter_mut() {
                let va = r.a.map_or([0.0; 3], |a| vel[a]);
                let rel = sub(vel[r.b], va);
                let vn = dot(rel, r.normal);
                let m_eff = 1.0 / (r.inv_a + r.inv_b);
                let lambda = (r.lambda + (r.target - vn) * m_eff).max(0.0);
                change = change.max((lambda - r.lambda).abs());
                let mut impulse = scale(r.normal, lambda - r.lambda);
                r.lambda = lambda;

                let vt = sub(rel, scale(r.normal, vn));
                let mut tangent = sub(r.tangent, scale(vt, m_eff));
                let limit = r.mu * r.lambda;
                let t = norm(tangent);
                if t > limit {
                    tangent = if t > 0.0 {
                        scale(tangent, limit / t)
                    } else {
                        [0.0; 3]
                    };
                }
                change = change.max(norm(sub(tangent, r.tangent)));
                impulse = add(impulse, sub(tangent, r.tangent));
                r.tangent = tangent;

                vel[r.b] = add(vel[r.b], scale(impulse, r.inv_b));
                if let Some(a) = r.a {
                    vel[a] = sub(vel[a], scale(impulse, r.inv_a));
                }
            }
            if change <= SOLVER_TOLERANCE {
                break;
            }
        }
    }
}

/// Precomputed body decomposition of a layout for repeated stepping.
#[derive(Clone, Debug)]
pub struct Dynamics {
    layout: Layout,
    bodies: Vec<Body>,
    /// Body owning each particle; `None` for distractor particles.
    particle_body: Vec<Option<usize>>,
    radius: Vec<f64>,
    mass: Vec<f64>,
    object_index: Vec<ObjectId>,
}

impl Dynamics {
    pub fn new(layout: &Layout, object_index: &[ObjectId]) -> Result<Self> {
        layout.validate(object_index)?;
        let map = layout.index_map();
        let mut bodies: Vec<Body> = Vec::new();
        let mut rigid_body_of_object = vec![None; layout.objects.len()];
        let mut particle_body = vec![None; object_index.len()];
        let mut radius = Vec::with_capacity(object_index.len());
        let mut mass = Vec::with_capacity(object_index.len());
        for (p, id) in object_index.iter().enumerate() {
            let oi = map[id];
            let o = &layout.objects[oi];
            radius.push(o.radius);
            mass.push(o.mass_per_particle);
            if o.is_distractor {
                continue;
            }
            let existing = if o.category.is_soft() {
                None
            } else {
                rigid_body_of_object[oi]
            };
            let b = match existing {
                Some(b) => b,
                None => {
                    let particles = if o.category.is_soft() {
                        1.0
                    } else {
                        o.particle_count as f64
                    };
                    bodies.push(Body {
                        particles: Vec::new(),
                        inv_mass: 1.0 / (o.mass_per_particle * particles),
                        restitution: o.restitution,
                        friction: o.friction,
                    });
                    let b = bodies.len() - 1;
                    if !o.category.is_soft() {
                        rigid_body_of_object[oi] = Some(b);
                    }
                    b
                }
            };
            bodies[b].particles.push(p);
            particle_body[p] = Some(b);
        }
        Ok(Dynamics {
            layout: layout.clone(),
            bodies,
            particle_body,
            radius,
            mass,
            object_index: object_index.to_vec(),
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn contacts(&self, pos: &[Vec3], cutoff: f64) -> Vec<Contact> {
        let mut out = Vec::new();
        let n = pos.len();
        for i in 0..n {
            let Some(bi) = self.particle_body[i] else {
                continue;
            };
            for j in (i + 1)..n {
                let Some(bj) = self.particle_body[j] else {
                    continue;
                };
                if self.object_index[i] == self.object_index[j] {
                    continue;
                }
                let d = sub(pos[j], pos[i]);
                let dist = norm(d);
                let gap = dist - self.radius[i] - self.radius[j];
                if gap <= cutoff {
                    let normal = if dist > 1e-12 {
                        scale(d, 1.0 / dist)
                    } else {
                        [0.0, 1.0, 0.0]
                    };
                    out.push(Contact {
                        a: Some(bi),
                        b: bj,
                        normal,
                        gap,
                    });
                }
            }
        }
        for (i, p) in pos.iter().enumerate() {
            let Some(bi) = self.particle_body[i] else {
                continue;
            };
            let gap = p[1] - self.radius[i];
            if gap <= cutoff {
                out.push(Contact {
                    a: None,
                    b: bi,
                    normal: [0.0, 1.0, 0.0],
                    gap,
                });
            }
        }
        out
    }

    fn row(&self, c: &Contact, target: f64) -> Row {
        let body_b = &self.bodies[c.b];
        let (inv_a, mu) = match c.a {
            Some(a) => (
                self.bodies[a].inv_mass,
                self.bodies[a].friction.min(body_b.friction),
            ),
            None => (0.0, body_b.friction),
        };
        Row {
            a: c.a,
            b: c.b,
            inv_a,
            inv_b: body_b.inv_mass,
            normal: c.normal,
            target,
            mu,
            lambda: 0.0,
            tangent: [0.0; 3],
        }
    }

    fn restitution(&self, c: &Contact) -> f64 {
        let e = self.bodies[c.b].restitution;
        c.a.map_or(e, |a| e.min(self.bodies[a].restitution))
    }

    fn normal_velocity(c: &Contact, vel: &[Vec3]) -> f64 {
        let va = c.a.map_or([0.0; 3], |a| vel[a]);
        dot(sub(vel[c.b], va), c.normal)
    }

    /// Shock propagation: bodies resting on the ground are frozen, then each
    /// body resting on a frozen one is solved against it as if it were static,
    /// level by level up the stack.
    fn propagate_support(&self, contacts: &[Contact], vel: &mut [Vec3], dt: f64) {
        let mut frozen = vec![false; self.bodies.len()];
        for c in contacts {
            if c.a.is_none() && c.gap <= CONTACT_SLOP {
                frozen[c.b] = true;
            }
        }
        for _ in 0..self.bodies.len() {
            let mut rows = Vec::new();
            let mut next = frozen.clone();
            for c in contacts {
                let Some(a) = c.a else { continue };
                let (lower, upper, normal) = if c.normal[1] > SUPPORT_COS {
                    (a, c.b, c.normal)
                } else if c.normal[1] < -SUPPORT_COS {
                    (c.b, a, scale(c.normal, -1.0))
                } else {
                    continue;
                };
                if !frozen[lower] || frozen[upper] {
                    continue;
                }
                let oriented = Contact {
                    a: Some(lower),
                    b: upper,
                    normal,
                    gap: c.gap,
                };
                let mut row = self.row(&oriented, -c.gap.max(0.0) / dt);
                row.inv_a = 0.0;
                rows.push(row);
                next[upper] = true;
            }
            if rows.is_empty() {
                break;
            }
            Row::solve(&mut rows, vel, SOLVER_ITERATIONS);
            frozen = next;
        }
    }

    /// Advances one semi-implicit Euler step.
    pub fn advance(&self, state: &SceneState, dt: f64) -> Result<SceneState> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be > 0, got {dt}")));
        }
        state.check()?;
        if state.object_index != self.object_index {
            return Err(Error::LayoutMismatch(
                "state does not match dynamics layout".into(),
            ));
        }
        let pos = &state.positions;
        let mut vel: Vec<Vec3> = self
            .bodies
            .iter()
            .map(|b| state.velocities[b.particles[0]])
            .collect();

        // Impacts at touching contacts, before external forces.
        let mut impacts: Vec<Row> = self
            .contacts(pos, CONTACT_SLOP)
            .iter()
            .filter_map(|c| {
                let vn = Self::normal_velocity(c, &vel);
                (vn < 0.0).then(|| self.row(c, -self.restitution(c) * vn))
            })
            .collect();
        Row::solve(&mut impacts, &mut vel, SOLVER_ITERATIONS);

        // Gravity and springs.
        let mut force = vec![[0.0; 3]; self.bodies.len()];
        for s in &self.layout.springs {
            let (pa, pb) = (s.a as usize, s.b as usize);
            let (Some(ba), Some(bb)) = (self.particle_body[pa], self.particle_body[pb]) else {
                continue;
            };
            let d = sub(pos[pb], pos[pa]);
            let len = norm(d);
            if len < 1e-12 {
                continue;
            }
            let dir = scale(d, 1.0 / len);
            let closing = dot(sub(vel[bb], vel[ba]), dir);
            let f = s.stiffness * (len - s.rest_length) + s.damping * closing;
            force[ba] = add(force[ba], scale(dir, f));
            force[bb] = sub(force[bb], scale(dir, f));
        }
        for (b, body) in self.bodies.iter().enumerate() {
            let acc = add([0.0, -GRAVITY, 0.0], scale(force[b], body.inv_mass));
            vel[b] = add(vel[b], scale(acc, dt));
        }

        // Speculative contacts: no closing velocity may overshoot the gap.
        let vmax = vel.iter().map(|v| norm(*v)).fold(0.0, f64::max);
        let candidates = self.contacts(pos, CONTACT_SLOP + 3.0 * vmax * dt);
        let mut rows: Vec<Row> = candidates
            .iter()
            .map(|c| self.row(c, -c.gap.max(0.0) / dt))
            .collect();
        Row::solve(&mut rows, &mut vel, SOLVER_ITERATIONS);
        self.propagate_support(&candidates, &mut vel, dt);

        let mut positions = pos.clone();
        let mut velocities = state.velocities.clone();
        for (b, body) in self.bodies.iter().enumerate() {
            for &p in &body.particles {
                positions[p] = add(pos[p], scale(vel[b], dt));
                velocities[p] = vel[b];
            }
        }
        self.project(&mut positions);

        let next = SceneState {
            time_index: state.time_index + 1,
            positions,
            velocities,
            object_index: state.object_index.clone(),
        };
        if !next
            .positions
            .iter()
            .chain(&next.velocities)
            .all(|v| is_finite(*v))
        {
            return Err(Error::NonFinite("simulation step"));
        }
        Ok(next)
    }

    /// Lifts bodies that ended below the ground plane.
    fn project(&self, positions: &mut [Vec3]) {
        for body in &self.bodies {
            let lowest = body
                .particles
                .iter()
                .map(|&p| positions[p][1] - self.radius[p])
                .fold(f64::INFINITY, f64::min);
            if lowest < 0.0 {
                for &p in &body.particles {
                    positions[p][1] -= lowest;
                }
            }
        }
    }

    /// Deepest overlap between particles of distinct objects, meters.
    pub fn max_penetration(&self, state: &SceneState) -> f64 {
        self.contacts(&state.positions, 0.0)
            .iter()
            .filter(|c| c.a.is_some())
            .map(|c| -c.gap)
            .fold(0.0, f64::max)
    }

    pub fn detect(&self, state: &SceneState, threshold: f64) -> Vec<CollisionEvent> {
        detect_with(state, &self.radius, &self.particle_body, threshold)
    }

    /// Kinetic plus gravitational potential energy, joules.
    pub fn energy(&self, state: &SceneState) -> f64 {
        state
            .positions
            .iter()
            .zip(&state.velocities)
            .zip(&self.mass)
            .map(|((p, v), m)| 0.5 * m * dot(*v, *v) + m * GRAVITY * p[1])
            .sum()
    }
}

fn detect_with(
    state: &SceneState,
    radius: &[f64],
    particle_body: &[Option<usize>],
    threshold: f64,
) -> Vec<CollisionEvent> {
    let ids = &state.object_index;
    let mut set = BTreeSet::new();
    let n = state.positions.len();
    for i in 0..n {
        if particle_body[i].is_none() {
            continue;
        }
        for j in (i + 1)..n {
            if particle_body[j].is_none() || ids[i] == ids[j] {
                continue;
            }
            let dist = norm(sub(state.positions[j], state.positions[i]));
            if dist <= radius[i] + radius[j] + threshold {
                let (a, b) = if ids[i] < ids[j] {
                    (ids[i], ids[j])
                } else {
                    (ids[j], ids[i])
                };
                set.insert((a, Partner::Object(b)));
            }
        }
        if state.positions[i][1] - radius[i] <= threshold {
            set.insert((ids[i], Partner::Ground));
        }
    }
    set.into_iter()
        .map(|(object_a, object_b)| CollisionEvent {
            time_index: state.time_index,
            object_a,
            object_b,
        })
        .collect()
}

/// One simulation step of `state` under `layout`.
pub fn step(state: &SceneState, layout: &Layout, dt: f64) -> Result<SceneState> {
    Dynamics::new(layout, &state.object_index)?.advance(state, dt)
}

/// Contacts between distinct non-distractor objects, and between objects and
/// the ground, within `threshold` of touching. Sorted, one event per pair.
pub fn detect_collisions(
    state: &SceneState,
    layout: &Layout,
    threshold: f64,
) -> Result<Vec<CollisionEvent>> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidInput("contact threshold must be >= 0".into()));
    }
    Ok(Dynamics::new(layout, &state.object_index)?.detect(state, threshold))
}

pub fn mechanical_energy(state: &SceneState, layout: &Layout) -> Result<f64> {
    Ok(Dynamics::new(layout, &state.object_index)?.energy(state))
}

/// Runs `steps − 1` steps from the scene's initial state, recording contact onsets.
pub fn simulate(scene: &Scene, steps: usize, dt: f64, threshold: f64) -> Result<Trajectory> {
    if steps < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 states, got {steps}"
        )));
    }
    if scene.state.time_index != 0 {
        return Err(Error::InvalidInput(
            "initial state must have time_index 0".into(),
        ));
    }
    let dynamics = Dynamics::new(&scene.layout, &scene.state.object_index)?;
    let mut states = Vec::with_capacity(steps);
    states.push(scene.state.clone());
    let mut previous: BTreeSet<(ObjectId, Partner)> = BTreeSet::new();
    let mut collisions = Vec::new();
    for i in 0..steps {
        if i > 0 {
            let next = dynamics.advance(&states[i - 1], dt)?;
            states.push(next);
        }
        let events = dynamics.detect(&states[i], threshold);
        let current: BTreeSet<_> = events.iter().map(|e| (e.object_a, e.object_b)).collect();
        collisions.extend(
            events
                .into_iter()
                .filter(|e| !previous.contains(&(e.object_a, e.object_b))),
        );
        previous = current;
    }
    Ok(Trajectory {
        scenario: scene.scenario,
        seed: scene.seed,
        dt,
        states,
        collisions,
        layout: scene.layout.clone(),
    })
}

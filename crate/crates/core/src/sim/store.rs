//! Trajectory files.
//!
//! Each trajectory is a binary `.clab` file plus a `.json` sidecar holding the
//! object specs and springs. Binary layout, all integers and floats little-endian:
//!
//! ```text
//! magic        5 bytes  "CLAB1"
//! version      u16      1
//! scenario     u8       index into Scenario::ALL
//! seed         u64
//! dt           f64
//! T            u32      number of frames, >= 2
//! n_particles  u32
//! config_hash  32 bytes (zero when produced outside a pipeline run)
//! object_index n_particles × u32
//! frames       T × n_particles × [px py pz vx vy vz] as f32
//! n_events     u32
//! events       n_events × (time_index u32, object_a u32, object_b u32)
//!              object_b = 0xFFFF_FFFF marks the ground
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::types::{
    CollisionEvent, Layout, ObjectId, ObjectSpec, Partner, Scenario, SceneState, Spring, Trajectory,
};
use crate::codec::{Reader, Writer};
use crate::{Error, Result};

pub const MAGIC: &[u8; 5] = b"CLAB1";
pub const VERSION: u16 = 1;
pub const GROUND_ID: u32 = u32::MAX;
const KIND: &str = "trajectory file";

/// Everything in a `.clab` file; needs the sidecar layout to become a [`Trajectory`].
#[derive(Clone, Debug, PartialEq)]
pub struct Frames {
    pub scenario: Scenario,
    pub seed: u64,
    pub dt: f64,
    pub config_hash: [u8; 32],
    pub states: Vec<SceneState>,
    pub collisions: Vec<CollisionEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub config_hash: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub objects: Vec<ObjectSpec>,
    pub springs: Vec<Spring>,
}

pub fn encode(traj: &Trajectory, config_hash: &[u8; 32]) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.u8(traj.scenario.index());
    w.u64(traj.seed);
    w.f64(traj.dt);
    w.u32(traj.states.len() as u32);
    w.u32(traj.particle_count() as u32);
    w.bytes(config_hash);
    if let Some(first) = traj.states.first() {
        for &id in &first.object_index {
            w.u32(id);
        }
    }
    for s in &traj.states {
        for (p, v) in s.positions.iter().zip(&s.velocities) {
            for x in p.iter().chain(v) {
                w.f32(*x as f32);
            }
        }
    }
    w.u32(traj.collisions.len() as u32);
    for e in &traj.collisions {
        w.u32(e.time_index as u32);
        w.u32(e.object_a);
        w.u32(match e.object_b {
            Partner::Object(b) => b,
            Partner::Ground => GROUND_ID,
        });
    }
    w.buf
}

pub fn decode(bytes: &[u8]) -> Result<Frames> {
    let mut r = Reader::new(KIND, bytes);
    if r.take(5)? != MAGIC {
        return Err(Error::format(KIND, "bad magic"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Version {
            kind: KIND,
            found: version as u32,
            supported: VERSION as u32,
        });
    }
    let scenario = Scenario::from_index(r.u8()?)
        .ok_or_else(|| Error::format(KIND, "unknown scenario index"))?;
    let seed = r.u64()?;
    let dt = r.f64()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::format(KIND, "dt must be > 0"));
    }
    let frames = r.u32()? as usize;
    if frames < 2 {
        return Err(Error::format(KIND, "fewer than 2 frames"));
    }
    let n = r.u32()? as usize;
    if n == 0 {
        return Err(Error::format(KIND, "no particles"));
    }
    let config_hash = r.array::<32>()?;
    r.ensure(n, 4)?;
    let object_index: Vec<ObjectId> = (0..n).map(|_| r.u32()).collect::<Result<_>>()?;
    r.ensure(
        frames,
        n.checked_mul(24)
            .ok_or_else(|| Error::format(KIND, "overflow"))?,
    )?;
    let mut states = Vec::with_capacity(frames);
    for t in 0..frames {
        let mut positions = Vec::with_capacity(n);
        let mut velocities = Vec::with_capacity(n);
        for _ in 0..n {
            let mut v = [0.0f64; 6];
            for x in v.iter_mut() {
                let f = r.f32()?;
                if !f.is_finite() {
                    return Err(Error::format(
                        KIND,
                        format!("non-finite value in frame {t}"),
                    ));
                }
                *x = f as f64;
            }
            positions.push([v[0], v[1], v[2]]);
            velocities.push([v[3], v[4], v[5]]);
        }
        states.push(SceneState {
            time_index: t,
            positions,
            velocities,
            object_index: object_index.clone(),
        });
    }
    let n_events = r.count(12)?;
    let mut collisions = Vec::with_capacity(n_events);
    for _ in 0..n_events {
        let time_index = r.u32()? as usize;
        let object_a = r.u32()?;
        let b = r.u32()?;
        if time_index >= frames {
            return Err(Error::format(KIND, "collision event past the last frame"));
        }
        if b == object_a {
            return Err(Error::format(KIND, "collision event with itself"));
        }
        collisions.push(CollisionEvent {
            time_index,
            object_a,
            object_b: if b == GROUND_ID {
                Partner::Ground
            } else {
                Partner::Object(b)
            },
        });
    }
    r.finish()?;
    Ok(Frames {
        scenario,
        seed,
        dt,
        config_hash,
        states,
        collisions,
    })
}

impl Frames {
    pub fn into_trajectory(self, sidecar: Sidecar) -> Result<Trajectory> {
        if sidecar.scenario != self.scenario || sidecar.seed != self.seed {
            return Err(Error::format(
                KIND,
                "sidecar does not match trajectory header",
            ));
        }
        if sidecar.config_hash != hex::encode(self.config_hash) {
            return Err(Error::HashMismatch(
                "trajectory sidecar and binary disagree".into(),
            ));
        }
        let traj = Trajectory {
            scenario: self.scenario,
            seed: self.seed,
            dt: self.dt,
            states: self.states,
            collisions: self.collisions,
            layout: Layout {
                objects: sidecar.objects,
                springs: sidecar.springs,
            },
        };
        traj.validate()?;
        Ok(traj)
    }
}

pub fn parse_sidecar(text: &str) -> Result<Sidecar> {
    Ok(serde_json::from_str(text)?)
}

fn paths(dir: &Path, id: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{id}.clab")),
        dir.join(format!("{id}.json")),
    )
}

pub fn write(dir: &Path, id: &str, traj: &Trajectory, config_hash: &[u8; 32]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (bin, json) = paths(dir, id);
    fs::write(&bin, encode(traj, config_hash)).map_err(|e| Error::io(&bin, e))?;
    let sidecar = Sidecar {
        config_hash: hex::encode(config_hash),
        scenario: traj.scenario,
        seed: traj.seed,
        objects: traj.layout.objects.clone(),
        springs: traj.layout.springs.clone(),
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    Ok(())
}

/// Reads `<dir>/<id>.clab` and its sidecar; returns the trajectory and its config hash.
pub fn read(dir: &Path, id: &str) -> Result<(Trajectory, [u8; 32])> {
    let (bin, json) = paths(dir, id);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let frames = decode(&bytes)?;
    let hash = frames.config_hash;
    Ok((frames.into_trajectory(parse_sidecar(&text)?)?, hash))
}

/// Trajectory ids (file stems) in a directory, sorted.
pub fn list(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "clab") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_scenario, simulate, SimConfig};

    fn sample() -> Trajectory {
        let cfg = SimConfig::default();
        let scene = generate_scenario(Scenario::Dominoes, 1, &cfg).unwrap();
        simulate(&scene, 40, cfg.dt, cfg.contact_threshold).unwrap()
    }

    #[test]
    fn round_trip_matches_quantized() {
        let traj = sample();
        let hash = [7u8; 32];
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "dominoes_0001", &traj, &hash).unwrap();
        let (back, h) = read(dir.path(), "dominoes_0001").unwrap();
        assert_eq!(h, hash);
        assert_eq!(back, traj.quantized());
        assert_eq!(list(dir.path()).unwrap(), vec!["dominoes_0001".to_string()]);
    }

    #[test]
    fn truncation_and_versions_rejected() {
        let bytes = encode(&sample(), &[0; 32]);
        for cut in [0, 4, 10, 60, bytes.len() - 1] {
            assert!(decode(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut future = bytes.clone();
        future[5] = 9;
        assert!(matches!(
            decode(&future),
            Err(Error::Version { found: 9, .. })
        ));
        let mut trailing = bytes;
        trailing.push(0);
        assert!(decode(&trailing).is_err());
    }

    #[test]
    fn empty_scene_with_huge_frame_count_rejected() {
        let mut bytes = encode(&sample(), &[0; 32]);
        bytes[24..28].copy_from_slice(&u32::MAX.to_le_bytes());
        bytes[28..32].copy_from_slice(&0u32.to_le_bytes());
        assert!(decode(&bytes).is_err());
    }
}

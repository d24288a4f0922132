use std::collections::BTreeMap;

use curiolab::irf::*;
use curiolab::sim::{
    generate_scenario, simulate, Category, Layout, ObjectSpec, Scenario, SceneState, SimConfig,
    Trajectory,
};
use curiolab::wm::{
    init_wm, train, Arch, Checkpoint, Dataset, ForwardModel, Mlp, Normalization, OracleWm, Schedule,
};
use curiolab::Result;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn trajectory(kind: Scenario, seed: u64, steps: usize) -> Trajectory {
    let c = SimConfig::default();
    simulate(
        &generate_scenario(kind, seed, &c).unwrap(),
        steps,
        c.dt,
        c.contact_threshold,
    )
    .unwrap()
}

fn untrained(seed: u64, trajs: &[Trajectory]) -> Checkpoint {
    let wm = init_wm(seed, &Arch::default())
        .unwrap()
        .with_normalization(Normalization::fit(trajs).unwrap())
        .unwrap();
    Checkpoint::snapshot(&wm)
}

fn sphere(id: u32) -> ObjectSpec {
    ObjectSpec {
        object_id: id,
        category: Category::Sphere,
        is_distractor: false,
        particle_count: 1,
        mass_per_particle: 1.0,
        restitution: 0.5,
        friction: 0.2,
        radius: 0.1,
    }
}

/// Hand-built trajectory of spheres held at fixed positions.
fn frozen(positions: Vec<[f64; 3]>, frames: usize) -> Trajectory {
    let ids: Vec<u32> = (0..positions.len() as u32).collect();
    let states = (0..frames)
        .map(|t| SceneState {
            time_index: t,
            positions: positions.clone(),
            velocities: vec![[0.0; 3]; positions.len()],
            object_index: ids.clone(),
        })
        .collect();
    Trajectory {
        scenario: Scenario::Drop,
        seed: 0,
        dt: 0.01,
        states,
        collisions: vec![],
        layout: Layout {
            objects: ids.iter().map(|&i| sphere(i)).collect(),
            springs: vec![],
        },
    }
}

#[test]
fn static_scene_features() {
    let f = scene_features(&frozen(vec![[0.0, 1.0, 0.0]], 20), 10).unwrap();
    assert_eq!(f.values.len(), CATALOG.len());
    assert_eq!(f.get("collision_total"), Some(0.0));
    assert_eq!(f.get("velocity_mean"), Some(0.0));
    assert_eq!(f.get("n_objects"), Some(1.0));
    assert!(scene_features(&frozen(vec![[0.0, 1.0, 0.0]], 20), 0).is_err());
}

#[test]
fn two_point_centroid_covariance() {
    let f = scene_features(&frozen(vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]], 5), 10).unwrap();
    for stat in ["initial", "mean", "min", "max"] {
        assert_eq!(f.get(&format!("position_cov_trace_{stat}")), Some(2.0));
    }
    assert_eq!(covariance_trace(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]), 2.0);
}

#[test]
fn collision_total_matches_event_table() {
    let traj = trajectory(Scenario::Dominoes, 1, 150);
    let recount = traj.collisions.iter().filter(|e| e.time_index > 0).count();
    let f = scene_features(&traj, 10).unwrap();
    assert_eq!(f.get("collision_total"), Some(recount as f64));
    assert!((f.get("collision_mean").unwrap() - recount as f64 / 10.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn features_ignore_object_labels(kind in 0u8..8, seed in 0u64..500, shift in 1u32..100) {
        let traj = trajectory(Scenario::from_index(kind).unwrap(), seed, 40);
        let mut relabeled = traj.clone();
        let n = traj.layout.objects.len() as u32;
        // Reverse the ids and move them by `shift`.
        let map = |id: u32| (n - 1 - id) + shift;
        for o in &mut relabeled.layout.objects {
            o.object_id = map(o.object_id);
        }
        relabeled.layout.objects.reverse();
        for s in &mut relabeled.states {
            s.object_index.iter_mut().for_each(|id| *id = map(*id));
        }
        for e in &mut relabeled.collisions {
            e.object_a = map(e.object_a);
        }
        let a = scene_features(&traj, 10).unwrap();
        let b = scene_features(&relabeled, 10).unwrap();
        for ((name, x), (_, y)) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{name}: {x} vs {y}");
        }
    }
}

fn rnd_pair(trajs: &[Trajectory]) -> RndPair {
    rnd_init(1, 2, 8, &[16, 16], Normalization::fit(trajs).unwrap()).unwrap()
}

#[test]
fn rnd_construction() {
    let trajs = vec![trajectory(Scenario::Roll, 0, 20)];
    let norm = Normalization::fit(&trajs).unwrap();
    assert!(rnd_init(3, 3, 8, &[16], norm.clone()).is_err());
    assert!(rnd_init(3, 4, 0, &[16], norm.clone()).is_err());
    let a = rnd_init(3, 4, 8, &[16], norm.clone()).unwrap();
    assert_eq!(a, rnd_init(3, 4, 8, &[16], norm).unwrap());
    assert_eq!(a.embed(&a.target, &trajs[0].states[0]).unwrap().len(), 8);
}

#[test]
fn rnd_training_leaves_target_and_reduces_error() {
    let trajs: Vec<_> = (0..4)
        .map(|s| trajectory(Scenario::Collide, s, 30))
        .collect();
    let mut pair = rnd_pair(&trajs);
    let before = pair.clone();
    rnd_train(&mut pair, &trajs, 0, 1e-3, 16).unwrap();
    assert_eq!(pair, before);

    let mean_err = |p: &RndPair| {
        let all: Vec<f64> = trajs
            .iter()
            .flat_map(|t| &t.states)
            .map(|s| p.error(s).unwrap())
            .collect();
        all.iter().sum::<f64>() / all.len() as f64
    };
    let start = mean_err(&pair);
    rnd_train(&mut pair, &trajs, 2000, 1e-3, 16).unwrap();
    assert_eq!(pair.target.params, before.target.params);
    assert!(mean_err(&pair) < start);
    assert!(rnd_train(&mut pair, &[], 1, 1e-3, 16).is_err());
}

#[test]
fn rnd_reward_basics() {
    let traj = trajectory(Scenario::Link, 2, 30);
    let pair = rnd_pair(std::slice::from_ref(&traj));
    let series = rnd_reward(&pair, &traj, "link_2").unwrap();
    assert_eq!(series.per_step.len(), traj.len());
    assert!(series.per_step.iter().all(|&r| r >= 0.0));

    let mut copy = pair.clone();
    copy.predictor = copy.target.clone();
    assert!(rnd_reward(&copy, &traj, "x")
        .unwrap()
        .per_step
        .iter()
        .all(|&r| r == 0.0));
}

#[test]
fn rnd_hand_sized_networks() {
    // 12 → 1 → 2 networks whose hidden unit reads only the first input.
    let make = |w: f64, out: [f64; 2]| {
        let mut m = Mlp::zeros(&[12, 1, 2]).unwrap();
        m.params[0] = w;
        m.params[13] = out[0];
        m.params[14] = out[1];
        m
    };
    let pair = RndPair::from_parts(
        make(1.0, [1.0, -1.0]),
        make(0.5, [2.0, 0.0]),
        Normalization::default(),
    )
    .unwrap();
    let state = SceneState {
        time_index: 0,
        positions: vec![[0.4, 0.0, 0.0]],
        velocities: vec![[0.0; 3]],
        object_index: vec![0],
    };
    let (ht, hp) = (0.4f64.tanh(), (0.5f64 * 0.4).tanh());
    let t = [ht, -ht];
    let p = [2.0 * hp, 0.0];
    let expected = (((t[0] - p[0]).powi(2) + (t[1] - p[1]).powi(2)) / 2.0).sqrt();
    assert!((pair.error(&state).unwrap() - expected).abs() < 1e-15);
}

#[test]
fn rnd_gradient_matches_central_differences() {
    let trajs = vec![trajectory(Scenario::Drop, 3, 10)];
    let pair = rnd_init(5, 6, 4, &[6, 5], Normalization::fit(&trajs).unwrap()).unwrap();
    let states: Vec<&SceneState> = trajs[0].states.iter().step_by(3).collect();
    let (_, grad) = pair.loss_and_grad(&states).unwrap();
    let mut r = rand_xoshiro::Xoshiro256StarStar::seed_from_u64(4);
    for _ in 0..24 {
        let i = r.gen_range(0..grad.len());
        let eps = 1e-4;
        let mut plus = pair.clone();
        plus.predictor.params[i] += eps;
        let mut minus = pair.clone();
        minus.predictor.params[i] -= eps;
        let numeric = (plus.loss_and_grad(&states).unwrap().0
            - minus.loss_and_grad(&states).unwrap().0)
            / (2.0 * eps);
        let rel = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-6);
        assert!(rel < 1e-5, "param {i}: {} vs {numeric}", grad[i]);
    }
}

#[test]
fn adversarial_oracle_and_recomputation() {
    let traj = trajectory(Scenario::Contain, 4, 40);
    let oracle = OracleWm::for_trajectory(&traj).unwrap();
    for k in 1..=4 {
        let s = adversarial_reward(&oracle, &traj, k, "c").unwrap();
        assert_eq!(s.total, 0.0);
        assert_eq!(s.per_step.len(), traj.len() - k);
    }
    let wm = untrained(1, std::slice::from_ref(&traj));
    let s = adversarial_reward(&wm, &traj, 1, "c").unwrap();
    for (t, r) in s.per_step.iter().enumerate() {
        assert_eq!(
            *r,
            wm.loss(&traj.states[t], &traj.states[t + 1], 1).unwrap()
        );
        assert!(*r >= 0.0);
    }
    assert!(adversarial_reward(&wm, &traj, 40, "c").is_err());
    assert!(adversarial_reward(&wm, &traj, 0, "c").is_err());
}

#[test]
fn training_lowers_adversarial_reward() {
    let trajs: Vec<_> = (0..10)
        .map(|s| trajectory(Scenario::ALL[s as usize % 8], s, 60))
        .collect();
    let mut wm = init_wm(3, &Arch::default())
        .unwrap()
        .with_normalization(Normalization::fit(&trajs).unwrap())
        .unwrap();
    let schedule = Schedule {
        checkpoints: vec![0, 1500],
        lr: 1e-3,
        batch_size: 16,
    };
    let ckpts = train(&mut wm, &Dataset::new(&trajs), &schedule).unwrap();
    let lower = trajs
        .iter()
        .filter(|t| {
            adversarial_reward(&ckpts[1], t, 1, "").unwrap().total
                <= adversarial_reward(&ckpts[0], t, 1, "").unwrap().total
        })
        .count();
    assert!(lower * 10 >= trajs.len() * 9, "{lower}/{}", trajs.len());
}

/// Shifts every component of another model's prediction.
struct Offset<'a>(&'a dyn ForwardModel, f64);

impl ForwardModel for Offset<'_> {
    fn predict(&self, state: &SceneState) -> Result<SceneState> {
        let mut s = self.0.predict(state)?;
        for v in s.positions.iter_mut().chain(s.velocities.iter_mut()) {
            v.iter_mut().for_each(|x| *x += self.1);
        }
        Ok(s)
    }
}

#[test]
fn disagreement_cases() {
    let traj = trajectory(Scenario::Roll, 5, 30);
    let a = untrained(1, std::slice::from_ref(&traj));
    let same = disagreement_reward(&[&a, &a, &a], &traj, 2, "r").unwrap();
    assert!(same.per_step.iter().all(|&v| v == 0.0));
    assert!(disagreement_reward(&[&a], &traj, 1, "r").is_err());

    let oracle = OracleWm::for_trajectory(&traj).unwrap();
    let shifted = Offset(&oracle, 0.2);
    let s = disagreement_reward(&[&oracle, &shifted], &traj, 1, "r").unwrap();
    for v in &s.per_step {
        assert!((v - 0.02).abs() < 1e-12, "{v}");
    }

    let (b, c) = (
        untrained(2, std::slice::from_ref(&traj)),
        untrained(3, std::slice::from_ref(&traj)),
    );
    let s = disagreement_reward(&[&a, &b, &c], &traj, 1, "r").unwrap();
    for (t, v) in s.per_step.iter().enumerate() {
        let preds: Vec<SceneState> = [&a, &b, &c]
            .iter()
            .map(|m| m.predict(&traj.states[t]).unwrap())
            .collect();
        let mut total = 0.0;
        let mut count = 0;
        for i in 0..traj.particle_count() {
            for j in 0..6 {
                let x: Vec<f64> = preds
                    .iter()
                    .map(|p| {
                        if j < 3 {
                            p.positions[i][j]
                        } else {
                            p.velocities[i][j - 3]
                        }
                    })
                    .collect();
                let m = (x[0] + x[1] + x[2]) / 3.0;
                total += ((x[0] - m).powi(2) + (x[1] - m).powi(2) + (x[2] - m).powi(2)) / 2.0;
                count += 1;
            }
        }
        assert!((v - total / count as f64).abs() < 1e-12);
        assert!(*v > 0.0);
    }
}

#[test]
fn delta_progress_identities() {
    let traj = trajectory(Scenario::Support, 6, 30);
    let old = untrained(1, std::slice::from_ref(&traj));
    let mut newer = old.clone();
    newer.step = 10;
    newer.params.net = untrained(2, std::slice::from_ref(&traj)).params.net;

    let same = delta_progress_reward(&old, &old, &traj, 2, "s").unwrap();
    assert!(same.per_step.iter().all(|&v| v == 0.0));

    let oracle = OracleWm::for_trajectory(&traj).unwrap();
    let vs_oracle = delta_progress_reward(&old, &oracle, &traj, 1, "s").unwrap();
    assert_eq!(
        vs_oracle.per_step,
        adversarial_reward(&old, &traj, 1, "s").unwrap().per_step
    );

    for k in 1..=3 {
        let d = delta_progress_checkpoints(&old, &newer, &traj, k, "s").unwrap();
        assert_eq!(d.irf, "delta_progress_d10");
        let a = adversarial_reward(&old, &traj, k, "s").unwrap().total;
        let b = adversarial_reward(&newer, &traj, k, "s").unwrap().total;
        assert!((d.total - (a - b)).abs() <= 1e-9 * a.abs().max(1.0));
    }
    assert!(delta_progress_checkpoints(&newer, &old, &traj, 1, "s").is_err());
}

#[test]
fn total_ir_sums() {
    let s = |v: Vec<f64>| RewardSeries::new("t", "x", v, String::new());
    assert_eq!(total_ir(&s(vec![1.0, 2.0, 3.0])), 6.0);
    assert_eq!(total_ir(&s(vec![])), 0.0);
    let mut r = rand_xoshiro::Xoshiro256StarStar::seed_from_u64(17);
    let values: Vec<f64> = (0..100)
        .map(|_| r.gen_range(-1.0..1.0) * 10f64.powi(r.gen_range(-3..4)))
        .collect();
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in &values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    let series = s(values);
    assert!((total_ir(&series) - sum).abs() < 1e-9);
    assert_eq!(total_ir(&series), series.total);
}

fn test_set() -> Vec<(String, Trajectory)> {
    (0..4)
        .map(|s| {
            let kind = Scenario::ALL[s as usize * 2];
            (format!("{kind}_{s:04}"), trajectory(kind, s, 25))
        })
        .collect()
}

#[test]
fn sweep_shapes_and_determinism() {
    let set = test_set();
    let trajs: Vec<Trajectory> = set.iter().map(|(_, t)| t.clone()).collect();
    let refs: Vec<(String, &Trajectory)> = set.iter().map(|(id, t)| (id.clone(), t)).collect();
    let ck: Vec<Checkpoint> = (0..2).map(|s| untrained(s, &trajs)).collect();
    fn one(c: &Checkpoint) -> BTreeMap<u64, Member<'_>> {
        BTreeMap::from([(0u64, Member::Trained(c))])
    }
    let spec = SweepSpec {
        steps: vec![0],
        ks: vec![1],
        deltas: vec![],
        bins: 10,
    };
    let pair = rnd_pair(&trajs);
    let table = sweep(&refs, &[one(&ck[0]), one(&ck[1])], Some(&pair), &spec).unwrap();
    for irf in ["adversarial", "disagreement", "rnd"] {
        assert_eq!(
            table.rows.iter().filter(|r| r.irf == irf).count(),
            set.len(),
            "{irf}"
        );
    }
    let again = sweep(&refs, &[one(&ck[0]), one(&ck[1])], Some(&pair), &spec).unwrap();
    assert_eq!(table.to_csv(), again.to_csv());

    let oracle = sweep(
        &refs,
        &[BTreeMap::from([(0u64, Member::Oracle)])],
        None,
        &spec,
    )
    .unwrap();
    assert!(oracle
        .rows
        .iter()
        .all(|r| r.irf != "adversarial" || r.total_ir == 0.0));

    let bad = SweepSpec {
        deltas: vec![5],
        ..spec.clone()
    };
    assert!(sweep(&refs, &[one(&ck[0])], None, &bad).is_err());
}

#[test]
fn sweep_delta_rows_match_rewards() {
    let set = test_set();
    let trajs: Vec<Trajectory> = set.iter().map(|(_, t)| t.clone()).collect();
    let refs: Vec<(String, &Trajectory)> = set.iter().map(|(id, t)| (id.clone(), t)).collect();
    let mut wm = init_wm(9, &Arch::default())
        .unwrap()
        .with_normalization(Normalization::fit(&trajs).unwrap())
        .unwrap();
    let schedule = Schedule {
        checkpoints: vec![0, 10, 20],
        lr: 1e-3,
        batch_size: 8,
    };
    let ckpts = train(&mut wm, &Dataset::new(&trajs), &schedule).unwrap();
    let member: BTreeMap<u64, Member> =
        ckpts.iter().map(|c| (c.step, Member::Trained(c))).collect();
    let spec = SweepSpec {
        steps: vec![0, 20],
        ks: vec![1, 3],
        deltas: vec![10],
        bins: 10,
    };
    let table = sweep(&refs, &[member], None, &spec).unwrap();
    for (id, traj) in &refs {
        for k in [1, 3] {
            let expected = delta_progress_checkpoints(&ckpts[1], &ckpts[2], traj, k, id).unwrap();
            let got = table.column("delta_progress_d10", 20, k)[id.as_str()];
            assert_eq!(got, expected.total);
            let adv = adversarial_reward(&ckpts[2], traj, k, id).unwrap();
            assert_eq!(table.column("adversarial", 20, k)[id.as_str()], adv.total);
        }
    }
    assert!(table.column("delta_progress_d10", 0, 1).is_empty());

    let mut with_hash = table.clone();
    with_hash.config_hash = Some("ab".repeat(32));
    let parsed = parse_ir_table(&with_hash.to_csv()).unwrap();
    assert_eq!(parsed, with_hash);
}

#[test]
fn ir_table_parse_errors() {
    let header = format!(
        "trajectory_id,scenario,irf,ckpt_step,k,total_ir,{}",
        CATALOG.join(",")
    );
    let zeros = vec!["0"; CATALOG.len()].join(",");
    let good = format!("{header}\na,drop,adversarial,0,1,0.5,{zeros}\n");
    assert_eq!(parse_ir_table(&good).unwrap().rows.len(), 1);
    assert!(parse_ir_table("x,y\n").is_err());
    let bad_num = format!("{header}\na,drop,adversarial,0,1,abc,{zeros}\n");
    let err = parse_ir_table(&bad_num).unwrap_err().to_string();
    assert!(err.contains("line 2"), "{err}");
    let bad_scn = format!("{header}\na,nowhere,adversarial,0,1,1,{zeros}\n");
    assert!(parse_ir_table(&bad_scn).is_err());
    let short = format!("{header}\na,drop,adversarial,0,1\n");
    assert!(parse_ir_table(&short).is_err());
}

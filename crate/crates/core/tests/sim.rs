use curiolab::sim::store;
use curiolab::sim::{
    detect_collisions, generate_scenario, mechanical_energy, simulate, step, Scenario, SimConfig,
};
use proptest::prelude::*;

fn cfg() -> SimConfig {
    SimConfig::default()
}

#[test]
fn two_state_trajectory_is_initial_plus_one_step() {
    let c = cfg();
    for kind in Scenario::ALL {
        let scene = generate_scenario(kind, 5, &c).unwrap();
        let traj = simulate(&scene, 2, c.dt, c.contact_threshold).unwrap();
        assert_eq!(traj.states.len(), 2);
        assert_eq!(traj.states[0], scene.state);
        assert_eq!(
            traj.states[1],
            step(&scene.state, &scene.layout, c.dt).unwrap()
        );
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let c = cfg();
    for kind in Scenario::ALL {
        let a = simulate(
            &generate_scenario(kind, 11, &c).unwrap(),
            60,
            c.dt,
            c.contact_threshold,
        )
        .unwrap();
        let b = simulate(
            &generate_scenario(kind, 11, &c).unwrap(),
            60,
            c.dt,
            c.contact_threshold,
        )
        .unwrap();
        assert_eq!(store::encode(&a, &[0; 32]), store::encode(&b, &[0; 32]));
    }
}

#[test]
fn drop_without_restitution_never_gains_energy() {
    let c = cfg();
    for seed in 0..40 {
        let mut scene = generate_scenario(Scenario::Drop, seed, &c).unwrap();
        for o in &mut scene.layout.objects {
            o.restitution = 0.0;
        }
        let traj = simulate(&scene, c.steps, c.dt, c.contact_threshold).unwrap();
        let energy: Vec<f64> = traj
            .states
            .iter()
            .map(|s| mechanical_energy(s, &traj.layout).unwrap())
            .collect();
        for (i, w) in energy.windows(2).enumerate() {
            assert!(
                w[1] <= w[0] + 1e-9,
                "seed {seed} step {i}: {} -> {}",
                w[0],
                w[1]
            );
        }
    }
}

#[test]
fn simulate_rejects_short_runs() {
    let c = cfg();
    let scene = generate_scenario(Scenario::Roll, 0, &c).unwrap();
    assert!(simulate(&scene, 1, c.dt, c.contact_threshold).is_err());
    assert!(simulate(&scene, 2, 0.0, c.contact_threshold).is_err());
}

fn kind() -> impl Strategy<Value = Scenario> {
    (0u8..8).prop_map(|i| Scenario::from_index(i).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rigid_scenes_dissipate(kind in prop::sample::select(vec![
        Scenario::Collide, Scenario::Contain, Scenario::Dominoes, Scenario::Drop, Scenario::Roll,
    ]), seed in 0u64..10_000) {
        let c = cfg();
        let traj = simulate(&generate_scenario(kind, seed, &c).unwrap(), c.steps, c.dt, c.contact_threshold).unwrap();
        let mut prev = mechanical_energy(&traj.states[0], &traj.layout).unwrap();
        for s in &traj.states[1..] {
            let e = mechanical_energy(s, &traj.layout).unwrap();
            prop_assert!(e <= prev + 1e-9, "{kind} seed {seed}: {prev} -> {e}");
            prev = e;
        }
    }

    #[test]
    fn particles_stay_above_ground(kind in kind(), seed in 0u64..10_000) {
        let c = cfg();
        let traj = simulate(&generate_scenario(kind, seed, &c).unwrap(), c.steps, c.dt, c.contact_threshold).unwrap();
        for s in &traj.states {
            for (p, id) in s.positions.iter().zip(&s.object_index) {
                let o = traj.layout.object(*id).unwrap();
                prop_assert!(p[1] - o.radius >= -1e-6);
            }
        }
    }

    #[test]
    fn distractors_never_move(kind in kind(), seed in 0u64..10_000) {
        let c = cfg();
        let traj = simulate(&generate_scenario(kind, seed, &c).unwrap(), 80, c.dt, c.contact_threshold).unwrap();
        let first = &traj.states[0];
        for s in &traj.states {
            for (i, id) in s.object_index.iter().enumerate() {
                if traj.layout.object(*id).unwrap().is_distractor {
                    prop_assert_eq!(s.positions[i], first.positions[i]);
                    prop_assert_eq!(s.velocities[i], [0.0; 3]);
                }
            }
        }
    }

    #[test]
    fn generated_scenes_match_their_archetype(kind in kind(), seed in any::<u64>()) {
        let scene = generate_scenario(kind, seed, &cfg()).unwrap();
        prop_assert_eq!(scene.scenario, kind);
        prop_assert!(scene.satisfies_archetype());
    }

    #[test]
    fn collisions_ignore_object_order(kind in kind(), seed in 0u64..10_000, t in 0usize..60) {
        let c = cfg();
        let traj = simulate(&generate_scenario(kind, seed, &c).unwrap(), 60, c.dt, c.contact_threshold).unwrap();
        let state = &traj.states[t.min(traj.len() - 1)];
        let events = detect_collisions(state, &traj.layout, c.contact_threshold).unwrap();

        let mut reversed = traj.layout.clone();
        reversed.objects.reverse();
        prop_assert_eq!(&events, &detect_collisions(state, &reversed, c.contact_threshold).unwrap());

        // Reverse the particle order too, remapping spring endpoints.
        let n = state.positions.len() as u32;
        let mut flipped = state.clone();
        flipped.positions.reverse();
        flipped.velocities.reverse();
        flipped.object_index.reverse();
        for s in &mut reversed.springs {
            s.a = n - 1 - s.a;
            s.b = n - 1 - s.b;
        }
        prop_assert_eq!(&events, &detect_collisions(&flipped, &reversed, c.contact_threshold).unwrap());
    }
}

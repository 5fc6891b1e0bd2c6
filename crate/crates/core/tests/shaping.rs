use proptest::prelude::*;
use qsrl::envs::grid::{oracle_grid, GridSpec};
use qsrl::envs::pursuit::PursuitState;
use qsrl::envs::soccer::SoccerSpace;
use qsrl::envs::StateSpace;
use qsrl::harness::value_iteration;
use qsrl::shaping::{
    pbrs_from_potential, GridDistancePotential, Potential, PursuitStepShaping, ShapingFunction,
    SoccerPotential,
};
use qsrl::{seeded_rng, ActionId, StateKey};
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn discounted_shaping_telescopes(seed in any::<u64>(), gamma in 0.5f64..1.0, len in 1usize..40) {
        let f = pbrs_from_potential(SoccerPotential::default(), gamma);
        let mut rng = seeded_rng(seed);
        let states: Vec<StateKey> = (0..=len).map(|_| SoccerSpace.sample_state(&mut rng)).collect();
        let mut total = 0.0;
        let mut disc = 1.0;
        for t in 0..len {
            let terminal = t + 1 == len;
            total += disc * f.shape(states[t], ActionId(0), states[t + 1], terminal);
            disc *= gamma;
        }
        let phi0 = f.potential.phi(states[0]);
        prop_assert!((total + phi0).abs() < 1e-9, "{total} vs {}", -phi0);
    }

    #[test]
    fn grid_policy_is_shaping_invariant(scale in 0.0f64..5.0, gx in 0usize..5, gy in 0usize..5) {
        let spec = GridSpec { goal: (gx, gy), ..GridSpec::five_by_five() };
        let gamma = 0.9;
        let mdp = oracle_grid(&spec).unwrap();
        let f = pbrs_from_potential(GridDistancePotential { spec, scale }, gamma);
        let shaped = mdp.map_rewards(|s, _a, next, r| {
            r + f.value(StateKey(s as u64), StateKey(next as u64), mdp.terminal[next])
        });
        let base = value_iteration(&mdp, gamma, 1e-10).unwrap();
        let with = value_iteration(&shaped, gamma, 1e-10).unwrap();
        for s in 0..mdp.n_states {
            if mdp.terminal[s] {
                continue;
            }
            prop_assert_eq!(base.policy[s], with.policy[s], "state {}", s);
            let offset = -f.potential.phi(StateKey(s as u64));
            for a in 0..mdp.n_actions {
                prop_assert!((with.q[s][a] - (base.q[s][a] + offset)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pursuit_micro_rewards_count_closer_predators(
        d in prop::array::uniform4(-5i32..=5),
        m in prop::array::uniform4(-1i32..=1),
    ) {
        let f = PursuitStepShaping::default();
        let a = PursuitState::new(d[0], d[1], d[2], d[3]);
        let b = PursuitState::new(d[0] + m[0], d[1] + m[1], d[2] + m[2], d[3] + m[3]);
        let closer = (0..2).filter(|&i| b.distance(i) < a.distance(i)).count() as f64;
        let expected = (2.0 * closer - 2.0) * f.magnitude;
        prop_assert_eq!(f.shape(a.encode(), ActionId(0), b.encode(), false), expected);
    }
}

#[test]
fn shaped_grid_q_differs_by_the_potential_only() {
    let spec = GridSpec::five_by_five();
    let mdp = oracle_grid(&spec).unwrap();
    let mut rng = seeded_rng(3);
    let potential = GridDistancePotential { spec, scale: 0.7 };
    let f = pbrs_from_potential(potential, 0.9);
    for _ in 0..100 {
        let s = rng.gen_range(0..mdp.n_states);
        let a = rng.gen_range(0..mdp.n_actions);
        let o = mdp.outcomes(s, a)[0];
        let terminal = mdp.terminal[o.next];
        let shaped = f.value(StateKey(s as u64), StateKey(o.next as u64), terminal);
        let next_phi = if terminal {
            0.0
        } else {
            potential.phi(StateKey(o.next as u64))
        };
        assert_eq!(shaped, 0.9 * next_phi - potential.phi(StateKey(s as u64)));
    }
}

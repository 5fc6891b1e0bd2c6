use std::sync::Arc;

use proptest::prelude::*;
use qsrl::envs::pursuit::{PreyBehavior, PursuitControl, PursuitEnv};
use qsrl::envs::soccer::SoccerEnv;
use qsrl::envs::{Domain, Environment};
use qsrl::learning::{run_episode, LearnerKind, LearnerSpec, Mode};
use qsrl::similarity::{Kronecker, SoccerMirror};
use qsrl::{seeded_rng, ActionId, LearningParams, QTable, StateKey};

fn params(alpha: f64, lambda: f64) -> LearningParams {
    LearningParams {
        alpha,
        lambda,
        ..LearningParams::default()
    }
}

fn train(env: &mut dyn Environment, spec: &LearnerSpec, seed: u64, episodes: usize) -> QTable {
    let mut learner = spec.build().unwrap();
    let mut rng = seeded_rng(seed);
    for ep in 0..episodes {
        let eps = spec.params.epsilon_at(ep as u64, episodes as u64);
        run_episode(env, &mut learner, Mode::Train, eps, &mut rng).unwrap();
    }
    learner.q
}

fn kron(domain: Domain) -> Arc<Kronecker> {
    Arc::new(Kronecker { domain })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn kronecker_qs_is_q(seed in any::<u64>(), alpha in 0.05f64..1.0) {
        let q = LearnerSpec::new(LearnerKind::Q, params(alpha, 0.0), 5);
        let qs = LearnerSpec::new(LearnerKind::Qs, params(alpha, 0.0), 5)
            .with_similarity(kron(Domain::Soccer));
        let a = train(&mut SoccerEnv::default(), &q, seed, 40);
        let b = train(&mut SoccerEnv::default(), &qs, seed, 40);
        prop_assert!(a.bit_identical(&b));
    }

    #[test]
    fn kronecker_qs_lambda_is_q_lambda(seed in any::<u64>(), lambda in 0.1f64..1.0) {
        let q = LearnerSpec::new(LearnerKind::QLambda, params(0.2, lambda), 25);
        let qs = LearnerSpec::new(LearnerKind::QsLambda, params(0.2, lambda), 25)
            .with_similarity(kron(Domain::Pursuit));
        let env = || PursuitEnv::new(PursuitControl::Joint, PreyBehavior::Random, 400);
        let a = train(&mut env(), &q, seed, 3);
        let b = train(&mut env(), &qs, seed, 3);
        prop_assert!(a.bit_identical(&b));
    }

    #[test]
    fn lambda_zero_traces_are_plain_q(seed in any::<u64>()) {
        let env = || PursuitEnv::new(PursuitControl::Independent, PreyBehavior::Random, 400);
        let q = LearnerSpec::new(LearnerKind::Q, params(0.1, 0.0), 5);
        let ql = LearnerSpec::new(LearnerKind::QLambda, params(0.1, 0.0), 5);
        let a = train(&mut env(), &q, seed, 3);
        let b = train(&mut env(), &ql, seed, 3);
        prop_assert!(a.bit_identical(&b));
    }

    #[test]
    fn test_episodes_never_write(seed in any::<u64>()) {
        let spec = LearnerSpec::new(LearnerKind::Qs, params(0.3, 0.0), 5)
            .with_similarity(Arc::new(SoccerMirror));
        let mut env = SoccerEnv::default();
        let mut learner = spec.build().unwrap();
        let mut rng = seeded_rng(seed);
        for _ in 0..20 {
            run_episode(&mut env, &mut learner, Mode::Train, 0.3, &mut rng).unwrap();
        }
        let before = learner.q.clone();
        let stats = learner.stats();
        for _ in 0..20 {
            run_episode(&mut env, &mut learner, Mode::Test, 0.9, &mut rng).unwrap();
        }
        prop_assert!(before.bit_identical(&learner.q));
        prop_assert_eq!(stats, learner.stats());
    }

    #[test]
    fn greedy_ignores_a_common_shift(
        values in prop::collection::vec(-10.0f64..10.0, 5),
        shift in -100.0f64..100.0,
    ) {
        let mut a = QTable::new(5);
        let mut b = QTable::new(5);
        for (i, v) in values.iter().enumerate() {
            // round so that the shift cannot split exact or near ties
            let v = (v * 8.0).round() / 8.0;
            a.set(StateKey(3), ActionId(i as u16), v);
            b.set(StateKey(3), ActionId(i as u16), v + shift.round());
        }
        prop_assert_eq!(a.greedy(StateKey(3)), b.greedy(StateKey(3)));
    }
}

#[test]
fn spreading_learner_needs_a_similarity() {
    let spec = LearnerSpec::new(LearnerKind::Qs, params(0.1, 0.0), 5);
    assert!(spec.build().is_err());
    let spec =
        LearnerSpec::new(LearnerKind::Q, params(0.1, 0.0), 5).with_similarity(kron(Domain::Soccer));
    assert!(spec.build().is_err());
}

#[test]
fn mirror_spreading_touches_more_entries() {
    let q = LearnerSpec::new(LearnerKind::Q, params(0.3, 0.0), 5);
    let qs = LearnerSpec::new(LearnerKind::Qs, params(0.3, 0.0), 5)
        .with_similarity(Arc::new(SoccerMirror));
    let a = train(&mut SoccerEnv::default(), &q, 5, 30);
    let b = train(&mut SoccerEnv::default(), &qs, 5, 30);
    assert!(b.len() > a.len());
}

use proptest::prelude::*;
use qsrl::abstraction::{AbstractionMap, PursuitTiles, SoccerDistance};
use qsrl::envs::pursuit::{PursuitState, MAX_DELTA};
use qsrl::envs::soccer::{SoccerSpace, SoccerState};
use qsrl::envs::StateSpace;
use qsrl::seeded_rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn tiles_are_monotone_and_bounded(t in 1u64..=39, a in -MAX_DELTA..MAX_DELTA) {
        let f = PursuitTiles::new(t);
        prop_assert!(f.tile(a) <= f.tile(a + 1));
        prop_assert!(f.tile(a + 1) < t);
        prop_assert_eq!(f.tile(-MAX_DELTA), 0);
        prop_assert_eq!(f.tile(MAX_DELTA), t - 1);
    }

    #[test]
    fn tile_keys_fit_the_abstract_space(
        t in 1u64..=39,
        d in prop::array::uniform4(-MAX_DELTA..=MAX_DELTA),
    ) {
        let f = PursuitTiles::new(t);
        let s = PursuitState::new(d[0], d[1], d[2], d[3]).encode();
        prop_assert!(f.map(s).0 < f.abstract_size());
    }

    #[test]
    fn full_resolution_tiling_is_injective(
        d in prop::array::uniform4(-MAX_DELTA..=MAX_DELTA),
        e in prop::array::uniform4(-MAX_DELTA..=MAX_DELTA),
    ) {
        let f = PursuitTiles::new(39);
        let a = PursuitState::new(d[0], d[1], d[2], d[3]).encode();
        let b = PursuitState::new(e[0], e[1], e[2], e[3]).encode();
        prop_assert_eq!(f.map(a) == f.map(b), a == b);
    }

    #[test]
    fn soccer_distance_depends_on_components_only(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let a = SoccerSpace.sample_state(&mut rng);
        let b = SoccerSpace.sample_state(&mut rng);
        let ca = SoccerDistance::components(&SoccerState::decode(a).unwrap());
        let cb = SoccerDistance::components(&SoccerState::decode(b).unwrap());
        prop_assert_eq!(SoccerDistance.map(a) == SoccerDistance.map(b), ca == cb);
        prop_assert!(SoccerDistance.map(a).0 < SoccerDistance.abstract_size());
    }
}

#[test]
fn tile_count_is_clamped() {
    assert_eq!(PursuitTiles::new(0).tiles_per_dim(), 1);
    assert_eq!(PursuitTiles::new(1000).tiles_per_dim(), 39);
}

//! State abstraction as key remapping: the learner reads and writes the table
//! under `map(s)` instead of `s`.

use std::fmt;

use crate::envs::pursuit::{self, PursuitState};
use crate::envs::soccer::{self, Player, SoccerState};
use crate::envs::Domain;
use crate::table::StateKey;

pub trait AbstractionMap: Send + Sync + fmt::Debug {
    fn domain(&self) -> Domain;

    fn map(&self, s: StateKey) -> StateKey;

    /// Number of distinct abstract keys; every key is below this bound.
    fn abstract_size(&self) -> u64;
}

/// The identity map over a concrete space of `size` keys.
#[derive(Copy, Clone, Debug)]
pub struct Identity {
    pub domain: Domain,
    pub size: u64,
}

impl AbstractionMap for Identity {
    fn domain(&self) -> Domain {
        self.domain
    }

    #[inline]
    fn map(&self, s: StateKey) -> StateKey {
        s
    }

    fn abstract_size(&self) -> u64 {
        self.size
    }
}

/// `(distance to opponent, distance to own scoring cells, agent has ball)`.
#[derive(Copy, Clone, Debug, Default)]
pub struct SoccerDistance;

impl SoccerDistance {
    pub const MAX_DISTANCE: u64 = 14;

    pub fn components(s: &SoccerState) -> (u64, u64, u64) {
        let d_opp = s.agent.manhattan(s.opponent) as u64;
        let d_goal = soccer::distance_to_goal(s.agent, Player::Agent) as u64;
        (d_opp, d_goal, (s.ball == Player::Agent) as u64)
    }
}

pub fn soccer_distance_abstraction(s: StateKey) -> StateKey {
    SoccerDistance.map(s)
}

impl AbstractionMap for SoccerDistance {
    fn domain(&self) -> Domain {
        Domain::Soccer
    }

    #[inline]
    fn map(&self, s: StateKey) -> StateKey {
        let st = SoccerState::decode(s).expect("soccer abstraction needs a soccer state key");
        let (d_opp, d_goal, ball) = Self::components(&st);
        let n = Self::MAX_DISTANCE + 1;
        StateKey((d_opp * n + d_goal) * 2 + ball)
    }

    fn abstract_size(&self) -> u64 {
        (Self::MAX_DISTANCE + 1) * (Self::MAX_DISTANCE + 1) * 2
    }
}

/// One-tiling grid quantisation of the four pursuit deltas.
#[derive(Copy, Clone, Debug)]
pub struct PursuitTiles {
    tiles_per_dim: u64,
}

impl PursuitTiles {
    pub const DEFAULT_TILES: u64 = 8;

    /// `tiles_per_dim` is clamped to `1..=39`.
    pub fn new(tiles_per_dim: u64) -> PursuitTiles {
        PursuitTiles {
            tiles_per_dim: tiles_per_dim.clamp(1, 2 * pursuit::MAX_DELTA as u64 + 1),
        }
    }

    pub fn tiles_per_dim(&self) -> u64 {
        self.tiles_per_dim
    }

    #[inline]
    pub fn tile(&self, d: i32) -> u64 {
        let span = 2 * pursuit::MAX_DELTA as u64 + 1;
        (d + pursuit::MAX_DELTA) as u64 * self.tiles_per_dim / span
    }
}

impl Default for PursuitTiles {
    fn default() -> Self {
        PursuitTiles::new(Self::DEFAULT_TILES)
    }
}

pub fn pursuit_tile_coding(s: StateKey, tiles_per_dim: u64) -> StateKey {
    PursuitTiles::new(tiles_per_dim).map(s)
}

impl AbstractionMap for PursuitTiles {
    fn domain(&self) -> Domain {
        Domain::Pursuit
    }

    #[inline]
    fn map(&self, s: StateKey) -> StateKey {
        let st = PursuitState::decode(s).expect("tile coding needs a pursuit state key");
        let t = self.tiles_per_dim;
        let [(a, b), (c, d)] = st.d;
        StateKey(((self.tile(a) * t + self.tile(b)) * t + self.tile(c)) * t + self.tile(d))
    }

    fn abstract_size(&self) -> u64 {
        self.tiles_per_dim.pow(4)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::soccer::Cell;
    use crate::envs::StateSpace;

    #[test]
    fn soccer_distance_example() {
        let s = SoccerState::new(Cell::new(3, 3), Cell::new(3, 4), Player::Agent);
        assert_eq!(SoccerDistance::components(&s), (1, 4, 1));
        let k = soccer_distance_abstraction(s.encode());
        assert_eq!(k, StateKey((15 + 4) * 2 + 1));
    }

    #[test]
    fn soccer_distance_is_total_and_small() {
        let mut seen = std::collections::HashSet::new();
        for key in 0..soccer::NUM_STATES {
            if let Some(st) = SoccerState::decode(StateKey(key)) {
                if st.is_legal() {
                    let k = SoccerDistance.map(StateKey(key));
                    assert!(k.0 < SoccerDistance.abstract_size());
                    seen.insert(k);
                }
            }
        }
        assert!(seen.len() <= 450);
        assert!(seen.len() > 100);
    }

    #[test]
    fn tile_endpoints_and_count() {
        let t = PursuitTiles::default();
        assert_eq!(t.tile(-19), 0);
        assert_eq!(t.tile(19), 7);
        assert_eq!(t.abstract_size(), 4096);
        let a = pursuit_tile_coding(PursuitState::new(0, 0, 3, 3).encode(), 8);
        let b = pursuit_tile_coding(PursuitState::new(-1, -1, 2, 2).encode(), 8);
        assert_eq!(a, b);
        let mut rng = crate::seeded_rng(3);
        let space = pursuit::PursuitSpace::default();
        for _ in 0..10_000 {
            assert!(t.map(space.sample_state(&mut rng)).0 < 4096);
        }
    }
}

//! Reward shaping: an extra reward `F(s, a, s')` added to the environment
//! reward before the TD error is formed.

use std::fmt;

use crate::envs::grid::GridSpec;
use crate::envs::pursuit::PursuitState;
use crate::envs::soccer::{self, Player, SoccerState};
use crate::envs::Domain;
use crate::table::{ActionId, StateKey};

pub trait ShapingFunction: Send + Sync + fmt::Debug {
    /// `None` for domain-neutral functions.
    fn domain(&self) -> Option<Domain>;

    /// Shaping reward for the transition `s --a--> s_next`. `terminal` marks
    /// the last transition of an episode.
    fn shape(&self, s: StateKey, a: ActionId, s_next: StateKey, terminal: bool) -> f64;
}

pub trait Potential: Send + Sync + fmt::Debug {
    fn phi(&self, s: StateKey) -> f64;
}

/// Potential-based shaping, `F = gamma * phi(s') - phi(s)`.
///
/// The potential of a terminal successor is taken as 0 so the shaping rewards
/// along any episode telescope to `-phi(s_0)`, which keeps the optimal policy
/// of episodic tasks unchanged.
#[derive(Clone, Debug)]
pub struct Pbrs<P> {
    pub potential: P,
    pub gamma: f64,
}

pub fn pbrs_from_potential<P: Potential>(potential: P, gamma: f64) -> Pbrs<P> {
    Pbrs { potential, gamma }
}

impl<P: Potential> Pbrs<P> {
    #[inline]
    pub fn value(&self, s: StateKey, s_next: StateKey, terminal: bool) -> f64 {
        let next = if terminal {
            0.0
        } else {
            self.potential.phi(s_next)
        };
        self.gamma * next - self.potential.phi(s)
    }
}

impl<P: Potential> ShapingFunction for Pbrs<P> {
    fn domain(&self) -> Option<Domain> {
        None
    }

    #[inline]
    fn shape(&self, s: StateKey, _a: ActionId, s_next: StateKey, terminal: bool) -> f64 {
        self.value(s, s_next, terminal)
    }
}

#[derive(Copy, Clone, Debug, Default)]
pub struct ZeroPotential;

impl Potential for ZeroPotential {
    fn phi(&self, _s: StateKey) -> f64 {
        0.0
    }
}

#[derive(Copy, Clone, Debug)]
pub struct ConstantPotential(pub f64);

impl Potential for ConstantPotential {
    fn phi(&self, _s: StateKey) -> f64 {
        self.0
    }
}

/// Offense pulls the agent to its scoring cells, defense pulls it to the
/// opponent: `phi = -scale * distance`.
#[derive(Copy, Clone, Debug)]
pub struct SoccerPotential {
    pub scale: f64,
}

impl SoccerPotential {
    pub const DEFAULT_SCALE: f64 = 0.1;
}

impl Default for SoccerPotential {
    fn default() -> Self {
        SoccerPotential {
            scale: Self::DEFAULT_SCALE,
        }
    }
}

impl Potential for SoccerPotential {
    #[inline]
    fn phi(&self, s: StateKey) -> f64 {
        let Some(st) = SoccerState::decode(s) else {
            return 0.0;
        };
        let d = match st.ball {
            Player::Agent => soccer::distance_to_goal(st.agent, Player::Agent),
            Player::Opponent => st.agent.manhattan(st.opponent),
        };
        -self.scale * d as f64
    }
}

pub fn soccer_potential(s: StateKey) -> f64 {
    SoccerPotential::default().phi(s)
}

/// The soccer-style distance potential on the oracle gridworld.
#[derive(Copy, Clone, Debug)]
pub struct GridDistancePotential {
    pub spec: GridSpec,
    pub scale: f64,
}

impl Potential for GridDistancePotential {
    fn phi(&self, s: StateKey) -> f64 {
        -self.scale * self.spec.goal_distance(s.0 as usize) as f64
    }
}

/// `+m` per predator whose Manhattan distance to the prey strictly shrank,
/// `-m` for every other predator.
#[derive(Copy, Clone, Debug)]
pub struct PursuitStepShaping {
    pub magnitude: f64,
}

impl PursuitStepShaping {
    pub const DEFAULT_MAGNITUDE: f64 = 1e-22;
}

impl Default for PursuitStepShaping {
    fn default() -> Self {
        PursuitStepShaping {
            magnitude: Self::DEFAULT_MAGNITUDE,
        }
    }
}

impl ShapingFunction for PursuitStepShaping {
    fn domain(&self) -> Option<Domain> {
        Some(Domain::Pursuit)
    }

    #[inline]
    fn shape(&self, s: StateKey, _a: ActionId, s_next: StateKey, _terminal: bool) -> f64 {
        let (Some(a), Some(b)) = (PursuitState::decode(s), PursuitState::decode(s_next)) else {
            return 0.0;
        };
        (0..2)
            .map(|i| {
                if b.distance(i) < a.distance(i) {
                    self.magnitude
                } else {
                    -self.magnitude
                }
            })
            .sum()
    }
}

pub fn pursuit_step_shaping(s: StateKey, a: ActionId, s_next: StateKey) -> f64 {
    PursuitStepShaping::default().shape(s, a, s_next, false)
}

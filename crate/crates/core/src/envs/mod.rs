//! Benchmark environments: simple robotic soccer, predator/prey pursuit and a
//! small explicit gridworld used as a value-iteration oracle.

pub mod grid;
pub mod pursuit;
pub mod soccer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{ActionId, StateKey};
use crate::SimRng;

/// The five moves shared by every grid domain. `North` is `+y`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    North = 0,
    East = 1,
    South = 2,
    West = 3,
    Stay = 4,
}

impl Move {
    pub const ALL: [Move; 5] = [Move::North, Move::East, Move::South, Move::West, Move::Stay];

    #[inline]
    pub fn delta(self) -> (i32, i32) {
        match self {
            Move::North => (0, 1),
            Move::East => (1, 0),
            Move::South => (0, -1),
            Move::West => (-1, 0),
            Move::Stay => (0, 0),
        }
    }

    #[inline]
    pub fn from_index(i: usize) -> Move {
        Move::ALL[i]
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn action(self) -> ActionId {
        ActionId(self as u16)
    }

    #[inline]
    pub fn from_action(a: ActionId) -> Move {
        Move::ALL[a.index()]
    }

    /// Counter-clockwise quarter turn, `(x, y) -> (-y, x)`.
    #[inline]
    pub fn rotate_ccw(self) -> Move {
        match self {
            Move::North => Move::West,
            Move::West => Move::South,
            Move::South => Move::East,
            Move::East => Move::North,
            Move::Stay => Move::Stay,
        }
    }

    /// Reflection `y -> -y`.
    #[inline]
    pub fn mirror_vertical(self) -> Move {
        match self {
            Move::North => Move::South,
            Move::South => Move::North,
            m => m,
        }
    }

    /// Reflection `x -> -x`.
    #[inline]
    pub fn mirror_horizontal(self) -> Move {
        match self {
            Move::East => Move::West,
            Move::West => Move::East,
            m => m,
        }
    }
}

/// Which benchmark a component belongs to.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Soccer,
    Pursuit,
    OracleGrid,
}

impl Domain {
    /// Soccer reports a winning ratio; pursuit and the gridworld report steps.
    pub fn higher_is_better(self) -> bool {
        matches!(self, Domain::Soccer)
    }

    pub fn name(self) -> &'static str {
        match self {
            Domain::Soccer => "soccer",
            Domain::Pursuit => "pursuit",
            Domain::OracleGrid => "oracle_grid",
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("episode finished")]
    EpisodeFinished,
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("action {0} out of range")]
    BadAction(u16),
}

/// Reward and termination of one environment step; the reward is shared by
/// every learner that acted in the step.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub terminal: bool,
}

/// Summary of one played episode.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    /// Soccer: +1 win, -1 loss, 0 unfinished. Pursuit: turns to capture
    /// (the step cap when truncated).
    pub score: f64,
    pub steps: usize,
    pub truncated: bool,
}

/// The reachable state space of a domain, used to check similarity output.
pub trait StateSpace {
    fn num_actions(&self) -> usize;
    fn is_legal_state(&self, s: StateKey) -> bool;
    fn sample_state(&self, rng: &mut SimRng) -> StateKey;
}

/// A seeded episodic step machine with one or more learners acting per step.
pub trait Environment {
    fn domain(&self) -> Domain;
    fn num_actions(&self) -> usize;
    /// Learners acting simultaneously each step; they share one Q-table.
    fn num_agents(&self) -> usize {
        1
    }
    fn step_cap(&self) -> usize;
    fn reset(&mut self, rng: &mut SimRng);
    /// State key from the perspective of learner `agent`.
    fn observe(&self, agent: usize) -> StateKey;
    fn step(&mut self, actions: &[ActionId], rng: &mut SimRng) -> Result<StepOutcome, EnvError>;
    /// Domain score of the episode that just ended.
    fn score(&self, steps: usize, truncated: bool) -> f64;
}

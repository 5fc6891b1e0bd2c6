//! A small deterministic gridworld, both as an explicit MDP for value
//! iteration and as a step machine for the learners.

use rand::Rng;
use thiserror::Error;

use super::{Domain, EnvError, Environment, Move, StateSpace, StepOutcome};
use crate::table::{ActionId, StateKey};
use crate::SimRng;

pub const MAX_SIDE: usize = 6;
pub const NUM_ACTIONS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid {width}x{height} outside 1..={MAX_SIDE} per side")]
    Size { width: usize, height: usize },
    #[error("goal ({0}, {1}) is off the grid")]
    Goal(usize, usize),
}

/// Layout of the oracle gridworld: one absorbing goal cell, reward on entry.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub goal: (usize, usize),
    pub goal_reward: f64,
}

impl GridSpec {
    /// 5x5 open grid with the goal at the top of the centre column, so the
    /// left/right mirror is an exact symmetry.
    pub fn five_by_five() -> GridSpec {
        GridSpec {
            width: 5,
            height: 5,
            goal: (2, 4),
            goal_reward: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(1..=MAX_SIDE).contains(&self.width) || !(1..=MAX_SIDE).contains(&self.height) {
            return Err(GridError::Size {
                width: self.width,
                height: self.height,
            });
        }
        if self.goal.0 >= self.width || self.goal.1 >= self.height {
            return Err(GridError::Goal(self.goal.0, self.goal.1));
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn cell(&self, s: usize) -> (usize, usize) {
        (s % self.width, s / self.width)
    }

    pub fn goal_index(&self) -> usize {
        self.index(self.goal.0, self.goal.1)
    }

    /// Deterministic successor; bumping into the border leaves the agent in place.
    pub fn successor(&self, s: usize, m: Move) -> usize {
        let (x, y) = self.cell(s);
        let (dx, dy) = m.delta();
        let nx = x as i64 + dx as i64;
        let ny = y as i64 + dy as i64;
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
            s
        } else {
            self.index(nx as usize, ny as usize)
        }
    }

    pub fn reward(&self, s: usize, next: usize) -> f64 {
        if next == self.goal_index() && s != next {
            self.goal_reward
        } else {
            0.0
        }
    }

    /// Manhattan distance from cell `s` to the goal.
    pub fn goal_distance(&self, s: usize) -> usize {
        let (x, y) = self.cell(s);
        x.abs_diff(self.goal.0) + y.abs_diff(self.goal.1)
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

/// A finite MDP with explicit transition and reward tables. Terminal states
/// have value 0 and no outgoing transitions are consulted.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplicitMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub terminal: Vec<bool>,
    /// Indexed by `state * n_actions + action`.
    pub outcomes: Vec<Vec<Outcome>>,
}

impl ExplicitMdp {
    pub fn outcomes(&self, s: usize, a: usize) -> &[Outcome] {
        &self.outcomes[s * self.n_actions + a]
    }

    /// One state, one action, looping forever with `reward` per step.
    pub fn self_loop(reward: f64) -> ExplicitMdp {
        ExplicitMdp {
            n_states: 1,
            n_actions: 1,
            terminal: vec![false],
            outcomes: vec![vec![Outcome {
                next: 0,
                prob: 1.0,
                reward,
            }]],
        }
    }

    /// Same dynamics with every reward replaced by `f(s, a, next, reward)`.
    pub fn map_rewards(&self, f: impl Fn(usize, usize, usize, f64) -> f64) -> ExplicitMdp {
        let mut out = self.clone();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for o in out.outcomes[s * self.n_actions + a].iter_mut() {
                    o.reward = f(s, a, o.next, o.reward);
                }
            }
        }
        out
    }
}

/// Explicit enumeration of the gridworld's transitions and rewards.
pub fn oracle_grid(spec: &GridSpec) -> Result<ExplicitMdp, GridError> {
    spec.validate()?;
    let n = spec.n_states();
    let goal = spec.goal_index();
    let mut outcomes = Vec::with_capacity(n * NUM_ACTIONS);
    for s in 0..n {
        for m in Move::ALL {
            let next = spec.successor(s, m);
            outcomes.push(vec![Outcome {
                next,
                prob: 1.0,
                reward: spec.reward(s, next),
            }]);
        }
    }
    let terminal = (0..n).map(|s| s == goal).collect();
    Ok(ExplicitMdp {
        n_states: n,
        n_actions: NUM_ACTIONS,
        terminal,
        outcomes,
    })
}

/// The gridworld as a learning environment, started from a uniformly random
/// non-goal cell each episode.
#[derive(Clone, Debug)]
pub struct GridEnv {
    spec: GridSpec,
    step_cap: usize,
    state: usize,
    done: bool,
}

impl GridEnv {
    pub fn new(spec: GridSpec, step_cap: usize) -> Result<GridEnv, GridError> {
        spec.validate()?;
        Ok(GridEnv {
            spec,
            step_cap,
            state: 0,
            done: true,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
}

impl Environment for GridEnv {
    fn domain(&self) -> Domain {
        Domain::OracleGrid
    }

    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn step_cap(&self) -> usize {
        self.step_cap
    }

    fn reset(&mut self, rng: &mut SimRng) {
        let goal = self.spec.goal_index();
        self.state = loop {
            let s = rng.gen_range(0..self.spec.n_states());
            if s != goal {
                break s;
            }
        };
        self.done = false;
    }

    fn observe(&self, _agent: usize) -> StateKey {
        StateKey(self.state as u64)
    }

    fn step(&mut self, actions: &[ActionId], _rng: &mut SimRng) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let [a] = actions else {
            return Err(EnvError::ActionCount {
                expected: 1,
                got: actions.len(),
            });
        };
        if a.index() >= NUM_ACTIONS {
            return Err(EnvError::BadAction(a.0));
        }
        let next = self.spec.successor(self.state, Move::from_action(*a));
        let reward = self.spec.reward(self.state, next);
        self.state = next;
        self.done = next == self.spec.goal_index();
        Ok(StepOutcome {
            reward,
            terminal: self.done,
        })
    }

    fn score(&self, steps: usize, _truncated: bool) -> f64 {
        steps as f64
    }
}

/// Non-goal cells of a gridworld.
#[derive(Copy, Clone, Debug)]
pub struct GridSpace {
    pub spec: GridSpec,
}

impl StateSpace for GridSpace {
    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn is_legal_state(&self, s: StateKey) -> bool {
        (s.0 as usize) < self.spec.n_states() && s.0 as usize != self.spec.goal_index()
    }

    fn sample_state(&self, rng: &mut SimRng) -> StateKey {
        loop {
            let s = rng.gen_range(0..self.spec.n_states());
            if s != self.spec.goal_index() {
                return StateKey(s as u64);
            }
        }
    }
}

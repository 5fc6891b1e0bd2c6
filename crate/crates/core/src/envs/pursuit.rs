//! Predator/prey pursuit on a bounded 20x20 grid.
//!
//! Two predators chase one prey. The state is the relative position of each
//! predator with respect to the prey, `<dx1, dy1, dx2, dy2>`, each component in
//! `[-19, 19]`. Predators move first (simultaneously), then the prey; a capture
//! is checked after each phase. Moves off the board are cancelled.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Domain, EnvError, Environment, Move, StateSpace, StepOutcome};
use crate::table::{ActionId, StateKey};
use crate::SimRng;

pub const SIZE: i32 = 20;
pub const MAX_DELTA: i32 = SIZE - 1;
const BASE: u64 = (2 * MAX_DELTA + 1) as u64;
pub const NUM_STATES: u64 = BASE * BASE * BASE * BASE;
pub const JOINT_ACTIONS: usize = 25;
pub const DEFAULT_STEP_CAP: usize = 5_000;

/// How the two predators are controlled.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PursuitControl {
    /// One learner picks the joint move `5 * move1 + move2`.
    #[default]
    Joint,
    /// Each predator is a learner with 5 actions over its own perspective
    /// `<own delta, other delta>`; both share one table.
    Independent,
}

impl PursuitControl {
    pub fn num_actions(self) -> usize {
        match self {
            PursuitControl::Joint => JOINT_ACTIONS,
            PursuitControl::Independent => 5,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PreyBehavior {
    /// Uniform over the five moves, never stepping onto a predator.
    #[default]
    Random,
    /// Uniform among the safe moves that maximise the distance to the nearest predator.
    Fleeing,
}

#[inline]
pub fn joint_action(m1: Move, m2: Move) -> ActionId {
    ActionId((m1.index() * 5 + m2.index()) as u16)
}

#[inline]
pub fn split_joint(a: ActionId) -> (Move, Move) {
    let i = a.index();
    (Move::from_index(i / 5), Move::from_index(i % 5))
}

/// `<dx1, dy1, dx2, dy2>`: predator minus prey coordinates.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct PursuitState {
    pub d: [(i32, i32); 2],
}

impl PursuitState {
    pub const fn new(dx1: i32, dy1: i32, dx2: i32, dy2: i32) -> PursuitState {
        PursuitState {
            d: [(dx1, dy1), (dx2, dy2)],
        }
    }

    pub fn in_range(&self) -> bool {
        self.d
            .iter()
            .all(|&(x, y)| x.abs() <= MAX_DELTA && y.abs() <= MAX_DELTA)
    }

    /// Some board placement of the three animals produces these deltas.
    pub fn is_reachable(&self) -> bool {
        let [(x1, y1), (x2, y2)] = self.d;
        self.in_range() && (x1 - x2).abs() <= MAX_DELTA && (y1 - y2).abs() <= MAX_DELTA
    }

    pub fn encode(&self) -> StateKey {
        debug_assert!(self.in_range(), "{self:?}");
        let digit = |v: i32| (v + MAX_DELTA) as u64;
        let [(x1, y1), (x2, y2)] = self.d;
        StateKey(((digit(x1) * BASE + digit(y1)) * BASE + digit(x2)) * BASE + digit(y2))
    }

    pub fn decode(key: StateKey) -> Option<PursuitState> {
        if key.0 >= NUM_STATES {
            return None;
        }
        let mut k = key.0;
        let mut digits = [0i32; 4];
        for slot in digits.iter_mut().rev() {
            *slot = (k % BASE) as i32 - MAX_DELTA;
            k /= BASE;
        }
        Some(PursuitState::new(
            digits[0], digits[1], digits[2], digits[3],
        ))
    }

    /// The same configuration seen from the other predator.
    pub fn swapped(&self) -> PursuitState {
        PursuitState {
            d: [self.d[1], self.d[0]],
        }
    }

    #[inline]
    pub fn distance(&self, i: usize) -> i32 {
        self.d[i].0.abs() + self.d[i].1.abs()
    }

    pub fn map(&self, f: impl Fn((i32, i32)) -> (i32, i32)) -> PursuitState {
        PursuitState {
            d: [f(self.d[0]), f(self.d[1])],
        }
    }
}

/// Absolute board positions.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct Board {
    pub prey: (i32, i32),
    pub predators: [(i32, i32); 2],
}

impl Board {
    pub fn state(&self) -> PursuitState {
        let (px, py) = self.prey;
        let [(ax, ay), (bx, by)] = self.predators;
        PursuitState::new(ax - px, ay - py, bx - px, by - py)
    }

    pub fn captured(&self) -> bool {
        self.predators.contains(&self.prey)
    }
}

#[inline]
fn on_board((x, y): (i32, i32)) -> bool {
    (0..SIZE).contains(&x) && (0..SIZE).contains(&y)
}

/// Target cell of `m` from `pos`, staying put when it would leave the board.
#[inline]
pub fn moved(pos: (i32, i32), m: Move) -> (i32, i32) {
    let (dx, dy) = m.delta();
    let to = (pos.0 + dx, pos.1 + dy);
    if on_board(to) {
        to
    } else {
        pos
    }
}

fn random_cell(rng: &mut SimRng) -> (i32, i32) {
    (rng.gen_range(0..SIZE), rng.gen_range(0..SIZE))
}

/// Prey and predators on distinct uniformly random cells.
pub fn pursuit_reset(rng: &mut SimRng) -> Board {
    let prey = random_cell(rng);
    let mut predators = [(0, 0); 2];
    for i in 0..2 {
        predators[i] = loop {
            let c = random_cell(rng);
            if c != prey && (i == 0 || c != predators[0]) {
                break c;
            }
        };
    }
    Board { prey, predators }
}

/// The prey's move for the current board.
pub fn prey_policy(board: &Board, behavior: PreyBehavior, rng: &mut SimRng) -> Move {
    let mut safe = [Move::Stay; 5];
    let mut n = 0;
    for m in Move::ALL {
        if !board.predators.contains(&moved(board.prey, m)) {
            safe[n] = m;
            n += 1;
        }
    }
    if n == 0 {
        return Move::from_index(rng.gen_range(0..5));
    }
    match behavior {
        PreyBehavior::Random => safe[rng.gen_range(0..n)],
        PreyBehavior::Fleeing => {
            let clearance = |m: Move| {
                let c = moved(board.prey, m);
                board
                    .predators
                    .iter()
                    .map(|&p| (p.0 - c.0).abs() + (p.1 - c.1).abs())
                    .min()
                    .unwrap_or(0)
            };
            let best = safe[..n]
                .iter()
                .map(|&m| clearance(m))
                .max()
                .expect("non-empty");
            let mut top = [Move::Stay; 5];
            let mut k = 0;
            for &m in &safe[..n] {
                if clearance(m) == best {
                    top[k] = m;
                    k += 1;
                }
            }
            top[rng.gen_range(0..k)]
        }
    }
}

/// Advances `board` by one step. Returns whether the prey was caught.
pub fn pursuit_step(
    board: &mut Board,
    moves: [Move; 2],
    behavior: PreyBehavior,
    rng: &mut SimRng,
) -> bool {
    for (p, m) in board.predators.iter_mut().zip(moves) {
        *p = moved(*p, m);
    }
    if board.captured() {
        return true;
    }
    let m = prey_policy(board, behavior, rng);
    board.prey = moved(board.prey, m);
    board.captured()
}

#[derive(Clone, Debug)]
pub struct PursuitEnv {
    control: PursuitControl,
    prey_behavior: PreyBehavior,
    step_cap: usize,
    board: Board,
    done: bool,
}

impl PursuitEnv {
    pub fn new(
        control: PursuitControl,
        prey_behavior: PreyBehavior,
        step_cap: usize,
    ) -> PursuitEnv {
        let board = Board {
            prey: (0, 0),
            predators: [(1, 0), (0, 1)],
        };
        PursuitEnv {
            control,
            prey_behavior,
            step_cap,
            board,
            done: true,
        }
    }

    pub fn board(&self) -> &Board {
        &self.board
    }

    /// Places the animals explicitly, starting a new episode.
    pub fn set_board(&mut self, board: Board) {
        self.board = board;
        self.done = board.captured();
    }

    pub fn control(&self) -> PursuitControl {
        self.control
    }
}

impl Default for PursuitEnv {
    fn default() -> Self {
        PursuitEnv::new(
            PursuitControl::Joint,
            PreyBehavior::Random,
            DEFAULT_STEP_CAP,
        )
    }
}

impl Environment for PursuitEnv {
    fn domain(&self) -> Domain {
        Domain::Pursuit
    }

    fn num_actions(&self) -> usize {
        self.control.num_actions()
    }

    fn num_agents(&self) -> usize {
        match self.control {
            PursuitControl::Joint => 1,
            PursuitControl::Independent => 2,
        }
    }

    fn step_cap(&self) -> usize {
        self.step_cap
    }

    fn reset(&mut self, rng: &mut SimRng) {
        self.board = pursuit_reset(rng);
        self.done = false;
    }

    fn observe(&self, agent: usize) -> StateKey {
        let s = self.board.state();
        if agent == 0 {
            s.encode()
        } else {
            s.swapped().encode()
        }
    }

    fn step(&mut self, actions: &[ActionId], rng: &mut SimRng) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let moves = match (self.control, actions) {
            (PursuitControl::Joint, &[a]) => {
                if a.index() >= JOINT_ACTIONS {
                    return Err(EnvError::BadAction(a.0));
                }
                let (m1, m2) = split_joint(a);
                [m1, m2]
            }
            (PursuitControl::Independent, &[a1, a2]) => {
                for a in [a1, a2] {
                    if a.index() >= 5 {
                        return Err(EnvError::BadAction(a.0));
                    }
                }
                [Move::from_action(a1), Move::from_action(a2)]
            }
            _ => {
                return Err(EnvError::ActionCount {
                    expected: self.num_agents(),
                    got: actions.len(),
                })
            }
        };
        let caught = pursuit_step(&mut self.board, moves, self.prey_behavior, rng);
        self.done = caught;
        Ok(StepOutcome {
            reward: if caught { 1.0 } else { 0.0 },
            terminal: caught,
        })
    }

    fn score(&self, steps: usize, truncated: bool) -> f64 {
        if truncated {
            self.step_cap as f64
        } else {
            steps as f64
        }
    }
}

/// Reachable, not-yet-captured pursuit configurations.
#[derive(Copy, Clone, Debug, Default)]
pub struct PursuitSpace {
    pub control: PursuitControl,
}

impl StateSpace for PursuitSpace {
    fn num_actions(&self) -> usize {
        self.control.num_actions()
    }

    fn is_legal_state(&self, s: StateKey) -> bool {
        PursuitState::decode(s).is_some_and(|st| st.is_reachable())
    }

    fn sample_state(&self, rng: &mut SimRng) -> StateKey {
        pursuit_reset(rng).state().encode()
    }
}

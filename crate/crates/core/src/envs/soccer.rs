//! Simple robotic soccer on an 8x8 grid against a hand-coded opponent.
//!
//! Geometry: the learning agent `A` attacks the east side and scores by
//! carrying the ball east out of column 7 on rows 3 or 4; the opponent `B`
//! scores by carrying the ball west out of column 0 on the same rows. Both
//! players choose simultaneously and the two moves execute in a random order.
//! A move into the occupied cell does not happen, and if the mover had the
//! ball the other player takes it.

use rand::Rng;

use super::{Domain, EnvError, Environment, Move, StateSpace, StepOutcome};
use crate::table::{ActionId, StateKey};
use crate::SimRng;

pub const SIZE: i32 = 8;
pub const GOAL_ROWS: [i32; 2] = [3, 4];
pub const NUM_STATES: u64 = 8 * 8 * 8 * 8 * 2;
pub const NUM_ACTIONS: usize = 5;
pub const DEFAULT_STEP_CAP: usize = 100;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Player {
    Agent,
    Opponent,
}

impl Player {
    pub fn other(self) -> Player {
        match self {
            Player::Agent => Player::Opponent,
            Player::Opponent => Player::Agent,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Cell {
        Cell { x, y }
    }

    #[inline]
    pub fn on_grid(self) -> bool {
        (0..SIZE).contains(&self.x) && (0..SIZE).contains(&self.y)
    }

    #[inline]
    pub fn shifted(self, dx: i32, dy: i32) -> Cell {
        Cell {
            x: self.x + dx,
            y: self.y + dy,
        }
    }

    #[inline]
    pub fn manhattan(self, other: Cell) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }
}

/// `<xA, yA, xB, yB, ball>`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct SoccerState {
    pub agent: Cell,
    pub opponent: Cell,
    pub ball: Player,
}

impl SoccerState {
    pub fn new(agent: Cell, opponent: Cell, ball: Player) -> SoccerState {
        SoccerState {
            agent,
            opponent,
            ball,
        }
    }

    pub fn is_legal(&self) -> bool {
        self.agent.on_grid() && self.opponent.on_grid() && self.agent != self.opponent
    }

    pub fn pos(&self, p: Player) -> Cell {
        match p {
            Player::Agent => self.agent,
            Player::Opponent => self.opponent,
        }
    }

    fn pos_mut(&mut self, p: Player) -> &mut Cell {
        match p {
            Player::Agent => &mut self.agent,
            Player::Opponent => &mut self.opponent,
        }
    }

    pub fn encode(&self) -> StateKey {
        debug_assert!(self.agent.on_grid() && self.opponent.on_grid());
        let pos = ((self.agent.x * 8 + self.agent.y) * 8 + self.opponent.x) * 8 + self.opponent.y;
        let ball = match self.ball {
            Player::Agent => 0,
            Player::Opponent => 1,
        };
        StateKey(pos as u64 * 2 + ball)
    }

    pub fn decode(key: StateKey) -> Option<SoccerState> {
        if key.0 >= NUM_STATES {
            return None;
        }
        let k = key.0 as i32;
        let ball = if k % 2 == 0 {
            Player::Agent
        } else {
            Player::Opponent
        };
        let p = k / 2;
        Some(SoccerState {
            agent: Cell::new(p / 512, (p / 64) % 8),
            opponent: Cell::new((p / 8) % 8, p % 8),
            ball,
        })
    }

    /// Mirror about the horizontal centre line, `y -> 7 - y`.
    pub fn mirrored(&self) -> SoccerState {
        let flip = |c: Cell| Cell::new(c.x, SIZE - 1 - c.y);
        SoccerState {
            agent: flip(self.agent),
            opponent: flip(self.opponent),
            ball: self.ball,
        }
    }
}

/// The on-grid cells from which `p` scores with one more step.
pub fn scoring_cells(p: Player) -> [Cell; 2] {
    let x = match p {
        Player::Agent => SIZE - 1,
        Player::Opponent => 0,
    };
    [Cell::new(x, GOAL_ROWS[0]), Cell::new(x, GOAL_ROWS[1])]
}

/// Manhattan distance from `c` to the nearer scoring cell of `p`.
pub fn distance_to_goal(c: Cell, p: Player) -> i32 {
    let [g0, g1] = scoring_cells(p);
    c.manhattan(g0).min(c.manhattan(g1))
}

/// Whether `to` lies in the goal attacked by `p`.
#[inline]
fn enters_goal(p: Player, to: Cell) -> bool {
    let goal_x = match p {
        Player::Agent => SIZE,
        Player::Opponent => -1,
    };
    to.x == goal_x && GOAL_ROWS.contains(&to.y)
}

/// Executes one player's move in place; returns the scorer if a goal happened.
fn apply_move(s: &mut SoccerState, p: Player, m: Move) -> Option<Player> {
    let (dx, dy) = m.delta();
    if dx == 0 && dy == 0 {
        return None;
    }
    let from = s.pos(p);
    let to = from.shifted(dx, dy);
    let has_ball = s.ball == p;
    if has_ball && enters_goal(p, to) {
        return Some(p);
    }
    if !to.on_grid() {
        return None;
    }
    if to == s.pos(p.other()) {
        if has_ball {
            s.ball = p.other();
        }
        return None;
    }
    *s.pos_mut(p) = to;
    None
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SoccerTransition {
    pub state: SoccerState,
    pub reward: f64,
    pub terminal: bool,
    pub scorer: Option<Player>,
}

/// One simultaneous turn. `agent_first` fixes the execution order; a goal by
/// the first mover ends the turn before the second move.
pub fn resolve_turn(
    s: &SoccerState,
    agent_move: Move,
    opponent_move: Move,
    agent_first: bool,
) -> SoccerTransition {
    let mut next = *s;
    let order = if agent_first {
        [
            (Player::Agent, agent_move),
            (Player::Opponent, opponent_move),
        ]
    } else {
        [
            (Player::Opponent, opponent_move),
            (Player::Agent, agent_move),
        ]
    };
    for (p, m) in order {
        if let Some(scorer) = apply_move(&mut next, p, m) {
            let reward = if scorer == Player::Agent { 1.0 } else { -1.0 };
            return SoccerTransition {
                state: next,
                reward,
                terminal: true,
                scorer: Some(scorer),
            };
        }
    }
    SoccerTransition {
        state: next,
        reward: 0.0,
        terminal: false,
        scorer: None,
    }
}

/// Opponent move for the current turn followed by a random-order resolution.
pub fn soccer_step(s: &SoccerState, agent_move: Move, rng: &mut SimRng) -> SoccerTransition {
    let opp = opponent_policy(s);
    let agent_first = rng.gen::<bool>();
    resolve_turn(s, agent_move, opp, agent_first)
}

fn step_toward(from: i32, to: i32) -> i32 {
    (to - from).signum()
}

/// The hand-coded opponent. Deterministic given the state.
///
/// With the ball it takes a greedy Manhattan step toward its scoring cells,
/// x axis first; when that step would run into the agent it sidesteps along
/// the other axis. Without the ball it chases the agent, x axis first.
pub fn opponent_policy(s: &SoccerState) -> Move {
    let me = s.opponent;
    let agent = s.agent;
    if s.ball == Player::Opponent {
        let legal = |m: Move| {
            let (dx, dy) = m.delta();
            let to = me.shifted(dx, dy);
            to.on_grid() || enters_goal(Player::Opponent, to)
        };
        let toward_rows = if me.y < GOAL_ROWS[0] {
            Some(Move::North)
        } else if me.y > GOAL_ROWS[1] {
            Some(Move::South)
        } else {
            None
        };
        let (primary, along_x) = if legal(Move::West) {
            (Move::West, true)
        } else {
            (toward_rows.unwrap_or(Move::Stay), false)
        };
        let blocked = |m: Move| {
            let (dx, dy) = m.delta();
            me.shifted(dx, dy) == agent
        };
        if !blocked(primary) {
            return primary;
        }
        let side = if along_x {
            // Inside the goal rows, sidestep onto the other goal row.
            toward_rows.unwrap_or(if me.y == GOAL_ROWS[0] {
                Move::North
            } else {
                Move::South
            })
        } else {
            Move::West
        };
        if legal(side) && !blocked(side) {
            side
        } else {
            Move::Stay
        }
    } else {
        let dx = step_toward(me.x, agent.x);
        let dy = step_toward(me.y, agent.y);
        if dx > 0 {
            Move::East
        } else if dx < 0 {
            Move::West
        } else if dy > 0 {
            Move::North
        } else if dy < 0 {
            Move::South
        } else {
            Move::Stay
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SoccerLayout {
    pub agent: Cell,
    pub opponent: Cell,
}

impl Default for SoccerLayout {
    fn default() -> Self {
        SoccerLayout {
            agent: Cell::new(5, 3),
            opponent: Cell::new(2, 4),
        }
    }
}

/// Fixed starting layout with the ball assigned by a fair coin.
pub fn soccer_reset(layout: &SoccerLayout, rng: &mut SimRng) -> SoccerState {
    let ball = if rng.gen::<bool>() {
        Player::Agent
    } else {
        Player::Opponent
    };
    SoccerState {
        agent: layout.agent,
        opponent: layout.opponent,
        ball,
    }
}

#[derive(Clone, Debug)]
pub struct SoccerEnv {
    layout: SoccerLayout,
    step_cap: usize,
    state: SoccerState,
    scorer: Option<Player>,
    done: bool,
}

impl SoccerEnv {
    pub fn new(layout: SoccerLayout, step_cap: usize) -> SoccerEnv {
        let state = SoccerState {
            agent: layout.agent,
            opponent: layout.opponent,
            ball: Player::Agent,
        };
        SoccerEnv {
            layout,
            step_cap,
            state,
            scorer: None,
            done: true,
        }
    }

    pub fn state(&self) -> &SoccerState {
        &self.state
    }

    pub fn scorer(&self) -> Option<Player> {
        self.scorer
    }
}

impl Default for SoccerEnv {
    fn default() -> Self {
        SoccerEnv::new(SoccerLayout::default(), DEFAULT_STEP_CAP)
    }
}

impl Environment for SoccerEnv {
    fn domain(&self) -> Domain {
        Domain::Soccer
    }

    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn step_cap(&self) -> usize {
        self.step_cap
    }

    fn reset(&mut self, rng: &mut SimRng) {
        self.state = soccer_reset(&self.layout, rng);
        self.scorer = None;
        self.done = false;
    }

    fn observe(&self, _agent: usize) -> StateKey {
        self.state.encode()
    }

    fn step(&mut self, actions: &[ActionId], rng: &mut SimRng) -> Result<StepOutcome, EnvError> {
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
        let t = soccer_step(&self.state, Move::from_action(*a), rng);
        self.state = t.state;
        self.scorer = t.scorer;
        self.done = t.terminal;
        Ok(StepOutcome {
            reward: t.reward,
            terminal: t.terminal,
        })
    }

    fn score(&self, _steps: usize, _truncated: bool) -> f64 {
        match self.scorer {
            Some(Player::Agent) => 1.0,
            Some(Player::Opponent) => -1.0,
            None => 0.0,
        }
    }
}

/// All legal soccer states.
#[derive(Copy, Clone, Debug, Default)]
pub struct SoccerSpace;

impl StateSpace for SoccerSpace {
    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn is_legal_state(&self, s: StateKey) -> bool {
        SoccerState::decode(s).is_some_and(|st| st.is_legal())
    }

    fn sample_state(&self, rng: &mut SimRng) -> StateKey {
        loop {
            let key = StateKey(rng.gen_range(0..NUM_STATES));
            if self.is_legal_state(key) {
                return key;
            }
        }
    }
}
